//! Reddit-style corpus ingestion: newline-delimited records, one post per
//! line, with fields id, parent_id (null for roots), author, created_utc,
//! body, thread_id.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::data::Post;
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct RawPost {
    id: String,
    parent_id: Option<String>,
    author: String,
    created_utc: i64,
    body: String,
    thread_id: String,
}

/// What parsing kept and what it had to skip.
#[derive(Debug, Default, Clone, Copy)]
pub struct ParseReport {
    pub parsed: usize,
    pub skipped: usize,
}

/// Parse a posts file. Malformed or field-incomplete lines are skipped
/// and counted, not fatal; an unreadable file is.
pub fn parse_posts_jsonl(path: &Path) -> Result<(Vec<Post>, ParseReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut posts = Vec::new();
    let mut report = ParseReport::default();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawPost>(line) {
            Ok(raw) => {
                posts.push(Post {
                    id: raw.id,
                    parent_id: raw.parent_id,
                    author: raw.author,
                    created_utc: raw.created_utc,
                    body: raw.body,
                    thread_id: raw.thread_id,
                });
                report.parsed += 1;
            }
            Err(e) => {
                report.skipped += 1;
                log::warn!("{}:{}: skipping post record: {e}", path.display(), lineno + 1);
            }
        }
    }
    if report.skipped > 0 {
        log::info!(
            "{}: parsed {} posts, skipped {} malformed lines",
            path.display(),
            report.parsed,
            report.skipped
        );
    }
    Ok((posts, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_fixture(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn three_line_fixture_round_trips() {
        let f = write_fixture(&[
            r#"{"id":"a","parent_id":null,"author":"u1","created_utc":100,"body":"root post","thread_id":"t1"}"#,
            r#"{"id":"b","parent_id":"a","author":"u2","created_utc":200,"body":"a reply","thread_id":"t1"}"#,
            r#"{"id":"c","parent_id":"a","author":"u3","created_utc":300,"body":"another","thread_id":"t1"}"#,
        ]);
        let (posts, report) = parse_posts_jsonl(f.path()).unwrap();
        assert_eq!(report.parsed, 3);
        assert_eq!(report.skipped, 0);
        assert_eq!(posts[0].parent_id, None);
        assert_eq!(posts[1].parent_id.as_deref(), Some("a"));
        assert_eq!(posts[2].body, "another");
        assert_eq!(posts[2].created_utc, 300);
    }

    #[test]
    fn missing_field_is_skipped_and_counted() {
        let f = write_fixture(&[
            r#"{"id":"a","parent_id":null,"author":"u1","created_utc":100,"thread_id":"t1"}"#,
            r#"{"id":"b","parent_id":"a","author":"u2","created_utc":200,"body":"ok","thread_id":"t1"}"#,
            "not json at all",
        ]);
        let (posts, report) = parse_posts_jsonl(f.path()).unwrap();
        assert_eq!(posts.len(), 1);
        assert_eq!(report.skipped, 2);
    }

    #[test]
    fn unreadable_file_is_an_io_error() {
        let err = parse_posts_jsonl(Path::new("/nonexistent/posts.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}

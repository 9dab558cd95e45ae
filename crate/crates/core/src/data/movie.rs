//! Cornell movie-dialog corpus ingestion. Two files share one field
//! separator (" +++$+++ "): a lines file mapping line ids to speaker and
//! text, and a conversations file listing each dialog's line ids in order.
//! Every dialog becomes a linear-chain thread between two speakers, with
//! ordinal timestamps and the movie id as the thread's background tag.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::data::{Post, Thread};
use crate::error::{Error, Result};

const SEP: &str = " +++$+++ ";

#[derive(Debug, Default, Clone, Copy)]
pub struct ParseReport {
    pub threads: usize,
    pub dropped: usize,
}

struct Line {
    speaker: String,
    movie: String,
    text: String,
}

/// Parse the two corpus files into threads. A conversation referencing a
/// line id the lines file lacks — or with fewer than two lines — is
/// dropped and counted.
pub fn parse_movie_corpus(
    lines_path: &Path,
    conversations_path: &Path,
) -> Result<(Vec<Thread>, ParseReport)> {
    let lines_text = fs::read_to_string(lines_path).map_err(|e| Error::io(lines_path, e))?;
    let mut lines: HashMap<String, Line> = HashMap::new();
    for (lineno, raw) in lines_text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        // line id, speaker id, movie id, speaker name, utterance; the
        // utterance is everything after the fourth separator, so embedded
        // separators survive inside it
        let fields: Vec<&str> = raw.splitn(5, SEP).collect();
        if fields.len() != 5 {
            log::warn!(
                "{}:{}: expected 5 fields, got {}",
                lines_path.display(),
                lineno + 1,
                fields.len()
            );
            continue;
        }
        lines.insert(
            fields[0].to_string(),
            Line {
                speaker: fields[1].to_string(),
                movie: fields[2].to_string(),
                text: fields[4].to_string(),
            },
        );
    }

    let conv_text =
        fs::read_to_string(conversations_path).map_err(|e| Error::io(conversations_path, e))?;
    let mut threads = Vec::new();
    let mut report = ParseReport::default();
    for (lineno, raw) in conv_text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.splitn(4, SEP).collect();
        if fields.len() != 4 {
            log::warn!(
                "{}:{}: expected 4 fields, got {}",
                conversations_path.display(),
                lineno + 1,
                fields.len()
            );
            report.dropped += 1;
            continue;
        }
        let ids = parse_id_list(fields[3]);
        let thread_id = format!("conv{}", lineno);
        match chain_thread(&thread_id, &ids, &lines) {
            Ok(t) => {
                threads.push(t);
                report.threads += 1;
            }
            Err(e) => {
                report.dropped += 1;
                log::warn!(
                    "{}:{}: dropping conversation: {e}",
                    conversations_path.display(),
                    lineno + 1
                );
            }
        }
    }
    Ok((threads, report))
}

/// `['L1', 'L2']` → `["L1", "L2"]`.
fn parse_id_list(raw: &str) -> Vec<String> {
    raw.trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|s| s.trim().trim_matches('\'').trim_matches('"').to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn chain_thread(thread_id: &str, ids: &[String], lines: &HashMap<String, Line>) -> Result<Thread> {
    let mut posts = Vec::with_capacity(ids.len());
    let mut movie = None;
    for (i, id) in ids.iter().enumerate() {
        let line = lines
            .get(id)
            .ok_or_else(|| Error::Data(format!("line id {id} not in lines file")))?;
        movie.get_or_insert_with(|| line.movie.clone());
        posts.push(Post {
            id: id.clone(),
            parent_id: if i == 0 { None } else { Some(ids[i - 1].clone()) },
            author: line.speaker.clone(),
            created_utc: i as i64,
            body: line.text.clone(),
            thread_id: thread_id.to_string(),
        });
    }
    Thread::new(thread_id.to_string(), posts, movie)
}

//! Corpus ingestion: raw posts → reply trees → labeled, truncated,
//! tokenized instances with train/val/test splits.

pub mod instance;
pub mod movie;
pub mod reddit;
pub mod split;
pub mod thread_build;
pub mod tokenize;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::embedding::{PAD, UNK};

/// A single message. `parent_id` is `None` for thread roots.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Post {
    pub id: String,
    pub parent_id: Option<String>,
    pub author: String,
    pub created_utc: i64,
    pub body: String,
    pub thread_id: String,
}

/// A reply tree (or chain, for dialogs): posts sorted by creation time,
/// with parent/child links resolved to indices into `posts`.
#[derive(Clone, Debug)]
pub struct Thread {
    pub thread_id: String,
    pub posts: Vec<Post>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Corpus-level grouping tag (e.g. movie id); `None` where the corpus
    /// has no such notion.
    pub background: Option<String>,
}

impl Thread {
    /// Wire up a thread from its posts. Validates what a well-formed
    /// thread must satisfy: at least two posts, every parent resolvable,
    /// exactly one root, and no reply cycles.
    pub fn new(thread_id: String, mut posts: Vec<Post>, background: Option<String>) -> Result<Self> {
        if posts.len() < 2 {
            return Err(Error::Data(format!(
                "thread {thread_id} has {} post(s); need at least 2",
                posts.len()
            )));
        }
        posts.sort_by(|a, b| (a.created_utc, &a.id).cmp(&(b.created_utc, &b.id)));
        let index: HashMap<&str, usize> = posts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect();
        if index.len() != posts.len() {
            return Err(Error::Data(format!("thread {thread_id} has duplicate post ids")));
        }
        let mut parent = vec![None; posts.len()];
        let mut children = vec![Vec::new(); posts.len()];
        let mut roots = 0;
        for (i, post) in posts.iter().enumerate() {
            match &post.parent_id {
                None => roots += 1,
                Some(pid) => {
                    let &pi = index.get(pid.as_str()).ok_or_else(|| {
                        Error::Data(format!(
                            "thread {thread_id}: post {} replies to unknown post {pid}",
                            post.id
                        ))
                    })?;
                    parent[i] = Some(pi);
                    children[pi].push(i);
                }
            }
        }
        if roots != 1 {
            return Err(Error::Data(format!(
                "thread {thread_id} has {roots} roots; need exactly 1"
            )));
        }
        // Walk each parent chain; a chain longer than the thread is a cycle.
        for start in 0..posts.len() {
            let mut cur = start;
            let mut hops = 0;
            while let Some(p) = parent[cur] {
                cur = p;
                hops += 1;
                if hops > posts.len() {
                    return Err(Error::Data(format!("thread {thread_id} has a reply cycle")));
                }
            }
        }
        Ok(Thread {
            thread_id,
            posts,
            parent,
            children,
            background,
        })
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn index_of(&self, post_id: &str) -> Option<usize> {
        self.posts.iter().position(|p| p.id == post_id)
    }

    pub fn parent_of(&self, idx: usize) -> Option<usize> {
        self.parent[idx]
    }

    pub fn children_of(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    /// Reply depth: root = 0, each reply one deeper.
    pub fn depth_of(&self, idx: usize) -> usize {
        let mut d = 0;
        let mut cur = idx;
        while let Some(p) = self.parent[cur] {
            cur = p;
            d += 1;
        }
        d
    }

    /// A post ends the thread iff nothing replies to it.
    pub fn is_leaf(&self, idx: usize) -> bool {
        self.children[idx].is_empty()
    }

    /// Creation time of the first post.
    pub fn started_at(&self) -> i64 {
        self.posts[0].created_utc
    }
}

/// Token → id map. Ids 0 and 1 are reserved for padding and
/// out-of-vocabulary tokens; real tokens start at 2. Built from the
/// training split only, so evaluation text can only introduce UNK.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    ordered: Vec<String>,
}

impl Vocabulary {
    /// Count tokens across `texts`, drop those seen fewer than `min_freq`
    /// times, and assign ids in lexicographic order (deterministic).
    pub fn build<'a>(texts: impl Iterator<Item = &'a [String]>, min_freq: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tokens in texts {
            for t in tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<&str> = counts
            .iter()
            .filter(|(_, &c)| c >= min_freq)
            .map(|(&t, _)| t)
            .collect();
        kept.sort_unstable();
        let ordered: Vec<String> = kept.iter().map(|s| s.to_string()).collect();
        let ids = ordered
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 2))
            .collect();
        Vocabulary { ids, ordered }
    }

    /// Id for a token; unknown tokens map to [`UNK`].
    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Total id space including the two reserved slots.
    pub fn len(&self) -> usize {
        self.ordered.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }

    /// One token per line, in id order; pairs with [`Vocabulary::from_lines`].
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.ordered {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> Self {
        let ordered: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        let ids = ordered
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 2))
            .collect();
        Vocabulary { ids, ordered }
    }
}

/// One model input: a thread prefix ending at the sampled target post,
/// tokenized and featurized. The label says whether the target turned out
/// to end the thread.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Instance {
    pub thread_id: String,
    pub target_post_id: String,
    pub label: u8,
    /// Token ids per post, in time order, target last.
    pub posts: Vec<Vec<u32>>,
    /// Context feature vector per post, parallel to `posts`.
    pub contexts: Vec<Vec<f64>>,
    /// Background id shared by the whole thread, where the corpus has one.
    pub background: Option<u32>,
}

impl Instance {
    /// Number of posts, including the target.
    pub fn s(&self) -> usize {
        self.posts.len()
    }
}

/// Re-exported so downstream code can name the reserved ids without
/// reaching into the network layers.
pub const PAD_ID: u32 = PAD;
pub const UNK_ID: u32 = UNK;

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn post(id: &str, parent: Option<&str>, author: &str, t: i64) -> Post {
        Post {
            id: id.into(),
            parent_id: parent.map(Into::into),
            author: author.into(),
            created_utc: t,
            body: format!("body of {id}"),
            thread_id: "t1".into(),
        }
    }

    #[test]
    fn thread_wiring_and_depths() {
        let t = Thread::new(
            "t1".into(),
            vec![
                post("a", None, "u1", 10),
                post("b", Some("a"), "u2", 20),
                post("c", Some("b"), "u1", 30),
                post("d", Some("a"), "u3", 25),
            ],
            None,
        )
        .unwrap();
        let a = t.index_of("a").unwrap();
        let c = t.index_of("c").unwrap();
        assert_eq!(t.depth_of(a), 0);
        assert_eq!(t.depth_of(c), 2);
        assert!(t.is_leaf(c));
        assert!(!t.is_leaf(a));
        assert_eq!(t.children_of(a).len(), 2);
        // sorted by time: a, b, d, c
        assert_eq!(t.posts[2].id, "d");
    }

    #[test]
    fn thread_rejects_two_roots_and_singletons() {
        assert!(Thread::new(
            "t1".into(),
            vec![post("a", None, "u", 1), post("b", None, "u", 2)],
            None
        )
        .is_err());
        assert!(Thread::new("t1".into(), vec![post("a", None, "u", 1)], None).is_err());
    }

    #[test]
    fn thread_rejects_unknown_parent() {
        let err = Thread::new(
            "t1".into(),
            vec![post("a", None, "u", 1), post("b", Some("zz"), "u", 2)],
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown post"));
    }

    #[test]
    fn vocabulary_is_deterministic_and_cuts_rare_tokens() {
        let docs: Vec<Vec<String>> = vec![
            vec!["b".into(), "a".into(), "a".into()],
            vec!["b".into(), "c".into()],
        ];
        let v = Vocabulary::build(docs.iter().map(|d| d.as_slice()), 2);
        // "a" and "b" survive (count 2), "c" does not; lexicographic ids
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("c"), UNK);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn vocabulary_round_trips_through_lines() {
        let docs: Vec<Vec<String>> = vec![vec!["x".into(), "y".into(), "x".into(), "y".into()]];
        let v = Vocabulary::build(docs.iter().map(|d| d.as_slice()), 1);
        let restored = Vocabulary::from_lines(&v.to_lines());
        assert_eq!(restored.id("x"), v.id("x"));
        assert_eq!(restored.id("y"), v.id("y"));
        assert_eq!(restored.len(), v.len());
    }
}

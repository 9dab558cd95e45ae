//! Per-post context features: lengths, sentiment, timing, reply
//! structure, author history, and the background id the network embeds.

pub mod lexicon;

use std::collections::HashMap;

use crate::data::instance::{sample_target, TargetSample};
use crate::data::thread_build::label_post;
use crate::data::tokenize::tokenize;
use crate::data::{Instance, Thread, Vocabulary};
use crate::{Error, Result};

pub use lexicon::{sentiment_scores, SentimentLexicon};

/// Context vector width: 2 length slots, 3 sentiment, 4 time buckets,
/// 2 reply slots, 1 author slot. The background id rides separately and
/// is embedded inside the network.
pub const CONTEXT_DIM: usize = 12;

/// Time-gap buckets, index order: within an hour, a day, a week, else
/// capped at a month.
pub const TIME_BUCKETS: usize = 4;

/// Bucket index for the gap (seconds) between a post and the one before
/// it. A thread's first post has no gap and lands in the first bucket.
pub fn time_bucket(delta_seconds: i64) -> Result<usize> {
    if delta_seconds < 0 {
        return Err(Error::Data(format!(
            "negative time gap {delta_seconds}s between consecutive posts"
        )));
    }
    Ok(match delta_seconds {
        0..=3_600 => 0,
        3_601..=86_400 => 1,
        86_401..=604_800 => 2,
        _ => 3,
    })
}

/// Reply-structure features for the post at `idx`: depth below the root,
/// and whether its parent was written by the target post's author.
pub fn reply_features(thread: &Thread, idx: usize, target_author: &str) -> (usize, bool) {
    let depth = thread.depth_of(idx);
    let to_target_author = thread
        .parent_of(idx)
        .map(|p| thread.posts[p].author == target_author)
        .unwrap_or(false);
    (depth, to_target_author)
}

/// How many threads each author ended, counted once over the training
/// split and frozen — evaluation-time queries never update it.
#[derive(Clone, Debug, Default)]
pub struct AuthorEndTable {
    counts: HashMap<String, usize>,
}

impl AuthorEndTable {
    pub fn build(training_threads: &[Thread]) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for thread in training_threads {
            for (i, post) in thread.posts.iter().enumerate() {
                if thread.is_leaf(i) {
                    *counts.entry(post.author.clone()).or_default() += 1;
                }
            }
        }
        AuthorEndTable { counts }
    }

    /// Authors unseen in training count 0.
    pub fn count(&self, author: &str) -> usize {
        self.counts.get(author).copied().unwrap_or(0)
    }

    /// `author<TAB>count` lines, sorted by author.
    pub fn to_lines(&self) -> String {
        let mut rows: Vec<(&str, usize)> =
            self.counts.iter().map(|(a, &c)| (a.as_str(), c)).collect();
        rows.sort_unstable();
        let mut out = String::new();
        for (a, c) in rows {
            out.push_str(&format!("{a}\t{c}\n"));
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let mut counts = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (author, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::Corrupt(format!("author table line {}", i + 1)))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|e| Error::Corrupt(format!("author table line {}: {e}", i + 1)))?;
            counts.insert(author.to_string(), count);
        }
        Ok(AuthorEndTable { counts })
    }
}

/// Dense ids for thread backgrounds (e.g. which movie a dialog is from).
/// Id 0 is reserved for backgrounds unseen in training.
#[derive(Clone, Debug, Default)]
pub struct BackgroundVocab {
    ids: HashMap<String, u32>,
    ordered: Vec<String>,
}

impl BackgroundVocab {
    pub fn build(training_threads: &[Thread]) -> Self {
        let mut seen: Vec<&str> = training_threads
            .iter()
            .filter_map(|t| t.background.as_deref())
            .collect();
        seen.sort_unstable();
        seen.dedup();
        let ordered: Vec<String> = seen.into_iter().map(String::from).collect();
        let ids = ordered
            .iter()
            .enumerate()
            .map(|(i, b)| (b.clone(), i as u32 + 1))
            .collect();
        BackgroundVocab { ids, ordered }
    }

    pub fn id(&self, background: &str) -> u32 {
        self.ids.get(background).copied().unwrap_or(0)
    }

    /// Id-space size including the reserved unseen slot.
    pub fn len(&self) -> usize {
        self.ordered.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for b in &self.ordered {
            out.push_str(b);
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> Self {
        let ordered: Vec<String> = text.lines().map(String::from).collect();
        let ids = ordered
            .iter()
            .enumerate()
            .map(|(i, b)| (b.clone(), i as u32 + 1))
            .collect();
        BackgroundVocab { ids, ordered }
    }
}

/// Which feature families a corpus (or an ablation) provides. Disabled
/// families keep their slots — zeroed — so vector layout never changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureMask {
    pub post_length: bool,
    pub thread_length: bool,
    pub sentiment: bool,
    pub post_time: bool,
    pub reply: bool,
    pub author: bool,
    pub background: bool,
}

impl FeatureMask {
    pub fn all() -> Self {
        FeatureMask {
            post_length: true,
            thread_length: true,
            sentiment: true,
            post_time: true,
            reply: true,
            author: true,
            background: true,
        }
    }

    pub fn none() -> Self {
        FeatureMask {
            post_length: false,
            thread_length: false,
            sentiment: false,
            post_time: false,
            reply: false,
            author: false,
            background: false,
        }
    }

    /// Forum corpora carry real timestamps but no background grouping.
    pub fn reddit() -> Self {
        FeatureMask {
            background: false,
            ..Self::all()
        }
    }

    /// Dialog corpora have ordinal line numbers, not post times, and a
    /// movie id background.
    pub fn movie() -> Self {
        FeatureMask {
            post_time: false,
            ..Self::all()
        }
    }

    /// Turn one family off by name; "context" turns them all off.
    pub fn disable(&mut self, family: &str) -> Result<()> {
        match family {
            "post_length" => self.post_length = false,
            "thread_length" => self.thread_length = false,
            "sentiment" => self.sentiment = false,
            "post_time" => self.post_time = false,
            "reply" => self.reply = false,
            "author" => self.author = false,
            "background" => self.background = false,
            "context" => *self = Self::none(),
            other => {
                return Err(Error::Config(format!(
                    "unknown feature family {other:?} (expected post_length|thread_length|\
                     sentiment|post_time|reply|author|background|context)"
                )))
            }
        }
        Ok(())
    }
}

/// The context vector for the post at `idx`, given the tokenization of its
/// body. `visible_len` is how many thread posts exist up to and including
/// the target — never the full thread length, which would leak the label.
#[allow(clippy::too_many_arguments)]
pub fn assemble_context(
    thread: &Thread,
    idx: usize,
    tokens: &[String],
    visible_len: usize,
    target_author: &str,
    lexicon: &SentimentLexicon,
    authors: &AuthorEndTable,
    mask: &FeatureMask,
) -> Result<Vec<f64>> {
    let mut v = vec![0.0; CONTEXT_DIM];
    if mask.post_length {
        v[0] = (tokens.len() as f64).ln_1p();
    }
    if mask.thread_length {
        v[1] = (visible_len as f64).ln_1p();
    }
    if mask.sentiment {
        let (neg, neu, pos) = sentiment_scores(tokens, lexicon);
        v[2] = neg;
        v[3] = neu;
        v[4] = pos;
    }
    if mask.post_time {
        let delta = match idx {
            0 => 0,
            _ => thread.posts[idx].created_utc - thread.posts[idx - 1].created_utc,
        };
        v[5 + time_bucket(delta)?] = 1.0;
    }
    if mask.reply {
        let (depth, to_target) = reply_features(thread, idx, target_author);
        v[9] = (depth as f64).ln_1p();
        v[10] = if to_target { 1.0 } else { 0.0 };
    }
    if mask.author {
        v[11] = (authors.count(&thread.posts[idx].author) as f64).ln_1p();
    }
    Ok(v)
}

/// Frozen lookup state plus sampling settings: everything needed to turn
/// a thread into a model instance, deterministically.
pub struct Featurizer<'a> {
    pub vocab: &'a Vocabulary,
    pub lexicon: &'a SentimentLexicon,
    pub authors: &'a AuthorEndTable,
    pub backgrounds: Option<&'a BackgroundVocab>,
    pub mask: FeatureMask,
    pub l_max: usize,
    pub seed: u64,
}

impl Featurizer<'_> {
    /// Sample a target in `thread` and build the instance for it.
    pub fn instance(&self, thread: &Thread) -> Result<Instance> {
        let sample = sample_target(thread, self.seed, self.l_max);
        self.instance_at(thread, sample)
    }

    /// Build the instance for an already-chosen target.
    pub fn instance_at(&self, thread: &Thread, sample: TargetSample) -> Result<Instance> {
        let target = &thread.posts[sample.target];
        let label = label_post(thread, &target.id)?;
        let visible_len = sample.target + 1;

        let mut posts = Vec::with_capacity(sample.window_len());
        let mut contexts = Vec::with_capacity(sample.window_len());
        for idx in sample.start..=sample.target {
            let tokens = tokenize(&thread.posts[idx].body);
            contexts.push(assemble_context(
                thread,
                idx,
                &tokens,
                visible_len,
                &target.author,
                self.lexicon,
                self.authors,
                &self.mask,
            )?);
            posts.push(self.vocab.encode(&tokens));
        }

        let background = match (self.mask.background, self.backgrounds) {
            (true, Some(bv)) => Some(
                thread
                    .background
                    .as_deref()
                    .map(|b| bv.id(b))
                    .unwrap_or(0),
            ),
            _ => None,
        };

        Ok(Instance {
            thread_id: thread.thread_id.clone(),
            target_post_id: target.id.clone(),
            label,
            posts,
            contexts,
            background,
        })
    }
}

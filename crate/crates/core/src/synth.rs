//! Synthetic conversation data: an organic Reddit-style corpus generator
//! whose reply behavior follows post content (questions attract replies,
//! sign-off words end branches, deep posts go quiet), plus small directly
//! constructed instance sets for controlled experiments.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::data::{Instance, Post};
use crate::{Error, Result};

const FILLERS: usize = 180;
const POSITIVE_WORDS: [(&str, f64); 3] = [("love", 3.2), ("great", 2.8), ("nice", 1.9)];
const NEGATIVE_WORDS: [(&str, f64); 3] = [("hate", -3.0), ("awful", -2.6), ("bad", -1.8)];
const CLOSERS: [&str; 3] = ["thanks", "bye", "done"];
const AUTHOR_POOL: usize = 50;

/// Valence file covering every sentiment-bearing token the generator can
/// emit, in the tab-separated layout the feature extractor loads.
pub fn lexicon_tsv() -> String {
    let mut out = String::from("# synthetic valence lexicon\n");
    for (w, v) in POSITIVE_WORDS.iter().chain(&NEGATIVE_WORDS) {
        out.push_str(&format!("{w}\t{v}\n"));
    }
    out.push_str("thanks\t1.5\n");
    out
}

fn filler(rng: &mut ChaCha8Rng) -> String {
    // squared draw skews mass toward low indices, Zipf-like
    let u: f64 = rng.random();
    format!("w{:03}", (u * u * FILLERS as f64) as usize)
}

struct Draft {
    body: String,
    asks: bool,
    closes: bool,
    negative: bool,
}

fn draft_post(rng: &mut ChaCha8Rng) -> Draft {
    let n = rng.random_range(3..12);
    let mut words: Vec<String> = (0..n).map(|_| filler(rng)).collect();
    let mut negative = false;
    if rng.random::<f64>() < 0.35 {
        let (w, v) = if rng.random::<f64>() < 0.5 {
            POSITIVE_WORDS[rng.random_range(0..3)]
        } else {
            NEGATIVE_WORDS[rng.random_range(0..3)]
        };
        negative = v < 0.0;
        words.push(w.to_string());
    }
    let closes = rng.random::<f64>() < 0.22;
    if closes {
        words.push(CLOSERS[rng.random_range(0..3)].to_string());
    }
    let asks = !closes && rng.random::<f64>() < 0.3;
    if asks {
        words.push("?".to_string());
    }
    Draft { body: words.join(" "), asks, closes, negative }
}

/// Grow `n_threads` reply trees. Reply probability rises with a question
/// mark, falls with sign-off words, negative sentiment, and depth, so the
/// thread-ending label correlates with both content and structure.
pub fn reddit_corpus(n_threads: usize, seed: u64) -> Vec<Post> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut posts = Vec::new();
    for t in 0..n_threads {
        let thread_id = format!("st{t:05}");
        let base = 1_600_000_000 + t as i64 * 50_000;
        // (index within thread, depth, ask/close flags) pending reply draws
        let mut queue: Vec<(usize, usize)> = Vec::new();
        let mut local: Vec<Post> = Vec::new();

        let root = draft_post(&mut rng);
        let mut flags = vec![(root.asks, root.closes, root.negative)];
        local.push(Post {
            id: format!("{thread_id}p0"),
            parent_id: None,
            author: format!("u{:03}", rng.random_range(0..AUTHOR_POOL)),
            created_utc: base,
            body: root.body,
            thread_id: thread_id.clone(),
        });
        queue.push((0, 0));

        while let Some((at, depth)) = queue.pop() {
            if local.len() >= 16 {
                break;
            }
            let (asks, closes, negative) = flags[at];
            let p = (0.62 + 0.25 * asks as u8 as f64
                - 0.35 * closes as u8 as f64
                - 0.10 * negative as u8 as f64
                - 0.12 * depth as f64)
                .clamp(0.03, 0.9);
            for share in [1.0, 0.45, 0.2] {
                if rng.random::<f64>() >= p * share || local.len() >= 16 {
                    break;
                }
                let gap = match rng.random_range(0..10) {
                    0..=3 => rng.random_range(60..3_000),
                    4..=7 => rng.random_range(4_000..80_000),
                    8 => rng.random_range(100_000..600_000),
                    _ => rng.random_range(610_000..2_000_000),
                };
                let reply = draft_post(&mut rng);
                let idx = local.len();
                flags.push((reply.asks, reply.closes, reply.negative));
                local.push(Post {
                    id: format!("{thread_id}p{idx}"),
                    parent_id: Some(local[at].id.clone()),
                    author: format!("u{:03}", rng.random_range(0..AUTHOR_POOL)),
                    created_utc: local[at].created_utc + gap,
                    body: reply.body,
                    thread_id: thread_id.clone(),
                });
                queue.push((idx, depth + 1));
            }
            // threads need a second post; force one reply to the root
            if local.len() == 1 && queue.is_empty() {
                let reply = draft_post(&mut rng);
                flags.push((reply.asks, reply.closes, reply.negative));
                local.push(Post {
                    id: format!("{thread_id}p1"),
                    parent_id: Some(local[0].id.clone()),
                    author: format!("u{:03}", rng.random_range(0..AUTHOR_POOL)),
                    created_utc: base + 600,
                    body: reply.body,
                    thread_id: thread_id.clone(),
                });
            }
        }
        posts.extend(local);
    }
    posts
}

/// Serialize posts in the line-delimited ingestion format.
pub fn write_posts_jsonl(path: &Path, posts: &[Post]) -> Result<()> {
    let mut out = String::new();
    for p in posts {
        let record = json!({
            "id": p.id,
            "parent_id": p.parent_id,
            "author": p.author,
            "created_utc": p.created_utc,
            "body": p.body,
            "thread_id": p.thread_id,
        });
        out.push_str(&record.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn zero_ctx() -> Vec<f64> {
    vec![0.0; crate::features::CONTEXT_DIM]
}

/// Token id whose presence in the target post sets the label in
/// [`planted_token_instances`].
pub const PLANT: u32 = 3;

/// Tiny memorization set: label 1 iff the target (last) post contains
/// [`PLANT`]. Returns the instances and the id-space size they draw from.
pub fn planted_token_instances(n: usize, seed: u64) -> (Vec<Instance>, usize) {
    let vocab_size = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..n)
        .map(|k| {
            let label = (k % 2) as u8;
            let s = 1 + k % 4;
            let posts: Vec<Vec<u32>> = (0..s)
                .map(|j| {
                    let mut ids: Vec<u32> =
                        (0..rng.random_range(4..9)).map(|_| rng.random_range(4..16)).collect();
                    if j == s - 1 && label == 1 {
                        ids.push(PLANT);
                    }
                    ids
                })
                .collect();
            Instance {
                thread_id: format!("ov{k:03}"),
                target_post_id: format!("ov{k:03}t"),
                label,
                posts,
                contexts: (0..s).map(|_| zero_ctx()).collect(),
                background: None,
            }
        })
        .collect();
    (instances, vocab_size)
}

/// Cue token meaning "the thread continues" in [`length_cue_task`].
pub const CUE_GO: u32 = 2;
/// Cue token meaning "the thread ends" in [`length_cue_task`].
pub const CUE_END: u32 = 3;

fn length_cue_instance(rng: &mut ChaCha8Rng, id: String) -> Instance {
    let s = rng.random_range(2..=12usize);
    let label = rng.random_range(0..2u32) as u8;
    let posts: Vec<Vec<u32>> = (0..s)
        .map(|j| {
            let mut ids: Vec<u32> =
                (0..5).map(|_| rng.random_range(4..20)).collect();
            if j == s - 2 {
                ids.push(if label == 1 { CUE_END } else { CUE_GO });
            }
            ids
        })
        .collect();
    Instance {
        thread_id: id.clone(),
        target_post_id: id,
        label,
        posts,
        contexts: (0..s).map(|_| zero_ctx()).collect(),
        background: None,
    }
}

/// Position-cue task: thread length s varies in [2, 12] and the label is
/// carried entirely by a cue token in the second-to-last post, so a model
/// must focus on a position that shifts with length. Returns train and
/// test sets plus the id-space size.
pub fn length_cue_task(
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> (Vec<Instance>, Vec<Instance>, usize) {
    let vocab_size = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = (0..n_train)
        .map(|k| length_cue_instance(&mut rng, format!("lc-tr{k:05}")))
        .collect();
    let test = (0..n_test)
        .map(|k| length_cue_instance(&mut rng, format!("lc-te{k:05}")))
        .collect();
    (train, test, vocab_size)
}

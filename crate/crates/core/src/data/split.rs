use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Thread;

/// How to carve threads into train/validation/test.
#[derive(Clone, Copy, Debug)]
pub enum SplitSpec {
    /// Absolute thread counts. Falls back to the equivalent proportions
    /// (with a warning) when the corpus is smaller than their sum.
    Counts { train: usize, val: usize, test: usize },
    /// Validation/test fractions; the rest trains.
    Fractions { val: f64, test: f64 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions { val: 0.1, test: 0.1 }
    }
}

/// The published forum-corpus split sizes.
pub const REDDIT_PAPER_SPLIT: SplitSpec = SplitSpec::Counts {
    train: 63_097,
    val: 10_000,
    test: 10_000,
};

/// The published dialog-corpus split sizes.
pub const MOVIE_PAPER_SPLIT: SplitSpec = SplitSpec::Counts {
    train: 80_000,
    val: 10_000,
    test: 10_000,
};

impl SplitSpec {
    /// (train, val) boundary indices for `n` threads.
    fn boundaries(&self, n: usize) -> (usize, usize) {
        match *self {
            SplitSpec::Counts { train, val, test } => {
                let total = train + val + test;
                if total <= n {
                    (train, train + val)
                } else {
                    log::warn!(
                        "split sizes {train}/{val}/{test} exceed {n} threads; \
                         falling back to the same proportions"
                    );
                    let ft = train as f64 / total as f64;
                    let fv = val as f64 / total as f64;
                    let t = (n as f64 * ft).round() as usize;
                    let v = t + (n as f64 * fv).round() as usize;
                    (t.min(n), v.min(n))
                }
            }
            SplitSpec::Fractions { val, test } => {
                let v = (n as f64 * val).round() as usize;
                let s = (n as f64 * test).round() as usize;
                let t = n.saturating_sub(v + s);
                (t, t + v)
            }
        }
    }
}

/// Chronological split: earliest threads (by first post) train, latest
/// test. The forum corpus's split regime.
pub fn split_chronological(
    mut threads: Vec<Thread>,
    spec: &SplitSpec,
) -> (Vec<Thread>, Vec<Thread>, Vec<Thread>) {
    threads.sort_by(|a, b| (a.started_at(), &a.thread_id).cmp(&(b.started_at(), &b.thread_id)));
    partition(threads, spec)
}

/// Seeded random permutation then split. The dialog corpus's regime
/// (ordinal timestamps carry no chronology across dialogs).
pub fn split_random(
    mut threads: Vec<Thread>,
    spec: &SplitSpec,
    seed: u64,
) -> (Vec<Thread>, Vec<Thread>, Vec<Thread>) {
    // sort first so the permutation is a pure function of the seed, not
    // of upstream ordering
    threads.sort_by(|a, b| a.thread_id.cmp(&b.thread_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    threads.shuffle(&mut rng);
    partition(threads, spec)
}

fn partition(mut threads: Vec<Thread>, spec: &SplitSpec) -> (Vec<Thread>, Vec<Thread>, Vec<Thread>) {
    let (t, v) = spec.boundaries(threads.len());
    let test = threads.split_off(v);
    let val = threads.split_off(t);
    (threads, val, test)
}

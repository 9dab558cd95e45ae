use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Instance, Thread};
use crate::{Error, Result};

/// Cache format version; bumped on any record-schema change.
pub const CACHE_VERSION: u32 = 1;
const CACHE_MAGIC: &str = "instances-cache v";

/// FNV-1a, 64 bit. Used to derive a per-thread stream from one run seed
/// so instance sampling is independent of corpus iteration order.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// A sampled prediction target inside one thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TargetSample {
    /// Index of the target post in thread order.
    pub target: usize,
    /// First kept index: the model sees posts `start..=target`.
    pub start: usize,
    /// Full thread length before any truncation.
    pub thread_len: usize,
}

impl TargetSample {
    /// Number of posts the model actually sees.
    pub fn window_len(&self) -> usize {
        self.target + 1 - self.start
    }
}

/// Picks one target post uniformly at random, then keeps the most recent
/// `l_max` posts up to and including it. Deterministic in (seed, thread id),
/// so shuffling the corpus cannot change any thread's target.
pub fn sample_target(thread: &Thread, seed: u64, l_max: usize) -> TargetSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv64(thread.thread_id.as_bytes()));
    let n = thread.len();
    let target = rng.random_range(0..n);
    let start = (target + 1).saturating_sub(l_max.max(1));
    TargetSample { target, start, thread_len: n }
}

/// Writes instances as one JSON record per line under a versioned header.
pub fn save_instances(path: &Path, instances: &[Instance]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>, s: &str| -> Result<()> {
        out.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
    };
    write(&mut out, &format!("{CACHE_MAGIC}{CACHE_VERSION}\n"))?;
    for inst in instances {
        let line = serde_json::to_string(inst)
            .map_err(|e| Error::Data(format!("encoding instance {}: {e}", inst.target_post_id)))?;
        write(&mut out, &line)?;
        write(&mut out, "\n")?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a cache written by [`save_instances`], validating the header.
pub fn load_instances(path: &Path) -> Result<Vec<Instance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::Corrupt(format!("{}: empty cache file", path.display()))),
    };
    match header.strip_prefix(CACHE_MAGIC).and_then(|v| v.trim().parse::<u32>().ok()) {
        Some(v) if v == CACHE_VERSION => {}
        Some(found) => return Err(Error::Version { found, expected: CACHE_VERSION }),
        None => {
            return Err(Error::Corrupt(format!(
                "{}: unrecognized header {header:?}",
                path.display()
            )))
        }
    }
    let mut instances = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| {
            Error::Corrupt(format!("{}: record on line {}: {e}", path.display(), i + 2))
        })?;
        instances.push(inst);
    }
    Ok(instances)
}

//! Hashed linear baseline: per-post feature blocks (n-grams, pretrained
//! embeddings, context features) concatenated target-last, scored by a
//! linear model trained with hinge loss.

pub mod sgd;

use std::collections::HashMap;
use std::path::Path;

use crate::data::instance::fnv64;
use crate::data::{Instance, Vocabulary};
use crate::{Error, Result};

pub use sgd::{train_linear, LinearModel};

/// Relaxation-parameter grid for the underlying SVM objective; the SGD
/// regularizer is `lambda = 1/(C·n)` over `n` training instances.
pub const C_GRID: [f64; 7] = [1e3, 1e2, 1e1, 1.0, 1e-1, 1e-2, 1e-3];

pub fn lambda_from_c(c: f64, n: usize) -> f64 {
    1.0 / (c * n as f64)
}

/// Which feature families the baseline sees, and the hashing/block
/// geometry. Disabling a family zeroes its slots; it never reshapes the
/// vector, so ablations stay dimension-compatible.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpec {
    pub ngrams: bool,
    pub embeddings: bool,
    pub lengths: bool,
    pub sentiment: bool,
    pub background: bool,
    pub post_time: bool,
    pub reply_structure: bool,
    pub author: bool,
    /// Which n-gram orders to hash (subset of {1,2,3}).
    pub ngram_orders: Vec<usize>,
    /// Hashed block width for n-grams and for the background id.
    pub hash_dim: usize,
    /// Post blocks per instance; shorter instances zero-pad at the front.
    pub l_max: usize,
    /// Width of the pretrained-embedding slots (0 when no table is used).
    pub emb_dim: usize,
}

impl FeatureSpec {
    pub fn all(hash_dim: usize, l_max: usize) -> Self {
        FeatureSpec {
            ngrams: true,
            embeddings: false, // needs a pretrained table; off until one is supplied
            lengths: true,
            sentiment: true,
            background: true,
            post_time: true,
            reply_structure: true,
            author: true,
            ngram_orders: vec![1, 2, 3],
            hash_dim,
            l_max,
            emb_dim: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let families = [
            self.ngrams,
            self.embeddings,
            self.lengths,
            self.sentiment,
            self.background,
            self.post_time,
            self.reply_structure,
            self.author,
        ];
        if !families.contains(&true) {
            return Err(Error::Config("no feature family enabled".into()));
        }
        if self.hash_dim == 0 || self.l_max == 0 {
            return Err(Error::Config("hash_dim and l_max must be positive".into()));
        }
        if self.ngrams {
            if self.ngram_orders.is_empty() {
                return Err(Error::Config("ngrams enabled with no orders".into()));
            }
            if self.ngram_orders.iter().any(|&n| !(1..=3).contains(&n)) {
                return Err(Error::Config(format!(
                    "ngram orders {:?} outside 1..=3",
                    self.ngram_orders
                )));
            }
        }
        if self.embeddings && self.emb_dim == 0 {
            return Err(Error::Config(
                "embeddings family enabled but no pretrained table is configured".into(),
            ));
        }
        Ok(())
    }

    /// Turn one family off by name (the `--ablate` vocabulary).
    pub fn disable(&mut self, family: &str) -> Result<()> {
        match family {
            "ngrams" => self.ngrams = false,
            "embeddings" => self.embeddings = false,
            "lengths" => self.lengths = false,
            "sentiment" => self.sentiment = false,
            "background" => self.background = false,
            "post_time" => self.post_time = false,
            "reply_structure" => self.reply_structure = false,
            "author" => self.author = false,
            other => {
                return Err(Error::Config(format!(
                    "unknown feature family {other:?} (expected ngrams|embeddings|lengths|\
                     sentiment|background|post_time|reply_structure|author)"
                )))
            }
        }
        Ok(())
    }

    /// Slot layout inside one post block:
    /// `[ngrams hash_dim][embeddings emb_dim][lengths 2][sentiment 3]`
    /// `[post_time 4][reply 2][author 1][background hash_dim]`.
    pub fn block_width(&self) -> usize {
        self.hash_dim + self.emb_dim + 12 + self.hash_dim
    }

    pub fn total_dim(&self) -> usize {
        self.l_max * self.block_width()
    }

    /// One-line serialization for model headers.
    pub fn to_line(&self) -> String {
        let mut families = Vec::new();
        for (name, on) in [
            ("ngrams", self.ngrams),
            ("embeddings", self.embeddings),
            ("lengths", self.lengths),
            ("sentiment", self.sentiment),
            ("background", self.background),
            ("post_time", self.post_time),
            ("reply_structure", self.reply_structure),
            ("author", self.author),
        ] {
            if on {
                families.push(name);
            }
        }
        let orders: Vec<String> = self.ngram_orders.iter().map(|n| n.to_string()).collect();
        format!(
            "families={} orders={} hash_dim={} l_max={} emb_dim={}",
            families.join(","),
            orders.join(","),
            self.hash_dim,
            self.l_max,
            self.emb_dim
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let mut spec = FeatureSpec {
            ngrams: false,
            embeddings: false,
            lengths: false,
            sentiment: false,
            background: false,
            post_time: false,
            reply_structure: false,
            author: false,
            ngram_orders: Vec::new(),
            hash_dim: 0,
            l_max: 0,
            emb_dim: 0,
        };
        for field in line.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Corrupt(format!("feature spec field {field:?}")))?;
            match key {
                "families" => {
                    for fam in value.split(',').filter(|f| !f.is_empty()) {
                        match fam {
                            "ngrams" => spec.ngrams = true,
                            "embeddings" => spec.embeddings = true,
                            "lengths" => spec.lengths = true,
                            "sentiment" => spec.sentiment = true,
                            "background" => spec.background = true,
                            "post_time" => spec.post_time = true,
                            "reply_structure" => spec.reply_structure = true,
                            "author" => spec.author = true,
                            other => {
                                return Err(Error::Corrupt(format!("unknown family {other:?}")))
                            }
                        }
                    }
                }
                "orders" => {
                    spec.ngram_orders = value
                        .split(',')
                        .filter(|v| !v.is_empty())
                        .map(|v| {
                            v.parse()
                                .map_err(|_| Error::Corrupt(format!("ngram order {v:?}")))
                        })
                        .collect::<Result<_>>()?;
                }
                "hash_dim" => {
                    spec.hash_dim = value
                        .parse()
                        .map_err(|_| Error::Corrupt(format!("hash_dim {value:?}")))?
                }
                "l_max" => {
                    spec.l_max = value
                        .parse()
                        .map_err(|_| Error::Corrupt(format!("l_max {value:?}")))?
                }
                "emb_dim" => {
                    spec.emb_dim = value
                        .parse()
                        .map_err(|_| Error::Corrupt(format!("emb_dim {value:?}")))?
                }
                other => return Err(Error::Corrupt(format!("feature spec key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Sorted sparse vector with a declared dimensionality.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVec {
    dim: usize,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseVec {
    pub fn from_map(dim: usize, map: HashMap<usize, f64>) -> Self {
        let mut pairs: Vec<(usize, f64)> =
            map.into_iter().filter(|&(_, v)| v != 0.0).collect();
        pairs.sort_unstable_by_key(|&(i, _)| i);
        SparseVec {
            dim,
            idx: pairs.iter().map(|&(i, _)| i).collect(),
            val: pairs.iter().map(|&(_, v)| v).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| (i, v))
    }

    pub fn get(&self, i: usize) -> f64 {
        match self.idx.binary_search(&i) {
            Ok(at) => self.val[at],
            Err(_) => 0.0,
        }
    }

    pub fn dot(&self, dense: &[f64]) -> Result<f64> {
        if dense.len() != self.dim {
            return Err(Error::Shape(format!(
                "dot: sparse dim {} vs dense {}",
                self.dim,
                dense.len()
            )));
        }
        Ok(self.entries().map(|(i, v)| v * dense[i]).sum())
    }
}

/// Pretrained word vectors aligned to a vocabulary's id space. The file
/// format is one `token v1 v2 ... vd` line per word; tokens outside the
/// vocabulary are skipped, and vocabulary words without a line get no
/// vector (they simply don't contribute to post means).
pub struct PretrainedEmbeddings {
    dim: usize,
    by_id: Vec<Option<Vec<f64>>>,
}

impl PretrainedEmbeddings {
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, vocab).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, vocab: &Vocabulary) -> std::result::Result<Self, String> {
        let mut dim = 0;
        let mut by_id: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().ok_or_else(|| format!("line {}: empty", lineno + 1))?;
            let vec: Vec<f64> = fields
                .map(|v| v.parse().map_err(|e| format!("line {}: {e}", lineno + 1)))
                .collect::<std::result::Result<_, _>>()?;
            if vec.is_empty() {
                return Err(format!("line {}: token with no values", lineno + 1));
            }
            if dim == 0 {
                dim = vec.len();
            } else if vec.len() != dim {
                return Err(format!(
                    "line {}: {} values, expected {dim}",
                    lineno + 1,
                    vec.len()
                ));
            }
            let id = vocab.id(token);
            if id >= crate::data::UNK_ID + 1 {
                by_id[id as usize] = Some(vec);
            }
        }
        if dim == 0 {
            return Err("no vectors in embedding file".into());
        }
        Ok(PretrainedEmbeddings { dim, by_id })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, id: u32) -> Option<&[f64]> {
        self.by_id
            .get(id as usize)
            .and_then(|v| v.as_deref())
    }
}

/// Slot and sign for a hashed feature key: 64-bit FNV-1a, slot from the
/// upper 63 bits mod the block width, sign from the low bit. Fixed
/// constants, so the same key lands identically on every platform.
fn hash_slot(key: &[u8], dim: usize) -> (usize, f64) {
    let h = fnv64(key);
    let slot = ((h >> 1) % dim as u64) as usize;
    let sign = if h & 1 == 1 { 1.0 } else { -1.0 };
    (slot, sign)
}

fn ngram_key(order: usize, ids: &[u32]) -> Vec<u8> {
    let mut key = Vec::with_capacity(1 + 4 * ids.len());
    key.push(order as u8);
    for &id in ids {
        key.extend_from_slice(&id.to_le_bytes());
    }
    key
}

/// Hash one instance into its sparse feature vector. Post blocks are
/// right-aligned so the target always occupies the final block; threads
/// shorter than `l_max` leave the leading blocks zero.
pub fn featurize_instance(
    inst: &Instance,
    spec: &FeatureSpec,
    emb: Option<&PretrainedEmbeddings>,
) -> Result<SparseVec> {
    spec.validate()?;
    if spec.embeddings && emb.is_none() {
        return Err(Error::Config(
            "embeddings family enabled but no pretrained embedding file given".into(),
        ));
    }
    if let Some(e) = emb {
        if e.dim() != spec.emb_dim {
            return Err(Error::Shape(format!(
                "embedding table dim {} vs spec emb_dim {}",
                e.dim(),
                spec.emb_dim
            )));
        }
    }
    let s = inst.s();
    if s == 0 {
        return Err(Error::EmptyInput(format!("instance {} has no posts", inst.thread_id)));
    }
    if s > spec.l_max {
        return Err(Error::Shape(format!(
            "instance {} has {s} posts, over the baseline maximum {}; truncate upstream",
            inst.thread_id, spec.l_max
        )));
    }
    let d = spec.hash_dim;
    let w = spec.block_width();
    // offsets inside a block
    let off_emb = d;
    let off_ctx = d + spec.emb_dim;
    let off_bg = off_ctx + 12;

    let mut map: HashMap<usize, f64> = HashMap::new();
    for (j, (ids, ctx)) in inst.posts.iter().zip(&inst.contexts).enumerate() {
        let base = (spec.l_max - s + j) * w;
        if spec.ngrams {
            for &order in &spec.ngram_orders {
                for gram in ids.windows(order) {
                    let (slot, sign) = hash_slot(&ngram_key(order, gram), d);
                    *map.entry(base + slot).or_default() += sign;
                }
            }
        }
        if spec.embeddings {
            let table = emb.unwrap();
            let mut mean = vec![0.0; spec.emb_dim];
            let mut found = 0.0;
            for &id in ids {
                if let Some(v) = table.get(id) {
                    for (m, x) in mean.iter_mut().zip(v) {
                        *m += x;
                    }
                    found += 1.0;
                }
            }
            if found > 0.0 {
                for (k, m) in mean.into_iter().enumerate() {
                    if m != 0.0 {
                        map.insert(base + off_emb + k, m / found);
                    }
                }
            }
        }
        if ctx.len() != 12 {
            return Err(Error::Shape(format!(
                "instance {}: context vector of {} values, expected 12",
                inst.thread_id,
                ctx.len()
            )));
        }
        let put_ctx = |range: std::ops::Range<usize>, on: bool, map: &mut HashMap<usize, f64>| {
            if on {
                for k in range {
                    if ctx[k] != 0.0 {
                        map.insert(base + off_ctx + k, ctx[k]);
                    }
                }
            }
        };
        put_ctx(0..2, spec.lengths, &mut map);
        put_ctx(2..5, spec.sentiment, &mut map);
        put_ctx(5..9, spec.post_time, &mut map);
        put_ctx(9..11, spec.reply_structure, &mut map);
        put_ctx(11..12, spec.author, &mut map);
        if spec.background {
            if let Some(bg) = inst.background {
                let mut key = b"bg".to_vec();
                key.extend_from_slice(&bg.to_le_bytes());
                let (slot, sign) = hash_slot(&key, d);
                *map.entry(base + off_bg + slot).or_default() += sign;
            }
        }
    }
    Ok(SparseVec::from_map(spec.total_dim(), map))
}

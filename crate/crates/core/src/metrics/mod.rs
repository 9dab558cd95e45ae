//! Ranking metrics over per-instance scores, and the paired random
//! permutation test used to compare two models on the same test set.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

/// Scores for a set of evaluated instances: parallel ids, scores, labels.
/// Construction enforces what every metric assumes — non-empty, unique
/// ids, finite scores, 0/1 labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    ids: Vec<String>,
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl PredictionSet {
    pub fn new(rows: Vec<(String, f64, u8)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("no predictions".into()));
        }
        let mut sorted: Vec<&str> = rows.iter().map(|(id, _, _)| id.as_str()).collect();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate instance ids in predictions".into()));
        }
        let mut ids = Vec::with_capacity(rows.len());
        let mut scores = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (id, score, label) in rows {
            if !score.is_finite() {
                return Err(Error::Numeric(format!("non-finite score for {id}")));
            }
            if label > 1 {
                return Err(Error::Data(format!("label {label} for {id}; need 0 or 1")));
            }
            ids.push(id);
            scores.push(score);
            labels.push(label);
        }
        Ok(PredictionSet { ids, scores, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64, u8)> {
        self.ids
            .iter()
            .zip(&self.scores)
            .zip(&self.labels)
            .map(|((id, &s), &l)| (id.as_str(), s, l))
    }

    /// CSV with an `instance_id,score,label` header. Scores print in
    /// Rust's shortest round-trip form, so files are byte-stable.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance_id,score,label\n");
        for (id, score, label) in self.iter() {
            out.push_str(&format!("{id},{score},{label}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some("instance_id,score,label") => {}
            other => {
                return Err(Error::Corrupt(format!(
                    "predictions CSV header: got {other:?}"
                )))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.splitn(3, ',');
            let (id, score, label) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(Error::Corrupt(format!("predictions CSV line {}", i + 2))),
            };
            let score: f64 = score
                .parse()
                .map_err(|e| Error::Corrupt(format!("predictions CSV line {}: {e}", i + 2)))?;
            let label: u8 = label
                .parse()
                .map_err(|e| Error::Corrupt(format!("predictions CSV line {}: {e}", i + 2)))?;
            rows.push((id.to_string(), score, label));
        }
        PredictionSet::new(rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Fraction of instances where thresholding the score reproduces the
/// label; a score exactly at the threshold counts as a positive call.
pub fn accuracy(p: &PredictionSet, threshold: f64) -> f64 {
    let correct = p
        .iter()
        .filter(|&(_, s, l)| (s >= threshold) == (l == 1))
        .count();
    correct as f64 / p.len() as f64
}

/// Probability that a uniformly chosen positive scores above a uniformly
/// chosen negative, ties counting half. Computed from the rank sum of the
/// positives (tied scores share their average rank), which equals the
/// pairwise definition exactly.
pub fn auc(p: &PredictionSet) -> Result<f64> {
    auc_raw(&p.scores, &p.labels)
}

fn auc_raw(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes; got {n_pos} positive, {n_neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average 1-based rank within each tied run
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision of the full ranking: mean of precision@k over the
/// positions k holding positives. Ties in score order deterministically
/// by instance id.
pub fn average_precision(p: &PredictionSet) -> Result<f64> {
    ap_raw(&p.ids, &p.scores, &p.labels)
}

fn ap_raw(ids: &[String], scores: &[f64], labels: &[u8]) -> Result<f64> {
    if !labels.contains(&1) {
        return Err(Error::Metric(
            "average precision needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if labels[idx] == 1 {
            hits += 1.0;
            sum += hits / (k + 1) as f64;
        }
    }
    Ok(sum / hits)
}

/// Which metric a comparison runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Accuracy,
    Auc,
    Map,
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(MetricKind::Accuracy),
            "auc" => Ok(MetricKind::Auc),
            "map" => Ok(MetricKind::Map),
            other => Err(Error::Config(format!(
                "unknown metric {other:?} (expected accuracy|auc|map)"
            ))),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Auc => "auc",
            MetricKind::Map => "map",
        })
    }
}

impl MetricKind {
    pub fn compute(&self, p: &PredictionSet) -> Result<f64> {
        match self {
            MetricKind::Accuracy => Ok(accuracy(p, 0.5)),
            MetricKind::Auc => auc(p),
            MetricKind::Map => average_precision(p),
        }
    }

    fn compute_raw(&self, ids: &[String], scores: &[f64], labels: &[u8]) -> Result<f64> {
        match self {
            MetricKind::Accuracy => {
                let correct = scores
                    .iter()
                    .zip(labels)
                    .filter(|&(&s, &l)| (s >= 0.5) == (l == 1))
                    .count();
                Ok(correct as f64 / scores.len() as f64)
            }
            MetricKind::Auc => auc_raw(scores, labels),
            MetricKind::Map => ap_raw(ids, scores, labels),
        }
    }
}

/// Paired random permutation test: how often does swapping the two
/// models' scores instance-by-instance (fair coin each) produce a metric
/// gap at least as large as the observed one? Two-sided, with add-one
/// smoothing so p is never exactly 0. Rounds run in parallel on
/// independently seeded streams, so the result is reproducible for a
/// fixed seed regardless of thread count.
pub fn permutation_test(
    a: &PredictionSet,
    b: &PredictionSet,
    metric: MetricKind,
    n_rounds: usize,
    seed: u64,
) -> Result<f64> {
    if n_rounds == 0 {
        return Err(Error::Config("permutation test needs at least 1 round".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Pairing(format!(
            "{} vs {} instances",
            a.len(),
            b.len()
        )));
    }
    // align b to a's id order
    let mut order_a: Vec<usize> = (0..a.len()).collect();
    order_a.sort_by(|&x, &y| a.ids[x].cmp(&a.ids[y]));
    let mut order_b: Vec<usize> = (0..b.len()).collect();
    order_b.sort_by(|&x, &y| b.ids[x].cmp(&b.ids[y]));
    let mut ids = Vec::with_capacity(a.len());
    let mut scores_a = Vec::with_capacity(a.len());
    let mut scores_b = Vec::with_capacity(a.len());
    let mut labels = Vec::with_capacity(a.len());
    for (&ia, &ib) in order_a.iter().zip(&order_b) {
        if a.ids[ia] != b.ids[ib] {
            return Err(Error::Pairing(format!(
                "instance {} in one set has no partner (other has {})",
                a.ids[ia], b.ids[ib]
            )));
        }
        if a.labels[ia] != b.labels[ib] {
            return Err(Error::Pairing(format!(
                "instance {} labeled differently in the two sets",
                a.ids[ia]
            )));
        }
        ids.push(a.ids[ia].clone());
        scores_a.push(a.scores[ia]);
        scores_b.push(b.scores[ib]);
        labels.push(a.labels[ia]);
    }

    let observed = (metric.compute_raw(&ids, &scores_a, &labels)?
        - metric.compute_raw(&ids, &scores_b, &labels)?)
    .abs();

    let hits: usize = (0..n_rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(round as u64 + 1);
            let mut pa = scores_a.clone();
            let mut pb = scores_b.clone();
            for i in 0..pa.len() {
                if rng.random::<bool>() {
                    std::mem::swap(&mut pa[i], &mut pb[i]);
                }
            }
            // label sets are unchanged by swapping, so the metrics stay defined
            let delta = metric.compute_raw(&ids, &pa, &labels).unwrap()
                - metric.compute_raw(&ids, &pb, &labels).unwrap();
            usize::from(delta.abs() >= observed)
        })
        .sum();
    Ok((1 + hits) as f64 / (n_rounds + 1) as f64)
}

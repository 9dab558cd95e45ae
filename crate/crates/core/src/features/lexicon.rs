use std::collections::HashMap;
use std::path::Path;

use crate::{Error, Result};

/// Token → valence score table, loaded from a tab-separated file
/// (`token<TAB>score` per line, `#` starts a comment). Lookups are
/// case-insensitive; tokens not in the table score 0.
#[derive(Clone, Debug, Default)]
pub struct SentimentLexicon {
    scores: HashMap<String, f64>,
}

impl SentimentLexicon {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    /// Parses lexicon text; the error string names the offending line.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut scores = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, score) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected token<TAB>score", i + 1))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|e| format!("line {}: bad score: {e}", i + 1))?;
            scores.insert(token.trim().to_lowercase(), score);
        }
        Ok(SentimentLexicon { scores })
    }

    pub fn score(&self, token: &str) -> f64 {
        if let Some(&s) = self.scores.get(token) {
            return s;
        }
        // tokens are usually already lowercase; only allocate when not
        self.scores
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Valence mass of a post, as `(negative, neutral, positive)` sharing a
/// unit sum. Positive mass adds up scores above zero, negative mass the
/// magnitudes below zero, and the neutral slot counts zero-scoring tokens;
/// a post with no tokens at all is fully neutral. This is a deliberately
/// plain aggregation of the lexicon — no booster/negation heuristics.
pub fn sentiment_scores(tokens: &[String], lexicon: &SentimentLexicon) -> (f64, f64, f64) {
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut neu = 0.0;
    for t in tokens {
        let s = lexicon.score(t);
        if s > 0.0 {
            pos += s;
        } else if s < 0.0 {
            neg -= s;
        } else {
            neu += 1.0;
        }
    }
    let total = pos + neg + neu;
    if total <= 0.0 {
        return (0.0, 1.0, 0.0);
    }
    (neg / total, neu / total, pos / total)
}

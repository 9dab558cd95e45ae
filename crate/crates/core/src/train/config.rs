use crate::error::{Error, Result};
use crate::nn::model::AttentionKind;

pub const D_W_GRID: [usize; 5] = [16, 32, 64, 128, 256];
pub const D_B_GRID: [usize; 6] = [2, 4, 8, 16, 32, 64];
pub const STACK_GRID: [usize; 3] = [1, 2, 3];
pub const LR_GRID: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];

/// Everything that shapes the network and its training run. Defaults are
/// desk-scale; each gridded field warns (but proceeds) off its grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Word embedding size.
    pub d_w: usize,
    /// Recurrent hidden units per direction.
    pub hidden: usize,
    /// Number of vertically stacked bidirectional layers.
    pub stack_depth: usize,
    /// Background (e.g. movie id) embedding size.
    pub d_b: usize,
    pub lr: f64,
    /// Std of the Gaussian weight initializer.
    pub init_std: f64,
    pub mlp_depth: usize,
    pub mlp_hidden: usize,
    /// Width of the merged encoder output fed to the decoder.
    pub merge_dim: usize,
    pub batch_size: usize,
    /// Maximum posts per instance; longer threads keep the most recent.
    pub l_max: usize,
    pub seed: u64,
    /// RMSProp decay.
    pub rho: f64,
    /// RMSProp denominator floor.
    pub eps: f64,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// Validation-AUC gain below this counts as non-improving.
    pub min_improvement: f64,
    /// Loss weight for positive instances (1.0 = unweighted).
    pub pos_weight: f64,
    pub attention: AttentionKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_w: 32,
            hidden: 32,
            stack_depth: 1,
            d_b: 8,
            lr: 1e-3,
            init_std: 0.1,
            mlp_depth: 2,
            mlp_hidden: 32,
            merge_dim: 32,
            batch_size: 32,
            l_max: 20,
            seed: 42,
            rho: 0.9,
            eps: 1e-8,
            max_epochs: 30,
            patience: 3,
            min_improvement: 1e-4,
            pos_weight: 1.0,
            attention: AttentionKind::Dwdl,
        }
    }
}

impl ModelConfig {
    /// Reject impossible values; warn about legal off-grid ones.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_w", self.d_w),
            ("hidden", self.hidden),
            ("stack_depth", self.stack_depth),
            ("d_b", self.d_b),
            ("mlp_depth", self.mlp_depth),
            ("mlp_hidden", self.mlp_hidden),
            ("merge_dim", self.merge_dim),
            ("batch_size", self.batch_size),
            ("l_max", self.l_max),
            ("max_epochs", self.max_epochs),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("lr", self.lr), ("init_std", self.init_std)] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must be in [0,1), got {}", self.rho)));
        }
        if self.pos_weight <= 0.0 {
            return Err(Error::Config(format!(
                "pos_weight must be positive, got {}",
                self.pos_weight
            )));
        }
        if !D_W_GRID.contains(&self.d_w) {
            log::warn!("d_w {} is off the tuning grid {D_W_GRID:?}", self.d_w);
        }
        if !crate::nn::lstm::HIDDEN_GRID.contains(&self.hidden) {
            log::warn!(
                "hidden {} is off the tuning grid {:?}",
                self.hidden,
                crate::nn::lstm::HIDDEN_GRID
            );
        }
        if !STACK_GRID.contains(&self.stack_depth) {
            log::warn!(
                "stack_depth {} is off the tuning grid {STACK_GRID:?}",
                self.stack_depth
            );
        }
        if !D_B_GRID.contains(&self.d_b) {
            log::warn!("d_b {} is off the tuning grid {D_B_GRID:?}", self.d_b);
        }
        if !LR_GRID.iter().any(|&g| (g - self.lr).abs() < 1e-12) {
            log::warn!("lr {} is off the tuning grid {LR_GRID:?}", self.lr);
        }
        if !crate::tensor::INIT_STD_GRID
            .iter()
            .any(|&g| (g - self.init_std).abs() < 1e-12)
        {
            log::warn!(
                "init_std {} is off the tuning grid {:?}",
                self.init_std,
                crate::tensor::INIT_STD_GRID
            );
        }
        Ok(())
    }

    /// Hidden widths of the decoder, one entry per layer.
    pub fn mlp_widths(&self) -> Vec<usize> {
        vec![self.mlp_hidden; self.mlp_depth]
    }

    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "d_w" => self.d_w = p(key, value)?,
            "hidden" => self.hidden = p(key, value)?,
            "stack_depth" => self.stack_depth = p(key, value)?,
            "d_b" => self.d_b = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "init_std" => self.init_std = p(key, value)?,
            "mlp_depth" => self.mlp_depth = p(key, value)?,
            "mlp_hidden" => self.mlp_hidden = p(key, value)?,
            "merge_dim" => self.merge_dim = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "l_max" => self.l_max = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "rho" => self.rho = p(key, value)?,
            "eps" => self.eps = p(key, value)?,
            "max_epochs" => self.max_epochs = p(key, value)?,
            "patience" => self.patience = p(key, value)?,
            "min_improvement" => self.min_improvement = p(key, value)?,
            "pos_weight" => self.pos_weight = p(key, value)?,
            "attention" => self.attention = value.parse()?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a block of `key=value` lines ('#' comments and blanks skipped).
    pub fn apply_lines(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Serialize as `key=value` lines; `apply_lines` restores it exactly.
    pub fn to_lines(&self) -> String {
        format!(
            "d_w={}\nhidden={}\nstack_depth={}\nd_b={}\nlr={}\ninit_std={}\n\
             mlp_depth={}\nmlp_hidden={}\nmerge_dim={}\nbatch_size={}\nl_max={}\nseed={}\n\
             rho={}\neps={}\nmax_epochs={}\npatience={}\nmin_improvement={}\n\
             pos_weight={}\nattention={}\n",
            self.d_w,
            self.hidden,
            self.stack_depth,
            self.d_b,
            self.lr,
            self.init_std,
            self.mlp_depth,
            self.mlp_hidden,
            self.merge_dim,
            self.batch_size,
            self.l_max,
            self.seed,
            self.rho,
            self.eps,
            self.max_epochs,
            self.patience,
            self.min_improvement,
            self.pos_weight,
            self.attention,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = ModelConfig::default();
        cfg.set("hidden", "64").unwrap();
        cfg.set("attention", "standard").unwrap();
        cfg.set("lr", "0.01").unwrap();
        let text = cfg.to_lines();
        let mut restored = ModelConfig::default();
        restored.apply_lines(&text).unwrap();
        assert_eq!(cfg, restored);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = ModelConfig::default();
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("hidden", "many").is_err());
        assert!(cfg.apply_lines("hidden 64").is_err());
    }

    #[test]
    fn zero_dimensions_fail_validation() {
        let mut cfg = ModelConfig::default();
        cfg.hidden = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let mut cfg = ModelConfig::default();
        cfg.apply_lines("# a comment\n\n  seed = 7 \n").unwrap();
        assert_eq!(cfg.seed, 7);
    }
}

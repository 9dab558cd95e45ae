use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::nn::attention::{LengthAttention, UniformAttention};
use crate::nn::embedding::{embed_and_pool, init_embedding};
use crate::nn::ln_lstm::LnLstmParams;
use crate::nn::lstm::bilstm_forward;
use crate::nn::mlp::{BatchStats, MlpParams};
use crate::nn::params::{Binding, Mode, ParamId, ParamStore};
use crate::tensor::{gaussian_init, Tape, Tensor, Value};
use crate::train::config::ModelConfig;

/// Which attention head sits between the encoder and the merge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttentionKind {
    /// Length-conditioned weights (separate logits per sequence length).
    Dwdl,
    /// One shared logit vector for all lengths.
    Standard,
    /// No attention; the merge sees only the last encoder output.
    None,
}

impl FromStr for AttentionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dwdl" => Ok(AttentionKind::Dwdl),
            "standard" => Ok(AttentionKind::Standard),
            "none" => Ok(AttentionKind::None),
            other => Err(Error::Config(format!(
                "unknown attention kind {other:?} (expected dwdl|standard|none)"
            ))),
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionKind::Dwdl => "dwdl",
            AttentionKind::Standard => "standard",
            AttentionKind::None => "none",
        })
    }
}

enum AttentionHead {
    Length(LengthAttention),
    Uniform(UniformAttention),
    None,
}

/// The full network: word embeddings pooled per post and joined with
/// context features, a stack of layer-normalized bidirectional LSTM
/// layers, an attention head over the output sequence, a tanh merge with
/// the final output, and a batch-normalized MLP decoder.
pub struct ConverNet {
    embedding: ParamId,
    background: Option<ParamId>,
    stack: Vec<(LnLstmParams, LnLstmParams)>,
    attention: AttentionHead,
    w_merge: ParamId,
    pub mlp: MlpParams,
    pub l_max: usize,
    pub hidden: usize,
}

impl ConverNet {
    /// Register all parameters for a model over `vocab_size` word ids and
    /// `context_dim` context features per post. `backgrounds` is the size
    /// of the background id space, or `None` for corpora without one.
    pub fn build(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        vocab_size: usize,
        context_dim: usize,
        backgrounds: Option<usize>,
    ) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let embedding = init_embedding(store, "embedding", vocab_size, cfg.d_w, cfg.init_std, seed)?;
        let background = match backgrounds {
            Some(n) => Some(store.add(
                "background",
                gaussian_init(&[n, cfg.d_b], cfg.init_std, seed.wrapping_add(1))?,
            )?),
            None => None,
        };

        let d_bg = if background.is_some() { cfg.d_b } else { 0 };
        let mut input_dim = cfg.d_w + context_dim + d_bg;
        let mut stack = Vec::with_capacity(cfg.stack_depth);
        for layer in 0..cfg.stack_depth {
            let fwd = LnLstmParams::init(
                store,
                &format!("encoder.l{layer}.fwd"),
                input_dim,
                cfg.hidden,
                cfg.init_std,
                seed.wrapping_add(100 + 10 * layer as u64),
            )?;
            let bwd = LnLstmParams::init(
                store,
                &format!("encoder.l{layer}.bwd"),
                input_dim,
                cfg.hidden,
                cfg.init_std,
                seed.wrapping_add(105 + 10 * layer as u64),
            )?;
            stack.push((fwd, bwd));
            input_dim = 2 * cfg.hidden;
        }

        let attention = match cfg.attention {
            AttentionKind::Dwdl => AttentionHead::Length(LengthAttention::init(
                store,
                "attention.w",
                cfg.l_max,
                cfg.init_std,
                seed.wrapping_add(500),
            )?),
            AttentionKind::Standard => AttentionHead::Uniform(UniformAttention::init(
                store,
                "attention.w",
                cfg.l_max,
                cfg.init_std,
                seed.wrapping_add(500),
            )?),
            AttentionKind::None => AttentionHead::None,
        };
        let merge_in = match attention {
            AttentionHead::None => 2 * cfg.hidden,
            _ => 4 * cfg.hidden,
        };
        let w_merge = store.add(
            "merge.w",
            gaussian_init(&[merge_in, cfg.merge_dim], cfg.init_std, seed.wrapping_add(600))?,
        )?;
        let mlp = MlpParams::init(
            store,
            "decoder",
            cfg.merge_dim,
            &cfg.mlp_widths(),
            0.9,
            cfg.init_std,
            seed.wrapping_add(700),
        )?;
        Ok(ConverNet {
            embedding,
            background,
            stack,
            attention,
            w_merge,
            mlp,
            l_max: cfg.l_max,
            hidden: cfg.hidden,
        })
    }

    /// Encode one instance up to the merged vector `z_0`.
    pub fn encode(&self, tape: &mut Tape, binding: &Binding, inst: &Instance) -> Result<Value> {
        let s = inst.s();
        if s == 0 {
            return Err(Error::EmptyInput(format!(
                "instance {} has no posts",
                inst.thread_id
            )));
        }
        if s > self.l_max {
            return Err(Error::Shape(format!(
                "instance {} has {s} posts, over the configured maximum {}",
                inst.thread_id, self.l_max
            )));
        }
        if inst.contexts.len() != s {
            return Err(Error::Shape(format!(
                "instance {}: {} context vectors for {s} posts",
                inst.thread_id,
                inst.contexts.len()
            )));
        }

        // per-post input rows: [pooled words ; context ; background]
        let bg_vec = match (&self.background, inst.background) {
            (Some(table), Some(id)) => {
                let row = tape.gather_rows(binding.value(*table), &[id])?;
                let d = tape.shape(row)[1];
                Some(tape.reshape(row, &[d])?)
            }
            (Some(table), None) => {
                let d = tape.shape(binding.value(*table))[1];
                Some(tape.constant(Tensor::zeros(&[d])))
            }
            (None, _) => None,
        };
        let mut rows = Vec::with_capacity(s);
        for (tokens, ctx) in inst.posts.iter().zip(&inst.contexts) {
            let mut ctx_val = tape.constant(Tensor::from_vec(ctx.clone()));
            if let Some(bg) = bg_vec {
                ctx_val = tape.concat(&[ctx_val, bg])?;
            }
            rows.push(embed_and_pool(tape, binding.value(self.embedding), tokens, ctx_val)?);
        }
        let mut seq = tape.stack_rows(&rows)?;
        for (fwd, bwd) in &self.stack {
            seq = bilstm_forward(tape, binding, fwd, bwd, seq, s)?;
        }

        let h_last = tape.row(seq, s - 1)?;
        let merged_in = match &self.attention {
            AttentionHead::Length(att) => {
                let c = att.apply(tape, binding, seq, s)?;
                tape.concat(&[c, h_last])?
            }
            AttentionHead::Uniform(att) => {
                let c = att.apply(tape, binding, seq, s)?;
                tape.concat(&[c, h_last])?
            }
            AttentionHead::None => h_last,
        };
        let lin = tape.matmul(merged_in, binding.value(self.w_merge))?;
        tape.tanh(lin)
    }

    /// Forward a batch of instances to probabilities (`[B]` in (0,1)).
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        batch: &[&Instance],
        mode: Mode,
    ) -> Result<(Value, Vec<BatchStats>)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("empty batch".into()));
        }
        let mut zs = Vec::with_capacity(batch.len());
        for inst in batch {
            zs.push(self.encode(tape, binding, inst)?);
        }
        let z = tape.stack_rows(&zs)?;
        self.mlp.decode(tape, binding, z, mode)
    }

    /// Eval-mode probability for a single instance on a fresh tape.
    pub fn predict_one(&self, store: &ParamStore, inst: &Instance) -> Result<f64> {
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape, Mode::Eval);
        let (y, _) = self.forward_batch(&mut tape, &binding, &[inst], Mode::Eval)?;
        Ok(tape.data(y).data()[0])
    }

    /// Eval-mode probabilities for many instances; order preserved.
    pub fn predict(&self, store: &ParamStore, instances: &[Instance]) -> Result<Vec<f64>> {
        instances.iter().map(|i| self.predict_one(store, i)).collect()
    }
}

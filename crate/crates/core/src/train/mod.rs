//! Mini-batch training: shuffled epochs, RMSProp updates, per-epoch
//! validation metrics, best-checkpoint tracking, and early stopping on
//! validation AUC.

pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod rmsprop;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Instance;
use crate::metrics::{accuracy, auc, average_precision, PredictionSet};
use crate::nn::{ConverNet, Mode, ParamStore};
use crate::tensor::Tape;
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, restore_model, save_checkpoint, Checkpoint};
pub use config::ModelConfig;
pub use loss::bce_loss;
pub use rmsprop::RmsProp;

/// One epoch's record in the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_auc: f64,
    pub val_map: f64,
}

/// What a training run produced: the full history, which epoch won, and
/// a snapshot of the parameters at that epoch.
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_store: ParamStore,
}

impl TrainReport {
    pub fn best(&self) -> &EpochStats {
        &self.history[self.best_epoch - 1]
    }
}

/// History serialized as CSV, one row per epoch.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_accuracy,val_auc,val_map\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            h.epoch, h.train_loss, h.val_accuracy, h.val_auc, h.val_map
        ));
    }
    out
}

/// Eval-mode scores for a set of instances, fanned out over worker
/// threads against the frozen parameters; output order matches input.
pub fn score_instances(
    model: &ConverNet,
    store: &ParamStore,
    instances: &[Instance],
) -> Result<PredictionSet> {
    let rows: Vec<(String, f64, u8)> = instances
        .par_iter()
        .map(|inst| {
            let score = model.predict_one(store, inst)?;
            Ok((inst.thread_id.clone(), score, inst.label))
        })
        .collect::<Result<_>>()?;
    PredictionSet::new(rows)
}

/// Train `model` in place on `train_set`, validating each epoch on
/// `val_set`. Stops when validation AUC hasn't improved by at least
/// `cfg.min_improvement` for `cfg.patience` consecutive epochs (patience
/// 0: the first stall stops), or at `cfg.max_epochs`. The best-AUC
/// parameter snapshot is returned alongside the history; `store` itself
/// is left at the final epoch.
pub fn train(
    store: &mut ParamStore,
    model: &ConverNet,
    train_set: &[Instance],
    val_set: &[Instance],
    cfg: &ModelConfig,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let mut opt = RmsProp::new(store, cfg.lr, cfg.rho, cfg.eps)?;
    let mut history: Vec<EpochStats> = Vec::new();
    let mut best_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_store = store.clone();
    let mut stall = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Instance> = chunk.iter().map(|&i| &train_set[i]).collect();
            let labels: Vec<u8> = batch.iter().map(|inst| inst.label).collect();

            let mut tape = Tape::new();
            let binding = store.bind(&mut tape, Mode::Train);
            let (probs, stats) = model.forward_batch(&mut tape, &binding, &batch, Mode::Train)?;
            let loss = bce_loss(&mut tape, probs, &labels, cfg.pos_weight)?;
            let loss_value = tape.scalar(loss);
            tape.backward(loss)?;
            opt.step(store, &tape, &binding)?;
            model.mlp.update_running_stats(store, &stats);
            loss_sum += loss_value * batch.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let predictions = score_instances(model, store, val_set)?;
        let stats = EpochStats {
            epoch,
            train_loss,
            val_accuracy: accuracy(&predictions, 0.5),
            val_auc: auc(&predictions)?,
            val_map: average_precision(&predictions)?,
        };
        log::info!(
            "epoch {}: train_loss {:.4} val_acc {:.4} val_auc {:.4} val_map {:.4}",
            stats.epoch,
            stats.train_loss,
            stats.val_accuracy,
            stats.val_auc,
            stats.val_map
        );

        let improved = stats.val_auc >= best_auc + cfg.min_improvement;
        if stats.val_auc > best_auc {
            best_auc = stats.val_auc;
            best_epoch = epoch;
            best_store = store.clone();
        }
        history.push(stats);

        if improved {
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience.max(1) {
                log::info!("stopping: no validation AUC gain for {stall} epoch(s)");
                break;
            }
        }
    }

    Ok(TrainReport {
        history,
        best_epoch,
        best_store,
    })
}

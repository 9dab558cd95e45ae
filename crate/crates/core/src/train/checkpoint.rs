use std::path::{Path, PathBuf};

use crate::nn::{ConverNet, ParamStore};
use crate::tensor::Tensor;
use crate::train::{EpochStats, ModelConfig};
use crate::{Error, Result};

/// On-disk format version for the manifest/blob pair.
pub const CHECKPOINT_VERSION: u32 = 1;

/// A loaded checkpoint: the parameter tensors plus the config and metric
/// history they were trained under.
pub struct Checkpoint {
    pub store: ParamStore,
    pub config: ModelConfig,
    pub history: Vec<EpochStats>,
}

fn manifest_path(base: &Path) -> PathBuf {
    base.with_extension("manifest")
}

fn blob_path(base: &Path) -> PathBuf {
    base.with_extension("bin")
}

/// Writes `<base>.manifest` (text: version, config, history, parameter
/// table) and `<base>.bin` (the parameters as little-endian f32, in table
/// order). Weights round-trip within f32 quantization.
pub fn save_checkpoint(
    base: &Path,
    store: &ParamStore,
    config: &ModelConfig,
    history: &[EpochStats],
) -> Result<()> {
    let mut manifest = format!("checkpoint v{CHECKPOINT_VERSION}\n");
    for line in config.to_lines().lines() {
        manifest.push_str(&format!("config {line}\n"));
    }
    for h in history {
        manifest.push_str(&format!(
            "history {} {} {} {} {}\n",
            h.epoch, h.train_loss, h.val_accuracy, h.val_auc, h.val_map
        ));
    }
    let mut blob: Vec<u8> = Vec::with_capacity(4 * store.total_elements());
    for (_, name, tensor, trainable) in store.iter() {
        let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!(
            "param {name} {} {} {} {}\n",
            u8::from(trainable),
            dims.join("x"),
            blob.len(),
            tensor.numel(),
        ));
        for &v in tensor.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mpath = manifest_path(base);
    std::fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    let bpath = blob_path(base);
    std::fs::write(&bpath, blob).map_err(|e| Error::io(&bpath, e))?;
    Ok(())
}

pub fn load_checkpoint(base: &Path) -> Result<Checkpoint> {
    let mpath = manifest_path(base);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut lines = text.lines();

    let header = lines
        .next()
        .ok_or_else(|| Error::Corrupt(format!("{}: empty manifest", mpath.display())))?;
    match header.strip_prefix("checkpoint v").and_then(|v| v.parse::<u32>().ok()) {
        Some(v) if v == CHECKPOINT_VERSION => {}
        Some(found) => {
            return Err(Error::Version {
                found,
                expected: CHECKPOINT_VERSION,
            })
        }
        None => {
            return Err(Error::Corrupt(format!(
                "{}: unrecognized header {header:?}",
                mpath.display()
            )))
        }
    }

    let corrupt = |lineno: usize, what: &str| {
        Error::Corrupt(format!("{}: line {}: {what}", mpath.display(), lineno + 1))
    };

    let mut config = ModelConfig::default();
    let mut history = Vec::new();
    // (name, trainable, shape, offset, count)
    let mut table: Vec<(String, bool, Vec<usize>, usize, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (kind, rest) = line
            .split_once(' ')
            .ok_or_else(|| corrupt(i, "expected '<kind> ...'"))?;
        match kind {
            "config" => config
                .apply_lines(rest)
                .map_err(|e| corrupt(i, &format!("config entry: {e}")))?,
            "history" => {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 5 {
                    return Err(corrupt(i, "history row needs 5 fields"));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| corrupt(i, "bad history number"));
                history.push(EpochStats {
                    epoch: f[0].parse().map_err(|_| corrupt(i, "bad epoch"))?,
                    train_loss: num(f[1])?,
                    val_accuracy: num(f[2])?,
                    val_auc: num(f[3])?,
                    val_map: num(f[4])?,
                });
            }
            "param" => {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 5 {
                    return Err(corrupt(i, "param row needs 5 fields"));
                }
                let shape: Vec<usize> = f[2]
                    .split('x')
                    .map(|d| d.parse().map_err(|_| corrupt(i, "bad shape")))
                    .collect::<Result<_>>()?;
                table.push((
                    f[0].to_string(),
                    f[1] == "1",
                    shape,
                    f[3].parse().map_err(|_| corrupt(i, "bad offset"))?,
                    f[4].parse().map_err(|_| corrupt(i, "bad count"))?,
                ));
            }
            other => return Err(corrupt(i, &format!("unknown entry kind {other:?}"))),
        }
    }

    let bpath = blob_path(base);
    let blob = std::fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    let expected_bytes: usize = table.iter().map(|(_, _, _, _, count)| 4 * count).sum();
    if blob.len() != expected_bytes {
        return Err(Error::Corrupt(format!(
            "{}: blob holds {} bytes, manifest expects {expected_bytes}",
            bpath.display(),
            blob.len()
        )));
    }

    let mut store = ParamStore::new();
    let mut cursor = 0;
    for (name, trainable, shape, offset, count) in table {
        if offset != cursor || shape.iter().product::<usize>() != count {
            return Err(Error::Corrupt(format!(
                "{}: parameter table inconsistent at {name}",
                mpath.display()
            )));
        }
        let mut data = Vec::with_capacity(count);
        for k in 0..count {
            let at = offset + 4 * k;
            let bytes: [u8; 4] = blob[at..at + 4].try_into().unwrap();
            data.push(f32::from_le_bytes(bytes) as f64);
        }
        cursor += 4 * count;
        let tensor = Tensor::new(data, shape)
            .map_err(|e| Error::Corrupt(format!("parameter {name}: {e}")))?;
        if trainable {
            store.add(name, tensor)?;
        } else {
            store.add_frozen(name, tensor)?;
        }
    }
    Ok(Checkpoint {
        store,
        config,
        history,
    })
}

/// Rebuild a runnable model around checkpointed weights. The architecture
/// is re-derived from the stored config plus the tensor shapes (vocabulary
/// size, context width, background table), then every freshly registered
/// parameter is overwritten by its stored namesake. Any missing name or
/// shape drift means the checkpoint and config disagree.
pub fn restore_model(ckpt: &Checkpoint) -> Result<(ParamStore, ConverNet)> {
    let loaded = &ckpt.store;
    let cfg = &ckpt.config;
    let need = |name: &str| {
        loaded
            .id_of(name)
            .ok_or_else(|| Error::Corrupt(format!("checkpoint lacks parameter {name:?}")))
    };
    let vocab_size = loaded.get(need("embedding")?).shape()[0];
    let backgrounds = loaded.id_of("background").map(|id| loaded.get(id).shape()[0]);
    let first_in = loaded.get(need("encoder.l0.fwd.w_xi")?).shape()[0];
    let d_bg = if backgrounds.is_some() { cfg.d_b } else { 0 };
    let context_dim = first_in
        .checked_sub(cfg.d_w + d_bg)
        .ok_or_else(|| Error::Corrupt("encoder input narrower than the config allows".into()))?;

    let mut store = ParamStore::new();
    let model = ConverNet::build(&mut store, cfg, vocab_size, context_dim, backgrounds)?;
    if store.len() != loaded.len() {
        return Err(Error::Corrupt(format!(
            "checkpoint has {} parameters, config implies {}",
            loaded.len(),
            store.len()
        )));
    }
    for id in store.ids() {
        let name = store.name(id).to_string();
        let src = loaded.get(need(&name)?);
        if src.shape() != store.get(id).shape() {
            return Err(Error::Corrupt(format!(
                "parameter {name}: checkpoint shape {:?} vs configured {:?}",
                src.shape(),
                store.get(id).shape()
            )));
        }
        store.get_mut(id).data_mut().copy_from_slice(src.data());
    }
    Ok((store, model))
}

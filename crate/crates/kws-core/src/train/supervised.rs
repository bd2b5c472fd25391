//! The supervised loop: baselines from scratch and fine-tuning from a
//! pretrained checkpoint.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{
    build_mtr_assignments, AudioStore, DatasetManifest, MixSpec, NoiseClip, Split,
    SEEN_TYPES, SNR_GRID,
};
use crate::dsp::MfccConfig;
use crate::model::{
    batch_features, init_model, is_teacher_param, load_checkpoint, predict_classes,
    save_checkpoint, CheckpointMeta, KwtConfig,
};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Scalar;
use crate::tensor::{ParameterSet, Tape};

use super::{
    apply_spec_augment, lr_schedule, noise_map, prepare_items, AdamW, AdamWConfig,
    DataPolicy, PreparedItem, SpecAugmentConfig, TrainError,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub data_policy: DataPolicy,
    /// Fraction of items mixed under the MTR policy.
    pub noisy_fraction: f64,
    pub spec_augment: SpecAugmentConfig,
    pub use_spec_augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 140,
            batch_size: 512,
            max_lr: 1e-3,
            weight_decay: 0.1,
            warmup_epochs: 10,
            data_policy: DataPolicy::Clean,
            noisy_fraction: 0.5,
            spec_augment: SpecAugmentConfig::default(),
            use_spec_augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::BadConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(TrainError::BadConfig(format!(
                "warmup_epochs {} must be below epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.max_lr > 0.0) {
            return Err(TrainError::BadConfig("max_lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noisy_fraction) {
            return Err(TrainError::BadConfig(format!(
                "noisy_fraction {} outside [0, 1]",
                self.noisy_fraction
            )));
        }
        Ok(())
    }
}

/// Where the encoder weights come from.
#[derive(Debug, Clone)]
pub enum FinetuneSource {
    /// Random initialization from the run seed.
    Fresh,
    /// Encoder and input projection loaded from a pretraining checkpoint;
    /// classifier head and final norm freshly initialized.
    FromCheckpoint(PathBuf),
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters of the best-validation-accuracy epoch.
    pub params: ParameterSet<f32>,
    pub train_losses: Vec<f64>,
    pub val_accuracies: Vec<f64>,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub total_steps: u64,
    pub best_checkpoint: Option<PathBuf>,
}

/// Builds the initial parameter set, loading mirrored weights from a
/// checkpoint when fine-tuning. Validates everything before touching the
/// fresh set:  no partial loads.
pub fn initial_params(
    source: &FinetuneSource,
    model_cfg: &KwtConfig,
    seed: u64,
) -> Result<ParameterSet<f32>, TrainError> {
    let mut params: ParameterSet<f32> = init_model(model_cfg, seed)?;
    let FinetuneSource::FromCheckpoint(path) = source else {
        return Ok(params);
    };
    let (meta, loaded) = load_checkpoint(path)?;
    for (field, ours, theirs) in [
        ("dim", model_cfg.dim, meta.config.dim),
        ("n_blocks", model_cfg.n_blocks, meta.config.n_blocks),
        ("heads", model_cfg.heads, meta.config.heads),
        ("mlp_ratio", model_cfg.mlp_ratio, meta.config.mlp_ratio),
        ("input_dim", model_cfg.input_dim, meta.config.input_dim),
    ] {
        if ours != theirs {
            return Err(TrainError::CheckpointMismatch(format!(
                "{field}: checkpoint has {theirs}, requested model has {ours}"
            )));
        }
    }
    let mut staged = Vec::new();
    for name in params.names().cloned().collect::<Vec<_>>() {
        if !is_teacher_param(&name) {
            continue;
        }
        let source_tensor = loaded.get(&name).ok_or_else(|| {
            TrainError::CheckpointMismatch(format!("checkpoint lacks {name}"))
        })?;
        if source_tensor.shape() != params.get(&name).unwrap().shape() {
            return Err(TrainError::CheckpointMismatch(format!(
                "{name}: shape {:?} vs {:?}",
                source_tensor.shape(),
                params.get(&name).unwrap().shape()
            )));
        }
        staged.push((name, source_tensor.clone()));
    }
    for (name, tensor) in staged {
        params.insert(name, tensor);
    }
    Ok(params)
}

fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    correct as f64 / labels.len().max(1) as f64
}

/// Classifies prepared items (clean view) in batches.
pub fn evaluate_items(
    model_cfg: &KwtConfig,
    params: &ParameterSet<f32>,
    items: &[PreparedItem],
    batch_size: usize,
) -> Result<f64, TrainError> {
    if items.is_empty() {
        return Err(TrainError::BadConfig("nothing to evaluate".into()));
    }
    let mut predictions = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch_size.max(1)) {
        let views: Vec<_> = chunk.iter().map(|i| &i.clean).collect();
        let feats = batch_features::<f32>(&views)?;
        predictions.extend(predict_classes(model_cfg, params, &feats)?);
    }
    let labels: Vec<usize> = items.iter().map(|i| i.label).collect();
    Ok(accuracy(&predictions, &labels))
}

/// Full supervised run over the manifest's train split with clean-validation
/// model selection. Writes `train_log.csv` (epoch, step, lr, train_loss,
/// val_accuracy) and a best checkpoint into `out_dir` when given.
#[allow(clippy::too_many_arguments)]
pub fn run_supervised(
    cfg: &TrainConfig,
    model_cfg: &KwtConfig,
    source: &FinetuneSource,
    manifest: &DatasetManifest,
    store: &AudioStore,
    noise_bank: &[NoiseClip],
    mfcc: &MfccConfig,
    seed: u64,
    method_tag: &str,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    model_cfg.validate()?;
    if model_cfg.n_classes != manifest.n_classes() {
        return Err(TrainError::BadConfig(format!(
            "model expects {} classes, manifest has {}",
            model_cfg.n_classes,
            manifest.n_classes()
        )));
    }
    let train_entries = manifest.split_entries(Split::Train);
    let val_entries = manifest.split_entries(Split::Validation);
    if train_entries.is_empty() || val_entries.is_empty() {
        return Err(TrainError::BadConfig(
            "training requires non-empty train and validation splits".into(),
        ));
    }
    let target_samples = manifest.sample_rate as usize;
    let frames = mfcc.frame_count(target_samples, manifest.sample_rate)?;
    if frames > model_cfg.max_t {
        return Err(TrainError::BadConfig(format!(
            "{frames} frames exceed the model's max_t {}",
            model_cfg.max_t
        )));
    }

    let specs: Vec<Option<MixSpec>> = match cfg.data_policy {
        DataPolicy::Clean => vec![None; train_entries.len()],
        DataPolicy::Mtr => {
            let map = noise_map(noise_bank);
            let mut noise_samples = usize::MAX;
            for t in SEEN_TYPES {
                match map.get(&t) {
                    Some(clip) => noise_samples = noise_samples.min(clip.wave.len()),
                    None => return Err(TrainError::MissingNoise(t)),
                }
            }
            build_mtr_assignments(
                &train_entries,
                cfg.noisy_fraction,
                &SEEN_TYPES,
                &SNR_GRID,
                noise_samples,
                target_samples,
                derive_seed(seed, "mtr", 0),
            )?
        }
    };
    let noise = noise_map(noise_bank);
    let items = prepare_items(&train_entries, &specs, store, &noise, mfcc, target_samples)?;
    let val_specs = vec![None; val_entries.len()];
    let val_items =
        prepare_items(&val_entries, &val_specs, store, &noise, mfcc, target_samples)?;

    let mut params = initial_params(source, model_cfg, seed)?;
    let steps_per_epoch = items.len().div_ceil(cfg.batch_size) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    let warmup_steps = steps_per_epoch * cfg.warmup_epochs as u64;
    let mut opt = AdamW::new(AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });

    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut f = std::fs::File::create(dir.join("train_log.csv"))?;
            writeln!(f, "epoch,step,lr,train_loss,val_accuracy")?;
            Some(f)
        }
        None => None,
    };

    let mut train_losses = Vec::with_capacity(total_steps as usize);
    let mut val_accuracies = Vec::with_capacity(cfg.epochs);
    let mut best = (0usize, f64::NEG_INFINITY, params.clone());
    let mut step: u64 = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng_from(derive_seed(seed, "epoch", epoch as u64)));
        let mut epoch_rows: Vec<(u64, f64, f64)> = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let mut sa_rng = rng_from(derive_seed(seed, "specaug", step));
            let views: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let item = &items[i];
                    let mut f = match cfg.data_policy {
                        DataPolicy::Clean => item.clean.clone(),
                        DataPolicy::Mtr => item.mixed_or_clean().clone(),
                    };
                    if cfg.use_spec_augment {
                        apply_spec_augment(&mut f, &cfg.spec_augment, &mut sa_rng);
                    }
                    f
                })
                .collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| items[i].label).collect();
            let view_refs: Vec<_> = views.iter().collect();
            let feats = batch_features::<f32>(&view_refs)?;

            let mut tape: Tape<f32> = Tape::new();
            let ids = tape.source_params(&params);
            let feat_id = tape.leaf(&feats);
            let trace = crate::model::encoder_forward(&mut tape, &ids, model_cfg, feat_id, None)?;
            let logits = crate::model::forward_logits(&mut tape, &ids, trace.final_output())?;
            let loss = tape.cross_entropy(logits, &labels)?;
            let loss_val = tape.scalar_value(loss).to_f64();
            if !loss_val.is_finite() {
                return Err(TrainError::NonFiniteLoss(step));
            }
            tape.backward(loss)?;
            params.zero_grads();
            tape.accumulate_into(&ids, &mut params);
            let lr = lr_schedule(step, total_steps, warmup_steps, cfg.max_lr);
            opt.step(&mut params, lr)?;

            epoch_rows.push((step, lr, loss_val));
            train_losses.push(loss_val);
            step += 1;
        }

        let val_acc = evaluate_items(model_cfg, &params, &val_items, cfg.batch_size)?;
        val_accuracies.push(val_acc);
        if val_acc > best.1 {
            best = (epoch, val_acc, params.clone());
        }
        if let Some(f) = &mut log {
            let last = epoch_rows.len() - 1;
            for (i, (s, lr, loss_val)) in epoch_rows.iter().enumerate() {
                if i == last {
                    writeln!(f, "{epoch},{s},{lr:.10},{loss_val:.8},{val_acc:.6}")?;
                } else {
                    writeln!(f, "{epoch},{s},{lr:.10},{loss_val:.8},")?;
                }
            }
        }
    }

    let (best_epoch, best_val_accuracy, best_params) = best;
    let best_checkpoint = match out_dir {
        Some(dir) => {
            let meta = CheckpointMeta {
                config: model_cfg.clone(),
                seed,
                method: method_tag.to_string(),
                step: (best_epoch as u64 + 1) * steps_per_epoch,
            };
            let path = dir.join(format!("{method_tag}-best.kwsc"));
            save_checkpoint(&path, &meta, &best_params)?;
            Some(path)
        }
        None => None,
    };

    Ok(TrainOutcome {
        params: best_params,
        train_losses,
        val_accuracies,
        best_val_accuracy,
        best_epoch,
        total_steps: step,
        best_checkpoint,
    })
}

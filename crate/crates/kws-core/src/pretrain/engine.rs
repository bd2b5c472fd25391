//! The pretraining loop: variant routing, masking, teacher targets, masked
//! MSE, optimizer step, EMA update.

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
    batch_features, init_pretrain_model, is_pretrain_only_param, is_teacher_param,
    save_checkpoint, CheckpointMeta, KwtConfig,
};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Scalar;
use crate::tensor::{ParameterSet, Tape};
use crate::train::{batch::prepare_items, lr_schedule, noise_map, AdamW, AdamWConfig};

use super::{
    ema_update, make_teacher, sample_mask, student_loss, teacher_targets, PretrainError,
    PretrainVariant,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Top-block count for teacher targets.
    pub k_blocks: usize,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Steps for the linear tau ramp; `None` anneals over the whole run.
    pub tau_anneal_steps: Option<u64>,
    pub mask_span: usize,
    pub mask_target_prob: f64,
    pub variant: PretrainVariant,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    /// Fraction of items mixed with noise for the noisy/denoising variants.
    pub noisy_fraction: f64,
    /// Checkpoint cadence in steps; 0 keeps only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            k_blocks: 8,
            tau_start: 0.999,
            tau_end: 0.9999,
            tau_anneal_steps: None,
            mask_span: 10,
            mask_target_prob: 0.65,
            variant: PretrainVariant::Clean,
            epochs: 140,
            batch_size: 512,
            max_lr: 1e-3,
            weight_decay: 0.1,
            warmup_epochs: 10,
            noisy_fraction: 0.5,
            checkpoint_every: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), PretrainError> {
        if self.k_blocks == 0 {
            return Err(PretrainError::KOutOfRange { k: 0, l: 0 });
        }
        for tau in [self.tau_start, self.tau_end] {
            if !(0.0..=1.0).contains(&tau) {
                return Err(PretrainError::TauOutOfRange(tau));
            }
        }
        if !(self.mask_target_prob > 0.0 && self.mask_target_prob < 1.0) {
            return Err(PretrainError::BadConfig(format!(
                "mask_target_prob {} outside (0, 1)",
                self.mask_target_prob
            )));
        }
        if self.mask_span == 0 {
            return Err(PretrainError::BadConfig("mask_span must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(PretrainError::BadConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(PretrainError::BadConfig(format!(
                "warmup_epochs {} must be below epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.max_lr > 0.0) {
            return Err(PretrainError::BadConfig("max_lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noisy_fraction) {
            return Err(PretrainError::BadConfig(format!(
                "noisy_fraction {} outside [0, 1]",
                self.noisy_fraction
            )));
        }
        Ok(())
    }
}

/// Linear interpolation `tau_start -> tau_end` over `anneal_steps`, clamped.
pub fn tau_schedule(step: u64, anneal_steps: u64, tau_start: f64, tau_end: f64) -> f64 {
    if anneal_steps == 0 {
        return tau_end;
    }
    let frac = (step as f64 / anneal_steps as f64).min(1.0);
    tau_start + (tau_end - tau_start) * frac
}

#[derive(Debug)]
pub struct PretrainOutcome {
    /// Final student parameters (input projection, blocks, mask token,
    /// regression head).
    pub student: ParameterSet<f32>,
    /// Per-step training loss.
    pub losses: Vec<f64>,
    pub total_steps: u64,
    pub final_checkpoint: Option<PathBuf>,
}

/// Runs the full pretraining loop over the manifest's pretrain split.
///
/// Writes `pretrain_log.csv` (step, loss, tau, lr) and checkpoints tagged
/// with the variant into `out_dir` when given.
#[allow(clippy::too_many_arguments)]
pub fn run_pretraining(
    cfg: &PretrainConfig,
    model_cfg: &KwtConfig,
    manifest: &DatasetManifest,
    store: &AudioStore,
    noise_bank: &[NoiseClip],
    mfcc: &MfccConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<PretrainOutcome, PretrainError> {
    cfg.validate()?;
    model_cfg.validate()?;
    if cfg.k_blocks > model_cfg.n_blocks {
        return Err(PretrainError::KOutOfRange {
            k: cfg.k_blocks,
            l: model_cfg.n_blocks,
        });
    }
    let entries = manifest.split_entries(Split::Pretrain);
    if entries.is_empty() {
        return Err(PretrainError::Data(crate::data::DataError::EmptyPool));
    }
    let target_samples = manifest.sample_rate as usize;
    let frames = mfcc.frame_count(target_samples, manifest.sample_rate)?;
    if frames > model_cfg.max_t {
        return Err(PretrainError::BadConfig(format!(
            "{frames} frames exceed the model's max_t {}",
            model_cfg.max_t
        )));
    }
    if frames <= cfg.mask_span {
        return Err(PretrainError::DegenerateLength { t: frames, span: cfg.mask_span });
    }

    // Mixing assignments are fixed at dataset-construction time.
    let specs: Vec<Option<MixSpec>> = if cfg.variant == PretrainVariant::Clean {
        vec![None; entries.len()]
    } else {
        let map = noise_map(noise_bank);
        let mut noise_samples = usize::MAX;
        for t in SEEN_TYPES {
            match map.get(&t) {
                Some(clip) => noise_samples = noise_samples.min(clip.wave.len()),
                None => return Err(PretrainError::MissingNoise),
            }
        }
        build_mtr_assignments(
            &entries,
            cfg.noisy_fraction,
            &SEEN_TYPES,
            &SNR_GRID,
            noise_samples,
            target_samples,
            derive_seed(seed, "pretrain-mtr", 0),
        )?
    };
    let noise = noise_map(noise_bank);
    let items = prepare_items(&entries, &specs, store, &noise, mfcc, target_samples)?;

    // The pretraining model: encoder + mask token + regression head. The
    // classifier head and final norm only exist for supervised runs.
    let mut student: ParameterSet<f32> = init_pretrain_model(model_cfg, seed)?;
    let drop: Vec<String> = student
        .names()
        .filter(|n| !is_teacher_param(n) && !is_pretrain_only_param(n))
        .cloned()
        .collect();
    for name in drop {
        student.remove(&name);
    }
    let mut teacher = make_teacher(&student);

    let steps_per_epoch = items.len().div_ceil(cfg.batch_size) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    let warmup_steps = steps_per_epoch * cfg.warmup_epochs as u64;
    let anneal_steps = cfg.tau_anneal_steps.unwrap_or(total_steps);
    let mut opt = AdamW::new(AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });

    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut f = std::fs::File::create(dir.join("pretrain_log.csv"))?;
            writeln!(f, "step,loss,tau,lr")?;
            Some(f)
        }
        None => None,
    };

    let mut losses = Vec::with_capacity(total_steps as usize);
    let mut step: u64 = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng_from(derive_seed(seed, "pretrain-epoch", epoch as u64)));
        for chunk in order.chunks(cfg.batch_size) {
            let (teacher_view, student_view): (Vec<_>, Vec<_>) = chunk
                .iter()
                .map(|&i| {
                    let item = &items[i];
                    match cfg.variant {
                        PretrainVariant::Clean => (&item.clean, &item.clean),
                        PretrainVariant::Noisy => {
                            (item.mixed_or_clean(), item.mixed_or_clean())
                        }
                        PretrainVariant::Denoising => (&item.clean, item.mixed_or_clean()),
                    }
                })
                .unzip();
            let teacher_feats = batch_features::<f32>(&teacher_view)?;
            let student_feats = batch_features::<f32>(&student_view)?;

            let mut mask_rng = rng_from(derive_seed(seed, "mask", step));
            let mut mask = Vec::with_capacity(chunk.len() * frames);
            for _ in 0..chunk.len() {
                let plan = sample_mask(frames, cfg.mask_span, cfg.mask_target_prob, &mut mask_rng)?;
                mask.extend_from_slice(&plan.mask);
            }

            let targets = teacher_targets(model_cfg, &teacher, &teacher_feats, cfg.k_blocks)?;

            let mut tape: Tape<f32> = Tape::new();
            let ids = tape.source_params(&student);
            let feat_id = tape.leaf(&student_feats);
            let loss = student_loss(&mut tape, &ids, model_cfg, feat_id, &mask, &targets)?;
            let loss_val = tape.scalar_value(loss).to_f64();
            if !loss_val.is_finite() {
                return Err(PretrainError::NonFiniteLoss(step));
            }
            tape.backward(loss)?;
            student.zero_grads();
            tape.accumulate_into(&ids, &mut student);

            let lr = lr_schedule(step, total_steps, warmup_steps, cfg.max_lr);
            opt.step(&mut student, lr)?;
            let tau = tau_schedule(step, anneal_steps, cfg.tau_start, cfg.tau_end);
            ema_update(&mut teacher, &student, tau)?;

            if let Some(f) = &mut log {
                writeln!(f, "{step},{loss_val:.8},{tau:.8},{lr:.10}")?;
            }
            losses.push(loss_val);
            step += 1;

            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                if let Some(dir) = out_dir {
                    let meta = checkpoint_meta(model_cfg, cfg.variant, seed, step);
                    let name = format!("pretrain-{}-step{step:06}.kwsc", cfg.variant.name());
                    save_checkpoint(dir.join(name), &meta, &student)?;
                }
            }
        }
    }

    let final_checkpoint = match out_dir {
        Some(dir) => {
            let meta = checkpoint_meta(model_cfg, cfg.variant, seed, step);
            let path = dir.join(format!("pretrain-{}-final.kwsc", cfg.variant.name()));
            save_checkpoint(&path, &meta, &student)?;
            Some(path)
        }
        None => None,
    };

    Ok(PretrainOutcome {
        student,
        losses,
        total_steps: step,
        final_checkpoint,
    })
}

fn checkpoint_meta(
    model_cfg: &KwtConfig,
    variant: PretrainVariant,
    seed: u64,
    step: u64,
) -> CheckpointMeta {
    CheckpointMeta {
        config: model_cfg.clone(),
        seed,
        method: format!("pretrain-{}", variant.name()),
        step,
    }
}

//! selfcheck: fast numeric verification of the pipeline's load-bearing math —
//! analytic gradients, teacher-target construction, EMA identities, mask
//! statistics, SNR exactness, and the MFCC front-end against the naive
//! reference in `oracle`.

use std::path::Path;
use std::time::Instant;

use kws_core::data::{measure_snr, mix_at_snr, synth_noise, MixSpec, NoiseType, SNR_GRID};
use kws_core::dsp::{compute_features, Waveform};
use kws_core::model::{
    encoder_forward, forward_logits, init_model, init_pretrain_model, is_pretrain_only_param,
    is_teacher_param, KwtVariant, ModelError,
};
use kws_core::pretrain::{
    ema_update, make_teacher, sample_mask, student_loss, teacher_targets, PretrainError,
};
use kws_core::rng::{derive_seed, gaussian, rng_from};
use kws_core::tensor::{grad_check, GradCheckReport};
use kws_core::{ParameterSet, Tape, Tensor, TensorError};

use super::write_file;
use crate::config::RunConfig;
use crate::errors::CliError;
use crate::oracle;

pub fn run(cfg: &RunConfig, dir: &Path, force: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let lines = selfcheck_report(cfg.seed)?;
    for line in &lines {
        println!("{line}");
    }
    let mut text = lines.join("\n");
    text.push('\n');
    write_file(&dir.join("selfcheck.txt"), text.as_bytes(), force)?;
    println!(
        "selfcheck passed: {} checks in {:.1}s (run dir: {})",
        lines.len(),
        started.elapsed().as_secs_f64(),
        dir.display()
    );
    Ok(())
}

/// Runs every check; returns one summary line per check or the first failure.
pub fn selfcheck_report(seed: u64) -> Result<Vec<String>, CliError> {
    let mut lines = Vec::new();
    lines.push(check_cross_entropy_gradients(seed)?);
    lines.push(check_masked_mse_gradients(seed)?);
    lines.push(check_teacher_target_normalization(seed)?);
    lines.push(check_ema_identities(seed)?);
    lines.push(check_mask_statistics(seed)?);
    lines.push(check_snr_exactness(seed)?);
    lines.push(check_mfcc_against_reference(seed)?);
    Ok(lines)
}

/// `grad_check` wants `TensorError`; fold the model/pretrain wrappers down.
fn model_err(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => TensorError::ShapeMismatch { op: "model", detail: other.to_string() },
    }
}

fn pretrain_err(e: PretrainError) -> TensorError {
    match e {
        PretrainError::Tensor(t) => t,
        other => TensorError::ShapeMismatch { op: "pretrain", detail: other.to_string() },
    }
}

fn random_tensor(shape: &[usize], scale: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| scale * gaussian(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape/data sizes agree")
}

fn numeric(name: &str, detail: String) -> CliError {
    CliError::Numeric(format!("selfcheck '{name}': {detail}"))
}

/// Cross-entropy gradients on KWT-tiny, verified by central differences.
pub fn grad_check_cross_entropy(
    t: usize,
    batch: usize,
    seed: u64,
) -> Result<GradCheckReport, CliError> {
    let cfg = KwtVariant::KwtTiny.config().with_classes(4);
    let mut params = init_model::<f64>(&cfg, derive_seed(seed, "selfcheck-ce", 0))?;
    let mut rng = rng_from(derive_seed(seed, "selfcheck-ce", 1));
    let features = random_tensor(&[batch, t, cfg.input_dim], 0.5, &mut rng);
    let labels: Vec<usize> = (0..batch).map(|i| i % cfg.n_classes).collect();

    let forward = |p: &ParameterSet<f64>| -> Result<f64, TensorError> {
        let mut tape: Tape<f64> = Tape::new();
        let ids = tape.source_params(p);
        let feat = tape.leaf(&features);
        let trace = encoder_forward(&mut tape, &ids, &cfg, feat, None).map_err(model_err)?;
        let logits = forward_logits(&mut tape, &ids, trace.final_output()).map_err(model_err)?;
        let loss = tape.cross_entropy(logits, &labels)?;
        Ok(tape.scalar_value(loss))
    };

    let mut tape: Tape<f64> = Tape::new();
    let ids = tape.source_params(&params);
    let feat = tape.leaf(&features);
    let trace = encoder_forward(&mut tape, &ids, &cfg, feat, None).map_err(model_err)?;
    let logits = forward_logits(&mut tape, &ids, trace.final_output()).map_err(model_err)?;
    let loss = tape.cross_entropy(logits, &labels).map_err(CliError::from)?;
    tape.backward(loss).map_err(CliError::from)?;
    params.zero_grads();
    tape.accumulate_into(&ids, &mut params);

    Ok(grad_check(&params, forward, 1e-5)?)
}

/// The full pretraining objective — mask token substitution, regression head,
/// masked MSE against frozen teacher targets — gradient-checked end to end.
pub fn grad_check_masked_mse(
    t: usize,
    batch: usize,
    seed: u64,
) -> Result<GradCheckReport, CliError> {
    let cfg = KwtVariant::KwtTiny.config().with_classes(4);
    let mut student = init_pretrain_model::<f64>(&cfg, derive_seed(seed, "selfcheck-mse", 0))?;
    let drop: Vec<String> = student
        .names()
        .filter(|n| !is_teacher_param(n) && !is_pretrain_only_param(n))
        .cloned()
        .collect();
    for name in drop {
        student.remove(&name);
    }
    let teacher = make_teacher(&student);

    let mut rng = rng_from(derive_seed(seed, "selfcheck-mse", 1));
    let features = random_tensor(&[batch, t, cfg.input_dim], 0.5, &mut rng);
    let targets = teacher_targets(&cfg, &teacher, &features, 2).map_err(CliError::from)?;
    let mut mask = Vec::with_capacity(batch * t);
    for _ in 0..batch {
        let plan = sample_mask(t, 5, 0.65, &mut rng).map_err(CliError::from)?;
        mask.extend_from_slice(&plan.mask);
    }

    let forward = |p: &ParameterSet<f64>| -> Result<f64, TensorError> {
        let mut tape: Tape<f64> = Tape::new();
        let ids = tape.source_params(p);
        let feat = tape.leaf(&features);
        let loss =
            student_loss(&mut tape, &ids, &cfg, feat, &mask, &targets).map_err(pretrain_err)?;
        Ok(tape.scalar_value(loss))
    };

    let mut tape: Tape<f64> = Tape::new();
    let ids = tape.source_params(&student);
    let feat = tape.leaf(&features);
    let loss =
        student_loss(&mut tape, &ids, &cfg, feat, &mask, &targets).map_err(CliError::from)?;
    tape.backward(loss).map_err(CliError::from)?;
    student.zero_grads();
    tape.accumulate_into(&ids, &mut student);

    Ok(grad_check(&student, forward, 1e-5)?)
}

fn check_cross_entropy_gradients(seed: u64) -> Result<String, CliError> {
    let report = grad_check_cross_entropy(12, 2, seed)?;
    if report.max_rel_err >= 1e-4 {
        return Err(numeric(
            "gradients/cross-entropy",
            format!(
                "max rel err {:.3e} at {}[{}]",
                report.max_rel_err, report.worst_param, report.worst_index
            ),
        ));
    }
    Ok(format!(
        "ok gradients/cross-entropy: max rel err {:.2e} over {} coordinates",
        report.max_rel_err, report.n_checked
    ))
}

fn check_masked_mse_gradients(seed: u64) -> Result<String, CliError> {
    let report = grad_check_masked_mse(16, 2, seed)?;
    if report.max_rel_err >= 1e-4 {
        return Err(numeric(
            "gradients/masked-mse",
            format!(
                "max rel err {:.3e} at {}[{}]",
                report.max_rel_err, report.worst_param, report.worst_index
            ),
        ));
    }
    Ok(format!(
        "ok gradients/masked-mse: max rel err {:.2e} over {} coordinates",
        report.max_rel_err, report.n_checked
    ))
}

fn check_teacher_target_normalization(seed: u64) -> Result<String, CliError> {
    let cfg = KwtVariant::KwtTiny.config().with_classes(4);
    let student = init_pretrain_model::<f64>(&cfg, derive_seed(seed, "selfcheck-tgt", 0))?;
    let teacher = make_teacher(&student);
    let mut rng = rng_from(derive_seed(seed, "selfcheck-tgt", 1));
    let features = random_tensor(&[2, 9, cfg.input_dim], 0.5, &mut rng);
    let targets = teacher_targets(&cfg, &teacher, &features, 1)?;
    let dim = cfg.dim;
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for row in targets.data().chunks(dim) {
        let mean = row.iter().sum::<f64>() / dim as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        worst_mean = worst_mean.max(mean.abs());
        worst_var = worst_var.max((var - 1.0).abs());
    }
    if worst_mean > 1e-6 || worst_var > 1e-3 {
        return Err(numeric(
            "teacher-targets",
            format!("row stats off: |mean| {worst_mean:.2e}, |var-1| {worst_var:.2e}"),
        ));
    }
    Ok(format!(
        "ok teacher-targets: K=1 rows normalized (|mean| ≤ {worst_mean:.1e}, |var−1| ≤ {worst_var:.1e})"
    ))
}

fn check_ema_identities(seed: u64) -> Result<String, CliError> {
    let cfg = KwtVariant::KwtTiny.config().with_classes(4);
    let student = init_model::<f32>(&cfg, derive_seed(seed, "selfcheck-ema", 0))?;
    let student_b = init_model::<f32>(&cfg, derive_seed(seed, "selfcheck-ema", 1))?;

    // tau = 1 freezes the teacher; tau = 0 copies the student.
    let mut teacher = make_teacher(&student);
    let frozen = teacher.clone();
    ema_update(&mut teacher, &student_b, 1.0)?;
    if teacher != frozen {
        return Err(numeric("ema", "tau=1 modified the teacher".into()));
    }
    ema_update(&mut teacher, &student_b, 0.0)?;
    for (name, tensor) in teacher.iter() {
        if tensor.data() != student_b.get(name).expect("mirrored name").data() {
            return Err(numeric("ema", format!("tau=0 is not a copy at '{name}'")));
        }
    }

    // Fixed student at 0: after n updates the teacher holds tau^n exactly.
    let mut flat = ParameterSet::<f64>::new();
    flat.insert(
        "block.00.attn.q.weight".to_string(),
        Tensor::param(vec![1], vec![1.0]).expect("scalar param"),
    );
    let mut zero = flat.clone();
    zero.get_mut("block.00.attn.q.weight").unwrap().data_mut()[0] = 0.0;
    let tau = 0.5f64;
    let n = 20;
    for _ in 0..n {
        ema_update(&mut flat, &zero, tau)?;
    }
    let got = flat.get("block.00.attn.q.weight").unwrap().data()[0];
    let want = tau.powi(n);
    if got != want {
        return Err(numeric("ema", format!("geometric decay: got {got:e}, want {want:e}")));
    }
    Ok(format!("ok ema: tau identities exact, 0.5^{n} decay = {got:e}"))
}

fn check_mask_statistics(seed: u64) -> Result<String, CliError> {
    let (t, span, target) = (98, 10, 0.65);
    let mut rng = rng_from(derive_seed(seed, "selfcheck-mask", 0));
    let draws = 2_000;
    let mut covered = 0usize;
    for _ in 0..draws {
        let plan = sample_mask(t, span, target, &mut rng)?;
        // every plan must be exactly the union of its declared windows
        let mut union = vec![false; t];
        for &s in &plan.starts {
            for pos in s..(s + span).min(t) {
                union[pos] = true;
            }
        }
        if union != plan.mask {
            return Err(numeric("mask", "mask is not the union of its windows".into()));
        }
        covered += plan.n_masked();
    }
    let coverage = covered as f64 / (draws * t) as f64;
    if !(0.60..=0.70).contains(&coverage) {
        return Err(numeric(
            "mask",
            format!("coverage {coverage:.4} outside [0.60, 0.70] over {draws} draws"),
        ));
    }
    Ok(format!("ok mask: coverage {coverage:.4} in [0.60, 0.70] over {draws} draws"))
}

fn check_snr_exactness(seed: u64) -> Result<String, CliError> {
    let sample_rate = 16_000;
    let mut rng = rng_from(derive_seed(seed, "selfcheck-snr", 0));
    let clean_samples: Vec<f32> =
        (0..sample_rate).map(|_| (0.1 * gaussian(&mut rng)) as f32).collect();
    let clean = Waveform::new(clean_samples, sample_rate as u32)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let noise = synth_noise(NoiseType::Ssn, 2.0, sample_rate as u32, seed)?;
    let mut worst = 0.0f64;
    for snr_db in SNR_GRID {
        for rep in 0..3u64 {
            let spec = MixSpec {
                noise_type: NoiseType::Ssn,
                snr_db,
                noise_offset: (rep as usize) * 3_000,
                rng_seed: rep,
            };
            let mix = mix_at_snr(&clean, &noise, &spec, false)?;
            worst = worst.max((measure_snr(&clean, &mix) - snr_db as f64).abs());

            // scale invariance: a rescaled clean still lands on the request
            let scaled = Waveform::new(
                clean.samples().iter().map(|&s| s * 3.7).collect(),
                clean.sample_rate(),
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            let mix_scaled = mix_at_snr(&scaled, &noise, &spec, false)?;
            worst = worst.max((measure_snr(&scaled, &mix_scaled) - snr_db as f64).abs());
        }
    }
    if worst >= 1e-3 {
        return Err(numeric("snr", format!("worst deviation {worst:.2e} dB ≥ 1e-3 dB")));
    }
    Ok(format!("ok snr: worst deviation {worst:.2e} dB across the 7-level grid"))
}

fn check_mfcc_against_reference(seed: u64) -> Result<String, CliError> {
    let mfcc = kws_core::dsp::MfccConfig::default();
    let sample_rate = 16_000u32;
    let window = mfcc.window_samples(sample_rate);
    let mut rng = rng_from(derive_seed(seed, "selfcheck-mfcc", 0));
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let raw: Vec<f64> = (0..window).map(|_| 0.3 * gaussian(&mut rng)).collect();
        let wave = Waveform::new(raw.iter().map(|&x| x as f32).collect(), sample_rate)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let produced = compute_features(&wave, &mfcc)?;
        if produced.frames() != 1 || produced.dim() != mfcc.n_mfcc {
            return Err(numeric(
                "mfcc",
                format!("one window → {}×{}", produced.frames(), produced.dim()),
            ));
        }
        // the front end quantizes samples to f32; feed the reference the same values
        let raw_f32: Vec<f64> = wave.samples().iter().map(|&x| x as f64).collect();
        let reference = oracle::reference_frame(&raw_f32, &mfcc, sample_rate);
        let got: Vec<f64> = produced.frame(0).iter().map(|&x| x as f64).collect();
        worst = worst.max(oracle::frame_rel_err(&got, &reference));
    }
    if worst >= 1e-4 {
        return Err(numeric("mfcc", format!("worst frame rel err {worst:.2e} ≥ 1e-4")));
    }

    // shape contract: 1 s at 16 kHz is exactly 98 × 40
    let one_second: Vec<f32> =
        (0..sample_rate).map(|_| (0.1 * gaussian(&mut rng)) as f32).collect();
    let wave = Waveform::new(one_second, sample_rate).map_err(|e| CliError::Data(e.to_string()))?;
    let features = compute_features(&wave, &mfcc)?;
    if (features.frames(), features.dim()) != (98, 40) {
        return Err(numeric(
            "mfcc",
            format!("1 s @16 kHz → {}×{}, want 98×40", features.frames(), features.dim()),
        ));
    }
    Ok(format!("ok mfcc: 10 frames within {worst:.2e} of the naive reference; 1 s → 98×40"))
}

//! Properties of the student-teacher pretraining machinery: span-mask
//! statistics, the EMA teacher contract, target normalization, and teacher
//! isolation from the student's backward pass.

use std::collections::BTreeSet;

use kws_core::data::{synth_corpus, AudioStore, SynthCorpusConfig};
use kws_core::dsp::MfccConfig;
use kws_core::model::{
    init_pretrain_model, is_pretrain_only_param, is_teacher_param, KwtVariant,
};
use kws_core::pretrain::{
    ema_update, make_teacher, run_pretraining, sample_mask, start_probability, student_loss,
    tau_schedule, teacher_targets, PretrainConfig, PretrainVariant,
};
use kws_core::rng::{gaussian, rng_from};
use kws_core::tensor::{ParameterSet, Tape, Tensor};

// ---------------------------------------------------------------------------
// Span masking.
// ---------------------------------------------------------------------------

#[test]
fn start_probability_yields_the_target_interior_coverage() {
    for &(target, span) in &[(0.65f64, 10usize), (0.3, 5), (0.9, 3)] {
        let p = start_probability(target, span);
        // an interior position escapes all `span` windows that could cover it
        let escape = (1.0 - p).powi(span as i32);
        assert!((1.0 - escape - target).abs() < 1e-12, "target {target} span {span}");
    }
}

#[test]
fn mask_coverage_concentrates_near_the_target() {
    let mut rng = rng_from(400);
    let n = 2_000;
    let mut total = 0.0;
    for _ in 0..n {
        let plan = sample_mask(98, 10, 0.65, &mut rng).unwrap();
        assert!(plan.n_masked() > 0 && plan.n_masked() < plan.t);
        total += plan.coverage();
    }
    let mean = total / n as f64;
    assert!((0.60..=0.70).contains(&mean), "mean coverage {mean}");
}

#[test]
fn every_mask_is_exactly_the_union_of_its_windows() {
    let mut rng = rng_from(401);
    for _ in 0..500 {
        let plan = sample_mask(98, 10, 0.65, &mut rng).unwrap();
        let mut rebuilt = vec![false; plan.t];
        for &s in &plan.starts {
            assert!(s < plan.t);
            for r in rebuilt.iter_mut().skip(s).take(plan.span) {
                *r = true;
            }
        }
        assert_eq!(rebuilt, plan.mask);
    }
}

#[test]
fn degenerate_mask_requests_are_rejected() {
    let mut rng = rng_from(402);
    assert!(sample_mask(10, 10, 0.65, &mut rng).is_err()); // t == span
    assert!(sample_mask(98, 0, 0.65, &mut rng).is_err());
    assert!(sample_mask(98, 10, 0.0, &mut rng).is_err());
    assert!(sample_mask(98, 10, 1.0, &mut rng).is_err());
}

// ---------------------------------------------------------------------------
// EMA teacher.
// ---------------------------------------------------------------------------

fn tiny_pretrain_model(seed: u64) -> ParameterSet<f64> {
    let cfg = KwtVariant::KwtTiny.config().with_classes(4);
    init_pretrain_model::<f64>(&cfg, seed).unwrap()
}

#[test]
fn teacher_mirrors_exactly_the_shared_subset() {
    let student = tiny_pretrain_model(5);
    let teacher = make_teacher(&student);
    let teacher_names: BTreeSet<&String> = teacher.names().collect();
    for name in student.names() {
        assert_eq!(
            teacher_names.contains(name),
            is_teacher_param(name),
            "membership mismatch for {name}"
        );
        if is_pretrain_only_param(name) {
            assert!(!teacher_names.contains(name), "{name} must stay student-only");
        }
    }
    assert!(!teacher.names().next().is_none());
    for (name, tensor) in teacher.iter() {
        let s = student.get(name).unwrap();
        assert_eq!(tensor.shape(), s.shape());
        assert_eq!(tensor.data(), s.data());
    }
}

#[test]
fn ema_endpoints_are_exact() {
    let student = tiny_pretrain_model(6);
    let other = tiny_pretrain_model(7);

    // tau = 1: the teacher is frozen, bit for bit
    let mut frozen = make_teacher(&other);
    let before: Vec<Vec<f64>> = frozen.iter().map(|(_, t)| t.data().to_vec()).collect();
    ema_update(&mut frozen, &student, 1.0).unwrap();
    let after: Vec<Vec<f64>> = frozen.iter().map(|(_, t)| t.data().to_vec()).collect();
    assert_eq!(before, after);

    // tau = 0: the teacher becomes the student, bit for bit
    let mut copied = make_teacher(&other);
    ema_update(&mut copied, &student, 0.0).unwrap();
    for (name, tensor) in copied.iter() {
        assert_eq!(tensor.data(), student.get(name).unwrap().data(), "{name}");
    }
}

#[test]
fn ema_decay_follows_tau_to_the_n_exactly() {
    // scalar parameter, static student: delta_n - theta = tau^n (delta_0 - theta)
    let name = "block.00.attn.q.weight";
    assert!(is_teacher_param(name));
    let mut teacher = ParameterSet::new();
    teacher.insert(name, Tensor::param(vec![1], vec![1.0f64]).unwrap());
    let mut student = ParameterSet::new();
    student.insert(name, Tensor::param(vec![1], vec![0.0f64]).unwrap());

    let n = 20;
    for _ in 0..n {
        ema_update(&mut teacher, &student, 0.5).unwrap();
    }
    // powers of 0.5 are exact in binary floating point
    assert_eq!(teacher.get(name).unwrap().data()[0], 0.5f64.powi(n));
}

#[test]
fn ema_rejects_mismatched_students() {
    let student = tiny_pretrain_model(8);
    let mut teacher = make_teacher(&student);
    assert!(ema_update(&mut teacher, &student, 1.5).is_err());
    assert!(ema_update(&mut teacher, &student, -0.1).is_err());

    let mut missing = ParameterSet::<f64>::new();
    missing.insert("unrelated", Tensor::param(vec![1], vec![0.0]).unwrap());
    assert!(ema_update(&mut teacher, &missing, 0.5).is_err());
}

#[test]
fn tau_schedule_is_monotone_between_its_endpoints() {
    let (lo, hi) = (0.999, 0.9999);
    assert_eq!(tau_schedule(0, 500, lo, hi), lo);
    assert_eq!(tau_schedule(500, 500, lo, hi), hi);
    assert_eq!(tau_schedule(10_000, 500, lo, hi), hi);
    let mut prev = 0.0;
    for step in 0..=500 {
        let tau = tau_schedule(step, 500, lo, hi);
        assert!(tau >= prev && (lo..=hi).contains(&tau));
        prev = tau;
    }
}

// ---------------------------------------------------------------------------
// Teacher targets.
// ---------------------------------------------------------------------------

fn random_features(rng_seed: u64, batch: usize, t: usize, dim: usize) -> Tensor<f64> {
    let mut rng = rng_from(rng_seed);
    let data: Vec<f64> = (0..batch * t * dim).map(|_| 0.5 * gaussian(&mut rng)).collect();
    Tensor::new(vec![batch, t, dim], data).unwrap()
}

#[test]
fn k1_targets_are_row_normalized() {
    let cfg = KwtVariant::KwtTiny.config().with_classes(4);
    let student = init_pretrain_model::<f64>(&cfg, 17).unwrap();
    let teacher = make_teacher(&student);
    let features = random_features(18, 2, 9, cfg.input_dim);
    let targets = teacher_targets(&cfg, &teacher, &features, 1).unwrap();
    assert_eq!(targets.shape(), &[2, 9, cfg.dim]);
    for row in targets.data().chunks(cfg.dim) {
        let mean: f64 = row.iter().sum::<f64>() / cfg.dim as f64;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cfg.dim as f64;
        assert!(mean.abs() < 1e-6, "row mean {mean}");
        assert!((var - 1.0).abs() < 1e-3, "row var {var}");
    }
}

#[test]
fn k2_targets_match_an_independent_recompute() {
    use kws_core::model::encoder_forward;

    let cfg = KwtVariant::KwtTiny.config().with_classes(4);
    let student = init_pretrain_model::<f64>(&cfg, 19).unwrap();
    let teacher = make_teacher(&student);
    let features = random_features(20, 1, 7, cfg.input_dim);
    let targets = teacher_targets(&cfg, &teacher, &features, 2).unwrap();

    // independent pass: rerun the encoder, then normalize and average the
    // block outputs with test-local arithmetic
    let mut tape: Tape<f64> = Tape::new();
    let ids = tape.source_params(&teacher);
    let feat_id = tape.leaf(&features);
    let trace = encoder_forward(&mut tape, &ids, &cfg, feat_id, None).unwrap();
    assert_eq!(trace.block_outputs.len(), cfg.n_blocks);

    let d = cfg.dim;
    let rows = 7;
    let mut expect = vec![0.0f64; rows * d];
    for &block in &trace.block_outputs[cfg.n_blocks - 2..] {
        let values = tape.value(block);
        for r in 0..rows {
            let row = &values[r * d..(r + 1) * d];
            let mean: f64 = row.iter().sum::<f64>() / d as f64;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + 1e-5).sqrt();
            for (e, &v) in expect[r * d..(r + 1) * d].iter_mut().zip(row) {
                *e += (v - mean) * inv / 2.0;
            }
        }
    }
    for (got, want) in targets.data().iter().zip(&expect) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn averaging_identical_blocks_equals_normalizing_once() {
    use kws_core::pretrain::targets::average_normalized_blocks;

    let mut tape: Tape<f64> = Tape::new();
    let mut rng = rng_from(21);
    let data: Vec<f64> = (0..2 * 5 * 8).map(|_| gaussian(&mut rng)).collect();
    let block = tape.constant(vec![2, 5, 8], data).unwrap();
    let once = average_normalized_blocks(&tape, &[block], 1).unwrap();
    let twice = average_normalized_blocks(&tape, &[block, block], 2).unwrap();
    assert_eq!(once.data(), twice.data());
}

// ---------------------------------------------------------------------------
// Teacher isolation from the student's backward pass.
// ---------------------------------------------------------------------------

#[test]
fn student_updates_never_touch_the_teacher() {
    let cfg = KwtVariant::KwtTiny.config().with_classes(4);
    let mut student = init_pretrain_model::<f64>(&cfg, 23).unwrap();
    let teacher = make_teacher(&student);
    let snapshot: Vec<(String, Vec<f64>)> = teacher
        .iter()
        .map(|(n, t)| (n.clone(), t.data().to_vec()))
        .collect();

    let features = random_features(24, 2, 9, cfg.input_dim);
    let targets = teacher_targets(&cfg, &teacher, &features, 2).unwrap();
    let mut rng = rng_from(25);
    for _ in 0..10 {
        let mask_a = sample_mask(9, 3, 0.5, &mut rng).unwrap();
        let mask_b = sample_mask(9, 3, 0.5, &mut rng).unwrap();
        let mask: Vec<bool> =
            mask_a.mask.iter().chain(mask_b.mask.iter()).copied().collect();

        let mut tape: Tape<f64> = Tape::new();
        let ids = tape.source_params(&student);
        let feat_id = tape.leaf(&features);
        let loss = student_loss(&mut tape, &ids, &cfg, feat_id, &mask, &targets).unwrap();
        tape.backward(loss).unwrap();
        tape.accumulate_into(&ids, &mut student);

        // crude SGD step on every student parameter
        for (_, tensor) in student.iter_mut() {
            let grad = tensor.grad().unwrap().to_vec();
            for (w, g) in tensor.data_mut().iter_mut().zip(grad) {
                *w -= 0.01 * g;
            }
            tensor.zero_grad();
        }
    }

    for (name, before) in &snapshot {
        let now = teacher.get(name).unwrap().data();
        assert_eq!(now, &before[..], "teacher parameter {name} drifted");
    }

    // and the EMA update is what moves it
    let mut teacher = teacher;
    ema_update(&mut teacher, &student, 0.9).unwrap();
    let moved = snapshot
        .iter()
        .any(|(name, before)| teacher.get(name).unwrap().data() != &before[..]);
    assert!(moved, "EMA update must move the teacher toward the student");
}

// ---------------------------------------------------------------------------
// End-to-end pretraining loop at miniature scale.
// ---------------------------------------------------------------------------

#[test]
fn pretraining_loop_runs_and_logs_finite_losses() {
    let corpus = SynthCorpusConfig {
        n_classes: 3,
        n_per_class: 6,
        n_val_per_class: 1,
        n_test_per_class: 1,
        pretrain_fraction: 0.5,
        sample_rate: 16000,
    };
    let manifest = synth_corpus(&corpus, 33).unwrap();
    let store = AudioStore::synthetic(manifest.seed, manifest.sample_rate);
    let model_cfg = KwtVariant::KwtTiny.config().with_classes(3);
    let cfg = PretrainConfig {
        epochs: 2,
        warmup_epochs: 1,
        batch_size: 4,
        k_blocks: 2,
        variant: PretrainVariant::Clean,
        ..PretrainConfig::default()
    };
    let out = run_pretraining(
        &cfg,
        &model_cfg,
        &manifest,
        &store,
        &[],
        &MfccConfig::default(),
        77,
        None,
    )
    .unwrap();
    assert_eq!(out.losses.len() as u64, out.total_steps);
    assert!(out.total_steps >= 4, "2 epochs over 9 items in batches of 4");
    assert!(out.losses.iter().all(|l| l.is_finite() && *l >= 0.0));
    assert!(out.student.get("mask_token").is_some());
    assert!(out.final_checkpoint.is_none());
}

//! Linear warmup followed by cosine decay.

/// Learning rate at `step` (0-based) for a run of `total_steps`.
///
/// Warmup ramps linearly so that the last warmup step reaches `max_lr`;
/// afterwards the rate follows half a cosine down to zero at the final step.
pub fn lr_schedule(step: u64, total_steps: u64, warmup_steps: u64, max_lr: f64) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    let warmup = warmup_steps.min(total_steps);
    if step < warmup {
        return max_lr * (step + 1) as f64 / warmup as f64;
    }
    if step >= total_steps {
        return 0.0;
    }
    let decay_span = (total_steps - warmup) as f64;
    if decay_span == 0.0 {
        return max_lr;
    }
    let progress = (step - warmup) as f64 / decay_span;
    0.5 * max_lr * (1.0 + (std::f64::consts::PI * progress).cos())
}

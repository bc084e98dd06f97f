//! Linear warmup followed by cosine annealing with warm restarts.
//!
//! Both pieces are evaluated on an inclusive step grid: the last warmup step
//! reaches `lr_max` and the last step of every complete cosine period reaches
//! `lr_min`.

use std::f64::consts::PI;

use super::{TrainConfig, TrainError};

/// Cosine arc value at position `t_cur` of a period of length `t_i`.
pub fn cosine_lr(t_cur: f64, t_i: f64, lr_min: f64, lr_max: f64) -> f64 {
    if t_i <= 0.0 {
        return lr_max;
    }
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * t_cur / t_i).cos())
}

/// Number of warmup steps: `ceil(warmup_fraction * total_steps)`.
pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    // the small offset keeps products like 0.1 * 30 from rounding up past 3
    let w = (warmup_fraction * total_steps as f64 - 1e-9).ceil();
    (w.max(0.0) as usize).min(total_steps)
}

/// Where `step` falls after warmup: `(t_cur, period)` with `t_cur < period`.
pub fn restart_position(step_after_warmup: usize, period: usize, mult: usize) -> (usize, usize) {
    let mut t_cur = step_after_warmup;
    let mut t_i = period.max(1);
    while t_cur >= t_i {
        t_cur -= t_i;
        t_i = t_i.saturating_mul(mult.max(1));
    }
    (t_cur, t_i)
}

/// Learning rate for `step` of a run with `total_steps` optimizer steps.
/// `period` is the first cosine period length in steps.
pub fn lr_at(
    step: usize,
    total_steps: usize,
    cfg: &TrainConfig,
    period: usize,
) -> Result<f64, TrainError> {
    if step >= total_steps {
        return Err(TrainError::Range(format!(
            "step {step} outside a run of {total_steps} steps"
        )));
    }
    let warmup = warmup_steps(total_steps, cfg.warmup_fraction);
    if step < warmup {
        if warmup == 1 {
            return Ok(0.0);
        }
        return Ok(cfg.lr_max * (step as f64 / (warmup - 1) as f64));
    }
    let (t_cur, t_i) = restart_position(step - warmup, period, cfg.restart_mult);
    if t_i == 1 {
        return Ok(cfg.lr_max);
    }
    Ok(cosine_lr(
        t_cur as f64,
        (t_i - 1) as f64,
        cfg.lr_min,
        cfg.lr_max,
    ))
}

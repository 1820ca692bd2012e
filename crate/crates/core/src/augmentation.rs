//! Trend-preserving augmentations. A spec lists at most one op of each kind,
//! always applied in the order jitter, scale, shift, smooth, downsample.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed, ForgeRng};
use crate::windowing::{Window, DEFAULT_TAU_MIN};

pub const AUGMENTATIONS_PER_WINDOW: usize = 9;
pub const INCLUSION_PROBABILITY: f64 = 0.5;
pub const MAX_REDRAWS: usize = 100;
pub const JITTER_WINDOW: usize = 4;
pub const SCALE_RANGE: (f64, f64) = (0.25, 4.0);
/// Shift bound in units of the window's standard deviation.
pub const SHIFT_SIGMAS: f64 = 2.0;
pub const MAX_SMOOTH_KERNEL: usize = 15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AugmentError {
    #[error("window of length {tau} is too short (needs {needed})")]
    TooShort { tau: usize, needed: usize },
    #[error("downsampling length {tau} by {k} leaves fewer than {min} points")]
    OutputTooShort { tau: usize, k: usize, min: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no valid augmentation after {0} redraws")]
    CannotAugment(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum AugOp {
    Jitter,
    Scale { c: f64 },
    Shift { b: f64 },
    Smooth { k: usize },
    Downsample { k: usize },
}

impl AugOp {
    fn rank(&self) -> usize {
        match self {
            AugOp::Jitter => 0,
            AugOp::Scale { .. } => 1,
            AugOp::Shift { .. } => 2,
            AugOp::Smooth { .. } => 3,
            AugOp::Downsample { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        ["jitter", "scale", "shift", "smooth", "downsample"][self.rank()]
    }
}

/// Ordered ops plus the seed driving jitter noise. An empty op list marks an
/// original, unaugmented sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub ops: Vec<AugOp>,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn original() -> Self {
        Self { ops: Vec::new(), seed: 0 }
    }

    pub fn is_original(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn apply(&self, window: &Window) -> Result<Window, AugmentError> {
        let mut ranks: Vec<usize> = self.ops.iter().map(AugOp::rank).collect();
        ranks.dedup();
        if ranks.len() != self.ops.len() || ranks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AugmentError::InvalidParameter("ops must be distinct and in canonical order".into()));
        }
        let mut out = window.clone();
        for op in &self.ops {
            out = match *op {
                AugOp::Jitter => jitter(&out, derive_seed(self.seed, 0))?,
                AugOp::Scale { c } => scale(&out, c)?,
                AugOp::Shift { b } => shift(&out, b)?,
                AugOp::Smooth { k } => smooth_aug(&out, k)?,
                AugOp::Downsample { k } => downsample_aug(&out, k)?,
            };
        }
        Ok(out)
    }
}

/// Sample standard deviation (divisor `n − 1`) of the trailing window of
/// [`JITTER_WINDOW`] points ending at each index. The first indices use the
/// available prefix, but never fewer than two points.
pub fn rolling_std(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|t| {
            let end = (t + 1).max(2).min(n);
            let start = end.saturating_sub(JITTER_WINDOW).min(t);
            let w = &values[start..end];
            if w.len() < 2 {
                return 0.0;
            }
            let m = w.iter().sum::<f64>() / w.len() as f64;
            (w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (w.len() - 1) as f64).sqrt()
        })
        .collect()
}

pub fn jitter(window: &Window, seed: u64) -> Result<Window, AugmentError> {
    if window.values.len() < JITTER_WINDOW {
        return Err(AugmentError::TooShort {
            tau: window.values.len(),
            needed: JITTER_WINDOW,
        });
    }
    let sigma = rolling_std(&window.values);
    let mut rng = rng_from_seed(seed);
    let values = window
        .values
        .iter()
        .zip(&sigma)
        .map(|(v, s)| {
            let z: f64 = rng.sample(StandardNormal);
            v + s * z
        })
        .collect();
    Ok(window.with_values(values))
}

pub fn scale(window: &Window, c: f64) -> Result<Window, AugmentError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(AugmentError::InvalidParameter(format!("scale factor {c} must be positive")));
    }
    Ok(window.with_values(window.values.iter().map(|v| v * c).collect()))
}

pub fn shift(window: &Window, b: f64) -> Result<Window, AugmentError> {
    if !b.is_finite() {
        return Err(AugmentError::InvalidParameter(format!("shift {b} must be finite")));
    }
    Ok(window.with_values(window.values.iter().map(|v| v + b).collect()))
}

/// Centred moving average of odd width `k`; taps past either end read the
/// boundary value.
pub fn moving_average(values: &[f64], k: usize) -> Vec<f64> {
    let n = values.len() as isize;
    let h = (k / 2) as isize;
    (0..n)
        .map(|i| (-h..=h).map(|j| values[(i + j).clamp(0, n - 1) as usize]).sum::<f64>() / k as f64)
        .collect()
}

pub fn smooth_aug(window: &Window, k: usize) -> Result<Window, AugmentError> {
    if k < 3 || k.is_multiple_of(2) || k > MAX_SMOOTH_KERNEL {
        return Err(AugmentError::InvalidParameter(format!(
            "smoothing width {k} must be odd and in 3..={MAX_SMOOTH_KERNEL}"
        )));
    }
    if k > window.values.len() {
        return Err(AugmentError::TooShort {
            tau: window.values.len(),
            needed: k,
        });
    }
    Ok(window.with_values(moving_average(&window.values, k)))
}

/// Keeps indices `0, k, 2k, …`.
pub fn downsample_aug(window: &Window, k: usize) -> Result<Window, AugmentError> {
    let tau = window.values.len();
    if k < 2 {
        return Err(AugmentError::InvalidParameter(format!("downsample factor {k} must be at least 2")));
    }
    if tau / k < DEFAULT_TAU_MIN {
        return Err(AugmentError::OutputTooShort {
            tau,
            k,
            min: DEFAULT_TAU_MIN,
        });
    }
    let mut out = window.with_values(window.values.iter().step_by(k).copied().collect());
    if let Some(g) = out.source.granularity.scaled(k) {
        out.source.granularity = g;
    }
    Ok(out)
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// One random spec for `window`. Each op kind is included independently with
/// probability 1/2; kinds the window cannot support are skipped. `None` when
/// nothing was included.
pub fn draw_spec(window: &Window, rng: &mut ForgeRng) -> Option<AugmentationSpec> {
    let tau = window.values.len();
    let mut ops = Vec::new();
    if rng.random_bool(INCLUSION_PROBABILITY) && tau >= JITTER_WINDOW {
        ops.push(AugOp::Jitter);
    }
    if rng.random_bool(INCLUSION_PROBABILITY) {
        let (lo, hi) = SCALE_RANGE;
        ops.push(AugOp::Scale {
            c: rng.random_range(lo.ln()..hi.ln()).exp(),
        });
    }
    if rng.random_bool(INCLUSION_PROBABILITY) {
        let bound = SHIFT_SIGMAS * population_std(&window.values);
        let b = if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 };
        ops.push(AugOp::Shift { b });
    }
    if rng.random_bool(INCLUSION_PROBABILITY) {
        let top = MAX_SMOOTH_KERNEL.min(tau);
        if top >= 3 {
            let k = 3 + 2 * rng.random_range(0..=(top - 3) / 2);
            ops.push(AugOp::Smooth { k });
        }
    }
    if rng.random_bool(INCLUSION_PROBABILITY) {
        let top = tau / DEFAULT_TAU_MIN;
        if top >= 2 {
            ops.push(AugOp::Downsample {
                k: rng.random_range(2..=top),
            });
        }
    }
    let seed = rng.random();
    (!ops.is_empty()).then_some(AugmentationSpec { ops, seed })
}

/// `n` pairwise distinct augmented copies of `window`, fully determined by
/// `(window, seed)`.
pub fn make_augmented_set(
    window: &Window,
    n: usize,
    seed: u64,
) -> Result<Vec<(Window, AugmentationSpec)>, AugmentError> {
    let mut rng = rng_from_seed(seed);
    let mut out: Vec<(Window, AugmentationSpec)> = Vec::with_capacity(n);
    let mut failures = 0;
    while out.len() < n {
        let candidate = draw_spec(window, &mut rng)
            .filter(|spec| out.iter().all(|(_, s)| s.ops != spec.ops))
            .and_then(|spec| spec.apply(window).ok().map(|w| (w, spec)));
        match candidate {
            Some(pair) => out.push(pair),
            None => {
                failures += 1;
                if failures >= MAX_REDRAWS {
                    return Err(AugmentError::CannotAugment(MAX_REDRAWS));
                }
            }
        }
    }
    Ok(out)
}

//! Seasonality detection from the autocorrelation of a linearly detrended
//! window.
//!
//! A lag `p` is reported when it is a local maximum of the ACF and exceeds
//! `z / sqrt(τ)`, with `z` chosen so that the family-wise false-alarm rate
//! over all searched lags is at most [`FALSE_ALARM_RATE`]. Lags suggested by
//! the granularity are tried before the free search. At least two full cycles
//! must fit in the window.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::ingest::Granularity;

pub const FALSE_ALARM_RATE: f64 = 0.01;

/// Residuals of an ordinary least-squares line through `y` at `0..n`.
pub fn linear_detrend(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (v - mean_y);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    y.iter()
        .enumerate()
        .map(|(i, v)| v - mean_y - slope * (i as f64 - mean_x))
        .collect()
}

/// Biased sample autocorrelation at lags `0..=max_lag`; `None` when the
/// series has no variance.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    let scale: f64 = x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if denom <= 1e-20 * scale || denom == 0.0 {
        return None;
    }
    Some(
        (0..=max_lag.min(n.saturating_sub(1)))
            .map(|k| centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
            .collect(),
    )
}

/// ACF level a lag must exceed to count as significant in a window of `n`
/// steps when `candidates` lags are examined.
pub fn significance_threshold(n: usize, candidates: usize) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z = normal.inverse_cdf(1.0 - FALSE_ALARM_RATE / candidates.max(1) as f64);
    z / (n as f64).sqrt()
}

fn is_peak(acf: &[f64], p: usize) -> bool {
    let left = acf[p - 1];
    let right = acf.get(p + 1).copied().unwrap_or(f64::NEG_INFINITY);
    acf[p] > left && acf[p] >= right
}

/// Strongest significant seasonal period of `values`, if any.
pub fn detect_period(values: &[f64], granularity: Option<Granularity>) -> Option<usize> {
    let n = values.len();
    let max_period = n / 2;
    if max_period < 2 {
        return None;
    }
    let detrended = linear_detrend(values);
    // peak test at max_period looks one lag further
    let acf = autocorrelation(&detrended, max_period + 1)?;
    let threshold = significance_threshold(n, max_period - 1);
    let significant = |p: usize| p >= 2 && p <= max_period && is_peak(&acf, p) && acf[p] > threshold;
    let strongest = |candidates: &mut dyn Iterator<Item = usize>| {
        candidates
            .filter(|&p| significant(p))
            .max_by(|&a, &b| acf[a].total_cmp(&acf[b]).then(b.cmp(&a)))
    };

    let free = strongest(&mut (2..=max_period));
    if let Some(g) = granularity {
        if let Some(p) = strongest(&mut g.natural_cycles().iter().copied()) {
            // a seeded cycle that is a multiple of a stronger free peak is a harmonic of it
            return match free {
                Some(q) if q != p && p % q == 0 && acf[q] > acf[p] => Some(q),
                _ => Some(p),
            };
        }
    }
    free
}

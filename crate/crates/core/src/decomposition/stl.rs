//! Additive seasonal-trend decomposition by iterated LOESS (Cleveland et al.).

use serde::{Deserialize, Serialize};

use super::loess::{estimate, smooth};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StlConfig {
    /// Span of the cycle-subseries smoother (odd, ≥ 3).
    pub seasonal_window: usize,
    /// Span of the trend smoother; derived from the period when `None`.
    pub trend_window: Option<usize>,
    /// Span of the low-pass smoother; the next odd integer ≥ period when `None`.
    pub low_pass_window: Option<usize>,
    pub seasonal_degree: usize,
    pub trend_degree: usize,
    pub low_pass_degree: usize,
    pub inner_iterations: usize,
    /// Robustness-reweighted passes after the first, unweighted one.
    pub robust_iterations: usize,
}

impl Default for StlConfig {
    fn default() -> Self {
        Self {
            seasonal_window: 7,
            trend_window: None,
            low_pass_window: None,
            seasonal_degree: 1,
            trend_degree: 1,
            low_pass_degree: 1,
            inner_iterations: 2,
            robust_iterations: 1,
        }
    }
}

fn next_odd(x: usize) -> usize {
    if x.is_multiple_of(2) {
        x + 1
    } else {
        x
    }
}

impl StlConfig {
    pub fn trend_window_for(&self, period: usize) -> usize {
        self.trend_window.map(next_odd).unwrap_or_else(|| {
            let ns = self.seasonal_window as f64;
            let raw = (1.5 * period as f64 / (1.0 - 1.5 / ns)).ceil() as usize;
            next_odd(raw)
        })
        .max(3)
    }

    pub fn low_pass_window_for(&self, period: usize) -> usize {
        next_odd(self.low_pass_window.unwrap_or(period)).max(3)
    }
}

pub(crate) struct StlParts {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
}

fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let n = x.len();
    if len > n {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n - len + 1);
    let mut sum: f64 = x[..len].iter().sum();
    out.push(sum / len as f64);
    for i in len..n {
        sum += x[i] - x[i - len];
        out.push(sum / len as f64);
    }
    out
}

/// Smooths each cycle-subseries and extends it by one cycle on both ends,
/// giving `n + 2 * period` values.
fn cycle_subseries(
    y: &[f64],
    period: usize,
    span: usize,
    degree: usize,
    robustness: Option<&[f64]>,
) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n + 2 * period];
    for phase in 0..period {
        let idx: Vec<usize> = (phase..n).step_by(period).collect();
        let k = idx.len();
        let sub: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let sub_rw: Option<Vec<f64>> = robustness.map(|rw| idx.iter().map(|&i| rw[i]).collect());
        let smoothed = smooth(&sub, span, degree, sub_rw.as_deref());
        let mut weights = vec![0.0; k];

        let right = span.min(k) - 1;
        let first = estimate(&sub, span, degree, -1.0, 0, right, sub_rw.as_deref(), &mut weights)
            .unwrap_or(smoothed[0]);
        let left = k.saturating_sub(span);
        let last = estimate(&sub, span, degree, k as f64, left, k - 1, sub_rw.as_deref(), &mut weights)
            .unwrap_or(smoothed[k - 1]);

        // extended subseries occupies positions phase, phase + period, ...
        out[phase] = first;
        for (m, v) in smoothed.iter().enumerate() {
            out[phase + (m + 1) * period] = *v;
        }
        out[phase + (k + 1) * period] = last;
    }
    out
}

fn robustness_weights(y: &[f64], fit: &[f64]) -> Vec<f64> {
    let abs: Vec<f64> = y.iter().zip(fit).map(|(a, b)| (a - b).abs()).collect();
    let mut sorted = abs.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let cmad = 6.0 * median;
    let c9 = 0.999 * cmad;
    let c1 = 0.001 * cmad;
    abs.into_iter()
        .map(|r| {
            if r <= c1 {
                1.0
            } else if r <= c9 {
                (1.0 - (r / cmad).powi(2)).powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

/// Runs STL on `y` with seasonal `period`. Callers ensure `2 * period <= y.len()`.
pub(crate) fn stl(y: &[f64], period: usize, config: &StlConfig) -> StlParts {
    let n = y.len();
    let ns = next_odd(config.seasonal_window.max(3));
    let nt = config.trend_window_for(period);
    let nl = config.low_pass_window_for(period);

    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut robustness: Option<Vec<f64>> = None;

    for pass in 0..=config.robust_iterations {
        for _ in 0..config.inner_iterations.max(1) {
            let detrended: Vec<f64> = y.iter().zip(&trend).map(|(a, b)| a - b).collect();
            let cycle = cycle_subseries(&detrended, period, ns, config.seasonal_degree, robustness.as_deref());
            let low = moving_average(&moving_average(&moving_average(&cycle, period), period), 3);
            let low = smooth(&low, nl, config.low_pass_degree, None);
            for i in 0..n {
                seasonal[i] = cycle[period + i] - low[i];
            }
            let deseasonalized: Vec<f64> = y.iter().zip(&seasonal).map(|(a, b)| a - b).collect();
            trend = smooth(&deseasonalized, nt, config.trend_degree, robustness.as_deref());
        }
        if pass < config.robust_iterations {
            let fit: Vec<f64> = trend.iter().zip(&seasonal).map(|(t, s)| t + s).collect();
            robustness = Some(robustness_weights(y, &fit));
        }
    }
    StlParts { trend, seasonal }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_windows() {
        let c = StlConfig::default();
        // 1.5 * 12 / (1 - 1.5/7) = 22.9 -> 23
        assert_eq!(c.trend_window_for(12), 23);
        assert_eq!(c.low_pass_window_for(12), 13);
        assert_eq!(c.low_pass_window_for(7), 7);
        // 1.5 * 7 / 0.7857 = 13.36 -> 14 -> 15
        assert_eq!(c.trend_window_for(7), 15);
    }

    #[test]
    fn moving_average_lengths() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let m = moving_average(&x, 3);
        assert_eq!(m.len(), 8);
        assert!((m[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cycle_subseries_length() {
        let y: Vec<f64> = (0..30).map(|i| (i % 5) as f64).collect();
        let c = cycle_subseries(&y, 5, 7, 1, None);
        assert_eq!(c.len(), 40);
        // a constant subseries extends as the same constant
        for phase in 0..5 {
            for m in 0..8 {
                assert!((c[phase + m * 5] - phase as f64).abs() < 1e-9);
            }
        }
    }
}

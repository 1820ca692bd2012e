//! Compresses an extracted trend into a short list of one-decimal numbers:
//! Gaussian smoothing, strided downsampling, then rounding.
//!
//! Output entry `i` (zero-based) corresponds to step `s·(i+1)` of the trend in
//! one-based time, i.e. trend index `s·(i+1) − 1`. Kernel taps that fall
//! outside the window read the nearest boundary value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of points a summary has under the default stride.
pub const TARGET_POINTS: usize = 25;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SummaryError {
    #[error("kernel size must be odd and positive, got {0}")]
    EvenKernel(usize),
    #[error("stride {stride} leaves no points in a trend of length {tau}")]
    StrideTooLarge { stride: usize, tau: usize },
    #[error("kernel size {w} exceeds trend length {tau}")]
    KernelTooWide { w: usize, tau: usize },
    #[error("non-finite trend value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub window_id: String,
    #[serde(rename = "s")]
    pub stride: usize,
    #[serde(rename = "w")]
    pub kernel_size: usize,
    pub values: Vec<f64>,
}

/// Normalised Gaussian weights of odd length `w`, `σ = max(w/6, 0.5)`.
pub fn gaussian_kernel(w: usize) -> Result<Vec<f64>, SummaryError> {
    if w == 0 || w.is_multiple_of(2) {
        return Err(SummaryError::EvenKernel(w));
    }
    let sigma = (w as f64 / 6.0).max(0.5);
    let half = (w / 2) as f64;
    let raw: Vec<f64> = (0..w)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // exact symmetry, independent of summation order
    for i in 0..w / 2 {
        weights[w - 1 - i] = weights[i];
    }
    Ok(weights)
}

/// Default stride `τ // 25` (at least 1).
pub fn default_stride(tau: usize) -> usize {
    (tau / TARGET_POINTS).max(1)
}

/// Default kernel size: the largest odd integer `≤ max(3, s + 1)`, capped at `τ`.
pub fn default_kernel_size(tau: usize, stride: usize) -> usize {
    let mut w = (stride + 1).max(3).min(tau.max(1));
    if w.is_multiple_of(2) {
        w -= 1;
    }
    w
}

/// Gaussian smoothing evaluated only at the retained indices.
pub fn smooth_downsample(trend: &[f64], w: usize, s: usize) -> Result<Vec<f64>, SummaryError> {
    let kernel = gaussian_kernel(w)?;
    let tau = trend.len();
    if s == 0 || tau / s == 0 {
        return Err(SummaryError::StrideTooLarge { stride: s, tau });
    }
    if w > tau {
        return Err(SummaryError::KernelTooWide { w, tau });
    }
    if trend.iter().any(|v| !v.is_finite()) {
        return Err(SummaryError::NonFinite);
    }
    let half = (w / 2) as isize;
    let last = tau as isize - 1;
    Ok((1..=tau / s)
        .map(|i| {
            let centre = (s * i) as isize - 1;
            (-half..=half)
                .map(|j| {
                    let idx = (centre - j).clamp(0, last) as usize;
                    trend[idx] * kernel[(half + j) as usize]
                })
                .sum()
        })
        .collect())
}

/// Rounds half away from zero to one decimal; `-0.0` becomes `0.0`.
pub fn round_one_decimal(v: f64) -> f64 {
    let r = (v * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn round_summary(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| round_one_decimal(*v)).collect()
}

/// Full summary with the default stride and kernel size.
pub fn summarize(window_id: impl Into<String>, trend: &[f64]) -> Result<TrendSummary, SummaryError> {
    let stride = default_stride(trend.len());
    let kernel_size = default_kernel_size(trend.len(), stride);
    summarize_with(window_id, trend, kernel_size, stride)
}

pub fn summarize_with(
    window_id: impl Into<String>,
    trend: &[f64],
    kernel_size: usize,
    stride: usize,
) -> Result<TrendSummary, SummaryError> {
    let smoothed = smooth_downsample(trend, kernel_size, stride)?;
    Ok(TrendSummary {
        window_id: window_id.into(),
        stride,
        kernel_size,
        values: round_summary(&smoothed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct transcription of the one-based formula with clamped indices.
    fn brute(trend: &[f64], w: usize, s: usize) -> Vec<f64> {
        let tau = trend.len() as i64;
        let h = (w / 2) as i64;
        let sigma = (w as f64 / 6.0).max(0.5);
        let f: Vec<f64> = (-h..=h).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let z: f64 = f.iter().sum();
        let mut out = vec![];
        for i in 1..=(tau / s as i64) {
            let mut acc = 0.0;
            for j in -h..=h {
                let t = (s as i64 * i - j).clamp(1, tau);
                acc += trend[(t - 1) as usize] * f[(h + j) as usize] / z;
            }
            out.push(acc);
        }
        out
    }

    #[test]
    fn kernel_closed_form() {
        assert_eq!(gaussian_kernel(1).unwrap(), vec![1.0]);
        let k = gaussian_kernel(3).unwrap();
        let e = (-2.0f64).exp();
        let z = 1.0 + 2.0 * e;
        assert!((k[0] - e / z).abs() < 1e-15 && (k[1] - 1.0 / z).abs() < 1e-15);
        assert!((k[0] - 0.1065).abs() < 1e-4 && (k[1] - 0.7870).abs() < 1e-4);
        assert_eq!(gaussian_kernel(4), Err(SummaryError::EvenKernel(4)));
        assert_eq!(gaussian_kernel(0), Err(SummaryError::EvenKernel(0)));
    }

    #[test]
    fn footnote_stride() {
        assert_eq!(default_stride(100), 4);
        let out = smooth_downsample(&vec![0.0; 100], default_kernel_size(100, 4), 4).unwrap();
        assert_eq!(out.len(), 25);
    }

    #[test]
    fn ramp_matches_brute_force() {
        let ramp: Vec<f64> = (1..=30).map(|t| t as f64).collect();
        let got = smooth_downsample(&ramp, 3, 1).unwrap();
        let want = brute(&ramp, 3, 1);
        assert_eq!(got.len(), 30);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(
            smooth_downsample(&[1.0; 10], 3, 11),
            Err(SummaryError::StrideTooLarge { stride: 11, tau: 10 })
        );
        assert_eq!(smooth_downsample(&[1.0; 3], 5, 1), Err(SummaryError::KernelTooWide { w: 5, tau: 3 }));
    }

    #[test]
    fn rounding() {
        assert_eq!(round_one_decimal(1.25), 1.3);
        assert_eq!(round_one_decimal(-1.25), -1.3);
        let z = round_one_decimal(-0.04);
        assert_eq!(z, 0.0);
        assert!(z.is_sign_positive());
        assert_eq!(round_summary(&[0.52, 0.98, 0.95]), vec![0.5, 1.0, 1.0]);
    }

    #[test]
    fn default_kernel_sizes() {
        assert_eq!(default_kernel_size(30, 1), 3);
        assert_eq!(default_kernel_size(100, 4), 5);
        assert_eq!(default_kernel_size(500, 20), 21);
        assert_eq!(default_kernel_size(2, 1), 1);
    }

    proptest! {
        #[test]
        fn length_and_constant(tau in 30usize..=500, c in -1e3f64..1e3) {
            let s = default_stride(tau);
            let w = default_kernel_size(tau, s);
            let out = smooth_downsample(&vec![c; tau], w, s).unwrap();
            prop_assert_eq!(out.len(), tau / s);
            for v in out {
                prop_assert!((v - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }

        #[test]
        fn monotone_preserved(steps in proptest::collection::vec(0.0f64..5.0, 30..200), w_half in 0usize..8) {
            let trend: Vec<f64> = steps.iter().scan(0.0, |acc, d| { *acc += d; Some(*acc) }).collect();
            let s = default_stride(trend.len());
            let w = (2 * w_half + 1).min(trend.len());
            let out = smooth_downsample(&trend, w, s).unwrap();
            for pair in out.windows(2) {
                prop_assert!(pair[1] >= pair[0] - 1e-9);
            }
        }

        #[test]
        fn matches_oracle(trend in proptest::collection::vec(-50.0f64..50.0, 30..300), w_half in 0usize..12, s_pick in 1usize..30) {
            let w = 2 * w_half + 1;
            let s = s_pick.min(trend.len());
            let got = smooth_downsample(&trend, w, s).unwrap();
            let want = brute(&trend, w, s);
            prop_assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn rounded_to_one_decimal(v in -1e6f64..1e6) {
            let r = round_one_decimal(v);
            prop_assert!((r * 10.0 - (r * 10.0).round()).abs() < 1e-6);
            prop_assert!((r - v).abs() <= 0.05 + 1e-9);
        }
    }
}

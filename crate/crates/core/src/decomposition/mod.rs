//! Trend extraction. Windows with a detectable seasonal period go through
//! STL; the rest get the posterior mean of a fitted Gaussian process.

pub mod gp;
mod loess;
mod optimize;
pub mod period;
mod stl;
mod toeplitz;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::gp::{
    fit_gp, gp_posterior_mean, log_marginal_likelihood, log_marginal_likelihood_dense, rbf_white_kernel, GpFitConfig, GpHyperparams,
    Standardized,
};
pub use self::period::detect_period;
pub use self::stl::StlConfig;
use crate::windowing::Window;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecompositionError {
    #[error("period {period} needs at least {} steps, window has {tau}", 2 * period)]
    PeriodTooLong { period: usize, tau: usize },
    #[error("period must be at least 2, got {0}")]
    PeriodTooShort(usize),
    #[error("kernel matrix not positive definite after jitter escalation")]
    SingularKernel,
    #[error("non-finite value in window or likelihood")]
    NonFinite,
    #[error("window is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionMethod {
    Stl,
    Gp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    pub method: DecompositionMethod,
    pub period: Option<usize>,
    pub hyperparams: Option<GpHyperparams>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    pub stl: StlConfig,
    pub gp: GpFitConfig,
}

/// Additive STL decomposition. The residual is `values − trend − seasonal`.
pub fn stl_decompose(values: &[f64], period: usize, config: &StlConfig) -> Result<Decomposition, DecompositionError> {
    let tau = values.len();
    if tau == 0 {
        return Err(DecompositionError::Empty);
    }
    if period < 2 {
        return Err(DecompositionError::PeriodTooShort(period));
    }
    if 2 * period > tau {
        return Err(DecompositionError::PeriodTooLong { period, tau });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DecompositionError::NonFinite);
    }
    let parts = stl::stl(values, period, config);
    let residual = values
        .iter()
        .zip(parts.trend.iter().zip(&parts.seasonal))
        .map(|(v, (t, s))| v - t - s)
        .collect();
    Ok(Decomposition {
        trend: parts.trend,
        seasonal: parts.seasonal,
        residual,
        method: DecompositionMethod::Stl,
        period: Some(period),
        hyperparams: None,
    })
}

/// Gaussian-process trend with a zero seasonal component.
pub fn gp_decompose(values: &[f64], config: &GpFitConfig) -> Result<Decomposition, DecompositionError> {
    if values.is_empty() {
        return Err(DecompositionError::Empty);
    }
    let hp = fit_gp(values, config)?;
    let trend = gp_posterior_mean(values, &hp)?;
    let residual = values.iter().zip(&trend).map(|(v, t)| v - t).collect();
    Ok(Decomposition {
        seasonal: vec![0.0; values.len()],
        trend,
        residual,
        method: DecompositionMethod::Gp,
        period: None,
        hyperparams: Some(hp),
    })
}

/// Routes a window to STL or GP depending on whether a period is detected.
/// The GP optimiser's random starts are keyed by the window seed.
pub fn decompose(window: &Window, config: &DecompositionConfig) -> Result<Decomposition, DecompositionError> {
    match detect_period(&window.values, Some(window.source.granularity)) {
        Some(period) => stl_decompose(&window.values, period, &config.stl),
        None => {
            let gp = GpFitConfig {
                seed: config.gp.seed ^ window.seed,
                ..config.gp
            };
            gp_decompose(&window.values, &gp)
        }
    }
}

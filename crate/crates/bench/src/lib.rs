//! Synthetic inputs shared by the benchmarks.

use trendforge::{Granularity, Window, WindowSource, WindowSplit};

/// Trend + daily cycle + deterministic pseudo-noise.
pub fn synthetic_series(n: usize, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|t| {
            let t = t as f64;
            let noise = ((t * 12.9898 + seed as f64 * 78.233).sin() * 43758.5453).fract();
            0.02 * t + 4.0 * (2.0 * std::f64::consts::PI * t / 24.0).sin() + noise
        })
        .collect()
}

/// Aperiodic random walk, which routes through the GP decomposition.
pub fn random_walk(n: usize, seed: u64) -> Vec<f64> {
    let mut level = 0.0;
    (0..n)
        .map(|t| {
            level += ((t as f64 * 91.7 + seed as f64 * 3.1).sin() * 1e4).fract() - 0.5;
            level
        })
        .collect()
}

pub fn window_of(values: Vec<f64>, seed: u64) -> Window {
    Window::new(
        values,
        WindowSource {
            corpus: "bench".into(),
            series_id: "s0".into(),
            start_index: 0,
            granularity: Granularity::Hourly,
        },
        WindowSplit::Train,
        seed,
    )
}

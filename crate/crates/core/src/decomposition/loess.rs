//! Local linear regression with tricube weights, as used inside STL.
//!
//! Positions are implicit: sample `j` sits at abscissa `j`. Indices passed to
//! [`estimate`] are zero-based and inclusive.

/// Fitted value at abscissa `xs` from samples `left..=right`, or `None` when
/// every weight vanishes.
pub(crate) fn estimate(
    y: &[f64],
    span: usize,
    degree: usize,
    xs: f64,
    left: usize,
    right: usize,
    robustness: Option<&[f64]>,
    weights: &mut [f64],
) -> Option<f64> {
    let n = y.len();
    let range = n as f64 - 1.0;
    let mut h = (xs - left as f64).max(right as f64 - xs);
    if span > n {
        h += ((span - n) / 2) as f64;
    }
    let h9 = 0.999 * h;
    let h1 = 0.001 * h;

    let mut total = 0.0;
    for j in left..=right {
        let r = (j as f64 - xs).abs();
        let mut w = 0.0;
        if r <= h9 {
            w = if r <= h1 {
                1.0
            } else {
                (1.0 - (r / h).powi(3)).powi(3)
            };
            if let Some(rw) = robustness {
                w *= rw[j];
            }
        }
        weights[j] = w;
        total += w;
    }
    if total <= 0.0 {
        return None;
    }
    for w in &mut weights[left..=right] {
        *w /= total;
    }
    if h > 0.0 && degree > 0 {
        let center: f64 = (left..=right).map(|j| weights[j] * j as f64).sum();
        let spread: f64 = (left..=right)
            .map(|j| weights[j] * (j as f64 - center).powi(2))
            .sum();
        if spread.sqrt() > 0.001 * range {
            let slope = (xs - center) / spread;
            for j in left..=right {
                weights[j] *= slope * (j as f64 - center) + 1.0;
            }
        }
    }
    Some((left..=right).map(|j| weights[j] * y[j]).sum())
}

/// Smooths every point of `y` with a window of `span` neighbours.
pub(crate) fn smooth(y: &[f64], span: usize, degree: usize, robustness: Option<&[f64]>) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    if n == 1 {
        out[0] = y[0];
        return out;
    }
    let mut weights = vec![0.0; n];
    if span >= n {
        for (i, o) in out.iter_mut().enumerate() {
            *o = estimate(y, span, degree, i as f64, 0, n - 1, robustness, &mut weights).unwrap_or(y[i]);
        }
        return out;
    }
    let half = span.div_ceil(2);
    let (mut left, mut right) = (0, span - 1);
    for (i, o) in out.iter_mut().enumerate() {
        if i + 1 > half && right != n - 1 {
            left += 1;
            right += 1;
        }
        *o = estimate(y, span, degree, i as f64, left, right, robustness, &mut weights).unwrap_or(y[i]);
    }
    out
}

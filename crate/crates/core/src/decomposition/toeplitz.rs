//! O(n²) algebra for symmetric positive-definite Toeplitz matrices, which is
//! what a stationary kernel produces on an evenly spaced time grid.
//!
//! All routines take the first row `t` of the matrix. They return `None` when
//! a pivot is not strictly positive, i.e. the matrix is not numerically
//! positive definite.

/// Pivots, log-determinant and the first column of the inverse.
#[derive(Debug, Clone)]
pub(crate) struct Durbin {
    pub log_det: f64,
    /// `T⁻¹ e₁`
    pub inv_first_col: Vec<f64>,
}

/// Runs Durbin's recursion on the unit-diagonal matrix `t / t[0]`.
pub(crate) fn durbin(t: &[f64]) -> Option<Durbin> {
    let n = t.len();
    let t0 = t[0];
    if !(t0 > 0.0) {
        return None;
    }
    let r: Vec<f64> = t[1..].iter().map(|v| v / t0).collect();
    let mut log_det = n as f64 * t0.ln();
    if n == 1 {
        return Some(Durbin {
            log_det,
            inv_first_col: vec![1.0 / t0],
        });
    }

    // y solves T_k y = -r[..k] for growing k
    let mut y = Vec::with_capacity(n - 1);
    y.push(-r[0]);
    let mut beta = 1.0;
    let mut alpha = -r[0];
    let mut z = vec![0.0; n];
    for k in 1..n {
        beta *= 1.0 - alpha * alpha;
        if !(beta > 0.0) || !beta.is_finite() {
            return None;
        }
        log_det += beta.ln();
        if k == n - 1 {
            break;
        }
        let dot: f64 = (0..k).map(|i| r[k - 1 - i] * y[i]).sum();
        alpha = -(r[k] + dot) / beta;
        for i in 0..k {
            z[i] = y[i] + alpha * y[k - 1 - i];
        }
        y[..k].copy_from_slice(&z[..k]);
        y.push(alpha);
    }

    // [1 rᵀ; r T] [a; a·y] = e₁  ⇒  a = 1 / (1 + rᵀy)
    let denom = 1.0 + r.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
    if !(denom > 0.0) {
        return None;
    }
    let a = 1.0 / denom;
    let mut col = Vec::with_capacity(n);
    col.push(a / t0);
    col.extend(y.iter().map(|v| a * v / t0));
    Some(Durbin {
        log_det,
        inv_first_col: col,
    })
}

/// Solves `T x = b` with Levinson's recursion.
pub(crate) fn levinson(t: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = t.len();
    let t0 = t[0];
    if !(t0 > 0.0) {
        return None;
    }
    let r: Vec<f64> = t[1..].iter().map(|v| v / t0).collect();
    let b: Vec<f64> = b.iter().map(|v| v / t0).collect();
    let mut x = Vec::with_capacity(n);
    x.push(b[0]);
    if n == 1 {
        return Some(x);
    }
    let mut y = vec![-r[0]];
    let mut beta = 1.0;
    let mut alpha = -r[0];
    let mut scratch = vec![0.0; n];
    for k in 1..n {
        beta *= 1.0 - alpha * alpha;
        if !(beta > 0.0) || !beta.is_finite() {
            return None;
        }
        let dot: f64 = (0..k).map(|i| r[i] * x[k - 1 - i]).sum();
        let mu = (b[k] - dot) / beta;
        for i in 0..k {
            scratch[i] = x[i] + mu * y[k - 1 - i];
        }
        x[..k].copy_from_slice(&scratch[..k]);
        x.push(mu);
        if k < n - 1 {
            let dot: f64 = (0..k).map(|i| r[i] * y[k - 1 - i]).sum();
            alpha = -(r[k] + dot) / beta;
            for i in 0..k {
                scratch[i] = y[i] + alpha * y[k - 1 - i];
            }
            y[..k].copy_from_slice(&scratch[..k]);
            y.push(alpha);
        }
    }
    Some(x)
}

/// `Σ_{|i−j| = k} (T⁻¹)_{ij}` for every `k`, from the first column of `T⁻¹`
/// via the Gohberg–Semencul representation
/// `T⁻¹ = (L(x) L(x)ᵀ − L(Zx̄) L(Zx̄)ᵀ) / x₀`, where `x̄` is `x` reversed and
/// `Z` shifts down by one.
pub(crate) fn inverse_diagonal_sums(inv_first_col: &[f64]) -> Vec<f64> {
    let n = inv_first_col.len();
    let x = inv_first_col;
    let mut shifted = vec![0.0; n];
    for i in 1..n {
        shifted[i] = x[n - i];
    }
    let x0 = x[0];
    (0..n)
        .map(|k| {
            // one-sided sum of the k-th superdiagonal of L(a)L(a)ᵀ
            let d = |a: &[f64]| -> f64 {
                (0..n - k)
                    .map(|l| a[l] * a[l + k] * (n - k - l) as f64)
                    .sum()
            };
            let one_sided = (d(x) - d(&shifted)) / x0;
            if k == 0 {
                one_sided
            } else {
                2.0 * one_sided
            }
        })
        .collect()
}

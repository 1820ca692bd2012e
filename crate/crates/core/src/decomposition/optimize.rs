//! Box-constrained quasi-Newton minimisation (projected BFGS with
//! backtracking), sized for the three-parameter kernel fits in this crate.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Bounds<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

impl Bounds<'_> {
    fn project(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
}

/// Minimises `f` from `start`. `f` returns `None` where the objective is
/// undefined; such points are treated as infinitely bad by the line search.
pub(crate) fn minimize<F>(mut f: F, start: &[f64], bounds: Bounds<'_>, max_iter: usize) -> Option<Minimum>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let dim = start.len();
    let mut x = DVector::from_column_slice(start);
    bounds.project(&mut x);
    let (mut fx, mut g) = f(&x)?;
    let mut h = DMatrix::<f64>::identity(dim, dim);

    for _ in 0..max_iter {
        let mut projected = &x - &g;
        bounds.project(&mut projected);
        if (&x - &projected).amax() < 1e-7 {
            break;
        }

        // variables pinned at a bound with the gradient pushing outward stay fixed
        let free: Vec<bool> = (0..dim)
            .map(|i| {
                let at_lower = x[i] <= bounds.lower[i] + 1e-12 && g[i] > 0.0;
                let at_upper = x[i] >= bounds.upper[i] - 1e-12 && g[i] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();
        let mut dir = -(&h * &g);
        for i in 0..dim {
            if !free[i] {
                dir[i] = 0.0;
            }
        }
        if dir.dot(&g) >= 0.0 {
            h = DMatrix::identity(dim, dim);
            dir = -g.clone();
            for i in 0..dim {
                if !free[i] {
                    dir[i] = 0.0;
                }
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = &x + &dir * step;
            bounds.project(&mut trial);
            let delta = &trial - &x;
            if delta.amax() < 1e-14 {
                break;
            }
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + 1e-4 * g.dot(&delta) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, f_next, g_next)) = accepted else {
            break;
        };

        let s = &next - &x;
        let y = &g_next - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(dim, dim);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
        let improvement = fx - f_next;
        x = next;
        fx = f_next;
        g = g_next;
        if improvement.abs() <= 1e-12 * (1.0 + fx.abs()) {
            break;
        }
    }
    Some(Minimum { x, value: fx })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_unconstrained_region() {
        let rosen = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            Some((v, g))
        };
        let lower = [-5.0, -5.0];
        let upper = [5.0, 5.0];
        let m = minimize(rosen, &[-1.2, 1.0], Bounds { lower: &lower, upper: &upper }, 500).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn active_bound_is_respected() {
        // minimum of (x - 3)^2 + (y + 1)^2 over [0, 2] x [0, 2] is (2, 0)
        let f = |x: &DVector<f64>| {
            Some((
                (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2),
                DVector::from_vec(vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]),
            ))
        };
        let lower = [0.0, 0.0];
        let upper = [2.0, 2.0];
        let m = minimize(f, &[1.0, 1.0], Bounds { lower: &lower, upper: &upper }, 100).unwrap();
        assert!((m.x[0] - 2.0).abs() < 1e-9 && m.x[1].abs() < 1e-9);
        assert!((m.value - 2.0).abs() < 1e-9);
    }
}

//! Damped least squares with multiplicative trust-region control.
//!
//! Small dense problems only (a handful of parameters against up to a few
//! hundred thousand residuals). Parameters are worked in caller-provided
//! scale units so the damping treats metres and dimensionless amplitudes
//! even-handedly.

use crate::error::{CoreError, Result};

pub(crate) struct LmOptions {
    pub max_iterations: usize,
    /// Converged when the relative cost decrease of an accepted step
    /// falls below this.
    pub cost_tol: f64,
    /// Converged when the scaled step norm falls below this.
    pub step_tol: f64,
    pub lambda_init: f64,
    /// Relative forward-difference step in scaled parameters.
    pub fd_step: f64,
    /// Typical magnitude of each parameter; must be positive.
    pub scales: Vec<f64>,
}

impl LmOptions {
    pub fn new(scales: Vec<f64>) -> Self {
        Self {
            max_iterations: 200,
            cost_tol: 1e-10,
            step_tol: 1e-12,
            lambda_init: 1e-3,
            fd_step: 1e-6,
            scales,
        }
    }
}

pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub n_residuals: usize,
    pub iterations: usize,
    pub converged: bool,
    /// `J^T J` at the optimum in unscaled parameter units, row-major.
    pub jtj: Vec<f64>,
    /// (iteration, cost, parameters) for each accepted state.
    pub trace: Vec<(usize, f64, Vec<f64>)>,
}

fn cholesky(a: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    x
}

/// Inverse of a symmetric positive-definite matrix, or None if it is not.
pub(crate) fn spd_inverse(a: &[f64], p: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, p)?;
    let mut inv = vec![0.0; p * p];
    for col in 0..p {
        let mut e = vec![0.0; p];
        e[col] = 1.0;
        let x = cholesky_solve(&l, &e, p);
        for row in 0..p {
            inv[row * p + col] = x[row];
        }
    }
    // Symmetrize against rounding.
    for i in 0..p {
        for j in 0..i {
            let m = 0.5 * (inv[i * p + j] + inv[j * p + i]);
            inv[i * p + j] = m;
            inv[j * p + i] = m;
        }
    }
    Some(inv)
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimises `sum r_i(x)^2`. The residual closure fills `out` and may
/// fail, which aborts the fit with that error.
pub(crate) fn minimize<F>(residuals: &mut F, x0: &[f64], opts: &LmOptions) -> Result<LmOutcome>
where
    F: FnMut(&[f64], &mut Vec<f64>) -> Result<()>,
{
    let p = x0.len();
    assert_eq!(opts.scales.len(), p, "one scale per parameter");
    assert!(opts.scales.iter().all(|s| *s > 0.0));

    let unscale = |y: &[f64]| -> Vec<f64> {
        y.iter().zip(&opts.scales).map(|(v, s)| v * s).collect()
    };
    let mut y: Vec<f64> = x0.iter().zip(&opts.scales).map(|(v, s)| v / s).collect();

    let mut r = Vec::new();
    residuals(&unscale(&y), &mut r)?;
    let m = r.len();
    if m < p {
        return Err(CoreError::Observation(format!(
            "{m} residuals cannot constrain {p} parameters"
        )));
    }
    let mut cost = cost_of(&r);
    let mut trace = vec![(0usize, cost, unscale(&y))];

    let mut jac = vec![0.0; m * p]; // column-major: jac[k*m + i]
    let mut r_pert = Vec::new();
    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut iterations = 0;

    'outer: for iter in 1..=opts.max_iterations {
        iterations = iter;
        // Forward-difference Jacobian in scaled coordinates.
        for k in 0..p {
            let h = opts.fd_step * y[k].abs().max(1.0);
            let mut y_h = y.clone();
            y_h[k] += h;
            residuals(&unscale(&y_h), &mut r_pert)?;
            for i in 0..m {
                jac[k * m + i] = (r_pert[i] - r[i]) / h;
            }
        }
        // Normal equations.
        let mut a = vec![0.0; p * p];
        let mut g = vec![0.0; p];
        for i in 0..p {
            for j in 0..=i {
                let mut s = 0.0;
                for t in 0..m {
                    s += jac[i * m + t] * jac[j * m + t];
                }
                a[i * p + j] = s;
                a[j * p + i] = s;
            }
            let mut s = 0.0;
            for t in 0..m {
                s += jac[i * m + t] * r[t];
            }
            g[i] = s;
        }

        loop {
            let mut damped = a.clone();
            for k in 0..p {
                let d = a[k * p + k].max(1e-30);
                damped[k * p + k] += lambda * d;
            }
            let Some(l) = cholesky(&damped, p) else {
                lambda *= 10.0;
                if lambda > 1e14 {
                    break 'outer;
                }
                continue;
            };
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let step = cholesky_solve(&l, &neg_g, p);
            let y_new: Vec<f64> = y.iter().zip(&step).map(|(a, b)| a + b).collect();
            residuals(&unscale(&y_new), &mut r_pert)?;
            let cost_new = cost_of(&r_pert);
            if cost_new.is_finite() && cost_new < cost {
                let decrease = (cost - cost_new) / cost.max(1e-300);
                let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                y = y_new;
                std::mem::swap(&mut r, &mut r_pert);
                cost = cost_new;
                trace.push((iter, cost, unscale(&y)));
                lambda = (lambda / 3.0).max(1e-12);
                if decrease < opts.cost_tol || step_norm < opts.step_tol || cost == 0.0 {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                // No downhill step exists at any damping: a stationary point.
                converged = true;
                break 'outer;
            }
        }
    }

    // J^T J at the final point, in unscaled units, for covariance use.
    for k in 0..p {
        let h = opts.fd_step * y[k].abs().max(1.0);
        let mut y_h = y.clone();
        y_h[k] += h;
        residuals(&unscale(&y_h), &mut r_pert)?;
        for i in 0..m {
            jac[k * m + i] = (r_pert[i] - r[i]) / h;
        }
    }
    let mut jtj = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = 0.0;
            for t in 0..m {
                s += jac[i * m + t] * jac[j * m + t];
            }
            let v = s / (opts.scales[i] * opts.scales[j]);
            jtj[i * p + j] = v;
            jtj[j * p + i] = v;
        }
    }

    Ok(LmOutcome {
        params: unscale(&y),
        cost,
        n_residuals: m,
        iterations,
        converged,
        jtj,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_decay() {
        // y = a exp(-b t) sampled exactly; recover (a, b).
        let truth = (2.5, 0.7);
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let data: Vec<f64> = ts.iter().map(|t| truth.0 * (-truth.1 * t).exp()).collect();
        let mut resid = |x: &[f64], out: &mut Vec<f64>| -> Result<()> {
            out.clear();
            for (t, d) in ts.iter().zip(&data) {
                out.push(x[0] * (-x[1] * t).exp() - d);
            }
            Ok(())
        };
        let opts = LmOptions::new(vec![1.0, 1.0]);
        let out = minimize(&mut resid, &[1.0, 0.2], &opts).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - truth.0).abs() < 1e-8);
        assert!((out.params[1] - truth.1).abs() < 1e-8);
    }

    #[test]
    fn scaled_parameters_converge_identically() {
        // Same problem expressed with a parameter a million times smaller.
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let data: Vec<f64> = ts.iter().map(|t| 3e-6 * (1.0 + 0.5 * t)).collect();
        let mut resid = |x: &[f64], out: &mut Vec<f64>| -> Result<()> {
            out.clear();
            for (t, d) in ts.iter().zip(&data) {
                out.push(x[0] * (1.0 + x[1] * t) - d);
            }
            Ok(())
        };
        let opts = LmOptions::new(vec![1e-6, 1.0]);
        let out = minimize(&mut resid, &[1e-6, 0.1], &opts).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 3e-6).abs() < 1e-12);
        assert!((out.params[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn spd_inverse_of_identity() {
        let inv = spd_inverse(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(inv, vec![1.0, 0.0, 0.0, 1.0]);
        assert!(spd_inverse(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}

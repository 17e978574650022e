//! Damped Gauss-Newton (Levenberg-style) weighted least squares.
//!
//! Small dense problems only (two to six parameters). The Jacobian is
//! numerically differenced (central differences, step 1e-6 of parameter
//! scale) in an internal parameter space where positivity-constrained
//! parameters live on a log axis. Steps solve
//! `(J^T J + lambda D) delta = -J^T r` with `D = diag(J^T J)`; accepted
//! steps must strictly decrease the cost, so the accepted-cost trace is
//! monotone by construction.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Parameter axis in the optimizer's internal space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    /// Positive-only parameter, optimized as its natural logarithm.
    Log,
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost-decrease threshold for convergence.
    pub cost_tolerance: f64,
    /// Internal-space step-size threshold for convergence.
    pub step_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-14,
            step_tolerance: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    /// Optimized parameters, external space.
    pub params: Vec<f64>,
    /// Linearized parameter covariance `(J^T J)^-1` mapped to external space.
    pub covariance: DMatrix<f64>,
    /// Final weighted sum of squared residuals.
    pub cost: f64,
    /// Accepted costs, starting with the initial point.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
}

fn to_internal(external: &[f64], scales: &[Scale]) -> Result<Vec<f64>> {
    external
        .iter()
        .zip(scales)
        .map(|(&x, s)| match s {
            Scale::Linear => Ok(x),
            Scale::Log => {
                if x > 0.0 {
                    Ok(x.ln())
                } else {
                    Err(Error::DegenerateFit(format!(
                        "log-scaled parameter must start positive, got {x}"
                    )))
                }
            }
        })
        .collect()
}

fn to_external(internal: &[f64], scales: &[Scale]) -> Vec<f64> {
    internal
        .iter()
        .zip(scales)
        .map(|(&x, s)| match s {
            Scale::Linear => x,
            Scale::Log => x.exp(),
        })
        .collect()
}

/// Fit `theta` to minimize `|residuals(theta)|^2`.
///
/// `residuals` receives external-space parameters and must fill the whole
/// output slice; weights belong inside the residuals.
pub fn lm_fit<F>(
    n_residuals: usize,
    residuals: F,
    theta0: &[f64],
    scales: &[Scale],
    opts: &LmOptions,
) -> Result<LmFit>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n_par = theta0.len();
    assert_eq!(n_par, scales.len());
    let mut r = vec![0.0; n_residuals];
    let cost_at = |internal: &[f64], r: &mut [f64]| -> f64 {
        residuals(&to_external(internal, scales), r);
        r.iter().map(|v| v * v).sum()
    };

    let mut theta = to_internal(theta0, scales)?;
    let mut cost = cost_at(&theta, &mut r);
    if !cost.is_finite() {
        return Err(Error::DegenerateFit(
            "initial parameters give non-finite residuals".into(),
        ));
    }
    let mut trace = vec![cost];
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    let mut r_plus = vec![0.0; n_residuals];
    let mut r_minus = vec![0.0; n_residuals];

    for iter in 1..=opts.max_iterations {
        iterations = iter;
        // central-difference Jacobian in internal space
        let mut jac = DMatrix::<f64>::zeros(n_residuals, n_par);
        for j in 0..n_par {
            let h = 1e-6 * theta[j].abs().max(1.0);
            let saved = theta[j];
            theta[j] = saved + h;
            cost_at(&theta, &mut r_plus);
            theta[j] = saved - h;
            cost_at(&theta, &mut r_minus);
            theta[j] = saved;
            for i in 0..n_residuals {
                jac[(i, j)] = (r_plus[i] - r_minus[i]) / (2.0 * h);
            }
        }
        cost = cost_at(&theta, &mut r);
        let rv = DVector::from_column_slice(&r);
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * &rv;

        let max_diag = (0..n_par).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
        if max_diag <= 0.0 {
            return Err(Error::DegenerateFit(
                "residuals are insensitive to every free parameter".into(),
            ));
        }

        let mut accepted = false;
        while lambda <= 1e14 {
            let mut damped = a.clone();
            for i in 0..n_par {
                // Floor the damping diagonal so parameters that have gone
                // flat (for example an overlap radius with every sample on a
                // plateau) cannot make the system singular.
                damped[(i, i)] += lambda * a[(i, i)].max(1e-10 * max_diag);
            }
            let delta = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let candidate: Vec<f64> =
                theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
            let new_cost = cost_at(&candidate, &mut r_plus);
            if new_cost.is_finite() && new_cost < cost {
                let step = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                let decrease = cost - new_cost;
                theta = candidate;
                trace.push(new_cost);
                // A vanishing decrease only means convergence once the
                // damping is small, i.e. the step was an (almost) full
                // Gauss-Newton step; heavily damped steps are short no
                // matter how far the optimum is.
                if lambda <= 1e-7
                    && (decrease <= opts.cost_tolerance * (cost + 1e-300)
                        || step <= opts.step_tolerance)
                {
                    converged = true;
                }
                cost = new_cost;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No decrease possible at maximum damping: numerical minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let params = to_external(&theta, scales);
    if !converged {
        return Err(Error::FitDidNotConverge {
            iterations,
            cost,
            last_params: params,
        });
    }

    // covariance from the Jacobian at the optimum
    let mut jac = DMatrix::<f64>::zeros(n_residuals, n_par);
    for j in 0..n_par {
        let h = 1e-6 * theta[j].abs().max(1.0);
        let saved = theta[j];
        theta[j] = saved + h;
        cost_at(&theta, &mut r_plus);
        theta[j] = saved - h;
        cost_at(&theta, &mut r_minus);
        theta[j] = saved;
        for i in 0..n_residuals {
            jac[(i, j)] = (r_plus[i] - r_minus[i]) / (2.0 * h);
        }
    }
    cost = cost_at(&theta, &mut r);
    let a = jac.transpose() * &jac;
    let cov_internal = a
        .pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(n_par, n_par));
    // chain rule: d(external)/d(internal) = value itself on log axes
    let mut cov = cov_internal;
    for (j, s) in scales.iter().enumerate() {
        if *s == Scale::Log {
            let d = params[j];
            for k in 0..n_par {
                cov[(j, k)] *= d;
                cov[(k, j)] *= d;
            }
        }
    }

    Ok(LmFit {
        params,
        covariance: cov,
        cost,
        cost_trace: trace,
        iterations,
    })
}

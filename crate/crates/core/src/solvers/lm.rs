//! Dense Levenberg-Marquardt for small problems.
//!
//! Minimizes `f(x) = sum_i r_i(x)^2` with Marquardt diagonal scaling and
//! Nielsen's damping update. Only accepted steps move `x`, so the returned
//! cost never exceeds the initial one.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// A sum-of-squares problem with an exact Jacobian.
pub trait LeastSquares {
    fn num_params(&self) -> usize;
    fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    /// Residuals together with the Jacobian `d r / d x`.
    fn jacobian(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop when `max |J^T r| < gradient_tol`.
    pub gradient_tol: f64,
    /// Stop when `|dx| < step_tol * (1 + |x|)`.
    pub step_tol: f64,
    /// Stop once the cost drops below this value.
    pub cost_floor: f64,
    pub initial_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            cost_floor: 1e-28,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Step,
    CostFloor,
    MaxIterations,
    /// Damping grew without any acceptable step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn sq_norm(r: &DVector<f64>) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Runs LM from `x0`. `mask[k] == false` freezes parameter `k`.
///
/// Fails only if the residuals cannot be evaluated at `x0`; failed
/// evaluations at trial points are treated as rejected steps.
pub fn minimize<P: LeastSquares + ?Sized>(
    problem: &P,
    x0: DVector<f64>,
    mask: Option<&[bool]>,
    cfg: &LmConfig,
) -> Result<LmReport> {
    let n = problem.num_params();
    let free: Vec<usize> = (0..n).filter(|&k| mask.map_or(true, |m| m[k])).collect();
    let nf = free.len();

    let mut x = x0;
    let (mut r, mut jac) = problem.jacobian(&x)?;
    let mut cost = sq_norm(&r);
    let initial_cost = cost;
    let mut mu = cfg.initial_damping;
    let mut nu = 2.0;
    let mut iterations = 0;

    let termination = loop {
        if cost <= cfg.cost_floor {
            break Termination::CostFloor;
        }
        if nf == 0 {
            break Termination::Gradient;
        }
        let j = DMatrix::from_fn(jac.nrows(), nf, |i, k| jac[(i, free[k])]);
        let g = j.transpose() * &r;
        if g.amax() < cfg.gradient_tol {
            break Termination::Gradient;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let a = j.transpose() * &j;
        let dmax = a.diagonal().max().max(1e-300);
        let diag = a.diagonal().map(|d| d.max(1e-12 * dmax));

        let mut accepted = false;
        let mut tiny_step = false;
        for _ in 0..40 {
            let mut damped = a.clone();
            for k in 0..nf {
                damped[(k, k)] += mu * diag[k];
            }
            let Some(chol) = damped.cholesky() else {
                mu *= nu;
                nu *= 2.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            if step.norm() < cfg.step_tol * (1.0 + x.norm()) {
                tiny_step = true;
                break;
            }
            let mut x_new = x.clone();
            for k in 0..nf {
                x_new[free[k]] += step[k];
            }
            let predicted = -step.dot(&g) + mu * step.component_mul(&diag).dot(&step);
            let trial = problem.residuals(&x_new).ok().map(|rn| sq_norm(&rn));
            match trial {
                Some(c) if c.is_finite() && c < cost && predicted > 0.0 => {
                    let rho = (cost - c) / predicted;
                    mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                    nu = 2.0;
                    match problem.jacobian(&x_new) {
                        Ok((rn, jn)) => {
                            x = x_new;
                            r = rn;
                            jac = jn;
                            cost = c;
                            accepted = true;
                        }
                        Err(_) => {
                            mu *= nu;
                            nu *= 2.0;
                            continue;
                        }
                    }
                    break;
                }
                _ => {
                    mu *= nu;
                    nu *= 2.0;
                }
            }
        }
        if tiny_step {
            break Termination::Step;
        }
        if !accepted {
            break Termination::Stalled;
        }
    };

    Ok(LmReport { x, cost, initial_cost, iterations, termination })
}

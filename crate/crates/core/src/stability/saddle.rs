//! Deterministic saddle-point solvers on a fixed objective.

use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use crate::error::{BrmError, Result};
use crate::numeric::norm;
use crate::objective::SaddleObjective;
use crate::param::ParamPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub x_star: Vec<f64>,
    pub v_star: Vec<f64>,
    pub phi_star: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

impl SaddleSolution {
    pub fn point(&self) -> ParamPoint {
        ParamPoint::new(self.x_star.clone(), self.v_star.clone())
    }
}

pub const DEFAULT_SADDLE_TOL: f64 = 1e-10;
const DEFAULT_MAX_ITER: usize = 2_000_000;
const HESSIAN_STEP: f64 = 1e-5;

pub fn solve_saddle(objective: &SaddleObjective, tol: f64) -> Result<SaddleSolution> {
    let start = vec![0.0; objective.param().dim_primal()];
    solve_saddle_from(objective, tol, &start, DEFAULT_MAX_ITER)
}

/// Central-difference Hessian of `Phi` from its exact gradient, symmetrized.
fn phi_hessian(objective: &SaddleObjective, w: &[f64]) -> DMatrix<f64> {
    let d = w.len();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = HESSIAN_STEP * (1.0 + w[j].abs());
        let mut plus = w.to_vec();
        let mut minus = w.to_vec();
        plus[j] += step;
        minus[j] -= step;
        let gp = objective.phi_with_grad(&plus).1;
        let gm = objective.phi_with_grad(&minus).1;
        for i in 0..d {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Damped Newton direction `-(H + lambda I)^{-1} g`, raising `lambda` until the
/// shifted Hessian is positive definite. `None` if that never happens.
fn newton_direction(h: &DMatrix<f64>, grad: &[f64], lambda: &mut f64) -> Option<Vec<f64>> {
    let d = grad.len();
    let g = DVector::from_column_slice(grad);
    let scale = h.diagonal().amax().max(1e-300);
    for _ in 0..40 {
        let shifted = h + DMatrix::identity(d, d) * (*lambda * scale);
        if let Some(chol) = shifted.cholesky() {
            let dir = -chol.solve(&g);
            return Some(dir.iter().copied().collect());
        }
        *lambda = (*lambda * 10.0).max(1e-12);
    }
    None
}

/// Minimizes `Phi(w)` by damped Newton steps with Armijo backtracking (gradient
/// steps when the Newton direction fails); the dual is the closed-form maximizer
/// at every step. Returns once `||grad Phi|| <= tol`.
pub fn solve_saddle_from(
    objective: &SaddleObjective,
    tol: f64,
    start: &[f64],
    max_iter: usize,
) -> Result<SaddleSolution> {
    if !(tol > 0.0) {
        return Err(BrmError::precondition("tolerance must be positive"));
    }
    let mut w = start.to_vec();
    let (mut phi, mut grad) = objective.phi_with_grad(&w);
    let mut lambda = 1e-12;
    let mut gd_step = 1.0;
    for it in 0..=max_iter {
        let gn = norm(&grad);
        if gn <= tol {
            return Ok(SaddleSolution {
                v_star: objective.dual_argmax(&w),
                x_star: w,
                phi_star: phi,
                grad_norm: gn,
                iterations: it,
            });
        }
        if it == max_iter {
            return Err(BrmError::Convergence {
                iterations: max_iter,
                residual: gn,
            });
        }
        // Phi is a difference of sums of squares, so near the optimum its rounding
        // noise exceeds the Armijo decrease; there we accept any step that stays
        // within the noise floor and shrinks the gradient.
        let noise = 1e-13 * (1.0 + w.iter().map(|x| x * x).sum::<f64>());
        let newton = newton_direction(&phi_hessian(objective, &w), &grad, &mut lambda)
            .filter(|d| d.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() < 0.0);
        let is_newton = newton.is_some();
        let (dir, mut step) = match newton {
            Some(d) => (d, 1.0),
            None => {
                gd_step *= 2.0;
                (grad.iter().map(|g| -g).collect(), gd_step)
            }
        };
        let slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();
        loop {
            let trial: Vec<f64> = w.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
            let (p_trial, g_trial) = objective.phi_with_grad(&trial);
            let armijo = p_trial <= phi + 1e-4 * step * slope;
            let flat = (p_trial - phi).abs() <= noise && norm(&g_trial) < gn;
            if armijo || flat {
                if step == 1.0 && is_newton {
                    lambda *= 0.1;
                } else if is_newton {
                    lambda = (lambda * 10.0).max(1e-12);
                } else {
                    gd_step = step;
                }
                w = trial;
                phi = p_trial;
                grad = g_trial;
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return Err(BrmError::Convergence {
                    iterations: it,
                    residual: gn,
                });
            }
        }
    }
    unreachable!()
}

/// Projected gradient descent on `w -> F(w, v)` over the ball `||w|| <= radius`,
/// started from `start` (projected). Returns the final point and value; the value
/// never exceeds `F(proj(start), v)`.
pub fn minimize_primal_fixed_dual(
    objective: &SaddleObjective,
    v: &[f64],
    start: &[f64],
    radius: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let project = |x: &mut Vec<f64>| {
        let nx = norm(x);
        if nx > radius {
            x.iter_mut().for_each(|c| *c *= radius / nx);
        }
    };
    let eval = |w: &[f64]| {
        let e = objective.eval(&ParamPoint::new(w.to_vec(), v.to_vec()));
        (e.value, e.grad_w)
    };
    let mut w = start.to_vec();
    project(&mut w);
    let (mut f, mut g) = eval(&w);
    let mut step = 1.0;
    for _ in 0..max_iter {
        step *= 2.0;
        let mut accepted = false;
        while step > 1e-16 {
            let mut trial: Vec<f64> = w.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
            project(&mut trial);
            let d2: f64 = trial.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
            let (ft, gt) = eval(&trial);
            if ft <= f - d2 / (2.0 * step) * 0.5 && d2 > 0.0 {
                let moved = d2.sqrt() / step;
                w = trial;
                f = ft;
                g = gt;
                accepted = true;
                if moved <= tol {
                    return (w, f);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (w, f)
}

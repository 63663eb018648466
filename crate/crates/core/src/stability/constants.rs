//! Empirical estimates of the problem constants `L, rho, G, mu_PL, mu_QG` on a
//! parameter ball around the saddle point, and the Lyapunov potential.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{BrmError, Result};
use crate::numeric::{dist, norm};
use crate::objective::{accumulate_sample, SaddleObjective, Scratch};
use crate::param::ParamPoint;
use crate::rng::{streams, StreamRng};
use crate::stability::saddle::SaddleSolution;

const POWER_ITERS: usize = 30;
const DENSE_HESSIAN_MAX_DIM: usize = 128;
const REFINE_STARTS: usize = 4;
const REFINE_EVALS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEstimate {
    pub l_hat: f64,
    pub rho_hat: f64,
    pub g_hat: f64,
    pub mu_pl_hat: f64,
    pub mu_qg_hat: f64,
    pub alpha: f64,
    pub c_hat: f64,
    pub probe_radius: f64,
    pub method_notes: String,
}

impl ConstantsEstimate {
    /// Assembles derived quantities `alpha = 4 L^2 / rho^2` and `c = min(mu_PL, rho) / 2`.
    pub fn from_parts(
        l_hat: f64,
        rho_hat: f64,
        g_hat: f64,
        mu_pl_hat: f64,
        mu_qg_hat: f64,
        probe_radius: f64,
        method_notes: String,
    ) -> Self {
        Self {
            l_hat,
            rho_hat,
            g_hat,
            mu_pl_hat,
            mu_qg_hat,
            alpha: 4.0 * l_hat * l_hat / (rho_hat * rho_hat),
            c_hat: (mu_pl_hat / 2.0).min(rho_hat / 2.0),
            probe_radius,
            method_notes,
        }
    }

    pub fn all_positive(&self) -> bool {
        [
            self.l_hat,
            self.rho_hat,
            self.g_hat,
            self.mu_pl_hat,
            self.mu_qg_hat,
        ]
        .iter()
        .all(|&x| x > 0.0 && x.is_finite())
    }

    /// `min{1/(4L), 1/rho}`.
    pub fn stepsize_cap(&self) -> f64 {
        (1.0 / (4.0 * self.l_hat)).min(1.0 / self.rho_hat)
    }
}

/// `Psi(w, v) = (Phi(w) - Phi*) + alpha (Phi(w) - F(w, v))`.
pub fn lyapunov_potential(
    objective: &SaddleObjective,
    p: &ParamPoint,
    alpha: f64,
    saddle: &SaddleSolution,
) -> f64 {
    let phi = objective.phi(&p.w);
    let gamma = phi - objective.value(p);
    (phi - saddle.phi_star) + alpha * gamma
}

/// Uniform point in the Euclidean ball of `radius` around `center`.
pub(crate) fn ball_point(center: &[f64], radius: f64, rng: &mut StreamRng) -> Vec<f64> {
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let nd = norm(&dir).max(1e-300);
    let r = radius * rng.uniform().powf(1.0 / d as f64);
    center
        .iter()
        .zip(&dir)
        .map(|(c, u)| c + r * u / nd)
        .collect()
}

pub(crate) fn gaussian(rng: &mut StreamRng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

fn unit(d: usize, rng: &mut StreamRng) -> Vec<f64> {
    let u: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let nu = norm(&u);
    u.into_iter().map(|x| x / nu).collect()
}

fn joint_grad(objective: &SaddleObjective, x: &[f64]) -> Vec<f64> {
    let dp = objective.param().dim_primal();
    objective.eval(&ParamPoint::from_joint(x, dp)).joint_grad()
}

/// Estimate of `||H(x)||` from finite-difference Hessian columns: the exact
/// spectral norm of the symmetrized matrix in low dimension, power iteration on
/// Hessian-vector products above that.
fn curvature_at(objective: &SaddleObjective, x: &[f64], rng: &mut StreamRng) -> f64 {
    let d = x.len();
    if d <= DENSE_HESSIAN_MAX_DIM {
        let mut h = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = hessian_vector(objective, x, &e);
            e[j] = 0.0;
            for i in 0..d {
                h[(i, j)] = col[i];
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        return h.symmetric_eigenvalues().amax();
    }
    let mut u = unit(d, rng);
    let mut lambda: f64 = 0.0;
    for _ in 0..POWER_ITERS {
        let hv = hessian_vector(objective, x, &u);
        let n = norm(&hv);
        if n == 0.0 {
            break;
        }
        lambda = lambda.max(n);
        u = hv.into_iter().map(|x| x / n).collect();
    }
    lambda
}

fn hessian_vector(objective: &SaddleObjective, x: &[f64], u: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    let plus: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = x.iter().zip(u).map(|(a, b)| a - h * b).collect();
    let gp = joint_grad(objective, &plus);
    let gm = joint_grad(objective, &minus);
    gp.iter()
        .zip(&gm)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect()
}

/// Point on the sphere of `radius` around `center`.
fn sphere_point(center: &[f64], radius: f64, rng: &mut StreamRng) -> Vec<f64> {
    let u = unit(center.len(), rng);
    center.iter().zip(&u).map(|(c, d)| c + radius * d).collect()
}

/// Compass search on `||H||` from `start` over `+-` coordinate moves with a
/// shrinking step, projected back into the ball.
fn refine_curvature(
    objective: &SaddleObjective,
    start: (f64, Vec<f64>),
    center: &[f64],
    radius: f64,
    rng: &mut StreamRng,
) -> f64 {
    let (mut best, mut x) = start;
    let mut step = 0.25 * radius;
    let mut evals = 0;
    while step > 1e-3 * radius && evals < REFINE_EVALS {
        let mut improved = false;
        for j in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[j] += sign * step;
                let off = dist(&cand, center);
                if off > radius {
                    cand = center
                        .iter()
                        .zip(&cand)
                        .map(|(c, y)| c + (y - c) * radius / off)
                        .collect();
                }
                let val = curvature_at(objective, &cand, rng);
                evals += 1;
                if val > best {
                    best = val;
                    x = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

/// Largest per-sample gradient block norm `max(||grad_w f||, ||grad_v f||)` at `p`.
pub fn max_sample_gradient(objective: &SaddleObjective, p: &ParamPoint) -> f64 {
    let param = objective.param();
    let mut scratch = Scratch::new(param);
    let mut gw = vec![0.0; param.dim_primal()];
    let mut gv = vec![0.0; param.dim_dual()];
    let mut best: f64 = 0.0;
    for it in objective.items() {
        gw.iter_mut().for_each(|g| *g = 0.0);
        gv.iter_mut().for_each(|g| *g = 0.0);
        accumulate_sample(
            param,
            objective.beta(),
            &p.w,
            &p.v,
            &it.z,
            it.dual,
            1.0,
            &mut gw,
            &mut gv,
            &mut scratch,
        );
        best = best.max(norm(&gw)).max(norm(&gv));
    }
    best
}

/// Secant estimate of the joint smoothness constant at one probe pair.
fn secant_ratio(objective: &SaddleObjective, a: &[f64], b: &[f64]) -> f64 {
    let ga = joint_grad(objective, a);
    let gb = joint_grad(objective, b);
    dist(&ga, &gb) / dist(a, b)
}

/// Probe-based constant estimation.
///
/// * `rho_hat` is exact: `2 beta^2 min_(s,a) mass(s, a)`.
/// * `l_hat` is the largest of the gradient secant ratios over random chords and
///   the finite-difference Hessian norms at the probes (half inside the ball, half on
///   its boundary), after a compass search from the best few probes. Every
///   candidate is a lower estimate of the true constant on the ball.
/// * `g_hat` is the largest per-sample gradient block norm over the probes.
/// * `mu_pl_hat`, `mu_qg_hat` are minima of the PL and QG ratios over primal probes.
pub fn estimate_constants(
    objective: &SaddleObjective,
    saddle: &SaddleSolution,
    radius: f64,
    probe_budget: usize,
    seed: u64,
) -> Result<ConstantsEstimate> {
    if probe_budget < 100 {
        return Err(BrmError::precondition("probe budget must be at least 100"));
    }
    if !(radius > 0.0) {
        return Err(BrmError::precondition("probe radius must be positive"));
    }
    let dp = objective.param().dim_primal();
    let center = saddle.point().joint();
    let mut rng = StreamRng::new(seed, streams::PROBES);

    let mut l_hat: f64 = 0.0;
    let mut g_hat = max_sample_gradient(objective, &saddle.point());
    let mut top: Vec<(f64, Vec<f64>)> = Vec::new();
    for k in 0..probe_budget {
        let a = if k % 2 == 0 {
            ball_point(&center, radius, &mut rng)
        } else {
            sphere_point(&center, radius, &mut rng)
        };
        let b = ball_point(&center, radius, &mut rng);
        l_hat = l_hat.max(secant_ratio(objective, &a, &b));
        let curv = curvature_at(objective, &a, &mut rng);
        l_hat = l_hat.max(curv);
        g_hat = g_hat.max(max_sample_gradient(
            objective,
            &ParamPoint::from_joint(&a, dp),
        ));
        top.push((curv, a));
        top.sort_by(|x, y| y.0.total_cmp(&x.0));
        top.truncate(REFINE_STARTS);
    }
    for start in top {
        l_hat = l_hat.max(refine_curvature(
            objective, start, &center, radius, &mut rng,
        ));
    }

    let mut mu_pl = f64::INFINITY;
    let mut mu_qg = f64::INFINITY;
    let mut skipped = 0;
    for _ in 0..probe_budget {
        let w = ball_point(&saddle.x_star, radius, &mut rng);
        let (phi, grad) = objective.phi_with_grad(&w);
        let gap = phi - saddle.phi_star;
        if gap < 1e-14 {
            skipped += 1;
            continue;
        }
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        mu_pl = mu_pl.min(0.5 * g2 / gap);
        let d2: f64 = w
            .iter()
            .zip(&saddle.x_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        mu_qg = mu_qg.min(2.0 * gap / d2);
    }
    if skipped == probe_budget {
        return Err(BrmError::Estimation(
            "every PL/QG probe was degenerate".into(),
        ));
    }
    let rho_hat = objective.dual_strong_concavity();
    let notes = format!(
        "probe ball radius {radius:e} around the saddle; {probe_budget} smoothness probes \
         (random chords and Hessian norms, {REFINE_STARTS} refined); {} PL/QG probes ({skipped} degenerate skipped); \
         rho exact from the dual Hessian",
        probe_budget - skipped
    );
    Ok(ConstantsEstimate::from_parts(
        l_hat, rho_hat, g_hat, mu_pl, mu_qg, radius, notes,
    ))
}

/// Distance from `init` to the saddle, floored, as the default probe radius.
pub fn default_probe_radius(saddle: &SaddleSolution, init: &ParamPoint) -> f64 {
    dist(&saddle.point().joint(), &init.joint()).max(0.1)
}

/// Upper bound on the joint Hessian norm over the ball (tabular primal only).
///
/// Per sample, `||H|| <= 2(1+beta)^2 + beta |delta| + 4 beta^2 + beta^2 |e|` with
/// `|delta|`, `|e|` bounded on the ball through their Lipschitz constants
/// `1 + beta` and `sqrt 2`.
pub fn analytic_smoothness_bound(
    objective: &SaddleObjective,
    center: &ParamPoint,
    radius: f64,
) -> Option<f64> {
    if !objective.param().is_tabular() {
        return None;
    }
    let beta = objective.beta();
    let param = objective.param();
    let mut worst: f64 = 0.0;
    for it in objective.items() {
        let z = it.z;
        let qn: Vec<f64> = (0..param.n_actions())
            .map(|a| param.q(&center.w, z.s_next, a))
            .collect();
        let v_next = crate::numeric::logsumexp(&qn);
        let delta =
            (z.r + beta * v_next - param.q(&center.w, z.s, z.a)).abs() + (1.0 + beta) * radius;
        let e = (v_next - center.v[it.dual]).abs() + 2f64.sqrt() * radius;
        let h = 2.0 * (1.0 + beta).powi(2) + beta * delta + 4.0 * beta * beta + beta * beta * e;
        worst = worst.max(h);
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, SamplingMode, Transition};
    use crate::mdp::{Policy, TabularMdp};
    use crate::param::Parameterization;
    use crate::stability::saddle::solve_saddle;

    #[test]
    fn quadratic_case_pl_equals_qg_equals_curvature() {
        // beta = 0 with uniform counts: Phi(w) = p * ||r - w||^2, p = 1/6
        let m = TabularMdp::random(3, 2, 0.5, 2)
            .unwrap()
            .with_beta(0.0)
            .unwrap();
        let base =
            generate_dataset(&m, &Policy::uniform(3, 2), 1, SamplingMode::IidPairs, 1, 0).unwrap();
        let samples: Vec<Transition> = (0..6)
            .flat_map(|k| {
                let (s, a) = (k / 2, k % 2);
                (0..5).map(move |j| Transition {
                    s,
                    a,
                    r: 0.0,
                    s_next: (k + j) % 3,
                })
            })
            .map(|mut z| {
                z.r = m.reward(z.s, z.a);
                z
            })
            .collect();
        let d = base.with_samples(samples);
        let p = Parameterization::tabular(&d);
        let obj = SaddleObjective::from_dataset(&p, 0.0, &d).unwrap();
        let sol = solve_saddle(&obj, 1e-12).unwrap();
        let c = estimate_constants(&obj, &sol, 1.0, 100, 3).unwrap();
        let curvature = 2.0 / 6.0;
        assert!((c.mu_pl_hat - curvature).abs() < 1e-9, "{}", c.mu_pl_hat);
        assert!((c.mu_qg_hat - curvature).abs() < 1e-9, "{}", c.mu_qg_hat);
        assert_eq!(c.rho_hat, 0.0);
    }

    #[test]
    fn rho_for_uniform_counts() {
        let m = TabularMdp::random(2, 2, 0.7, 2).unwrap();
        let base =
            generate_dataset(&m, &Policy::uniform(2, 2), 1, SamplingMode::IidPairs, 1, 0).unwrap();
        let samples: Vec<Transition> = (0..4)
            .flat_map(|k| {
                let (s, a) = (k / 2, k % 2);
                let r = m.reward(s, a);
                [
                    Transition { s, a, r, s_next: 0 },
                    Transition { s, a, r, s_next: 1 },
                ]
            })
            .collect();
        let d = base.with_samples(samples);
        let p = Parameterization::tabular(&d);
        let obj = SaddleObjective::from_dataset(&p, 0.7, &d).unwrap();
        let sol = solve_saddle(&obj, 1e-10).unwrap();
        let c = estimate_constants(&obj, &sol, 0.5, 100, 1).unwrap();
        assert!((c.rho_hat - 2.0 * 0.49 * 0.25).abs() < 1e-15);
        assert!(c.all_positive());
        assert!(
            (c.alpha - 4.0 * c.l_hat * c.l_hat / (c.rho_hat * c.rho_hat)).abs() < 1e-9 * c.alpha
        );
    }

    #[test]
    fn small_budget_rejected() {
        let m = TabularMdp::random(2, 2, 0.7, 2).unwrap();
        let d =
            generate_dataset(&m, &Policy::uniform(2, 2), 40, SamplingMode::IidPairs, 1, 1).unwrap();
        let p = Parameterization::tabular(&d);
        let obj = SaddleObjective::from_dataset(&p, 0.7, &d).unwrap();
        let sol = solve_saddle(&obj, 1e-10).unwrap();
        assert!(estimate_constants(&obj, &sol, 0.5, 99, 1).is_err());
    }
}

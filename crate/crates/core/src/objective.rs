//! The per-sample saddle objective
//!
//! `f(w, v; z) = delta_w(z)^2 - beta^2 (V_w(s') - v[s, a])^2`,
//! `delta_w(z) = r + beta V_w(s') - Q_w(s, a)`, `V_w(s) = logsumexp_a Q_w(s, a)`,
//!
//! its full-batch average `F_D`, the dual maximizer, `Phi_D(w) = max_v F_D(w, v)`,
//! and exact population quantities (MSBE, MSTDE) computed from the true kernel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Transition, TransitionDataset};
use crate::error::{check_len, BrmError, Result};
use crate::mdp::{soft_bellman_apply, TabularMdp};
use crate::numeric::{logsumexp_with_softmax, CompensatedSum};
use crate::param::{ParamPoint, Parameterization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEval {
    pub value: f64,
    pub grad_w: Vec<f64>,
    pub grad_v: Vec<f64>,
}

impl ObjectiveEval {
    fn zeros(param: &Parameterization) -> Self {
        Self {
            value: 0.0,
            grad_w: vec![0.0; param.dim_primal()],
            grad_v: vec![0.0; param.dim_dual()],
        }
    }

    /// Joint gradient `[grad_w, grad_v]`.
    pub fn joint_grad(&self) -> Vec<f64> {
        let mut g = self.grad_w.clone();
        g.extend_from_slice(&self.grad_v);
        g
    }
}

fn check_sample(param: &Parameterization, z: &Transition) -> Result<()> {
    if z.s >= param.n_states() || z.s_next >= param.n_states() || z.a >= param.n_actions() {
        return Err(BrmError::precondition(format!(
            "sample ({}, {}, {}) out of range",
            z.s, z.a, z.s_next
        )));
    }
    Ok(())
}

/// `V_w(s)` with the softmax weights written into `pi`.
#[inline]
fn soft_value(
    param: &Parameterization,
    w: &[f64],
    s: usize,
    q_buf: &mut [f64],
    pi: &mut [f64],
) -> f64 {
    for (a, q) in q_buf.iter_mut().enumerate() {
        *q = param.q(w, s, a);
    }
    logsumexp_with_softmax(q_buf, Some(pi))
}

/// Scratch buffers for repeated per-sample evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    q: Vec<f64>,
    pi: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(param: &Parameterization) -> Self {
        Self {
            q: vec![0.0; param.n_actions()],
            pi: vec![0.0; param.n_actions()],
        }
    }
}

/// Adds `weight * f(w, v; z)` and its gradients into the accumulators; returns the
/// weighted value. `dual` is the dual coordinate of `(z.s, z.a)`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_sample(
    param: &Parameterization,
    beta: f64,
    w: &[f64],
    v: &[f64],
    z: &Transition,
    dual: usize,
    weight: f64,
    grad_w: &mut [f64],
    grad_v: &mut [f64],
    scratch: &mut Scratch,
) -> f64 {
    let v_next = soft_value(param, w, z.s_next, &mut scratch.q, &mut scratch.pi);
    let delta = z.r + beta * v_next - param.q(w, z.s, z.a);
    let e = v_next - v[dual];
    let b2 = beta * beta;
    let coef_v_next = weight * (2.0 * delta * beta - 2.0 * b2 * e);
    for (a, &p) in scratch.pi.iter().enumerate() {
        param.add_q_grad(z.s_next, a, coef_v_next * p, grad_w);
    }
    param.add_q_grad(z.s, z.a, -2.0 * weight * delta, grad_w);
    grad_v[dual] += weight * 2.0 * b2 * e;
    weight * (delta * delta - b2 * e * e)
}

/// TD error `delta = r + beta logsumexp_a' Q_w(s', a') - Q_w(s, a)`.
pub fn td_error(param: &Parameterization, beta: f64, w: &[f64], z: &Transition) -> Result<f64> {
    check_len("primal parameter", param.dim_primal(), w.len())?;
    check_sample(param, z)?;
    let mut scratch = Scratch::new(param);
    let v_next = soft_value(param, w, z.s_next, &mut scratch.q, &mut scratch.pi);
    Ok(z.r + beta * v_next - param.q(w, z.s, z.a))
}

/// `f(w, v; z)` with exact analytic gradients.
pub fn per_sample_objective(
    param: &Parameterization,
    beta: f64,
    p: &ParamPoint,
    z: &Transition,
) -> Result<ObjectiveEval> {
    param.check_point(p)?;
    check_sample(param, z)?;
    let dual = param
        .dual_coord(z.s, z.a)
        .ok_or(BrmError::DualCoverage { s: z.s, a: z.a })?;
    let mut out = ObjectiveEval::zeros(param);
    let mut scratch = Scratch::new(param);
    out.value = accumulate_sample(
        param,
        beta,
        &p.w,
        &p.v,
        z,
        dual,
        1.0,
        &mut out.grad_w,
        &mut out.grad_v,
        &mut scratch,
    );
    Ok(out)
}

/// A sample with its probability mass and dual coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTransition {
    pub z: Transition,
    pub weight: f64,
    pub dual: usize,
}

/// `F(w, v) = sum_j weight_j f(w, v; z_j)` over a finite weighted sample set.
///
/// Built either from a dataset (identical rows merged, weight `count / n`) or from
/// the true kernel (`weight(s, a) P(s' | s, a)`), so the empirical and population
/// objectives share every evaluation path.
#[derive(Debug, Clone)]
pub struct SaddleObjective {
    param: Parameterization,
    beta: f64,
    items: Vec<WeightedTransition>,
    dual_mass: Vec<f64>,
}

impl SaddleObjective {
    pub fn from_dataset(
        param: &Parameterization,
        beta: f64,
        data: &TransitionDataset,
    ) -> Result<Self> {
        Self::from_samples(param, beta, &data.samples)
    }

    pub fn from_samples(
        param: &Parameterization,
        beta: f64,
        samples: &[Transition],
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(BrmError::precondition("dataset is empty"));
        }
        let mut counts: BTreeMap<(usize, usize, usize, u64), usize> = BTreeMap::new();
        for z in samples {
            check_sample(param, z)?;
            *counts
                .entry((z.s, z.a, z.s_next, z.r.to_bits()))
                .or_default() += 1;
        }
        let n = samples.len() as f64;
        let weighted = counts.into_iter().map(|((s, a, s_next, r), c)| {
            (
                Transition {
                    s,
                    a,
                    r: f64::from_bits(r),
                    s_next,
                },
                c as f64 / n,
            )
        });
        Self::build(param, beta, weighted)
    }

    /// Exact population objective under `weight(s, a)` and the true kernel.
    /// The dual of `param` must cover the support of `weight`.
    pub fn population(param: &Parameterization, mdp: &TabularMdp, weight: &[f64]) -> Result<Self> {
        check_len("population weight", mdp.n_pairs(), weight.len())?;
        let total: f64 = weight.iter().sum();
        if weight.iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(BrmError::precondition(
                "weight must be a probability vector",
            ));
        }
        let mut items = Vec::new();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let wsa = weight[s * mdp.n_actions() + a];
                if wsa <= 0.0 {
                    continue;
                }
                for (s_next, &p) in mdp.next_state_dist(s, a).iter().enumerate() {
                    if p > 0.0 {
                        let z = Transition {
                            s,
                            a,
                            r: mdp.reward(s, a),
                            s_next,
                        };
                        items.push((z, wsa * p));
                    }
                }
            }
        }
        Self::build(param, mdp.beta(), items.into_iter())
    }

    fn build(
        param: &Parameterization,
        beta: f64,
        weighted: impl Iterator<Item = (Transition, f64)>,
    ) -> Result<Self> {
        let mut dual_mass = vec![0.0; param.dim_dual()];
        let mut items = Vec::new();
        for (z, weight) in weighted {
            let dual = param
                .dual_coord(z.s, z.a)
                .ok_or(BrmError::DualCoverage { s: z.s, a: z.a })?;
            dual_mass[dual] += weight;
            items.push(WeightedTransition { z, weight, dual });
        }
        Ok(Self {
            param: param.clone(),
            beta,
            items,
            dual_mass,
        })
    }

    pub fn param(&self) -> &Parameterization {
        &self.param
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn items(&self) -> &[WeightedTransition] {
        &self.items
    }

    /// Probability mass of each dual coordinate's `(s, a)`.
    pub fn dual_mass(&self) -> &[f64] {
        &self.dual_mass
    }

    /// Diagonal of the (constant) dual Hessian: `-2 beta^2 mass(s, a)`.
    pub fn dual_hessian_diag(&self) -> Vec<f64> {
        let b2 = self.beta * self.beta;
        self.dual_mass.iter().map(|m| -2.0 * b2 * m).collect()
    }

    /// Strong-concavity modulus in `v`: `2 beta^2 min mass`.
    pub fn dual_strong_concavity(&self) -> f64 {
        let b2 = self.beta * self.beta;
        2.0 * b2 * self.dual_mass.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `F(w, v)` and both gradients.
    pub fn eval(&self, p: &ParamPoint) -> ObjectiveEval {
        let mut out = ObjectiveEval::zeros(&self.param);
        let mut scratch = Scratch::new(&self.param);
        let mut value = CompensatedSum::default();
        for it in &self.items {
            value.add(accumulate_sample(
                &self.param,
                self.beta,
                &p.w,
                &p.v,
                &it.z,
                it.dual,
                it.weight,
                &mut out.grad_w,
                &mut out.grad_v,
                &mut scratch,
            ));
        }
        out.value = value.value();
        out
    }

    pub fn value(&self, p: &ParamPoint) -> f64 {
        self.eval(p).value
    }

    /// Closed-form maximizer of the concave quadratic `F(w, .)`: the mass-weighted
    /// mean of `V_w(s')` within each `(s, a)` group.
    pub fn dual_argmax(&self, w: &[f64]) -> Vec<f64> {
        let mut num = vec![CompensatedSum::default(); self.param.dim_dual()];
        let mut scratch = Scratch::new(&self.param);
        for it in &self.items {
            let v_next = soft_value(&self.param, w, it.z.s_next, &mut scratch.q, &mut scratch.pi);
            num[it.dual].add(it.weight * v_next);
        }
        num.iter()
            .zip(&self.dual_mass)
            .map(|(n, &m)| if m > 0.0 { n.value() / m } else { 0.0 })
            .collect()
    }

    /// `Phi(w) = max_v F(w, v)`.
    pub fn phi(&self, w: &[f64]) -> f64 {
        let v = self.dual_argmax(w);
        self.value(&ParamPoint::new(w.to_vec(), v))
    }

    /// `Phi(w)` and `grad Phi(w) = grad_w F(w, v*(w))`.
    pub fn phi_with_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let v = self.dual_argmax(w);
        let e = self.eval(&ParamPoint::new(w.to_vec(), v));
        (e.value, e.grad_w)
    }

    /// `Gamma(w, v) = Phi(w) - F(w, v) >= 0`.
    pub fn gamma(&self, p: &ParamPoint) -> f64 {
        self.phi(&p.w) - self.value(p)
    }
}

/// Arithmetic mean of `f` over the dataset with averaged gradients.
pub fn full_batch(
    param: &Parameterization,
    beta: f64,
    p: &ParamPoint,
    data: &TransitionDataset,
) -> Result<ObjectiveEval> {
    param.check_point(p)?;
    Ok(SaddleObjective::from_dataset(param, beta, data)?.eval(p))
}

pub fn dual_argmax(
    param: &Parameterization,
    beta: f64,
    w: &[f64],
    data: &TransitionDataset,
) -> Result<Vec<f64>> {
    check_len("primal parameter", param.dim_primal(), w.len())?;
    Ok(SaddleObjective::from_dataset(param, beta, data)?.dual_argmax(w))
}

pub fn phi_value(
    param: &Parameterization,
    beta: f64,
    w: &[f64],
    data: &TransitionDataset,
) -> Result<f64> {
    check_len("primal parameter", param.dim_primal(), w.len())?;
    Ok(SaddleObjective::from_dataset(param, beta, data)?.phi(w))
}

pub fn gamma_value(
    param: &Parameterization,
    beta: f64,
    p: &ParamPoint,
    data: &TransitionDataset,
) -> Result<f64> {
    param.check_point(p)?;
    Ok(SaddleObjective::from_dataset(param, beta, data)?.gamma(p))
}

fn check_weight(mdp: &TabularMdp, weight: &[f64]) -> Result<()> {
    check_len("weight", mdp.n_pairs(), weight.len())?;
    let total: f64 = weight.iter().sum();
    if weight.iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(BrmError::precondition(
            "weight must sum to 1 with nonnegative entries",
        ));
    }
    Ok(())
}

/// Exact MSBE `sum_{s,a} weight (T Q_w - Q_w)^2` using the true kernel.
pub fn msbe_exact(
    mdp: &TabularMdp,
    param: &Parameterization,
    w: &[f64],
    weight: &[f64],
) -> Result<f64> {
    check_weight(mdp, weight)?;
    let q = param.q_table(w);
    let tq = soft_bellman_apply(mdp, &q)?;
    Ok(weight
        .iter()
        .zip(tq.iter().zip(&q))
        .map(|(wt, (t, q))| wt * (t - q) * (t - q))
        .sum())
}

/// `E_{s'~P(s, a)}[delta_w(s, a, s')]` for every `(s, a)`, row-major.
pub fn expected_td_error(
    mdp: &TabularMdp,
    param: &Parameterization,
    w: &[f64],
) -> Result<Vec<f64>> {
    check_len("primal parameter", param.dim_primal(), w.len())?;
    let q = param.q_table(w);
    mdp.check_q(&q)?;
    let v = mdp.soft_values(&q);
    let beta = mdp.beta();
    let mut out = Vec::with_capacity(mdp.n_pairs());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let mut acc = CompensatedSum::default();
            for (p, vn) in mdp.next_state_dist(s, a).iter().zip(&v) {
                acc.add(p * (mdp.reward(s, a) + beta * vn - q[s * mdp.n_actions() + a]));
            }
            out.push(acc.value());
        }
    }
    Ok(out)
}

/// Bellman error `(T Q_w)(s, a) - Q_w(s, a)`, row-major.
pub fn bellman_error(mdp: &TabularMdp, param: &Parameterization, w: &[f64]) -> Result<Vec<f64>> {
    check_len("primal parameter", param.dim_primal(), w.len())?;
    let q = param.q_table(w);
    let tq = soft_bellman_apply(mdp, &q)?;
    Ok(tq.iter().zip(&q).map(|(t, q)| t - q).collect())
}

/// Exact MSTDE `sum_{s,a} weight E_{s'~P}[delta^2]`.
pub fn mstde_exact(
    mdp: &TabularMdp,
    param: &Parameterization,
    w: &[f64],
    weight: &[f64],
) -> Result<f64> {
    check_weight(mdp, weight)?;
    let q = param.q_table(w);
    mdp.check_q(&q)?;
    let v = mdp.soft_values(&q);
    let beta = mdp.beta();
    let mut total = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let k = s * mdp.n_actions() + a;
            let e: f64 = mdp
                .next_state_dist(s, a)
                .iter()
                .zip(&v)
                .map(|(p, vn)| {
                    let d = mdp.reward(s, a) + beta * vn - q[k];
                    p * d * d
                })
                .sum();
            total += weight[k] * e;
        }
    }
    Ok(total)
}

/// Double-sampling bias `beta^2 sum_{s,a} weight Var_{s'~P(s,a)}[V_w(s')]`.
pub fn double_sampling_bias(
    mdp: &TabularMdp,
    param: &Parameterization,
    w: &[f64],
    weight: &[f64],
) -> Result<f64> {
    check_weight(mdp, weight)?;
    let v = mdp.soft_values(&param.q_table(w));
    let mut total = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let p = mdp.next_state_dist(s, a);
            let mean: f64 = p.iter().zip(&v).map(|(p, x)| p * x).sum();
            let var: f64 = p
                .iter()
                .zip(&v)
                .map(|(p, x)| p * (x - mean) * (x - mean))
                .sum();
            total += weight[s * mdp.n_actions() + a] * var;
        }
    }
    Ok(mdp.beta() * mdp.beta() * total)
}

/// `max_h 2 b h - h^2`, attained at `h = b`.
pub fn biconjugate_check(b: f64) -> f64 {
    let h = b;
    2.0 * b * h - h * h
}

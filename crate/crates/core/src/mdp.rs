//! Finite MDPs with entropy-regularized (log-sum-exp) optimality equations.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, BrmError, Result};
use crate::numeric::{logsumexp, softmax, sup_dist};
use crate::rng::{streams, StreamRng};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite MDP `(S, A, P, r, beta, nu0)` with flat row-major storage.
///
/// `transition[(s * n_actions + a) * n_states + s']` and `reward[s * n_actions + a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    beta: f64,
    reward: Vec<f64>,
    transition: Vec<f64>,
    init_dist: Vec<f64>,
}

/// On-disk JSON layout with nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub beta: f64,
    pub reward: Vec<Vec<f64>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub init_dist: Vec<f64>,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = BrmError;

    fn try_from(f: MdpFile) -> Result<Self> {
        check_len("reward rows", f.n_states, f.reward.len())?;
        check_len("transition rows", f.n_states, f.transition.len())?;
        let mut reward = Vec::with_capacity(f.n_states * f.n_actions);
        for row in &f.reward {
            check_len("reward columns", f.n_actions, row.len())?;
            reward.extend_from_slice(row);
        }
        let mut transition = Vec::with_capacity(f.n_states * f.n_actions * f.n_states);
        for per_state in &f.transition {
            check_len("transition actions", f.n_actions, per_state.len())?;
            for row in per_state {
                check_len("transition next states", f.n_states, row.len())?;
                transition.extend_from_slice(row);
            }
        }
        TabularMdp::new(
            f.n_states,
            f.n_actions,
            f.beta,
            reward,
            transition,
            f.init_dist,
        )
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        let (s_n, a_n) = (m.n_states, m.n_actions);
        MdpFile {
            n_states: s_n,
            n_actions: a_n,
            beta: m.beta,
            reward: m.reward.chunks(a_n).map(<[f64]>::to_vec).collect(),
            transition: (0..s_n)
                .map(|s| (0..a_n).map(|a| m.next_state_dist(s, a).to_vec()).collect())
                .collect(),
            init_dist: m.init_dist,
        }
    }
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(BrmError::InvalidModel(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(BrmError::InvalidModel(format!(
            "{what} sums to {total}, not 1"
        )));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        beta: f64,
        reward: Vec<f64>,
        transition: Vec<f64>,
        init_dist: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(BrmError::InvalidModel(
                "state and action counts must be positive".into(),
            ));
        }
        if !(beta > 0.0 && beta < 1.0) && beta != 0.0 {
            return Err(BrmError::InvalidModel(format!(
                "discount {beta} must lie in (0, 1)"
            )));
        }
        check_len("reward", n_states * n_actions, reward.len())?;
        check_len(
            "transition",
            n_states * n_actions * n_states,
            transition.len(),
        )?;
        check_len("init_dist", n_states, init_dist.len())?;
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(BrmError::InvalidModel(
                "reward has a non-finite entry".into(),
            ));
        }
        for (k, row) in transition.chunks(n_states).enumerate() {
            check_distribution(&format!("P[{}][{}]", k / n_actions, k % n_actions), row)?;
        }
        check_distribution("init_dist", &init_dist)?;
        Ok(Self {
            n_states,
            n_actions,
            beta,
            reward,
            transition,
            init_dist,
        })
    }

    /// Dirichlet(1) transition rows, rewards uniform in [0, 1), uniform initial law.
    pub fn random(n_states: usize, n_actions: usize, beta: f64, seed: u64) -> Result<Self> {
        let mut rng = StreamRng::new(seed, streams::MDP);
        let reward = (0..n_states * n_actions).map(|_| rng.uniform()).collect();
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let row: Vec<f64> = (0..n_states).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = row.iter().sum();
            transition.extend(row.into_iter().map(|x: f64| x / total));
        }
        let init = vec![1.0 / n_states as f64; n_states];
        Self::new(n_states, n_actions, beta, reward, transition, init)
    }

    /// Random deterministic transitions (each `(s, a)` moves to one successor).
    pub fn random_deterministic(
        n_states: usize,
        n_actions: usize,
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = StreamRng::new(seed, streams::MDP);
        let reward = (0..n_states * n_actions).map(|_| rng.uniform()).collect();
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        for k in 0..n_states * n_actions {
            let next = rng.below(n_states);
            transition[k * n_states + next] = 1.0;
        }
        let init = vec![1.0 / n_states as f64; n_states];
        Self::new(n_states, n_actions, beta, reward, transition, init)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn init_dist(&self) -> &[f64] {
        &self.init_dist
    }

    pub fn next_state_dist(&self, s: usize, a: usize) -> &[f64] {
        let k = (s * self.n_actions + a) * self.n_states;
        &self.transition[k..k + self.n_states]
    }

    pub fn is_deterministic(&self) -> bool {
        self.transition.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Same model with a different discount.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            beta,
            self.reward.clone(),
            self.transition.clone(),
            self.init_dist.clone(),
        )
    }

    pub(crate) fn check_q(&self, q: &[f64]) -> Result<()> {
        check_len("Q table", self.n_pairs(), q.len())?;
        if q.iter().any(|x| !x.is_finite()) {
            return Err(BrmError::domain("Q table has a non-finite entry"));
        }
        Ok(())
    }

    /// `V_Q(s) = logsumexp_a Q(s, a)` for every state.
    pub fn soft_values(&self, q: &[f64]) -> Vec<f64> {
        q.chunks(self.n_actions).map(logsumexp).collect()
    }
}

/// Soft Bellman optimality operator
/// `(T Q)(s, a) = r(s, a) + beta * sum_s' P(s' | s, a) logsumexp_a' Q(s', a')`.
pub fn soft_bellman_apply(mdp: &TabularMdp, q: &[f64]) -> Result<Vec<f64>> {
    mdp.check_q(q)?;
    Ok(bellman_unchecked(mdp, q))
}

fn bellman_unchecked(mdp: &TabularMdp, q: &[f64]) -> Vec<f64> {
    let v = mdp.soft_values(q);
    (0..mdp.n_pairs())
        .map(|k| {
            let (s, a) = (k / mdp.n_actions, k % mdp.n_actions);
            let cont: f64 = mdp
                .next_state_dist(s, a)
                .iter()
                .zip(&v)
                .map(|(p, vs)| p * vs)
                .sum();
            mdp.reward[k] + mdp.beta * cont
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftSolution {
    pub q_star: Vec<f64>,
    pub v_star: Vec<f64>,
    pub pi_star: Vec<f64>,
    /// Sup-norm of `T Q* - Q*` at the returned table.
    pub residual: f64,
    pub iterations: usize,
}

/// Fixed-point iteration `Q <- T Q` from zero. Stops once successive iterates are
/// within `tol * (1 - beta) / beta`, which bounds the distance to `Q*` by `tol`.
pub fn solve_soft_optimal(mdp: &TabularMdp, tol: f64, max_iter: usize) -> Result<SoftSolution> {
    if !(tol > 0.0) {
        return Err(BrmError::precondition("tolerance must be positive"));
    }
    let beta = mdp.beta;
    let threshold = if beta > 0.0 {
        tol * (1.0 - beta) / beta
    } else {
        f64::INFINITY
    };
    let mut q = vec![0.0; mdp.n_pairs()];
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        let next = bellman_unchecked(mdp, &q);
        change = sup_dist(&next, &q);
        q = next;
        if change <= threshold || change == 0.0 {
            return Ok(finish_solution(mdp, q, it));
        }
    }
    Err(BrmError::Convergence {
        iterations: max_iter,
        residual: change,
    })
}

fn finish_solution(mdp: &TabularMdp, q: Vec<f64>, iterations: usize) -> SoftSolution {
    let residual = sup_dist(&bellman_unchecked(mdp, &q), &q);
    let v_star = mdp.soft_values(&q);
    let pi_star = q.chunks(mdp.n_actions).flat_map(softmax).collect();
    SoftSolution {
        q_star: q,
        v_star,
        pi_star,
        residual,
        iterations,
    }
}

/// Row-stochastic behavior policy `pi(a | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(BrmError::precondition(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let probs: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_flat(n_states, n_actions, probs)
    }

    pub fn from_flat(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(BrmError::precondition("empty policy"));
        }
        check_len("policy", n_states * n_actions, probs.len())?;
        for (s, row) in probs.chunks(n_actions).enumerate() {
            check_distribution(&format!("policy row {s}"), row)
                .map_err(|e| BrmError::Precondition(e.to_string()))?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.probs
            .chunks(self.n_actions)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub(crate) fn check_for(&self, mdp: &TabularMdp) -> Result<()> {
        check_len("policy states", mdp.n_states, self.n_states)?;
        check_len("policy actions", mdp.n_actions, self.n_actions)
    }

    /// State-to-state kernel `M[s][s'] = sum_a pi(a|s) P(s'|s,a)`.
    fn state_kernel(&self, mdp: &TabularMdp) -> DMatrix<f64> {
        let n = mdp.n_states;
        DMatrix::from_fn(n, n, |s, s2| {
            (0..mdp.n_actions)
                .map(|a| self.prob(s, a) * mdp.next_state_dist(s, a)[s2])
                .sum()
        })
    }

    /// Normalized discounted occupancy over `(s, a)`:
    /// `(1 - beta) sum_h beta^h Pr(s_h = s) pi(a|s)` with `s_0 ~ nu0`.
    pub fn discounted_occupancy(&self, mdp: &TabularMdp) -> Result<Vec<f64>> {
        self.check_for(mdp)?;
        let n = mdp.n_states;
        let m = self.state_kernel(mdp);
        let lhs = DMatrix::identity(n, n) - m.transpose() * mdp.beta;
        let rhs = DVector::from_iterator(n, mdp.init_dist.iter().map(|p| (1.0 - mdp.beta) * p));
        let d = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| BrmError::domain("singular occupancy system"))?;
        Ok(self.pair_weights(d.iter().map(|x| x.max(0.0))))
    }

    /// Time-averaged `(s, a)` marginal of a length-`n` trajectory from `nu0`.
    pub fn trajectory_visitation(&self, mdp: &TabularMdp, n: usize) -> Result<Vec<f64>> {
        self.check_for(mdp)?;
        if n == 0 {
            return Err(BrmError::precondition("trajectory length must be positive"));
        }
        let m = self.state_kernel(mdp);
        let mut mu = DVector::from_column_slice(&mdp.init_dist);
        let mut acc = DVector::zeros(mdp.n_states);
        for _ in 0..n {
            acc += &mu;
            mu = m.transpose() * mu;
        }
        Ok(self.pair_weights(acc.iter().map(|x| x / n as f64)))
    }

    fn pair_weights(&self, state_marginal: impl Iterator<Item = f64>) -> Vec<f64> {
        let d: Vec<f64> = state_marginal.collect();
        let total: f64 = d.iter().sum();
        let mut out = Vec::with_capacity(self.probs.len());
        for (s, ds) in d.iter().enumerate() {
            for a in 0..self.n_actions {
                out.push(ds / total * self.prob(s, a));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(r: f64, beta: f64) -> TabularMdp {
        TabularMdp::new(1, 1, beta, vec![r], vec![1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn zero_discount_returns_reward() {
        let m = TabularMdp::random(3, 2, 0.5, 1)
            .unwrap()
            .with_beta(0.0)
            .unwrap();
        let q = vec![0.7, -3.0, 2.0, 1.0, 5.0, 0.1];
        assert_eq!(soft_bellman_apply(&m, &q).unwrap(), m.rewards());
    }

    #[test]
    fn singleton_bellman_and_fixed_point() {
        let m = one_state(1.0, 0.5);
        assert_eq!(soft_bellman_apply(&m, &[2.0]).unwrap(), vec![2.0]);
        let sol = solve_soft_optimal(&m, 1e-12, 10_000).unwrap();
        assert!((sol.q_star[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_q_gives_reward_plus_beta_ln2() {
        let m = TabularMdp::random(2, 2, 0.7, 3).unwrap();
        let tq = soft_bellman_apply(&m, &[0.0; 4]).unwrap();
        for k in 0..4 {
            assert!((tq[k] - (m.rewards()[k] + 0.7 * std::f64::consts::LN_2)).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_and_domain_errors() {
        let m = TabularMdp::random(2, 2, 0.7, 3).unwrap();
        assert!(matches!(
            soft_bellman_apply(&m, &[0.0; 3]),
            Err(BrmError::Dimension { .. })
        ));
        assert!(matches!(
            soft_bellman_apply(&m, &[0.0, f64::NAN, 0.0, 0.0]),
            Err(BrmError::Domain(_))
        ));
    }

    #[test]
    fn huge_q_stays_finite() {
        let m = TabularMdp::random(3, 3, 0.9, 4).unwrap();
        let q: Vec<f64> = (0..9)
            .map(|k| if k % 2 == 0 { 1e6 } else { -1e6 })
            .collect();
        assert!(soft_bellman_apply(&m, &q)
            .unwrap()
            .iter()
            .all(|x| x.is_finite()));
    }

    #[test]
    fn max_iter_exhaustion_reports_residual() {
        let m = TabularMdp::random(3, 2, 0.99, 4).unwrap();
        match solve_soft_optimal(&m, 1e-12, 5) {
            Err(BrmError::Convergence {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 5);
                assert!(residual > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(TabularMdp::new(1, 1, 1.0, vec![0.0], vec![1.0], vec![1.0]).is_err());
        assert!(TabularMdp::new(1, 1, 0.5, vec![0.0], vec![0.9], vec![1.0]).is_err());
        assert!(TabularMdp::new(
            2,
            1,
            0.5,
            vec![0.0; 2],
            vec![1.0, 0.0, -0.1, 1.1],
            vec![0.5, 0.5]
        )
        .is_err());
        assert!(TabularMdp::new(1, 1, 0.5, vec![0.0], vec![1.0], vec![0.5]).is_err());
    }

    #[test]
    fn json_roundtrip_uses_nested_arrays() {
        let m = TabularMdp::random(3, 2, 0.9, 7).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let raw: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(raw["transition"].as_array().unwrap().len(), 3);
        assert_eq!(raw["transition"][0].as_array().unwrap().len(), 2);
        assert_eq!(raw["reward"][2].as_array().unwrap().len(), 2);
        let back: TabularMdp = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn occupancy_matches_truncated_series() {
        let m = TabularMdp::random(4, 2, 0.8, 11).unwrap();
        let pi = Policy::uniform(4, 2);
        let d = pi.discounted_occupancy(&m).unwrap();
        // direct power series over states
        let mut mu = m.init_dist().to_vec();
        let mut acc = [0.0; 4];
        let mut w = 1.0 - m.beta();
        for _ in 0..400 {
            for s in 0..4 {
                acc[s] += w * mu[s];
            }
            let mut next = vec![0.0; 4];
            for s in 0..4 {
                for a in 0..2 {
                    for s2 in 0..4 {
                        next[s2] += mu[s] * pi.prob(s, a) * m.next_state_dist(s, a)[s2];
                    }
                }
            }
            mu = next;
            w *= m.beta();
        }
        for s in 0..4 {
            for a in 0..2 {
                assert!((d[s * 2 + a] - acc[s] * 0.5).abs() < 1e-12);
            }
        }
    }
}

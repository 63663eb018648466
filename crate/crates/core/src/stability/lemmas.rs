//! Executable inequality checkers for the supporting lemmas of the stability proof.

use serde::{Deserialize, Serialize};

use crate::dataset::TransitionDataset;
use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::numeric::dist;
use crate::objective::SaddleObjective;
use crate::param::{ParamPoint, Parameterization};
use crate::rng::{mix64, streams, StreamRng};
use crate::stability::bounds::{c_dist, saddle_sensitivity};
use crate::stability::constants::{ball_point, lyapunov_potential, ConstantsEstimate};
use crate::stability::neighbor::make_neighbor;
use crate::stability::saddle::{solve_saddle_from, SaddleSolution, DEFAULT_SADDLE_TOL};

const REL_SLACK: f64 = 1e-9;
const ABS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub probe: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub lemma: String,
    pub inequality: String,
    pub probes: usize,
    /// Largest `lhs / rhs` seen (0 when every rhs is 0 and lhs is 0).
    pub worst_ratio: f64,
    pub violations: Vec<Violation>,
}

impl LemmaCheck {
    fn new(lemma: &str, inequality: &str) -> Self {
        Self {
            lemma: lemma.into(),
            inequality: inequality.into(),
            probes: 0,
            worst_ratio: 0.0,
            violations: Vec::new(),
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        let probe = self.probes;
        self.probes += 1;
        if rhs > 0.0 {
            self.worst_ratio = self.worst_ratio.max(lhs / rhs);
        } else if lhs > 0.0 {
            self.worst_ratio = f64::INFINITY;
        }
        if !(lhs <= rhs * (1.0 + REL_SLACK) + ABS_SLACK) {
            self.violations.push(Violation { probe, lhs, rhs });
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub checks: Vec<LemmaCheck>,
    /// `|(1 - rho eta)^2 - (1 - 2 rho eta + rho^2 eta^2)|` worst case over probes.
    pub quadratic_equality_residual: f64,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(LemmaCheck::passed)
    }

    pub fn total_violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations.len()).sum()
    }
}

/// Runs every checker with `probe_budget` probes each, drawn in the probe ball
/// `consts.probe_radius` around `saddle`. The saddle-sensitivity check builds
/// `probe_budget` neighbors of `data`, so `data` must stay covered after one
/// replacement (two visits per pair suffices).
pub fn lemma_checkers(
    mdp: &TabularMdp,
    param: &Parameterization,
    data: &TransitionDataset,
    consts: &ConstantsEstimate,
    saddle: &SaddleSolution,
    probe_budget: usize,
    seed: u64,
) -> Result<LemmaReport> {
    let obj = SaddleObjective::from_dataset(param, mdp.beta(), data)?;
    let mut rng = StreamRng::new(seed, streams::PROBES).split(0x1e44a);
    let (l, rho) = (consts.l_hat, consts.rho_hat);
    let dp = param.dim_primal();
    let center = saddle.point().joint();
    let radius = consts.probe_radius;

    let mut gradient_error = LemmaCheck::new(
        "gradient_error",
        "||grad_w F(w,v) - grad Phi(w)|| <= L ||v - v*(w)||",
    );
    let mut dual_gap_growth =
        LemmaCheck::new("dual_gap_growth", "||v - v*(w)||^2 <= (2/rho) Gamma(w,v)");
    let mut dual_lipschitz =
        LemmaCheck::new("dual_lipschitz", "||v*(w) - v*(u)|| <= (L/rho) ||w - u||");
    let mut phi_smoothness = LemmaCheck::new(
        "phi_smoothness",
        "||grad Phi(w) - grad Phi(u)|| <= L(1 + L/rho) ||w - u||",
    );
    let mut saddle_distance = LemmaCheck::new(
        "saddle_distance",
        "||w - x*|| + ||v - v*|| <= C_dist sqrt(Psi(w,v))",
    );
    let mut saddle_shift = LemmaCheck::new(
        "saddle_shift",
        "saddle shift <= (2G/n)((1+L/rho)^2/sqrt(mu_PL mu_QG) + 1/rho)",
    );
    let mut dual_contraction = LemmaCheck::new(
        "dual_contraction",
        "theta(v+) <= (1 - 2 rho eta + rho L eta^2) theta(v)",
    );
    let mut residual: f64 = 0.0;
    let cd = c_dist(consts);

    saddle_distance.record(
        0.0,
        cd * lyapunov_potential(&obj, &saddle.point(), consts.alpha, saddle)
            .max(0.0)
            .sqrt(),
    );
    for _ in 0..probe_budget {
        let p = ParamPoint::from_joint(&ball_point(&center, radius, &mut rng), dp);
        let v_opt = obj.dual_argmax(&p.w);
        let (phi, grad_phi) = obj.phi_with_grad(&p.w);
        let e = obj.eval(&p);
        let dv = dist(&p.v, &v_opt);
        gradient_error.record(dist(&e.grad_w, &grad_phi), l * dv);
        dual_gap_growth.record(dv * dv, 2.0 / rho * (phi - e.value));

        let u = ball_point(&saddle.x_star, radius, &mut rng);
        let (_, grad_u) = obj.phi_with_grad(&u);
        let dw = dist(&p.w, &u);
        dual_lipschitz.record(dist(&v_opt, &obj.dual_argmax(&u)), l / rho * dw);
        phi_smoothness.record(dist(&grad_phi, &grad_u), l * (1.0 + l / rho) * dw);

        let lhs = dist(&p.w, &saddle.x_star) + dist(&p.v, &saddle.v_star);
        let psi = lyapunov_potential(&obj, &p, consts.alpha, saddle).max(0.0);
        saddle_distance.record(lhs, cd * psi.sqrt());

        // One dual ascent step on the separable quadratic F(w, .).
        let eta = rng.uniform().max(1e-3) / l;
        let v_plus: Vec<f64> =
            p.v.iter()
                .zip(&e.grad_v)
                .map(|(v, g)| v + eta * g)
                .collect();
        let theta = phi - e.value;
        let theta_plus = phi - obj.value(&ParamPoint::new(p.w.clone(), v_plus));
        dual_contraction.record(
            theta_plus,
            (1.0 - 2.0 * rho * eta + rho * l * eta * eta) * theta,
        );

        let eta_q = rng.uniform() / rho;
        let exact = (1.0 - rho * eta_q).powi(2);
        let expanded = 1.0 - 2.0 * rho * eta_q + rho * rho * eta_q * eta_q;
        residual = residual.max((exact - expanded).abs());
    }

    let n = data.len();
    let bound = saddle_sensitivity(consts, n);
    for k in 0..probe_budget {
        let i = rng.below(n);
        let pair = make_neighbor(mdp, data, i, mix64(seed ^ 0xb5).wrapping_add(k as u64))?;
        let nobj = SaddleObjective::from_dataset(param, mdp.beta(), &pair.neighbor)?;
        let nsol = solve_saddle_from(&nobj, DEFAULT_SADDLE_TOL, &saddle.x_star, 2_000_000)?;
        let shift = dist(&saddle.x_star, &nsol.x_star) + dist(&saddle.v_star, &nsol.v_star);
        saddle_shift.record(shift, bound);
    }

    Ok(LemmaReport {
        checks: vec![
            gradient_error,
            dual_gap_growth,
            dual_lipschitz,
            phi_smoothness,
            saddle_distance,
            saddle_shift,
            dual_contraction,
        ],
        quadratic_equality_residual: residual,
    })
}

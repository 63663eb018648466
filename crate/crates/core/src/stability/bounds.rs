//! Evaluators for the stability bound: numeric kernel sums and the closed forms
//! under harmonic step sizes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{BrmError, Result};
use crate::numeric::CompensatedSum;
use crate::objective::SaddleObjective;
use crate::param::ParamPoint;
use crate::sgda::SgdaRunConfig;
use crate::stability::constants::{lyapunov_potential, ConstantsEstimate};
use crate::stability::saddle::SaddleSolution;

/// Which expression for the hit constant to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitConstant {
    /// `2 B1 G / (2L)` with `B1 = 8`.
    #[default]
    Statement,
    /// `(2 B1 G + 2G(1 + L/rho)) / (2L)`.
    Proof,
}

/// Contraction rate of the exponential kernel, as a multiple of `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelRate {
    /// `3c/4`.
    #[default]
    ThreeQuarters,
    /// `c/2`.
    Half,
}

impl KernelRate {
    pub fn factor(self) -> f64 {
        match self {
            KernelRate::ThreeQuarters => 0.75,
            KernelRate::Half => 0.5,
        }
    }
}

impl fmt::Display for HitConstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HitConstant::Statement => "statement",
            HitConstant::Proof => "proof",
        })
    }
}

impl fmt::Display for KernelRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelRate::ThreeQuarters => "three_quarters",
            KernelRate::Half => "half",
        })
    }
}

impl std::str::FromStr for HitConstant {
    type Err = BrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "statement" => Ok(HitConstant::Statement),
            "proof" => Ok(HitConstant::Proof),
            other => Err(BrmError::precondition(format!(
                "unknown hit constant `{other}`"
            ))),
        }
    }
}

impl std::str::FromStr for KernelRate {
    type Err = BrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three_quarters" | "3/4" => Ok(KernelRate::ThreeQuarters),
            "half" | "1/2" => Ok(KernelRate::Half),
            other => Err(BrmError::precondition(format!(
                "unknown kernel rate `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub c_var: f64,
    pub hit: HitConstant,
    pub kernel: KernelRate,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            c_var: 1.0,
            hit: HitConstant::Statement,
            kernel: KernelRate::ThreeQuarters,
        }
    }
}

/// Every term of an evaluated bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub c_dist: f64,
    pub c_hit: f64,
    /// Kernel rate `a` (either `3c/4` or `c/2`).
    pub rate: f64,
    /// Decay factor multiplying `Psi0_max`.
    pub decay: f64,
    /// Step-size kernel multiplying the variance coefficient.
    pub variance_kernel: f64,
    pub optimization: f64,
    pub variance: f64,
    /// `2 C_dist sqrt(optimization + variance)`.
    pub sqrt_term: f64,
    pub saddle_term: f64,
    pub hit_term: f64,
    pub total: f64,
    pub hit_variant: HitConstant,
    pub kernel_variant: KernelRate,
}

/// `C_dist = sqrt((1 + L/rho)^2 2/mu_QG + 2/(alpha rho))`.
pub fn c_dist(k: &ConstantsEstimate) -> f64 {
    let lr = 1.0 + k.l_hat / k.rho_hat;
    (lr * lr * 2.0 / k.mu_qg_hat + 2.0 / (k.alpha * k.rho_hat)).sqrt()
}

pub fn c_hit(k: &ConstantsEstimate, variant: HitConstant) -> f64 {
    let b1 = 8.0;
    let lambda = 2.0 * k.l_hat;
    match variant {
        HitConstant::Statement => 2.0 * b1 * k.g_hat / lambda,
        HitConstant::Proof => {
            (2.0 * b1 * k.g_hat + 2.0 * k.g_hat * (1.0 + k.l_hat / k.rho_hat)) / lambda
        }
    }
}

/// `C_var (L(1 + L/rho) + alpha L^2/rho) G^2`.
pub fn variance_coefficient(k: &ConstantsEstimate, c_var: f64) -> f64 {
    let (l, r) = (k.l_hat, k.rho_hat);
    c_var * (l * (1.0 + l / r) + k.alpha * l * l / r) * k.g_hat * k.g_hat
}

/// `(2G/n)((1 + L/rho)^2 / sqrt(mu_PL mu_QG) + 1/rho)`.
pub fn saddle_sensitivity(k: &ConstantsEstimate, n: usize) -> f64 {
    let lr = 1.0 + k.l_hat / k.rho_hat;
    2.0 * k.g_hat / n as f64 * (lr * lr / (k.mu_pl_hat * k.mu_qg_hat).sqrt() + 1.0 / k.rho_hat)
}

/// Numeric kernels for `T` steps of `cfg`'s schedule at rate `a`:
/// `exp(-a sum_{s<T} eta_s)` and `sum_{t<T} eta_t^2 exp(-a sum_{s=t+1}^{T-1} eta_s)`.
pub fn kernel_sums(cfg: &SgdaRunConfig, iterations: usize, a: f64) -> (f64, f64) {
    let mut tail = CompensatedSum::default();
    let mut acc = CompensatedSum::default();
    for t in (0..iterations).rev() {
        let eta = cfg.eta(t);
        acc.add(eta * eta * (-a * tail.value()).exp());
        tail.add(eta);
    }
    ((-a * tail.value()).exp(), acc.value())
}

/// Closed forms `(c2/(c2+T))^(a c1)` and `c1^2 / ((1 - a c1)(c2 + T))`.
pub fn closed_form_kernels(c1: f64, c2: f64, iterations: usize, a: f64) -> Result<(f64, f64)> {
    let margin = 1.0 - a * c1;
    if !(margin > 0.0) {
        return Err(BrmError::ScheduleIncompatible { margin });
    }
    let t = iterations as f64;
    Ok(((c2 / (c2 + t)).powf(a * c1), c1 * c1 / (margin * (c2 + t))))
}

fn check_constants(k: &ConstantsEstimate) -> Result<()> {
    if !k.all_positive() || !(k.alpha.is_finite() && k.alpha > 0.0) {
        return Err(BrmError::precondition(
            "bound needs positive finite constants",
        ));
    }
    if k.alpha < 4.0 * k.l_hat * k.l_hat / (k.rho_hat * k.rho_hat) * (1.0 - 1e-12) {
        return Err(BrmError::precondition(
            "alpha must be at least 4 L^2 / rho^2",
        ));
    }
    Ok(())
}

fn assemble(
    k: &ConstantsEstimate,
    n: usize,
    psi0_max: f64,
    opts: &BoundOptions,
    decay: f64,
    variance_kernel: f64,
) -> Result<BoundTerms> {
    if n == 0 {
        return Err(BrmError::precondition("n must be positive"));
    }
    if !(psi0_max >= 0.0) {
        return Err(BrmError::precondition("psi0_max must be nonnegative"));
    }
    let cd = c_dist(k);
    let ch = c_hit(k, opts.hit);
    let optimization = decay * psi0_max;
    let variance = variance_coefficient(k, opts.c_var) * variance_kernel;
    let sqrt_term = 2.0 * cd * (optimization + variance).sqrt();
    let saddle_term = saddle_sensitivity(k, n);
    let hit_term = ch / n as f64;
    Ok(BoundTerms {
        c_dist: cd,
        c_hit: ch,
        rate: opts.kernel.factor() * k.c_hat,
        decay,
        variance_kernel,
        optimization,
        variance,
        sqrt_term,
        saddle_term,
        hit_term,
        total: sqrt_term + saddle_term + hit_term,
        hit_variant: opts.hit,
        kernel_variant: opts.kernel,
    })
}

/// Stability bound with kernel sums evaluated numerically over `cfg.iterations` steps.
pub fn stability_bound(
    consts: &ConstantsEstimate,
    cfg: &SgdaRunConfig,
    n: usize,
    psi0_max: f64,
    opts: &BoundOptions,
) -> Result<BoundTerms> {
    check_constants(consts)?;
    let a = opts.kernel.factor() * consts.c_hat;
    let (decay, kernel) = kernel_sums(cfg, cfg.iterations, a);
    assemble(consts, n, psi0_max, opts, decay, kernel)
}

/// Stability bound with the harmonic closed forms at horizon `iterations`.
pub fn corollary_bound(
    consts: &ConstantsEstimate,
    cfg: &SgdaRunConfig,
    n: usize,
    iterations: usize,
    psi0_max: f64,
    opts: &BoundOptions,
) -> Result<BoundTerms> {
    check_constants(consts)?;
    let a = opts.kernel.factor() * consts.c_hat;
    let (decay, kernel) = closed_form_kernels(cfg.c1, cfg.c2, iterations, a)?;
    assemble(consts, n, psi0_max, opts, decay, kernel)
}

/// `max` of the initial potential over the base objective and each neighbor objective,
/// each paired with its own saddle.
pub fn psi0_max(
    objectives: &[(&SaddleObjective, &SaddleSolution)],
    init: &ParamPoint,
    alpha: f64,
) -> f64 {
    objectives
        .iter()
        .map(|(obj, sol)| lyapunov_potential(obj, init, alpha, sol).max(0.0))
        .fold(0.0, f64::max)
}

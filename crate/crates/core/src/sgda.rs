//! Minibatch stochastic gradient descent-ascent with harmonic step sizes.

use serde::{Deserialize, Serialize};

use crate::dataset::{Transition, TransitionDataset};
use crate::error::{BrmError, Result};
use crate::objective::{accumulate_sample, SaddleObjective, Scratch};
use crate::param::{ParamPoint, Parameterization};
use crate::rng::{streams, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSampling {
    WithReplacement,
    WithoutReplacement,
}

impl std::str::FromStr for IndexSampling {
    type Err = BrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_replacement" => Ok(IndexSampling::WithReplacement),
            "without_replacement" => Ok(IndexSampling::WithoutReplacement),
            other => Err(BrmError::precondition(format!(
                "unknown index sampling {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdaRunConfig {
    pub batch_size: usize,
    pub c1: f64,
    pub c2: f64,
    pub iterations: usize,
    pub sampling: IndexSampling,
    pub seed: u64,
    pub index_stream: u64,
    /// Iterate/objective recording cadence; 0 records only the endpoints.
    pub record_every: usize,
    /// Upper bound `min{1/(4L), 1/rho}` on every step size, when known.
    pub stepsize_cap: Option<f64>,
    /// Evaluate `F_D` and `Phi_D` at each recorded step.
    pub log_objective: bool,
}

impl Default for SgdaRunConfig {
    fn default() -> Self {
        Self {
            batch_size: 1,
            c1: 1.0,
            c2: 10.0,
            iterations: 1000,
            sampling: IndexSampling::WithReplacement,
            seed: 0,
            index_stream: 0,
            record_every: 10,
            stepsize_cap: None,
            log_objective: true,
        }
    }
}

impl SgdaRunConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n {
            return Err(BrmError::precondition(format!(
                "batch size {} must lie in [1, {n}]",
                self.batch_size
            )));
        }
        if !(self.c1 > 0.0) || !(self.c2 >= 1.0) {
            return Err(BrmError::precondition(
                "harmonic schedule needs c1 > 0 and c2 >= 1",
            ));
        }
        if let Some(cap) = self.stepsize_cap {
            let eta0 = harmonic_stepsize(self.c1, self.c2, 0);
            if eta0 > cap * (1.0 + 1e-12) {
                return Err(BrmError::precondition(format!(
                    "initial step {eta0:e} exceeds the admissible cap {cap:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn eta(&self, t: usize) -> f64 {
        harmonic_stepsize(self.c1, self.c2, t)
    }
}

/// `eta_t = c1 / (c2 + t)`.
pub fn harmonic_stepsize(c1: f64, c2: f64, t: usize) -> f64 {
    c1 / (c2 + t as f64)
}

/// Minibatch index sets `I_0, ..., I_{T-1}`, stored flat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexLog {
    batch_size: usize,
    flat: Vec<usize>,
}

impl IndexLog {
    pub fn from_batches(batch_size: usize, batches: &[Vec<usize>]) -> Result<Self> {
        let mut flat = Vec::with_capacity(batch_size * batches.len());
        for b in batches {
            if b.len() != batch_size {
                return Err(BrmError::precondition("index set of the wrong size"));
            }
            flat.extend_from_slice(b);
        }
        Ok(Self { batch_size, flat })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn len(&self) -> usize {
        self.flat.len().checked_div(self.batch_size).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn batch(&self, t: usize) -> &[usize] {
        &self.flat[t * self.batch_size..(t + 1) * self.batch_size]
    }

    pub fn batches(&self) -> impl Iterator<Item = &[usize]> {
        self.flat.chunks(self.batch_size.max(1))
    }

    pub fn contains(&self, i: usize) -> bool {
        self.flat.contains(&i)
    }

    /// First step whose minibatch contains `i`.
    pub fn first_hit(&self, i: usize) -> Option<usize> {
        self.flat
            .iter()
            .position(|&j| j == i)
            .map(|k| k / self.batch_size)
    }
}

/// Deterministic index sequence for `(cfg.seed, cfg.index_stream)` over `n` samples.
pub fn draw_indices(cfg: &SgdaRunConfig, n: usize) -> Result<IndexLog> {
    cfg.validate(n)?;
    let b = cfg.batch_size;
    let mut rng = StreamRng::new(cfg.seed, streams::INDICES).split(cfg.index_stream);
    let mut flat = Vec::with_capacity(b * cfg.iterations);
    match cfg.sampling {
        IndexSampling::WithReplacement => {
            for _ in 0..b * cfg.iterations {
                flat.push(rng.below(n));
            }
        }
        IndexSampling::WithoutReplacement => {
            let mut perm: Vec<usize> = (0..n).collect();
            for _ in 0..cfg.iterations {
                for k in 0..b {
                    let j = k + rng.below(n - k);
                    perm.swap(k, j);
                }
                flat.extend_from_slice(&perm[..b]);
            }
        }
    }
    Ok(IndexLog {
        batch_size: b,
        flat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRecord {
    pub t: usize,
    pub f_value: f64,
    pub phi_value: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub iterates: Vec<(usize, ParamPoint)>,
    pub index_log: IndexLog,
    pub objective_log: Vec<ObjectiveRecord>,
    pub final_point: ParamPoint,
}

/// Inner SGDA loop shared by traced and untraced runs.
pub(crate) struct SgdaKernel<'a> {
    param: &'a Parameterization,
    beta: f64,
    samples: &'a [Transition],
    duals: Vec<usize>,
}

impl<'a> SgdaKernel<'a> {
    pub(crate) fn new(
        param: &'a Parameterization,
        beta: f64,
        samples: &'a [Transition],
    ) -> Result<Self> {
        let duals = samples
            .iter()
            .map(|z| {
                if z.s >= param.n_states()
                    || z.s_next >= param.n_states()
                    || z.a >= param.n_actions()
                {
                    return Err(BrmError::precondition("sample index out of range"));
                }
                param
                    .dual_coord(z.s, z.a)
                    .ok_or(BrmError::DualCoverage { s: z.s, a: z.a })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            param,
            beta,
            samples,
            duals,
        })
    }

    /// Runs `indices` from `init`, calling `observe(t, point)` after each step.
    pub(crate) fn run<F>(
        &self,
        cfg: &SgdaRunConfig,
        init: &ParamPoint,
        indices: &IndexLog,
        mut observe: F,
    ) -> Result<ParamPoint>
    where
        F: FnMut(usize, &ParamPoint),
    {
        let mut p = init.clone();
        let mut gw = vec![0.0; p.w.len()];
        let mut gv = vec![0.0; p.v.len()];
        let mut scratch = Scratch::new(self.param);
        let inv_b = 1.0 / indices.batch_size() as f64;
        for t in 0..indices.len() {
            gw.iter_mut().for_each(|g| *g = 0.0);
            gv.iter_mut().for_each(|g| *g = 0.0);
            for &i in indices.batch(t) {
                accumulate_sample(
                    self.param,
                    self.beta,
                    &p.w,
                    &p.v,
                    &self.samples[i],
                    self.duals[i],
                    inv_b,
                    &mut gw,
                    &mut gv,
                    &mut scratch,
                );
            }
            let eta = cfg.eta(t);
            for (x, g) in p.w.iter_mut().zip(&gw) {
                *x -= eta * g;
            }
            for (x, g) in p.v.iter_mut().zip(&gv) {
                *x += eta * g;
            }
            if !p.is_finite() {
                return Err(BrmError::Divergence { t, w: p.w, v: p.v });
            }
            observe(t + 1, &p);
        }
        Ok(p)
    }
}

fn check_override(indices: &IndexLog, cfg: &SgdaRunConfig, n: usize) -> Result<()> {
    if indices.len() != cfg.iterations || indices.batch_size() != cfg.batch_size {
        return Err(BrmError::precondition(format!(
            "index override has {} sets of size {}, expected {} of size {}",
            indices.len(),
            indices.batch_size(),
            cfg.iterations,
            cfg.batch_size
        )));
    }
    if indices.flat.iter().any(|&i| i >= n) {
        return Err(BrmError::precondition("index override entry out of range"));
    }
    Ok(())
}

/// Algorithm: draw `I_t` (or take the override), average per-sample gradients over
/// `I_t`, descend in `w`, ascend in `v`.
pub fn run_sgda(
    param: &Parameterization,
    beta: f64,
    data: &TransitionDataset,
    cfg: &SgdaRunConfig,
    init: &ParamPoint,
    index_override: Option<&IndexLog>,
) -> Result<RunTrace> {
    let n = data.len();
    cfg.validate(n)?;
    param.check_point(init)?;
    let indices = match index_override {
        Some(ix) => {
            check_override(ix, cfg, n)?;
            ix.clone()
        }
        None => draw_indices(cfg, n)?,
    };
    let kernel = SgdaKernel::new(param, beta, &data.samples)?;
    let objective = if cfg.log_objective {
        Some(SaddleObjective::from_dataset(param, beta, data)?)
    } else {
        None
    };
    let total = cfg.iterations;
    let due = |t: usize| {
        t == 0 || t == total || (cfg.record_every > 0 && t.is_multiple_of(cfg.record_every))
    };
    let mut iterates = Vec::new();
    let mut objective_log = Vec::new();
    let mut record = |t: usize, p: &ParamPoint| {
        if !due(t) {
            return;
        }
        iterates.push((t, p.clone()));
        if let Some(obj) = &objective {
            objective_log.push(ObjectiveRecord {
                t,
                f_value: obj.value(p),
                phi_value: obj.phi(&p.w),
                eta: cfg.eta(t),
            });
        }
    };
    record(0, init);
    let final_point = kernel.run(cfg, init, &indices, &mut record)?;
    Ok(RunTrace {
        iterates,
        index_log: indices,
        objective_log,
        final_point,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `w = 0`, `v = argmax_v F_D(0, v)`, so the initial dual gap is zero.
    #[default]
    DualOptimal,
    Zero,
}

pub fn initial_point(objective: &SaddleObjective, mode: InitMode) -> ParamPoint {
    let param = objective.param();
    let w = vec![0.0; param.dim_primal()];
    let v = match mode {
        InitMode::DualOptimal => objective.dual_argmax(&w),
        InitMode::Zero => vec![0.0; param.dim_dual()],
    };
    ParamPoint::new(w, v)
}

/// `(t, Phi_D(w_t) - Phi_D*)` at every recorded iterate, clamped at zero.
pub fn suboptimality_curve(
    trace: &RunTrace,
    objective: &SaddleObjective,
    phi_star: f64,
) -> Vec<(usize, f64)> {
    trace
        .iterates
        .iter()
        .map(|(t, p)| (*t, (objective.phi(&p.w) - phi_star).max(0.0)))
        .collect()
}

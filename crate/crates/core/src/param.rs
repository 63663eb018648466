//! Primal (`Q_w`) and dual (`zeta_v`) parameterizations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::TransitionDataset;
use crate::error::{check_len, BrmError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// One coordinate per `(s, a)`.
    Tabular,
    /// `Q_w(s, a) = <phi(s, a), w>`, features stored row-major `[(s * A + a) * dim + j]`.
    Linear { dim: usize, features: Vec<f64> },
}

/// Parameter layout for `Q_w` and the dual `zeta_v`.
///
/// The dual is always one coordinate per `(s, a)` in its support (the visited pairs
/// of a reference dataset, or the support of a population weight).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameterization {
    n_states: usize,
    n_actions: usize,
    features: FeatureMap,
    dual_index: Vec<Option<usize>>,
    dual_pairs: Vec<(usize, usize)>,
}

const RANK_TOL: f64 = 1e-10;

impl Parameterization {
    /// Tabular primal with the dual indexed by the pairs present in `reference`.
    pub fn tabular(reference: &TransitionDataset) -> Self {
        let pairs = visited_pairs(reference);
        Self::with_dual_pairs(
            reference.n_states(),
            reference.n_actions(),
            FeatureMap::Tabular,
            &pairs,
        )
    }

    /// Linear primal; features must have full column rank.
    pub fn linear(reference: &TransitionDataset, dim: usize, features: Vec<f64>) -> Result<Self> {
        let pairs = visited_pairs(reference);
        let fm = FeatureMap::Linear { dim, features };
        check_features(reference.n_states(), reference.n_actions(), &fm)?;
        Ok(Self::with_dual_pairs(
            reference.n_states(),
            reference.n_actions(),
            fm,
            &pairs,
        ))
    }

    /// Explicit dual support, given in any order (stored sorted).
    pub fn with_dual_pairs(
        n_states: usize,
        n_actions: usize,
        features: FeatureMap,
        pairs: &[(usize, usize)],
    ) -> Self {
        let mut pairs = pairs.to_vec();
        pairs.sort_unstable();
        pairs.dedup();
        let mut dual_index = vec![None; n_states * n_actions];
        for (k, &(s, a)) in pairs.iter().enumerate() {
            dual_index[s * n_actions + a] = Some(k);
        }
        Self {
            n_states,
            n_actions,
            features,
            dual_index,
            dual_pairs: pairs,
        }
    }

    /// Same primal, dual supported on the pairs where `weight > 0`.
    pub fn with_dual_support(&self, weight: &[f64]) -> Self {
        let pairs: Vec<(usize, usize)> = weight
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(k, _)| (k / self.n_actions, k % self.n_actions))
            .collect();
        Self::with_dual_pairs(self.n_states, self.n_actions, self.features.clone(), &pairs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self.features, FeatureMap::Tabular)
    }

    pub fn dim_primal(&self) -> usize {
        match &self.features {
            FeatureMap::Tabular => self.n_states * self.n_actions,
            FeatureMap::Linear { dim, .. } => *dim,
        }
    }

    pub fn dim_dual(&self) -> usize {
        self.dual_pairs.len()
    }

    pub fn dual_pairs(&self) -> &[(usize, usize)] {
        &self.dual_pairs
    }

    pub fn dual_coord(&self, s: usize, a: usize) -> Option<usize> {
        self.dual_index
            .get(s * self.n_actions + a)
            .copied()
            .flatten()
    }

    #[inline]
    pub fn q(&self, w: &[f64], s: usize, a: usize) -> f64 {
        match &self.features {
            FeatureMap::Tabular => w[s * self.n_actions + a],
            FeatureMap::Linear { dim, features } => {
                let row = &features[(s * self.n_actions + a) * dim..][..*dim];
                row.iter().zip(w).map(|(f, x)| f * x).sum()
            }
        }
    }

    /// `grad += coef * dQ_w(s, a) / dw`.
    #[inline]
    pub fn add_q_grad(&self, s: usize, a: usize, coef: f64, grad: &mut [f64]) {
        match &self.features {
            FeatureMap::Tabular => grad[s * self.n_actions + a] += coef,
            FeatureMap::Linear { dim, features } => {
                let row = &features[(s * self.n_actions + a) * dim..][..*dim];
                for (g, f) in grad.iter_mut().zip(row) {
                    *g += coef * f;
                }
            }
        }
    }

    /// Full table `Q_w(s, a)`, flat `s * n_actions + a`.
    pub fn q_table(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n_states * self.n_actions)
            .map(|k| self.q(w, k / self.n_actions, k % self.n_actions))
            .collect()
    }

    /// Primal vector representing a given Q table (exact for tabular,
    /// least squares for linear features).
    pub fn primal_from_q(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len("Q table", self.n_states * self.n_actions, q.len())?;
        match &self.features {
            FeatureMap::Tabular => Ok(q.to_vec()),
            FeatureMap::Linear { dim, features } => {
                let m = DMatrix::from_row_slice(q.len(), *dim, features);
                let svd = m.svd(true, true);
                let x = svd
                    .solve(&nalgebra::DVector::from_column_slice(q), RANK_TOL)
                    .map_err(|e| BrmError::domain(e.to_string()))?;
                Ok(x.iter().copied().collect())
            }
        }
    }

    pub fn check_point(&self, p: &ParamPoint) -> Result<()> {
        check_len("primal parameter", self.dim_primal(), p.w.len())?;
        check_len("dual parameter", self.dim_dual(), p.v.len())?;
        if p.w.iter().chain(&p.v).any(|x| !x.is_finite()) {
            return Err(BrmError::domain("parameter has a non-finite entry"));
        }
        Ok(())
    }

    /// Re-expresses a dual vector of `other` on this parameterization's support.
    /// Every pair in this support must exist in `other`.
    pub fn map_dual_from(&self, other: &Parameterization, v: &[f64]) -> Result<Vec<f64>> {
        self.dual_pairs
            .iter()
            .map(|&(s, a)| {
                other
                    .dual_coord(s, a)
                    .map(|k| v[k])
                    .ok_or(BrmError::DualCoverage { s, a })
            })
            .collect()
    }
}

fn visited_pairs(data: &TransitionDataset) -> Vec<(usize, usize)> {
    let a_n = data.n_actions();
    data.pair_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, _)| (k / a_n, k % a_n))
        .collect()
}

fn check_features(n_states: usize, n_actions: usize, fm: &FeatureMap) -> Result<()> {
    if let FeatureMap::Linear { dim, features } = fm {
        let rows = n_states * n_actions;
        check_len("feature matrix", rows * dim, features.len())?;
        if *dim == 0 || *dim > rows {
            return Err(BrmError::precondition(
                "feature dimension must be in 1..=|S||A|",
            ));
        }
        let m = DMatrix::from_row_slice(rows, *dim, features);
        let sv = m.singular_values();
        let top = sv.max();
        if sv.iter().any(|&x| x <= RANK_TOL * top.max(1.0)) {
            return Err(BrmError::precondition(
                "features are not of full column rank",
            ));
        }
    }
    Ok(())
}

/// Joint primal/dual point `(w, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl ParamPoint {
    pub fn new(w: Vec<f64>, v: Vec<f64>) -> Self {
        Self { w, v }
    }

    pub fn zeros(param: &Parameterization) -> Self {
        Self {
            w: vec![0.0; param.dim_primal()],
            v: vec![0.0; param.dim_dual()],
        }
    }

    /// Concatenation `[w, v]`.
    pub fn joint(&self) -> Vec<f64> {
        let mut out = self.w.clone();
        out.extend_from_slice(&self.v);
        out
    }

    pub fn from_joint(x: &[f64], dim_primal: usize) -> Self {
        Self {
            w: x[..dim_primal].to_vec(),
            v: x[dim_primal..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

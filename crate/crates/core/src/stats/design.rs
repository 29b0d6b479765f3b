use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::StatsError;

/// Dense integer codes for arbitrary keys, in first-appearance order.
pub fn encode_keys<K: Hash + Eq + Clone>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut map: HashMap<K, usize> = HashMap::new();
    let ids = keys
        .iter()
        .map(|k| {
            let next = map.len();
            *map.entry(k.clone()).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

/// A categorical variable absorbed as fixed effects.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub name: String,
    pub ids: Vec<usize>,
    pub levels: usize,
}

impl Factor {
    pub fn from_keys<K: Hash + Eq + Clone>(name: impl Into<String>, keys: &[K]) -> Self {
        let (ids, levels) = encode_keys(keys);
        Self { name: name.into(), ids, levels }
    }
}

/// Regression inputs: outcome, named regressors, weights, clusters and absorbed factors.
#[derive(Debug, Clone, Default)]
pub struct Design {
    pub y: Vec<f64>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub clusters: Option<Vec<usize>>,
    pub factors: Vec<Factor>,
    /// Adds a constant when no factor is absorbed; ignored otherwise.
    pub intercept: bool,
}

impl Design {
    pub fn new(y: Vec<f64>) -> Self {
        Self { y, intercept: true, ..Default::default() }
    }

    pub fn column(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.names.push(name.into());
        self.columns.push(values);
        self
    }

    /// Indicator columns `prefix=level` for every level but the smallest, which is the reference.
    pub fn dummies<K: Ord + Clone + std::fmt::Display>(mut self, prefix: &str, keys: &[K]) -> Self {
        let levels: std::collections::BTreeSet<K> = keys.iter().cloned().collect();
        for level in levels.iter().skip(1) {
            let col = keys.iter().map(|k| f64::from(u8::from(k == level))).collect();
            self = self.column(format!("{prefix}={level}"), col);
        }
        self
    }

    pub fn weights(mut self, w: Vec<f64>) -> Self {
        self.weights = Some(w);
        self
    }

    pub fn clusters<K: Hash + Eq + Clone>(mut self, keys: &[K]) -> Self {
        self.clusters = Some(encode_keys(keys).0);
        self
    }

    pub fn factor(mut self, f: Factor) -> Self {
        self.factors.push(f);
        self
    }

    pub fn no_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn has_intercept_column(&self) -> bool {
        self.intercept && self.factors.is_empty()
    }

    /// Regressor names as estimated, including the constant if one is added.
    pub fn coef_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.has_intercept_column() {
            names.push("(intercept)".to_string());
        }
        names.extend(self.names.iter().cloned());
        names
    }

    /// Dense regressor matrix (with the constant first when present).
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let offset = usize::from(self.has_intercept_column());
        let k = self.columns.len() + offset;
        DMatrix::from_fn(n, k, |i, j| if j < offset { 1.0 } else { self.columns[j - offset][i] })
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let n = self.n();
        if n == 0 {
            return Err(StatsError::Empty);
        }
        if self.names.len() != self.columns.len() {
            return Err(StatsError::Dimension("column names and columns differ in count".into()));
        }
        for (name, c) in self.names.iter().zip(&self.columns) {
            if c.len() != n {
                return Err(StatsError::Dimension(format!("column {name} has {} rows, outcome has {n}", c.len())));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::InvalidInput(format!("column {name} contains non-finite values")));
            }
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::InvalidInput("outcome contains non-finite values".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(StatsError::Dimension("weights length differs from outcome".into()));
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(StatsError::InvalidInput("weights must be positive and finite".into()));
            }
        }
        if let Some(c) = &self.clusters {
            if c.len() != n {
                return Err(StatsError::Dimension("cluster ids length differs from outcome".into()));
            }
        }
        for f in &self.factors {
            if f.ids.len() != n {
                return Err(StatsError::Dimension(format!("factor {} length differs from outcome", f.name)));
            }
        }
        Ok(())
    }

    /// Weights rescaled to mean one. Estimates and sandwich covariances do not
    /// depend on the weight scale; model-based variances then treat them as
    /// frequency weights summing to `n`.
    pub(crate) fn normalized_weights(&self) -> Vec<f64> {
        match &self.weights {
            None => vec![1.0; self.n()],
            Some(w) => {
                let mean = w.iter().sum::<f64>() / w.len() as f64;
                w.iter().map(|x| x / mean).collect()
            }
        }
    }

    /// Keeps only the rows where `keep` is true.
    pub fn subset(&self, keep: &[bool]) -> Design {
        let pick = |v: &Vec<f64>| v.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect::<Vec<_>>();
        let pick_u = |v: &Vec<usize>| v.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect::<Vec<_>>();
        Design {
            y: pick(&self.y),
            names: self.names.clone(),
            columns: self.columns.iter().map(pick).collect(),
            weights: self.weights.as_ref().map(pick),
            clusters: self.clusters.as_ref().map(|c| encode_keys(&pick_u(c)).0),
            factors: self
                .factors
                .iter()
                .map(|f| {
                    let (ids, levels) = encode_keys(&pick_u(&f.ids));
                    Factor { name: f.name.clone(), ids, levels }
                })
                .collect(),
            intercept: self.intercept,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CovType {
    /// Homoskedastic model-based covariance.
    Classical,
    /// Heteroskedasticity-robust with the `n / (n - K)` correction.
    Hc1,
    /// Cluster-robust on `Design::clusters`, CR1 small-sample factor.
    Cluster,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub cov: CovType,
    /// Convergence threshold on the largest mean removed in a demeaning sweep,
    /// relative to the column scale.
    pub fe_tolerance: f64,
    pub fe_max_sweeps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { cov: CovType::Classical, fe_tolerance: 1e-8, fe_max_sweeps: 10_000 }
    }
}

impl FitOptions {
    pub fn cluster() -> Self {
        Self { cov: CovType::Cluster, ..Self::default() }
    }

    pub fn hc1() -> Self {
        Self { cov: CovType::Hc1, ..Self::default() }
    }
}

/// Coefficients, covariance and fit diagnostics shared by every estimator.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub se: Vec<f64>,
    /// t statistics for linear models, z statistics for GLMs.
    pub stat: Vec<f64>,
    pub p: Vec<f64>,
    pub n: usize,
    /// Degrees of freedom used for t-based inference.
    pub df_resid: f64,
    pub cov_type: CovType,
    pub n_clusters: Option<usize>,
    pub r2: Option<f64>,
    pub within_r2: Option<f64>,
    pub absorbed_df: usize,
    /// Demeaning sweeps, IRLS iterations or smoothing steps.
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: Option<f64>,
    /// Objective value at the solution, when the estimator minimises one.
    pub objective: Option<f64>,
    pub residuals: Vec<f64>,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coef[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.se[i])
    }

    pub fn p_of(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.p[i])
    }

    pub fn coef_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coef)
    }
}

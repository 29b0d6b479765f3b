//! K-fold cross-validation of the relative weight on latent exposure.
//!
//! In each fold a logit of adoption on `e1`, `e2e3` and controls is fitted on
//! the estimation folds. The ratio `w2 = b2 / b1` is the weight that makes the
//! linear index `e1 + w2 * e2e3` proportional to the fitted exposure part of
//! the linear predictor. Held-out folds score both that index and the
//! canonical `e1 + 0.5 * e2e3`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::auc::{auc, auc_compare_paired};
use super::design::{CovType, Design};
use super::glm::{glm_binary, GlmOptions};
use super::StatsError;

pub const CANONICAL_OMEGA: f64 = 0.5;

/// Worker-level inputs for the adoption model.
#[derive(Debug, Clone, Default)]
pub struct AdoptionData {
    pub e1: Vec<f64>,
    pub e2e3: Vec<f64>,
    pub ai_use: Vec<bool>,
    pub controls: Vec<(String, Vec<f64>)>,
    pub weights: Option<Vec<f64>>,
    pub clusters: Option<Vec<usize>>,
}

impl AdoptionData {
    pub fn len(&self) -> usize {
        self.e1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e1.is_empty()
    }

    fn design(&self, rows: &[usize]) -> Design {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let y = rows.iter().map(|&i| f64::from(u8::from(self.ai_use[i]))).collect();
        let mut d = Design::new(y).column("e1", pick(&self.e1)).column("e2e3", pick(&self.e2e3));
        for (name, col) in &self.controls {
            d = d.column(name.clone(), pick(col));
        }
        if let Some(w) = &self.weights {
            d = d.weights(pick(w));
        }
        if let Some(c) = &self.clusters {
            let ids: Vec<usize> = rows.iter().map(|&i| c[i]).collect();
            d = d.clusters(&ids);
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// `None` when `beta1 <= 0`, where the ratio has no index interpretation.
    pub w2: Option<f64>,
    pub w2_se: Option<f64>,
    pub auc_derived: Option<f64>,
    pub auc_canonical: f64,
    /// Paired DeLong p-value for derived against canonical on the held-out fold.
    pub auc_diff_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvOmegaResult {
    pub folds: Vec<FoldResult>,
    pub n_defined: usize,
    pub mean_w2: Option<f64>,
    pub sd_w2: Option<f64>,
    pub mean_auc_derived: Option<f64>,
    pub mean_auc_canonical: f64,
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.len() > 1).then(|| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt());
    (Some(m), sd)
}

pub fn cv_omega(data: &AdoptionData, folds: usize, seed: u64) -> Result<CvOmegaResult, StatsError> {
    let n = data.len();
    if folds < 2 {
        return Err(StatsError::InvalidInput("cross-validation needs at least two folds".into()));
    }
    if n < folds * 2 {
        return Err(StatsError::InvalidInput(format!("{n} observations are too few for {folds} folds")));
    }
    if data.e2e3.len() != n || data.ai_use.len() != n || data.controls.iter().any(|(_, c)| c.len() != n) {
        return Err(StatsError::Dimension("adoption data columns differ in length".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let cov = if data.clusters.is_some() { CovType::Cluster } else { CovType::Classical };
    let mut results = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let fit = glm_binary(&data.design(&train), &GlmOptions::logit().with_cov(cov))?;
        let (i1, i2) = (fit.fit.index_of("e1").expect("e1"), fit.fit.index_of("e2e3").expect("e2e3"));
        let (b1, b2) = (fit.fit.coef[i1], fit.fit.coef[i2]);
        let (w2, w2_se) = if b1 > 0.0 {
            let c = &fit.fit.cov;
            let var =
                c[(i2, i2)] / (b1 * b1) + b2 * b2 * c[(i1, i1)] / b1.powi(4) - 2.0 * b2 * c[(i1, i2)] / b1.powi(3);
            (Some(b2 / b1), Some(var.max(0.0).sqrt()))
        } else {
            (None, None)
        };
        let labels: Vec<bool> = test.iter().map(|&i| data.ai_use[i]).collect();
        let tw: Option<Vec<f64>> = data.weights.as_ref().map(|w| test.iter().map(|&i| w[i]).collect());
        let canonical: Vec<f64> = test.iter().map(|&i| data.e1[i] + CANONICAL_OMEGA * data.e2e3[i]).collect();
        let auc_canonical = auc(&canonical, &labels, tw.as_deref())?.auc;
        let (auc_derived, auc_diff_p) = match w2 {
            Some(w) => {
                let derived: Vec<f64> = test.iter().map(|&i| data.e1[i] + w * data.e2e3[i]).collect();
                let cmp = auc_compare_paired(&derived, &canonical, &labels, tw.as_deref())?;
                (Some(cmp.auc_a), Some(cmp.p))
            }
            None => (None, None),
        };
        results.push(FoldResult {
            fold: f,
            n_train: train.len(),
            n_test: test.len(),
            beta1: b1,
            beta2: b2,
            w2,
            w2_se,
            auc_derived,
            auc_canonical,
            auc_diff_p,
        });
    }
    let w2s: Vec<f64> = results.iter().filter_map(|r| r.w2).collect();
    let derived: Vec<f64> = results.iter().filter_map(|r| r.auc_derived).collect();
    let (mean_w2, sd_w2) = mean_sd(&w2s);
    let canon: Vec<f64> = results.iter().map(|r| r.auc_canonical).collect();
    Ok(CvOmegaResult {
        n_defined: w2s.len(),
        mean_w2,
        sd_w2,
        mean_auc_derived: mean_sd(&derived).0,
        mean_auc_canonical: mean_sd(&canon).0.expect("at least two folds"),
        folds: results,
    })
}

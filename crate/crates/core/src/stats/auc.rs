//! Weighted ROC AUC with DeLong placement-value variances.
//!
//! With weights, each positive's placement is the weighted share of negatives
//! it outscores (ties count half), and the variance sums squared normalised
//! weights times squared placement deviations with an `m / (m - 1)` correction.
//! Unit weights give the textbook DeLong estimator.

use serde::Serialize;

use super::linalg::z_pvalue;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AucResult {
    pub auc: f64,
    /// NaN when either class has a single observation.
    pub se: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AucComparison {
    pub auc_a: f64,
    pub auc_b: f64,
    pub diff: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

struct Placements {
    auc: f64,
    /// `(normalised weight, placement)` per positive and per negative.
    pos: Vec<(f64, f64)>,
    neg: Vec<(f64, f64)>,
}

/// Weighted share of `sorted` (value, cumulative weight) strictly below `s`, plus half the ties.
fn share_below(sorted: &[(f64, f64)], cum: &[f64], total: f64, s: f64) -> f64 {
    let lo = sorted.partition_point(|p| p.0 < s);
    let hi = sorted.partition_point(|p| p.0 <= s);
    let below = if lo == 0 { 0.0 } else { cum[lo - 1] };
    let upto = if hi == 0 { 0.0 } else { cum[hi - 1] };
    (below + 0.5 * (upto - below)) / total
}

fn sorted_with_cum(items: &[(f64, f64)]) -> (Vec<(f64, f64)>, Vec<f64>, f64) {
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = Vec::with_capacity(sorted.len());
    let mut acc = 0.0;
    for (_, w) in &sorted {
        acc += w;
        cum.push(acc);
    }
    (sorted, cum, acc)
}

fn placements(scores: &[f64], labels: &[bool], weights: Option<&[f64]>) -> Result<Placements, StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::Dimension("scores and labels differ in length".into()));
    }
    if let Some(w) = weights {
        if w.len() != scores.len() {
            return Err(StatsError::Dimension("weights differ in length from scores".into()));
        }
        if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(StatsError::InvalidInput("weights must be positive and finite".into()));
        }
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite score".into()));
    }
    let wt = |i: usize| weights.map_or(1.0, |w| w[i]);
    let pos: Vec<(f64, f64)> = (0..scores.len()).filter(|&i| labels[i]).map(|i| (scores[i], wt(i))).collect();
    let neg: Vec<(f64, f64)> = (0..scores.len()).filter(|&i| !labels[i]).map(|i| (scores[i], wt(i))).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(StatsError::InvalidInput("AUC needs both classes present".into()));
    }
    let (neg_sorted, neg_cum, neg_total) = sorted_with_cum(&neg);
    let (pos_sorted, pos_cum, pos_total) = sorted_with_cum(&pos);
    let pos_place: Vec<(f64, f64)> =
        pos.iter().map(|&(s, w)| (w / pos_total, share_below(&neg_sorted, &neg_cum, neg_total, s))).collect();
    // A negative's placement is the share of positives scoring above it.
    let neg_place: Vec<(f64, f64)> =
        neg.iter().map(|&(s, w)| (w / neg_total, 1.0 - share_below(&pos_sorted, &pos_cum, pos_total, s))).collect();
    let auc = pos_place.iter().map(|(w, v)| w * v).sum();
    Ok(Placements { auc, pos: pos_place, neg: neg_place })
}

fn component_cov(a: &[(f64, f64)], auc_a: f64, b: &[(f64, f64)], auc_b: f64) -> f64 {
    let m = a.len() as f64;
    if a.len() < 2 {
        return f64::NAN;
    }
    let s: f64 = a.iter().zip(b).map(|((w, va), (_, vb))| w * w * (va - auc_a) * (vb - auc_b)).sum();
    s * m / (m - 1.0)
}

fn variance(p: &Placements) -> f64 {
    component_cov(&p.pos, p.auc, &p.pos, p.auc) + component_cov(&p.neg, p.auc, &p.neg, p.auc)
}

/// Weighted probability that a random positive outscores a random negative.
pub fn auc(scores: &[f64], labels: &[bool], weights: Option<&[f64]>) -> Result<AucResult, StatsError> {
    let p = placements(scores, labels, weights)?;
    Ok(AucResult { auc: p.auc, se: variance(&p).max(0.0).sqrt(), n_pos: p.pos.len(), n_neg: p.neg.len() })
}

fn compare(auc_a: f64, auc_b: f64, var: f64) -> AucComparison {
    let diff = auc_a - auc_b;
    let se = var.max(0.0).sqrt();
    let (z, p) = if se == 0.0 {
        if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let z = diff / se;
        (z, z_pvalue(z))
    };
    AucComparison { auc_a, auc_b, diff, se, z, p }
}

/// DeLong test for two scores on the same observations.
pub fn auc_compare_paired(
    a: &[f64],
    b: &[f64],
    labels: &[bool],
    weights: Option<&[f64]>,
) -> Result<AucComparison, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Dimension("paired scores differ in length".into()));
    }
    let pa = placements(a, labels, weights)?;
    let pb = placements(b, labels, weights)?;
    let cov = component_cov(&pa.pos, pa.auc, &pb.pos, pb.auc) + component_cov(&pa.neg, pa.auc, &pb.neg, pb.auc);
    Ok(compare(pa.auc, pb.auc, variance(&pa) + variance(&pb) - 2.0 * cov))
}

/// Comparison of AUCs from independent samples.
pub fn auc_compare_unpaired(a: &AucResult, b: &AucResult) -> AucComparison {
    compare(a.auc, b.auc, a.se * a.se + b.se * b.se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fixture() {
        let r = auc(&[0.9, 0.4, 0.8, 0.3], &[true, true, false, false], None).unwrap();
        assert!((r.auc - 0.75).abs() < 1e-15);
    }

    #[test]
    fn constant_scores_half() {
        let r = auc(&[1.0; 6], &[true, false, true, false, true, false], None).unwrap();
        assert_eq!(r.auc, 0.5);
    }

    #[test]
    fn one_class_rejected() {
        assert!(auc(&[1.0, 2.0], &[true, true], None).is_err());
    }
}

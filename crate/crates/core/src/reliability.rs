//! Agreement across repeated rating runs.
//!
//! Each level gives a subjects × raters matrix: cells are subjects, runs are
//! raters. The two-way random-effects decomposition
//!
//! ```text
//! MS_R = k * sum_i (row_i - grand)^2 / (n - 1)
//! MS_C = n * sum_j (col_j - grand)^2 / (k - 1)
//! MS_E = sum_ij (x_ij - row_i - col_j + grand)^2 / ((n - 1)(k - 1))
//! ```
//!
//! feeds the McGraw and Wong absolute-agreement coefficients
//!
//! ```text
//! ICC(A,1) = (MS_R - MS_E) / (MS_R + (k - 1) MS_E + k/n (MS_C - MS_E))
//! ICC(A,k) = (MS_R - MS_E) / (MS_R + (MS_C - MS_E) / n)
//! ```
//!
//! Confidence intervals use their F approximation with Satterthwaite degrees
//! of freedom; the average-measure bounds are the single-measure bounds
//! stepped up with Spearman-Brown.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::RatingRecord;
use crate::stats::f_quantile;

/// Runs below this count are reported but flagged.
pub const MIN_RELIABLE_K: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("need at least 2 subjects and 2 raters, got {n} x {k}")]
    TooSmall { n: usize, k: usize },
    #[error("row {row} has {got} entries, expected {expected}; complete-case filter the matrix first")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("row {row}, column {col} is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("no rating runs supplied")]
    Empty,
    #[error("ratings mix variants {0} and {1}")]
    MixedVariants(String, String),
    #[error("unbalanced run counts: most cells have {expected} runs but {}", offenders.join(", "))]
    Unbalanced { expected: usize, offenders: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IccStatus {
    Ok,
    /// No variation anywhere in the matrix; the coefficients are undefined.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IccResult {
    pub level: String,
    pub n: usize,
    pub k: usize,
    pub ms_rows: f64,
    pub ms_cols: f64,
    pub ms_error: f64,
    pub status: IccStatus,
    pub icc_single: Option<f64>,
    pub icc_average: Option<f64>,
    /// 95% bounds; absent when degenerate or the F approximation breaks down.
    pub ci_single: Option<[f64; 2]>,
    pub ci_average: Option<[f64; 2]>,
    pub low_k: bool,
}

fn validate(matrix: &[Vec<f64>]) -> Result<(usize, usize), ReliabilityError> {
    let n = matrix.len();
    let k = matrix.first().map_or(0, Vec::len);
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != k {
            return Err(ReliabilityError::Ragged { row: i, got: row.len(), expected: k });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(ReliabilityError::NonFinite { row: i, col: j });
        }
    }
    if n < 2 || k < 2 {
        return Err(ReliabilityError::TooSmall { n, k });
    }
    Ok((n, k))
}

/// ICC(A,1) and ICC(A,k) for a subjects × raters matrix given as rows.
pub fn icc_absolute(matrix: &[Vec<f64>]) -> Result<IccResult, ReliabilityError> {
    let (n, k) = validate(matrix)?;
    let (nf, kf) = (n as f64, k as f64);
    let rows: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let cols: Vec<f64> = (0..k).map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let grand = rows.iter().sum::<f64>() / nf;
    let ss_rows = kf * rows.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    // Rows that are constant across raters carry no rater or error variance.
    // Summing them out exactly keeps perfect agreement at exactly one.
    let exact_agreement = matrix.iter().all(|r| r.iter().all(|v| *v == r[0]));
    let (ss_cols, ss_err) = if exact_agreement {
        (0.0, 0.0)
    } else {
        let ss_cols = nf * cols.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
        let mut ss_err = 0.0;
        for (r, rm) in matrix.iter().zip(&rows) {
            for (x, cm) in r.iter().zip(&cols) {
                ss_err += (x - rm - cm + grand).powi(2);
            }
        }
        (ss_cols, ss_err)
    };
    let msr = ss_rows / (nf - 1.0);
    let msc = ss_cols / (kf - 1.0);
    let mse = ss_err / ((nf - 1.0) * (kf - 1.0));
    let mut out = IccResult {
        level: String::new(),
        n,
        k,
        ms_rows: msr,
        ms_cols: msc,
        ms_error: mse,
        status: IccStatus::Ok,
        icc_single: None,
        icc_average: None,
        ci_single: None,
        ci_average: None,
        low_k: k < MIN_RELIABLE_K,
    };
    if msr == 0.0 && msc == 0.0 && mse == 0.0 {
        out.status = IccStatus::Degenerate;
        return Ok(out);
    }
    let single = (msr - mse) / (msr + (kf - 1.0) * mse + kf / nf * (msc - mse));
    let average = (msr - mse) / (msr + (msc - mse) / nf);
    out.icc_single = Some(single);
    out.icc_average = Some(average);
    out.ci_single = ci_single(msr, msc, mse, nf, kf, single);
    out.ci_average = out.ci_single.map(|[lo, hi]| [step_up(lo, kf), step_up(hi, kf)]);
    Ok(out)
}

fn step_up(r: f64, k: f64) -> f64 {
    k * r / (1.0 + (k - 1.0) * r)
}

fn ci_single(msr: f64, msc: f64, mse: f64, n: f64, k: f64, icc: f64) -> Option<[f64; 2]> {
    if mse == 0.0 {
        return (msc == 0.0).then_some([1.0, 1.0]);
    }
    let fj = msc / mse;
    let a = k * icc / (n * (1.0 - icc));
    let b = 1.0 + k * icc * (n - 1.0) / (n * (1.0 - icc));
    let v = (a * msc + b * mse).powi(2) / ((a * msc).powi(2) / (k - 1.0) + (b * mse).powi(2) / ((n - 1.0) * (k - 1.0)));
    if !(v.is_finite() && v > 0.0 && fj.is_finite()) {
        return None;
    }
    let f_lo = f_quantile(0.975, n - 1.0, v);
    let f_hi = f_quantile(0.975, v, n - 1.0);
    let denom = k * msc + (k * n - k - n) * mse;
    let lo = n * (msr - f_lo * mse) / (f_lo * denom + n * msr);
    let hi = n * (f_hi * msr - mse) / (denom + n * f_hi * msr);
    (lo.is_finite() && hi.is_finite()).then_some([lo, hi])
}

/// ICCs for every level of one rating variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityReport {
    pub model_id: String,
    pub prompt_id: String,
    pub n_cells: usize,
    pub k: usize,
    pub low_k: bool,
    /// E0, E1 and the latent E2+E3 level, in that order.
    pub levels: Vec<IccResult>,
}

impl ReliabilityReport {
    pub fn level(&self, name: &str) -> Option<&IccResult> {
        self.levels.iter().find(|l| l.level == name)
    }

    pub fn write_json<W: Write>(&self, w: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(std::io::Error::other)
    }
}

/// Cells as subjects, runs (ordered by run index) as raters.
pub fn reliability_report(ratings: &[RatingRecord]) -> Result<ReliabilityReport, ReliabilityError> {
    let first = ratings.first().ok_or(ReliabilityError::Empty)?;
    let variant = first.variant();
    let mut cells: BTreeMap<(&str, &str), Vec<&RatingRecord>> = BTreeMap::new();
    for r in ratings {
        if r.variant() != variant {
            return Err(ReliabilityError::MixedVariants(
                format!("{}/{}", variant.0, variant.1),
                format!("{}/{}", r.model_id, r.prompt_id),
            ));
        }
        cells.entry((&r.occ_code, &r.task_id)).or_default().push(r);
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for runs in cells.values() {
        *counts.entry(runs.len()).or_default() += 1;
    }
    // Modal run count, ties to the larger count.
    let k = counts.iter().max_by_key(|(len, c)| (**c, **len)).map(|(len, _)| *len).unwrap_or(0);
    let offenders: Vec<String> = cells
        .iter()
        .filter(|(_, runs)| runs.len() != k)
        .map(|((o, t), runs)| format!("{o}/{t} has {}", runs.len()))
        .collect();
    if !offenders.is_empty() {
        return Err(ReliabilityError::Unbalanced { expected: k, offenders });
    }
    let mut matrices: [Vec<Vec<f64>>; 3] = Default::default();
    for runs in cells.values_mut() {
        runs.sort_by_key(|r| r.run_index);
        let p: Vec<[f64; 4]> = runs.iter().map(|r| r.distribution.probs()).collect();
        matrices[0].push(p.iter().map(|p| p[0]).collect());
        matrices[1].push(p.iter().map(|p| p[1]).collect());
        matrices[2].push(p.iter().map(|p| p[2] + p[3]).collect());
    }
    let mut levels = Vec::with_capacity(3);
    for (name, m) in ["E0", "E1", "E2"].into_iter().zip(&matrices) {
        let mut r = icc_absolute(m)?;
        r.level = name.to_string();
        levels.push(r);
    }
    Ok(ReliabilityReport {
        model_id: variant.0.to_string(),
        prompt_id: variant.1.to_string(),
        n_cells: cells.len(),
        k,
        low_k: k < MIN_RELIABLE_K,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement_is_one() {
        let m = vec![vec![0.1; 3], vec![0.7; 3], vec![0.35; 3]];
        let r = icc_absolute(&m).unwrap();
        assert_eq!(r.icc_single, Some(1.0));
        assert_eq!(r.icc_average, Some(1.0));
    }

    #[test]
    fn constant_matrix_is_degenerate() {
        let r = icc_absolute(&[vec![0.2; 4], vec![0.2; 4]]).unwrap();
        assert_eq!(r.status, IccStatus::Degenerate);
        assert!(r.icc_single.is_none());
    }

    #[test]
    fn textbook_example() {
        // Shrout and Fleiss' 6 targets x 4 judges; ICC(2,1) = 0.29, ICC(2,4) = 0.62.
        let m = vec![
            vec![9.0, 2.0, 5.0, 8.0],
            vec![6.0, 1.0, 3.0, 2.0],
            vec![8.0, 4.0, 6.0, 8.0],
            vec![7.0, 1.0, 2.0, 6.0],
            vec![10.0, 5.0, 6.0, 9.0],
            vec![6.0, 2.0, 4.0, 7.0],
        ];
        let r = icc_absolute(&m).unwrap();
        assert!((r.icc_single.unwrap() - 0.2898).abs() < 1e-3);
        assert!((r.icc_average.unwrap() - 0.6201).abs() < 1e-3);
        let [lo, hi] = r.ci_single.unwrap();
        assert!(lo < 0.2898 && 0.2898 < hi);
        assert!((lo - 0.019).abs() < 0.01 && (hi - 0.76).abs() < 0.01, "{lo} {hi}");
    }
}

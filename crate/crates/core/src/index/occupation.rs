use std::collections::BTreeMap;

use serde::Serialize;

use super::{GaisiScore, IndexError};
use crate::corpus::{JobRecord, OccCode};
use crate::stats::{weighted_quantile, wls_fe, Design, FitOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationStat {
    pub occ_code: String,
    pub n: usize,
    pub weight: f64,
    pub mean_gaisi: f64,
    /// Weighted share of workers above the high-exposure threshold.
    pub high_share: f64,
    /// Set when `n < min_n` and the mean and share come from `source`.
    pub imputed: bool,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkerOccupation {
    pub worker_id: String,
    pub occ_code: String,
    /// Weighted mean of the other workers in the occupation; `None` when alone.
    pub loo_mean: Option<f64>,
    pub occ_mean: f64,
    pub high: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationStats {
    pub depth: usize,
    pub min_n: usize,
    pub percentile: f64,
    pub threshold: f64,
    pub occupations: Vec<OccupationStat>,
    /// Parent-group statistics used for imputation and fallback lookups.
    pub parents: Vec<OccupationStat>,
    pub workers: Vec<WorkerOccupation>,
}

impl OccupationStats {
    pub fn get(&self, occ: &str) -> Option<&OccupationStat> {
        self.occupations.iter().find(|o| o.occ_code == occ)
    }

    /// High-exposure share for `occ` at the stats depth, falling back to its
    /// parent group when the occupation has no surveyed workers.
    pub fn share_for(&self, occ: &OccCode) -> Option<f64> {
        let own = occ.view(self.depth).and_then(|v| self.get(v));
        own.or_else(|| {
            let parent = occ.view(self.depth.saturating_sub(1))?;
            self.parents.iter().find(|p| p.occ_code == parent)
        })
        .map(|o| o.high_share)
    }
}

struct Acc {
    n: usize,
    w: f64,
    wg: f64,
    wh: f64,
}

fn accumulate<'a>(rows: impl Iterator<Item = (&'a str, f64, f64, bool)>) -> BTreeMap<String, Acc> {
    let mut map: BTreeMap<String, Acc> = BTreeMap::new();
    for (occ, w, g, high) in rows {
        let a = map.entry(occ.to_string()).or_insert(Acc { n: 0, w: 0.0, wg: 0.0, wh: 0.0 });
        a.n += 1;
        a.w += w;
        a.wg += w * g;
        a.wh += w * f64::from(u8::from(high));
    }
    map
}

fn join<'a>(scores: &'a [GaisiScore], jobs: &'a [JobRecord]) -> Vec<(&'a GaisiScore, &'a JobRecord)> {
    let by_id: BTreeMap<&str, &JobRecord> = jobs.iter().map(|j| (j.worker_id.as_str(), j)).collect();
    scores.iter().filter_map(|s| by_id.get(s.worker_id.as_str()).map(|j| (s, *j))).collect()
}

/// Occupation means, leave-one-out means and high-exposure shares at `depth` digits.
///
/// The high-exposure flag marks workers strictly above the weighted
/// `percentile` quantile of the pooled score distribution. Occupations with
/// fewer than `min_n` workers take the mean and share of their parent group
/// (one digit shorter) and are marked imputed.
pub fn occupation_stats(
    scores: &[GaisiScore],
    jobs: &[JobRecord],
    depth: usize,
    min_n: usize,
    percentile: f64,
) -> Result<OccupationStats, IndexError> {
    let rows = join(scores, jobs);
    if rows.is_empty() {
        return Err(IndexError::InvalidInput("no scored workers to summarise".into()));
    }
    if depth == 0 {
        return Err(IndexError::InvalidInput("occupation depth must be at least 1".into()));
    }
    let g: Vec<f64> = rows.iter().map(|(s, _)| s.gaisi).collect();
    let w: Vec<f64> = rows.iter().map(|(_, j)| j.survey_weight).collect();
    let threshold = weighted_quantile(&g, Some(&w), percentile).map_err(|e| IndexError::InvalidInput(e.to_string()))?;
    let own = accumulate(rows.iter().map(|(s, j)| {
        (j.occ_code.view(depth).unwrap_or(j.occ_code.as_str()), j.survey_weight, s.gaisi, s.gaisi > threshold)
    }));
    let parent_depth = depth.saturating_sub(1);
    let parents_acc = if parent_depth >= 1 {
        accumulate(rows.iter().map(|(s, j)| {
            (
                j.occ_code.view(parent_depth).unwrap_or(j.occ_code.as_str()),
                j.survey_weight,
                s.gaisi,
                s.gaisi > threshold,
            )
        }))
    } else {
        BTreeMap::new()
    };
    let stat = |code: &str, a: &Acc| OccupationStat {
        occ_code: code.to_string(),
        n: a.n,
        weight: a.w,
        mean_gaisi: a.wg / a.w,
        high_share: a.wh / a.w,
        imputed: false,
        source: code.to_string(),
    };
    let parents: Vec<OccupationStat> = parents_acc.iter().map(|(c, a)| stat(c, a)).collect();
    let occupations: Vec<OccupationStat> = own
        .iter()
        .map(|(code, a)| {
            let mut s = stat(code, a);
            if a.n < min_n && parent_depth >= 1 {
                if let Some(p) = parents.iter().find(|p| code.starts_with(&p.occ_code)) {
                    s.mean_gaisi = p.mean_gaisi;
                    s.high_share = p.high_share;
                    s.imputed = true;
                    s.source = p.occ_code.clone();
                }
            }
            s
        })
        .collect();
    let workers = rows
        .iter()
        .map(|(s, j)| {
            let code = j.occ_code.view(depth).unwrap_or(j.occ_code.as_str());
            let a = &own[code];
            let loo = (a.n > 1).then(|| (a.wg - j.survey_weight * s.gaisi) / (a.w - j.survey_weight));
            WorkerOccupation {
                worker_id: s.worker_id.clone(),
                occ_code: code.to_string(),
                loo_mean: loo,
                occ_mean: a.wg / a.w,
                high: s.gaisi > threshold,
            }
        })
        .collect();
    Ok(OccupationStats { depth, min_n, percentile, threshold, occupations, parents, workers })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub alpha: f64,
    pub beta: f64,
    pub beta_se: f64,
    pub n: usize,
    /// Per worker, `None` where hours are missing or the slope is not positive.
    pub workers: Vec<(String, Option<f64>)>,
    /// Weighted mean share per occupation group at the requested depth.
    pub occupations: Vec<(String, f64)>,
    pub grand_mean: Option<f64>,
    pub warning: Option<String>,
}

/// Share of working time represented by the task battery, from the weighted
/// regression `hours = alpha + beta * task_load`: `S_i = beta * L_i / H_i`,
/// clamped to `[0, 1]`.
pub fn coverage_share(scores: &[GaisiScore], jobs: &[JobRecord], depth: usize) -> Result<CoverageResult, IndexError> {
    let rows: Vec<(&GaisiScore, &JobRecord, f64)> = join(scores, jobs)
        .into_iter()
        .filter_map(|(s, j)| j.outcomes.usual_hours.filter(|h| *h > 0.0).map(|h| (s, j, h)))
        .filter(|(s, _, _)| s.task_load > 0.0)
        .collect();
    if rows.len() < 3 {
        return Err(IndexError::InvalidInput("coverage regression needs at least three workers with hours".into()));
    }
    let design = Design::new(rows.iter().map(|r| r.2).collect())
        .column("task_load", rows.iter().map(|r| r.0.task_load).collect())
        .weights(rows.iter().map(|r| r.1.survey_weight).collect());
    let fit = wls_fe(&design, &FitOptions::hc1()).map_err(|e| IndexError::InvalidInput(e.to_string()))?;
    let alpha = fit.coef_of("(intercept)").expect("intercept");
    let beta = fit.coef_of("task_load").expect("slope");
    let beta_se = fit.se_of("task_load").expect("slope");
    if beta <= 0.0 {
        return Ok(CoverageResult {
            alpha,
            beta,
            beta_se,
            n: rows.len(),
            workers: rows.iter().map(|r| (r.0.worker_id.clone(), None)).collect(),
            occupations: Vec::new(),
            grand_mean: None,
            warning: Some(format!("hours do not rise with task load (slope {beta:.4}); coverage undefined")),
        });
    }
    let shares: Vec<f64> = rows.iter().map(|(s, _, h)| (beta * s.task_load / h).clamp(0.0, 1.0)).collect();
    let mut acc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let (mut tw, mut tws) = (0.0, 0.0);
    for ((_, j, _), s) in rows.iter().zip(&shares) {
        let code = j.occ_code.view(depth).unwrap_or(j.occ_code.as_str()).to_string();
        let e = acc.entry(code).or_insert((0.0, 0.0));
        e.0 += j.survey_weight;
        e.1 += j.survey_weight * s;
        tw += j.survey_weight;
        tws += j.survey_weight * s;
    }
    Ok(CoverageResult {
        alpha,
        beta,
        beta_se,
        n: rows.len(),
        workers: rows.iter().zip(&shares).map(|(r, s)| (r.0.worker_id.clone(), Some(*s))).collect(),
        occupations: acc.into_iter().map(|(k, (w, ws))| (k, ws / w)).collect(),
        grand_mean: Some(tws / tw),
        warning: None,
    })
}

/// Bounds on the full-job index when only a share `s` of work is observed:
/// unobserved work is either entirely unexposed (lower) or fully exposed (upper).
pub fn bounded_gaisi(gaisi: f64, s: f64) -> Result<(f64, f64), IndexError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(IndexError::InvalidCoverage(s));
    }
    Ok((s * gaisi, s * gaisi + (1.0 - s)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_examples() {
        let (lo, hi) = bounded_gaisi(0.4, 0.327).unwrap();
        assert!((lo - 0.1308).abs() < 1e-12 && (hi - 0.8038).abs() < 1e-12);
        assert_eq!(bounded_gaisi(0.4, 1.0).unwrap(), (0.4, 0.4));
        assert_eq!(bounded_gaisi(0.4, 0.0).unwrap(), (0.0, 1.0));
        assert!(bounded_gaisi(0.4, 1.2).is_err());
    }
}

//! From rating runs to worker-level exposure.
//!
//! Runs are averaged into one distribution per occupation-task cell, then each
//! worker's shares are the importance-weighted mean of their occupation's cells:
//!
//! ```text
//! E_i(level) = sum_k I_ik * P_ok(level) / sum_k I_ik
//! gaisi_i    = E_i(E1) + omega * (E_i(E2) + E_i(E3))
//! ```
//!
//! The sums run over tasks the worker was asked and whose cell is rated. The
//! denominator is the worker's task load.

mod export;
mod occupation;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ExposureDistribution, JobRecord, RatingRecord};

pub use export::{read_cells, read_scores, write_cells, write_scores};
pub use occupation::{
    bounded_gaisi, coverage_share, occupation_stats, CoverageResult, OccupationStat, OccupationStats, WorkerOccupation,
};

pub const DEFAULT_OMEGA: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("no rating runs supplied")]
    Empty,
    #[error("ratings mix variants {0} and {1}; average one model/prompt variant at a time")]
    MixedVariants(String, String),
    #[error("worker {worker_id}: no positive importance on any rated task, exposure undefined")]
    UndefinedExposure { worker_id: String },
    #[error("worker {worker_id}: no rated cell for occupation {occ_code}, task {task_id}")]
    MissingCell { worker_id: String, occ_code: String, task_id: String },
    #[error("omega {0} outside [0, 1]")]
    InvalidOmega(f64),
    #[error("coverage share {0} outside [0, 1]")]
    InvalidCoverage(f64),
    #[error("{0}")]
    InvalidInput(String),
}

/// How a positively weighted task without a rated cell is handled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Drop the task from both numerator and denominator.
    #[default]
    Exclude,
    /// Fail the worker.
    Strict,
}

impl MissingPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exclude" => Some(Self::Exclude),
            "strict" => Some(Self::Strict),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellExposure {
    pub distribution: ExposureDistribution,
    pub run_count: u32,
}

/// Mean cell distributions keyed by `(occupation code, task id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellTable {
    pub cells: BTreeMap<(String, String), CellExposure>,
}

impl CellTable {
    /// Occupation code length at which cells are defined.
    pub fn depth(&self) -> usize {
        self.cells.keys().next().map_or(0, |(o, _)| o.len())
    }

    pub fn get(&self, occ: &str, task: &str) -> Option<&CellExposure> {
        self.cells.get(&(occ.to_string(), task.to_string()))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), &CellExposure)> {
        self.cells.iter()
    }
}

/// Arithmetic mean of each level across runs, per cell. All records must come
/// from a single model/prompt variant.
pub fn average_runs(records: &[RatingRecord]) -> Result<CellTable, IndexError> {
    let first = records.first().ok_or(IndexError::Empty)?;
    let variant = first.variant();
    let mut sums: BTreeMap<(String, String), ([f64; 4], u32)> = BTreeMap::new();
    for r in records {
        if r.variant() != variant {
            return Err(IndexError::MixedVariants(
                format!("{}/{}", variant.0, variant.1),
                format!("{}/{}", r.model_id, r.prompt_id),
            ));
        }
        let e = sums.entry((r.occ_code.clone(), r.task_id.clone())).or_insert(([0.0; 4], 0));
        for (s, p) in e.0.iter_mut().zip(r.distribution.probs()) {
            *s += p;
        }
        e.1 += 1;
    }
    let cells = sums
        .into_iter()
        .map(|(k, (s, n))| {
            let mean = s.map(|v| v / f64::from(n));
            let distribution =
                ExposureDistribution::new(mean).unwrap_or_else(|_| ExposureDistribution::from_mass(mean));
            (k, CellExposure { distribution, run_count: n })
        })
        .collect();
    Ok(CellTable { cells })
}

/// Worker-level shares and index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaisiScore {
    pub worker_id: String,
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e2e3: f64,
    pub task_load: f64,
    pub gaisi: f64,
    pub omega: f64,
}

impl GaisiScore {
    /// The index at a different discount weight.
    pub fn at_omega(&self, omega: f64) -> f64 {
        self.e1 + omega * self.e2e3
    }
}

fn check_omega(omega: f64) -> Result<(), IndexError> {
    if (0.0..=1.0).contains(&omega) {
        Ok(())
    } else {
        Err(IndexError::InvalidOmega(omega))
    }
}

pub fn aggregate_worker(
    job: &JobRecord,
    cells: &CellTable,
    policy: MissingPolicy,
    omega: f64,
) -> Result<GaisiScore, IndexError> {
    check_omega(omega)?;
    let depth = cells.depth();
    let occ = job.occ_code.view(depth).unwrap_or(job.occ_code.as_str());
    let mut num = [0.0; 4];
    let mut load = 0.0;
    for (task, imp) in &job.importance {
        let w = imp.weight();
        let Some(cell) = cells.get(occ, task) else {
            if w > 0.0 && policy == MissingPolicy::Strict {
                return Err(IndexError::MissingCell {
                    worker_id: job.worker_id.clone(),
                    occ_code: occ.to_string(),
                    task_id: task.clone(),
                });
            }
            continue;
        };
        if w == 0.0 {
            continue;
        }
        for (n, p) in num.iter_mut().zip(cell.distribution.probs()) {
            *n += w * p;
        }
        load += w;
    }
    if load <= 0.0 {
        return Err(IndexError::UndefinedExposure { worker_id: job.worker_id.clone() });
    }
    let [e0, e1, e2, e3] = num.map(|v| v / load);
    let e2e3 = e2 + e3;
    Ok(GaisiScore {
        worker_id: job.worker_id.clone(),
        e0,
        e1,
        e2,
        e3,
        e2e3,
        task_load: load,
        gaisi: e1 + omega * e2e3,
        omega,
    })
}

/// Scores for every worker whose exposure is defined.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<GaisiScore>,
    /// Workers left out, with the reason.
    pub excluded: Vec<(String, String)>,
}

impl ScoreSet {
    pub fn by_worker(&self) -> BTreeMap<&str, &GaisiScore> {
        self.scores.iter().map(|s| (s.worker_id.as_str(), s)).collect()
    }
}

pub fn score_jobs(
    jobs: &[JobRecord],
    cells: &CellTable,
    policy: MissingPolicy,
    omega: f64,
) -> Result<ScoreSet, IndexError> {
    check_omega(omega)?;
    let mut out = ScoreSet::default();
    for job in jobs {
        match aggregate_worker(job, cells, policy, omega) {
            Ok(s) => out.scores.push(s),
            Err(e @ IndexError::UndefinedExposure { .. }) => out.excluded.push((job.worker_id.clone(), e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Covariates, Importance, OccCode, Outcomes, Wave};

    fn record(task: &str, run: u32, p: [f64; 4]) -> RatingRecord {
        RatingRecord {
            occ_code: "11".into(),
            task_id: task.into(),
            run_index: run,
            distribution: ExposureDistribution::new(p).unwrap(),
            model_id: "m".into(),
            prompt_id: "p".into(),
            temperature: 0.2,
            justification: String::new(),
        }
    }

    fn job(imp: &[(&str, Importance)]) -> JobRecord {
        JobRecord {
            worker_id: "w".into(),
            wave: Wave::W2023,
            occ_code: OccCode::new("111").unwrap(),
            survey_weight: 1.0,
            covariates: Covariates::default(),
            outcomes: Outcomes::default(),
            importance: imp.iter().map(|(t, i)| (t.to_string(), *i)).collect(),
        }
    }

    #[test]
    fn two_run_mean() {
        let t = average_runs(&[record("A", 1, [0.6, 0.2, 0.2, 0.0]), record("A", 2, [0.4, 0.4, 0.2, 0.0])]).unwrap();
        let p = t.get("11", "A").unwrap().distribution.probs();
        for (a, b) in p.iter().zip([0.5, 0.3, 0.2, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_mean_of_two_tasks() {
        let t = average_runs(&[record("A", 1, [0.4, 0.4, 0.2, 0.0]), record("B", 1, [0.7, 0.1, 0.2, 0.0])]).unwrap();
        let s = aggregate_worker(
            &job(&[("A", Importance::Essential), ("B", Importance::Fairly)]),
            &t,
            MissingPolicy::Exclude,
            0.5,
        )
        .unwrap();
        assert!((s.e1 - 0.3).abs() < 1e-15);
        assert_eq!(s.task_load, 1.5);
    }

    #[test]
    fn missing_cell_policies() {
        let t = average_runs(&[record("A", 1, [0.5, 0.3, 0.2, 0.0])]).unwrap();
        let j = job(&[("A", Importance::Essential), ("Z", Importance::Very)]);
        let s = aggregate_worker(&j, &t, MissingPolicy::Exclude, 0.5).unwrap();
        assert!((s.gaisi - 0.4).abs() < 1e-15);
        assert!(matches!(aggregate_worker(&j, &t, MissingPolicy::Strict, 0.5), Err(IndexError::MissingCell { .. })));
        let zero = job(&[("A", Importance::NotAtAll)]);
        assert!(matches!(
            aggregate_worker(&zero, &t, MissingPolicy::Exclude, 0.5),
            Err(IndexError::UndefinedExposure { .. })
        ));
    }
}

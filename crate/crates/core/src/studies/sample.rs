//! Worker samples: jobs joined to scores, with listwise column builders.

use std::collections::BTreeMap;

use crate::corpus::{JobRecord, OccCode};
use crate::index::GaisiScore;
use crate::stats::{weighted_quantile, Design, StatsError};

use super::StudyInputs;

pub(crate) fn flag(b: bool) -> f64 {
    f64::from(u8::from(b))
}

/// Scored workers in survey order.
#[derive(Debug, Clone)]
pub(crate) struct Sample<'a> {
    pub rows: Vec<(&'a JobRecord, &'a GaisiScore)>,
}

impl<'a> Sample<'a> {
    pub fn scored(inputs: &'a StudyInputs<'a>) -> Self {
        let by_id: BTreeMap<&str, &GaisiScore> = inputs.scores.by_worker();
        let rows = inputs.corpus.jobs.iter().filter_map(|j| by_id.get(j.worker_id.as_str()).map(|s| (j, *s))).collect();
        Self { rows }
    }

    pub fn filter(&self, keep: impl Fn(&JobRecord, &GaisiScore) -> bool) -> Self {
        Self { rows: self.rows.iter().copied().filter(|(j, s)| keep(j, s)).collect() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn col(&self, f: impl Fn(&JobRecord, &GaisiScore) -> f64) -> Vec<f64> {
        self.rows.iter().map(|(j, s)| f(j, s)).collect()
    }

    pub fn keys(&self, f: impl Fn(&JobRecord, &GaisiScore) -> String) -> Vec<String> {
        self.rows.iter().map(|(j, s)| f(j, s)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.col(|j, _| j.survey_weight)
    }

    pub fn gaisi(&self) -> Vec<f64> {
        self.col(|_, s| s.gaisi)
    }

    pub fn occ(&self, depth: usize) -> Vec<String> {
        self.keys(|j, _| occ_view(&j.occ_code, depth).to_string())
    }

    /// Keeps workers with every demographic control answered.
    pub fn with_demographics(&self) -> Self {
        self.filter(|j, _| demographics(j).is_some())
    }

    /// Demographic control columns; call on a [`Sample::with_demographics`] sample.
    pub fn demographic_columns(&self) -> Vec<(String, Vec<f64>)> {
        let rows: Vec<Vec<f64>> =
            self.rows.iter().map(|(j, _)| demographics(j).expect("filtered on complete demographics")).collect();
        DEMOGRAPHICS
            .iter()
            .enumerate()
            .map(|(i, name)| (name.to_string(), rows.iter().map(|r| r[i]).collect()))
            .collect()
    }
}

pub(crate) fn occ_view(code: &OccCode, depth: usize) -> &str {
    code.view(depth).unwrap_or(code.as_str())
}

pub(crate) const DEMOGRAPHICS: [&str; 9] = [
    "female",
    "age",
    "age_sq",
    "ethnic_minority",
    "edu_gcse",
    "edu_alevel",
    "edu_degree",
    "full_time",
    "self_employed",
];

/// Age squared is scaled by 1/100 to keep the cross-product matrix well conditioned.
pub(crate) fn demographics(j: &JobRecord) -> Option<Vec<f64>> {
    let c = &j.covariates;
    let age = c.age?;
    let edu = c.education?;
    Some(vec![
        flag(c.female?),
        age,
        age * age / 100.0,
        flag(c.ethnic_minority?),
        flag(edu == 1),
        flag(edu == 2),
        flag(edu == 3),
        flag(c.full_time?),
        flag(c.self_employed?),
    ])
}

/// Adds columns that vary; constant columns are reported back by name.
pub(crate) fn add_varying(mut d: Design, cols: Vec<(String, Vec<f64>)>, dropped: &mut Vec<String>) -> Design {
    for (name, v) in cols {
        if v.iter().all(|x| *x == v[0]) {
            dropped.push(name);
        } else {
            d = d.column(name, v);
        }
    }
    d
}

/// Weighted quintile bins `0..=4` from the given cut points.
pub(crate) fn quintile_bins(values: &[f64], weights: &[f64]) -> Result<Vec<usize>, StatsError> {
    let cuts: Vec<f64> =
        [0.2, 0.4, 0.6, 0.8].iter().map(|p| weighted_quantile(values, Some(weights), *p)).collect::<Result<_, _>>()?;
    Ok(values.iter().map(|v| cuts.iter().filter(|c| v > c).count()).collect())
}

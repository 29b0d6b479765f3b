//! Named analyses over a scored corpus.
//!
//! Every study is a pure function of the corpus, the derived scores and a
//! parameter block, and returns a [`StudyResult`]: input digests, the parameter
//! echo, named tables, plot-ready series and expectation flags. Expectations
//! that need planted values (recovery checks) resolve to not-applicable unless
//! the parameters carry [`PlantedEffects`].

mod labour;
mod output;
mod sample;
mod summary;
mod validity;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{sha256_hex, Corpus, CorpusError, EventCalendar, PlantedEffects, RatingRecord, YearQuarter};
use crate::index::{
    average_runs, score_jobs, write_cells, write_scores, CellTable, IndexError, MissingPolicy, ScoreSet,
};
use crate::rater::RaterError;
use crate::reliability::ReliabilityError;
use crate::stats::StatsError;

pub use labour::{vacancy_event_study, wage_premium};
pub use output::write_study;
pub use summary::{
    coverage_study, distribution_study, group_gaps, shift_share, shift_share_decompose, ShiftShare, ShiftShareRow,
};
pub use validity::{
    affordance_regression, bias_audit, convergent_validity, cv_omega_study, mock_variants, predictive_validity,
    robustness_matrix,
};

/// Study names accepted by [`run_study`], in report order.
pub const STUDIES: [&str; 12] = [
    "distribution",
    "group-gaps",
    "shift-share",
    "wage-premium",
    "vacancy",
    "predictive",
    "convergent",
    "coverage",
    "affordance",
    "cv-omega",
    "robustness",
    "bias-audit",
];

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown study {name:?}; available: {}", STUDIES.join(", "), name = .0)]
    UnknownStudy(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Rater(#[from] RaterError),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expectation {
    pub name: String,
    pub detail: String,
    pub status: Status,
}

/// A named block of rows; used for both tables and plot series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric cell by row label (first column) and column name.
    pub fn value(&self, row_label: &str, column: &str) -> Option<f64> {
        let j = self.column_index(column)?;
        self.rows.iter().find(|r| r.first().and_then(Value::as_str) == Some(row_label)).and_then(|r| r[j].as_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub study: String,
    pub inputs: BTreeMap<String, String>,
    pub parameters: Value,
    pub tables: Vec<Table>,
    pub figures: Vec<Table>,
    pub expectations: Vec<Expectation>,
    pub notes: Vec<String>,
}

impl StudyResult {
    pub fn new(study: &str, inputs: &StudyInputs) -> Self {
        Self {
            study: study.to_string(),
            inputs: inputs.digests.clone(),
            parameters: serde_json::to_value(&inputs.params).expect("serialisable"),
            tables: Vec::new(),
            figures: Vec::new(),
            expectations: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn figure(&self, name: &str) -> Option<&Table> {
        self.figures.iter().find(|t| t.name == name)
    }

    pub fn expectation(&self, name: &str) -> Option<&Expectation> {
        self.expectations.iter().find(|e| e.name == name)
    }

    pub fn expect(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        let status = if pass { Status::Pass } else { Status::Fail };
        self.expectations.push(Expectation { name: name.to_string(), detail: detail.into(), status });
    }

    pub fn not_applicable(&mut self, name: &str, detail: impl Into<String>) {
        self.expectations.push(Expectation {
            name: name.to_string(),
            detail: detail.into(),
            status: Status::NotApplicable,
        });
    }

    pub fn failed(&self) -> Vec<&Expectation> {
        self.expectations.iter().filter(|e| e.status == Status::Fail).collect()
    }

    /// Flags recovery of a planted coefficient within two standard errors.
    pub(crate) fn expect_recovery(&mut self, name: &str, estimate: f64, se: f64, planted: Option<f64>) {
        match planted {
            Some(p) => {
                let z = (estimate - p) / se;
                self.expect(
                    name,
                    z.abs() <= 2.0,
                    format!("estimate {estimate:.4} (se {se:.4}) vs planted {p}: z = {z:.2}"),
                );
            }
            None => self.not_applicable(name, format!("estimate {estimate:.4} (se {se:.4}); no planted value")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyParams {
    pub omega: f64,
    /// Index value above which a job counts as highly exposed in summaries.
    pub exposure_cut: f64,
    /// Weighted percentile defining the high-exposure flag for occupation shares.
    pub high_percentile: f64,
    pub min_n: usize,
    pub missing_policy: MissingPolicy,
    pub seed: u64,
    pub folds: usize,
    /// Occupation digit depth for fixed effects, clustering and shares.
    pub occupation_depth: usize,
    pub reference_quarter: String,
    /// Bias-audit flag threshold in standard deviations of the index.
    pub bias_threshold_sd: f64,
    /// Weighted quantile splitting high from low exposure in the pay regression.
    pub wage_split_quantile: f64,
    /// Extra per-run noise for the perturbed mock variant.
    pub robustness_noise: f64,
    /// Coefficients to check recovery against; set for generated corpora.
    pub planted: Option<PlantedEffects>,
}

impl Default for StudyParams {
    fn default() -> Self {
        Self {
            omega: 0.5,
            exposure_cut: 0.5,
            high_percentile: 0.8,
            min_n: 10,
            missing_policy: MissingPolicy::Exclude,
            seed: 1,
            folds: 5,
            occupation_depth: 3,
            reference_quarter: "2022Q3".into(),
            bias_threshold_sd: 0.02,
            wage_split_quantile: 0.5,
            robustness_noise: 0.03,
            planted: None,
        }
    }
}

impl StudyParams {
    pub fn validate(&self) -> Result<(), StudyError> {
        let bad = |m: String| Err(StudyError::InvalidParameter(m));
        if !(0.0..=1.0).contains(&self.omega) {
            return bad(format!("omega {} outside [0, 1]", self.omega));
        }
        for (name, v) in [("high_percentile", self.high_percentile), ("wage_split_quantile", self.wage_split_quantile)]
        {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} {v} outside (0, 1)"));
            }
        }
        if self.folds < 2 {
            return bad("folds must be at least 2".into());
        }
        if self.occupation_depth == 0 {
            return bad("occupation_depth must be at least 1".into());
        }
        if !(self.robustness_noise >= 0.0 && self.robustness_noise.is_finite()) {
            return bad(format!("robustness_noise {} must be non-negative", self.robustness_noise));
        }
        self.calendar()?;
        Ok(())
    }

    pub fn calendar(&self) -> Result<EventCalendar, StudyError> {
        let reference = YearQuarter::parse(&self.reference_quarter).ok_or_else(|| {
            StudyError::InvalidParameter(format!("reference_quarter {:?} is not like 2022Q3", self.reference_quarter))
        })?;
        Ok(EventCalendar { reference, ..EventCalendar::default() })
    }
}

/// Everything a study reads, with digests of each part.
#[derive(Debug, Clone)]
pub struct StudyInputs<'a> {
    pub corpus: &'a Corpus,
    pub cells: CellTable,
    pub scores: ScoreSet,
    pub params: StudyParams,
    /// Alternative rating sets for the robustness matrix, by variant name.
    pub variants: Vec<(String, Vec<RatingRecord>)>,
    pub digests: BTreeMap<String, String>,
}

impl<'a> StudyInputs<'a> {
    /// Averages the corpus ratings and scores every worker.
    pub fn new(corpus: &'a Corpus, params: StudyParams) -> Result<Self, StudyError> {
        params.validate()?;
        if corpus.ratings.is_empty() {
            return Err(StudyError::MissingInput("ratings".into()));
        }
        let cells = average_runs(&corpus.ratings)?;
        let scores = score_jobs(&corpus.jobs, &cells, params.missing_policy, params.omega)?;
        let mut digests = BTreeMap::new();
        digests.insert("corpus".to_string(), corpus.digest());
        let mut buf = Vec::new();
        write_cells(&mut buf, &cells).expect("in-memory write");
        digests.insert("cells".to_string(), sha256_hex(&buf));
        buf.clear();
        write_scores(&mut buf, &scores.scores).expect("in-memory write");
        digests.insert("scores".to_string(), sha256_hex(&buf));
        Ok(Self { corpus, cells, scores, params, variants: Vec::new(), digests })
    }

    pub fn with_variants(mut self, variants: Vec<(String, Vec<RatingRecord>)>) -> Self {
        let mut h = String::new();
        for (name, records) in &variants {
            let mut buf = Vec::new();
            crate::corpus::write_ratings(&mut buf, records).expect("in-memory write");
            h.push_str(name);
            h.push_str(&sha256_hex(&buf));
        }
        if !variants.is_empty() {
            self.digests.insert("variants".to_string(), sha256_hex(h.as_bytes()));
        }
        self.variants = variants;
        self
    }
}

pub fn run_study(name: &str, inputs: &StudyInputs) -> Result<StudyResult, StudyError> {
    match name {
        "distribution" => distribution_study(inputs),
        "group-gaps" => group_gaps(inputs),
        "shift-share" => shift_share(inputs),
        "wage-premium" => wage_premium(inputs),
        "vacancy" => vacancy_event_study(inputs),
        "predictive" => predictive_validity(inputs),
        "convergent" => convergent_validity(inputs),
        "coverage" => coverage_study(inputs),
        "affordance" => affordance_regression(inputs),
        "cv-omega" => cv_omega_study(inputs),
        "robustness" => robustness_matrix(inputs),
        "bias-audit" => bias_audit(inputs),
        other => Err(StudyError::UnknownStudy(other.to_string())),
    }
}

pub(crate) fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub(crate) fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

pub(crate) fn text(s: impl Into<String>) -> Value {
    Value::String(s.into())
}

/// Coefficient rows `term, estimate, se, stat, p` for the named terms (all when empty).
pub(crate) fn coef_table(name: &str, fit: &crate::stats::FitResult, terms: &[&str]) -> Table {
    let mut t = Table::new(name, &["term", "estimate", "se", "stat", "p"]);
    for (i, n) in fit.names.iter().enumerate() {
        if terms.is_empty() || terms.contains(&n.as_str()) {
            t.push(vec![text(n.clone()), num(fit.coef[i]), num(fit.se[i]), num(fit.stat[i]), num(fit.p[i])]);
        }
    }
    t
}

//! Data model, file formats and synthetic generation for the rating and survey corpus.
//!
//! A corpus is a directory of plain files:
//!
//! | file             | contents                                                        |
//! |------------------|-----------------------------------------------------------------|
//! | `tasks.csv`      | `task_id, category, text`                                       |
//! | `vignettes.jsonl`| one `{occ_code, title, narrative}` object per line              |
//! | `ratings.csv`    | `occ_code, task_id, run_index, p_e0..p_e3, model_id, prompt_id, temperature, justification` |
//! | `survey.csv`     | worker columns, then one importance column per task id          |
//! | `vacancies.csv`  | `occ_code, area_code, year, month, count`                       |
//! | `rivals.csv`     | `occ_code`, then one column per rival exposure measure          |
//! | `cells_true.csv` | generator-only: true cell distributions behind the ratings      |
//!
//! Every CSV has a mandatory header and is read by column name, so column order
//! is free on input. Output is always written in the canonical order above.

mod io;
mod synth;
mod types;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use io::{
    load_corpus, read_ratings, read_rivals, read_survey, read_tasks, read_truth, read_vacancies, read_vignettes,
    write_corpus, write_ratings, write_rivals, write_survey, write_tasks, write_truth, write_vacancies,
    write_vignettes, CorpusPaths, LoadOptions, NaPolicy, SURVEY_FIXED_COLUMNS,
};
pub use synth::{generate_synthetic, synthetic_backend_config, synthetic_rater, PlantedEffects, SyntheticConfig};
pub use types::*;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}:{line}: {message}")]
    Malformed { file: String, line: u64, message: String },
    #[error("{file}:{line}: rejected row for cell {cell}: {reason}")]
    RejectedRow { file: String, line: u64, cell: String, reason: String },
    #[error("{file}: dangling references: {}", offenders.join(", "))]
    Dangling { file: String, offenders: Vec<String> },
    #[error("{file}: duplicate key {key}")]
    Duplicate { file: String, key: String },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

/// Validated in-memory corpus. Optional parts are empty when the file was absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub tasks: Vec<TaskItem>,
    pub vignettes: Vec<OccupationVignette>,
    pub ratings: Vec<RatingRecord>,
    pub jobs: Vec<JobRecord>,
    pub panel: Vec<PanelCell>,
    pub rivals: Option<RivalIndices>,
    /// True cell distributions, only present for generated corpora.
    pub truth: BTreeMap<(String, String), ExposureDistribution>,
}

impl Corpus {
    pub fn task(&self, task_id: &str) -> Option<&TaskItem> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn vignette(&self, occ: &str) -> Option<&OccupationVignette> {
        self.vignettes.iter().find(|v| v.occ_code == occ)
    }

    /// Digit depth at which cells are rated (the vignette code length).
    pub fn cell_digits(&self) -> usize {
        self.vignettes.first().map(|v| v.occ_code.len()).unwrap_or(2)
    }

    /// Tasks grouped by category, categories in first-appearance order.
    pub fn tasks_by_category(&self) -> Vec<(String, Vec<TaskItem>)> {
        let mut out: Vec<(String, Vec<TaskItem>)> = Vec::new();
        for t in &self.tasks {
            match out.iter_mut().find(|(c, _)| *c == t.category) {
                Some((_, v)) => v.push(t.clone()),
                None => out.push((t.category.clone(), vec![t.clone()])),
            }
        }
        out
    }

    /// Digest over the canonical serialisation of every component.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, bytes) in io::canonical_files(self) {
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update(sha256_hex(&bytes).as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    Ok(sha256_hex(&bytes))
}

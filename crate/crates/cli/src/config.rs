//! Flat run configuration: a TOML file of top-level keys, overridden by flags.

use std::path::{Path, PathBuf};

use gaisi::corpus::{CorpusPaths, NaPolicy, SyntheticConfig};
use gaisi::index::MissingPolicy;
use gaisi::rater::{BackendConfig, PromptSpec};
use gaisi::studies::StudyParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NaImportance {
    #[default]
    Absent,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,

    // Corpus files. `corpus_dir` supplies the standard names; single paths override them.
    pub corpus_dir: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub vignettes: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    pub vacancies: Option<PathBuf>,
    pub rivals: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub na_importance: NaImportance,

    // Rating backend.
    pub backend: Backend,
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
    pub runs: u32,
    pub jobs: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub api_key_env: String,
    pub prompt_dir: Option<PathBuf>,
    pub prompt_id: String,
    pub threshold: u32,
    pub mock_noise: f64,
    pub cache: bool,

    // Index and studies.
    pub omega: f64,
    pub exposure_cut: f64,
    pub high_percentile: f64,
    pub min_n: usize,
    pub missing_policy: MissingPolicy,
    pub folds: usize,
    pub occupation_depth: usize,
    pub reference_quarter: String,
    pub bias_threshold_sd: f64,
    pub wage_split_quantile: f64,
    pub robustness_noise: f64,

    // Synthetic corpus size.
    pub synth_occupations: usize,
    pub synth_minors: usize,
    pub synth_tasks: usize,
    pub synth_workers: usize,
    pub synth_areas: usize,
    pub synth_months: usize,
    pub synth_wave_2017_share: f64,
    pub synth_missing_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = BackendConfig::default();
        let s = StudyParams::default();
        let g = SyntheticConfig::default();
        Self {
            out: PathBuf::from("out"),
            seed: g.seed,
            corpus_dir: None,
            tasks: None,
            vignettes: None,
            ratings: None,
            survey: None,
            vacancies: None,
            rivals: None,
            truth: None,
            na_importance: NaImportance::Absent,
            backend: Backend::Mock,
            endpoint: b.endpoint,
            model_id: b.model_id,
            temperature: b.temperature,
            runs: b.runs_per_cell,
            jobs: b.max_parallel,
            max_attempts: b.max_attempts,
            backoff_ms: b.backoff_ms,
            timeout_secs: b.timeout_secs,
            api_key_env: b.api_key_env,
            prompt_dir: None,
            prompt_id: "main".into(),
            threshold: 25,
            mock_noise: g.rater_noise,
            cache: true,
            omega: s.omega,
            exposure_cut: s.exposure_cut,
            high_percentile: s.high_percentile,
            min_n: s.min_n,
            missing_policy: s.missing_policy,
            folds: s.folds,
            occupation_depth: s.occupation_depth,
            reference_quarter: s.reference_quarter,
            bias_threshold_sd: s.bias_threshold_sd,
            wage_split_quantile: s.wage_split_quantile,
            robustness_noise: s.robustness_noise,
            synth_occupations: g.occupations,
            synth_minors: g.minors_per_occupation,
            synth_tasks: g.tasks,
            synth_workers: g.workers,
            synth_areas: g.areas,
            synth_months: g.months,
            synth_wave_2017_share: g.wave_2017_share,
            synth_missing_rate: g.missing_rate,
        }
    }
}

/// Flag values that replace file values when given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub omega: Option<f64>,
    pub backend: Option<Backend>,
    pub runs: Option<u32>,
    pub threshold: Option<u32>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, over: &Overrides) -> Result<Self, String> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => Self::default(),
        };
        if let Some(v) = &over.out {
            cfg.out = v.clone();
        }
        if let Some(v) = over.seed {
            cfg.seed = v;
        }
        if let Some(v) = over.omega {
            cfg.omega = v;
        }
        if let Some(v) = over.backend {
            cfg.backend = v;
        }
        if let Some(v) = over.runs {
            cfg.runs = v;
        }
        if let Some(v) = over.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = over.jobs {
            cfg.jobs = v;
        }
        Ok(cfg)
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.corpus_dir.clone().unwrap_or_else(|| self.out.join("corpus"))
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out.join(stage)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.out.join("cache")
    }

    /// Corpus file locations. Ratings come from `ratings` if set, then from
    /// an earlier `rate` run, then from the corpus directory.
    pub fn corpus_paths(&self) -> CorpusPaths {
        let mut p = CorpusPaths::in_dir(&self.corpus_dir());
        let set = |slot: &mut PathBuf, v: &Option<PathBuf>| {
            if let Some(v) = v {
                *slot = v.clone();
            }
        };
        set(&mut p.tasks, &self.tasks);
        set(&mut p.vignettes, &self.vignettes);
        let opt = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        opt(&mut p.survey, &self.survey);
        opt(&mut p.vacancies, &self.vacancies);
        opt(&mut p.rivals, &self.rivals);
        opt(&mut p.truth, &self.truth);
        let rated = self.stage_dir("ratings").join("ratings.csv");
        if self.ratings.is_some() {
            opt(&mut p.ratings, &self.ratings);
        } else if rated.exists() {
            p.ratings = Some(rated);
        }
        p
    }

    pub fn na_policy(&self) -> NaPolicy {
        match self.na_importance {
            NaImportance::Absent => NaPolicy::Absent,
            NaImportance::Zero => NaPolicy::Zero,
        }
    }

    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            endpoint: self.endpoint.clone(),
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            runs_per_cell: self.runs,
            max_parallel: self.jobs,
            max_attempts: self.max_attempts,
            backoff_ms: self.backoff_ms,
            timeout_secs: self.timeout_secs,
            api_key_env: self.api_key_env.clone(),
        }
    }

    pub fn prompt(&self) -> Result<PromptSpec, String> {
        let mut spec = match &self.prompt_dir {
            Some(dir) => PromptSpec::from_dir(dir, &self.prompt_id).map_err(|e| e.to_string())?,
            None => PromptSpec { prompt_id: self.prompt_id.clone(), ..PromptSpec::default() },
        };
        spec.threshold_pct = self.threshold;
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    pub fn study_params(&self) -> StudyParams {
        StudyParams {
            omega: self.omega,
            exposure_cut: self.exposure_cut,
            high_percentile: self.high_percentile,
            min_n: self.min_n,
            missing_policy: self.missing_policy,
            seed: self.seed,
            folds: self.folds,
            occupation_depth: self.occupation_depth,
            reference_quarter: self.reference_quarter.clone(),
            bias_threshold_sd: self.bias_threshold_sd,
            wage_split_quantile: self.wage_split_quantile,
            robustness_noise: self.robustness_noise,
            planted: None,
        }
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.seed,
            occupations: self.synth_occupations,
            minors_per_occupation: self.synth_minors,
            tasks: self.synth_tasks,
            workers: self.synth_workers,
            areas: self.synth_areas,
            months: self.synth_months,
            wave_2017_share: self.synth_wave_2017_share,
            missing_rate: self.synth_missing_rate,
            runs: self.runs,
            rater_noise: self.mock_noise,
            ..SyntheticConfig::default()
        }
    }

    /// Every problem that would otherwise stop a later stage, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.omega) {
            out.push(format!("omega {} outside [0, 1]", self.omega));
        }
        if !(0.0..=1.0).contains(&self.exposure_cut) {
            out.push(format!("exposure_cut {} outside [0, 1]", self.exposure_cut));
        }
        if self.min_n == 0 {
            out.push("min_n must be at least 1".into());
        }
        if ![25, 50].contains(&self.threshold) {
            out.push(format!("threshold must be 25 or 50, got {}", self.threshold));
        }
        if !(self.mock_noise >= 0.0 && self.mock_noise.is_finite()) {
            out.push(format!("mock_noise {} must be non-negative", self.mock_noise));
        }
        if self.out.as_os_str().is_empty() {
            out.push("out is empty".into());
        }
        // omega is reported above; checking the rest with a valid one keeps later problems visible.
        if let Err(e) = (StudyParams { omega: 0.5, ..self.study_params() }).validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.backend_config().validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.synthetic().validate() {
            out.push(e.to_string());
        }
        if [25, 50].contains(&self.threshold) {
            if let Err(e) = self.prompt() {
                out.push(e);
            }
        }
        if self.api_key_env.trim().is_empty() {
            out.push("api_key_env is empty".into());
        }
        if self.backend == Backend::Http && self.endpoint.trim().is_empty() {
            out.push("endpoint is empty".into());
        }
        for (key, path) in [
            ("corpus_dir", &self.corpus_dir),
            ("tasks", &self.tasks),
            ("vignettes", &self.vignettes),
            ("ratings", &self.ratings),
            ("survey", &self.survey),
            ("vacancies", &self.vacancies),
            ("rivals", &self.rivals),
            ("truth", &self.truth),
            ("prompt_dir", &self.prompt_dir),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    out.push(format!("{key} {} does not exist", p.display()));
                }
            }
        }
        out
    }

    /// The problem a credential-less http run would hit; checked by `rate` and `validate-config`.
    pub fn credential_problem(&self) -> Option<String> {
        if self.backend != Backend::Http {
            return None;
        }
        let set = std::env::var(&self.api_key_env).map(|k| !k.trim().is_empty()).unwrap_or(false);
        (!set).then(|| format!("credential environment variable {} is not set", self.api_key_env))
    }

    /// The effective configuration as TOML, with the corpus directory resolved.
    pub fn echo(&self) -> String {
        let mut c = self.clone();
        c.corpus_dir = Some(self.corpus_dir());
        toml::to_string(&c).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig { seed: 11, omega: 0.3, ..RunConfig::default() };
        let back: RunConfig = toml::from_str(&cfg.echo()).unwrap();
        assert_eq!(back.seed, 11);
        assert_eq!(back.omega, 0.3);
        assert_eq!(back.corpus_dir, Some(PathBuf::from("out/corpus")));
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 3\nomega = 0.2\nruns = 4\n").unwrap();
        let over = Overrides { omega: Some(0.7), ..Overrides::default() };
        let cfg = RunConfig::load(Some(&path), &over).unwrap();
        assert_eq!((cfg.seed, cfg.omega, cfg.runs), (3, 0.7, 4));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "omgea = 0.5\n").unwrap();
        let err = RunConfig::load(Some(&path), &Overrides::default()).unwrap_err();
        assert!(err.contains("omgea"), "{err}");
    }

    #[test]
    fn problems_are_collected() {
        let cfg = RunConfig {
            omega: 1.5,
            threshold: 30,
            runs: 0,
            ratings: Some("/no/such/file.csv".into()),
            ..RunConfig::default()
        };
        let p = cfg.problems();
        assert!(p.iter().any(|m| m.contains("omega")), "{p:?}");
        assert!(p.iter().any(|m| m.contains("threshold")), "{p:?}");
        assert!(p.iter().any(|m| m.contains("runs_per_cell")), "{p:?}");
        assert!(p.iter().any(|m| m.contains("/no/such/file.csv")), "{p:?}");
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gaisi::corpus::{
    generate_synthetic, load_corpus, write_corpus, write_ratings, Corpus, CorpusError, LoadOptions, PlantedEffects,
};
use gaisi::index::{average_runs, occupation_stats, score_jobs, write_cells, write_scores, IndexError};
use gaisi::rater::{rate_corpus, ChatBackend, HttpBackend, MockBackend, MockRater, RaterError};
use gaisi::reliability::reliability_report;
use gaisi::studies::{run_study, write_study, Status, StudyError, StudyInputs, STUDIES};
use serde::Deserialize;

use crate::config::{Backend, RunConfig};
use crate::output::{seal_stage, write_atomic};
use crate::Failure;

pub const PLANTED_FILE: &str = "planted.json";

fn corpus_failure(e: CorpusError) -> Failure {
    Failure::Data(e.to_string())
}

fn index_failure(e: IndexError) -> Failure {
    Failure::Data(e.to_string())
}

fn rater_failure(e: RaterError) -> Failure {
    match e {
        RaterError::MissingCredential(_) | RaterError::Backend(_) | RaterError::Response(_) => {
            Failure::Backend(e.to_string())
        }
        _ => Failure::Data(e.to_string()),
    }
}

fn study_failure(e: StudyError) -> Failure {
    match e {
        StudyError::UnknownStudy(_) => Failure::Usage(e.to_string()),
        StudyError::Rater(r) => rater_failure(r),
        _ => Failure::Data(e.to_string()),
    }
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

/// Clears a stage directory so files from an earlier, different run cannot linger.
fn fresh_dir(dir: &Path) -> Result<(), Failure> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(io_failure(dir))?;
    }
    std::fs::create_dir_all(dir).map_err(io_failure(dir))
}

fn seal(cfg: &RunConfig, dir: &Path, stage: &str) -> Result<(), Failure> {
    seal_stage(cfg, dir, stage).map_err(io_failure(dir))
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("in-memory write");
    buf
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(v).expect("serialisable");
    text.push('\n');
    text.into_bytes()
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(path, bytes).map_err(io_failure(path))
}

fn load(cfg: &RunConfig, with_ratings: bool) -> Result<Corpus, Failure> {
    let mut paths = cfg.corpus_paths();
    if !with_ratings {
        paths.ratings = None;
    }
    load_corpus(&paths, LoadOptions { na_policy: cfg.na_policy() }).map_err(corpus_failure)
}

pub fn check_study_name(name: &str) -> Result<(), Failure> {
    if name == "all" || STUDIES.contains(&name) {
        Ok(())
    } else {
        Err(study_failure(StudyError::UnknownStudy(name.to_string())))
    }
}

pub fn validate_config(cfg: &RunConfig, mut problems: Vec<String>) -> Result<(), Failure> {
    problems.extend(cfg.credential_problem());
    if problems.is_empty() {
        print!("{}", cfg.echo());
        println!("# config ok");
        Ok(())
    } else {
        Err(Failure::Data(format!("invalid config:\n  {}", problems.join("\n  "))))
    }
}

pub fn synth(cfg: &RunConfig) -> Result<(), Failure> {
    let scfg = cfg.synthetic();
    let corpus = generate_synthetic(&scfg).map_err(corpus_failure)?;
    let dir = cfg.corpus_dir();
    if cfg.corpus_dir.is_none() {
        fresh_dir(&dir)?;
    }
    write_corpus(&corpus, &dir).map_err(corpus_failure)?;
    write(&dir.join(PLANTED_FILE), &json_bytes(&scfg.effects))?;
    seal(cfg, &dir, "corpus")?;
    println!(
        "synth: {} tasks, {} occupations, {} workers, {} panel cells -> {}",
        corpus.tasks.len(),
        corpus.vignettes.len(),
        corpus.jobs.len(),
        corpus.panel.len(),
        dir.display()
    );
    Ok(())
}

pub fn rate(cfg: &RunConfig) -> Result<(), Failure> {
    if let Some(p) = cfg.credential_problem() {
        return Err(Failure::Backend(p));
    }
    let corpus = load(cfg, false)?;
    let spec = cfg.prompt().map_err(Failure::Data)?;
    let bcfg = cfg.backend_config();
    let backend: Box<dyn ChatBackend> = match cfg.backend {
        Backend::Mock => {
            Box::new(MockBackend::new(MockRater::new(cfg.seed, cfg.mock_noise).with_truth(corpus.truth.clone())))
        }
        Backend::Http => Box::new(HttpBackend::from_config(&bcfg).map_err(rater_failure)?),
    };
    let cache = cfg.cache.then(|| cfg.cache_dir());
    let outcome = rate_corpus(backend.as_ref(), &bcfg, &spec, &corpus.vignettes, &corpus.tasks, cache.as_deref())
        .map_err(rater_failure)?;
    let dir = cfg.stage_dir("ratings");
    fresh_dir(&dir)?;
    write(&dir.join("ratings.csv"), &to_bytes(|b| write_ratings(b, &outcome.records)))?;
    let mut failures = Vec::new();
    for f in &outcome.failures {
        failures.extend(serde_json::to_vec(f).expect("serialisable"));
        failures.push(b'\n');
    }
    write(&dir.join("failures.jsonl"), &failures)?;
    seal(cfg, &dir, "ratings")?;
    eprintln!(
        "rate: {} records, {} failed requests, {} backend calls, {} cache hits",
        outcome.records.len(),
        outcome.failures.len(),
        outcome.backend_calls,
        outcome.cache_hits
    );
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Backend(format!(
            "{} requests failed after retries; see {}",
            outcome.failures.len(),
            dir.join("failures.jsonl").display()
        )))
    }
}

fn rated(cfg: &RunConfig) -> Result<Corpus, Failure> {
    let corpus = load(cfg, true)?;
    if corpus.ratings.is_empty() {
        return Err(Failure::Data("no ratings found; run `rate` or set `ratings`".into()));
    }
    Ok(corpus)
}

pub fn index(cfg: &RunConfig) -> Result<(), Failure> {
    let corpus = rated(cfg)?;
    let cells = average_runs(&corpus.ratings).map_err(index_failure)?;
    let scores = score_jobs(&corpus.jobs, &cells, cfg.missing_policy, cfg.omega).map_err(index_failure)?;
    let dir = cfg.stage_dir("index");
    fresh_dir(&dir)?;
    write(&dir.join("cells.csv"), &to_bytes(|b| write_cells(b, &cells)))?;
    write(&dir.join("scores.csv"), &to_bytes(|b| write_scores(b, &scores.scores)))?;
    let excluded: Vec<BTreeMap<&str, &str>> = scores
        .excluded
        .iter()
        .map(|(w, why)| BTreeMap::from([("worker_id", w.as_str()), ("reason", why.as_str())]))
        .collect();
    write(&dir.join("excluded.json"), &json_bytes(&excluded))?;
    if !scores.scores.is_empty() {
        let stats =
            occupation_stats(&scores.scores, &corpus.jobs, cfg.occupation_depth, cfg.min_n, cfg.high_percentile)
                .map_err(index_failure)?;
        write(&dir.join("occupations.json"), &json_bytes(&stats.occupations))?;
    }
    seal(cfg, &dir, "index")?;
    println!(
        "index: {} cells, {} workers scored, {} excluded -> {}",
        cells.len(),
        scores.scores.len(),
        scores.excluded.len(),
        dir.display()
    );
    Ok(())
}

pub fn reliability(cfg: &RunConfig) -> Result<(), Failure> {
    let corpus = rated(cfg)?;
    let report = reliability_report(&corpus.ratings).map_err(|e| Failure::Data(e.to_string()))?;
    let dir = cfg.stage_dir("reliability");
    fresh_dir(&dir)?;
    write(&dir.join("reliability.json"), &json_bytes(&report))?;
    seal(cfg, &dir, "reliability")?;
    for l in &report.levels {
        let show = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
        println!("{}: ICC(A,1) {} ICC(A,k) {}", l.level, show(l.icc_single), show(l.icc_average));
    }
    Ok(())
}

fn planted(cfg: &RunConfig) -> Result<Option<PlantedEffects>, Failure> {
    let path = cfg.corpus_dir().join(PLANTED_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(io_failure(&path))?;
    serde_json::from_str(&text).map(Some).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn study(cfg: &RunConfig, name: &str) -> Result<(), Failure> {
    let names: Vec<&str> = if name == "all" { STUDIES.to_vec() } else { vec![name] };
    let corpus = rated(cfg)?;
    let params = gaisi::studies::StudyParams { planted: planted(cfg)?, ..cfg.study_params() };
    let inputs = StudyInputs::new(&corpus, params).map_err(study_failure)?;
    let mut failed = Vec::new();
    for n in names {
        let result = run_study(n, &inputs).map_err(study_failure)?;
        let dir = cfg.stage_dir("studies").join(n);
        fresh_dir(&dir)?;
        write_study(&dir, &result).map_err(study_failure)?;
        seal(cfg, &dir, n)?;
        let bad = result.failed();
        println!("{n}: {} expectations, {} failed", result.expectations.len(), bad.len());
        failed.extend(bad.iter().map(|e| format!("{n}/{}: {}", e.name, e.detail)));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Expectation(format!("failed expectations:\n  {}", failed.join("\n  "))))
    }
}

#[derive(Deserialize)]
struct ExpectationDoc {
    name: String,
    detail: String,
    status: Status,
}

#[derive(Deserialize)]
struct StudyDoc {
    study: String,
    expectations: Vec<ExpectationDoc>,
    #[serde(default)]
    notes: Vec<String>,
}

fn read_studies(dir: &Path) -> Result<Vec<StudyDoc>, Failure> {
    let mut found: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(rd) => {
            rd.filter_map(Result::ok).map(|e| e.path().join("study_result.json")).filter(|p| p.exists()).collect()
        }
        Err(_) => Vec::new(),
    };
    let rank = |p: &PathBuf| {
        let name = p.parent().and_then(Path::file_name).map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        (STUDIES.iter().position(|s| *s == name).unwrap_or(STUDIES.len()), name)
    };
    found.sort_by_key(rank);
    found
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(io_failure(p))?;
            serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "FAIL",
        Status::NotApplicable => "n/a",
    }
}

/// Markdown summary of every study result under `out/studies`.
fn render_report(cfg: &RunConfig, docs: &[StudyDoc]) -> String {
    let mut md = String::from("# Exposure pipeline report\n\n");
    let backend = match cfg.backend {
        Backend::Mock => "mock",
        Backend::Http => "http",
    };
    md.push_str(&format!("Seed {}, omega {}, {backend} backend.\n\n", cfg.seed, cfg.omega));
    md.push_str("| study | pass | fail | n/a | verdict |\n|---|---:|---:|---:|---|\n");
    for d in docs {
        let count = |s: Status| d.expectations.iter().filter(|e| e.status == s).count();
        let fail = count(Status::Fail);
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            d.study,
            count(Status::Pass),
            fail,
            count(Status::NotApplicable),
            if fail == 0 { "pass" } else { "FAIL" }
        ));
    }
    for d in docs {
        md.push_str(&format!("\n## {}\n\n", d.study));
        if d.expectations.is_empty() {
            md.push_str("No expectations.\n");
        }
        for e in &d.expectations {
            md.push_str(&format!("- **{}** `{}`: {}\n", status_word(e.status), e.name, e.detail));
        }
        if !d.notes.is_empty() {
            md.push('\n');
            for n in &d.notes {
                md.push_str(&format!("> {n}\n"));
            }
        }
    }
    md
}

pub fn report(cfg: &RunConfig) -> Result<(), Failure> {
    let docs = read_studies(&cfg.stage_dir("studies"))?;
    if docs.is_empty() {
        return Err(Failure::Data("no study results found; run `study <name>` first".into()));
    }
    let md = render_report(cfg, &docs);
    let dir = cfg.stage_dir("report");
    fresh_dir(&dir)?;
    write(&dir.join("report.md"), md.as_bytes())?;
    seal(cfg, &dir, "report")?;
    let failed: Vec<String> = docs
        .iter()
        .flat_map(|d| {
            d.expectations.iter().filter(|e| e.status == Status::Fail).map(move |e| format!("{}/{}", d.study, e.name))
        })
        .collect();
    println!("report: {} studies -> {}", docs.len(), dir.join("report.md").display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Expectation(format!("failed expectations: {}", failed.join(", "))))
    }
}

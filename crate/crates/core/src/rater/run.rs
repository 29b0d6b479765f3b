use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{BackendConfig, ChatBackend, RateRequest};
use super::parse::{parse_response, ParsedResponse};
use super::prompt::{render_prompt, PromptSpec};
use super::RaterError;
use crate::corpus::{OccupationVignette, RatingRecord, TaskItem};

/// Content hash identifying one request: model, run and both prompt texts.
pub fn cache_key(model_id: &str, run_index: u32, system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    for part in [model_id.as_bytes(), &run_index.to_le_bytes(), system.as_bytes(), user.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRequest {
    pub occ_code: String,
    pub category: String,
    pub task_ids: Vec<String>,
    pub run_index: u32,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateOutcome {
    /// Sorted by occupation, task and run.
    pub records: Vec<RatingRecord>,
    pub failures: Vec<FailedRequest>,
    pub backend_calls: usize,
    pub cache_hits: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    model_id: String,
    run_index: u32,
    occ_code: String,
    category: String,
    response: String,
}

fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(&key[..2]).join(format!("{key}.json"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RaterError + '_ {
    move |source| RaterError::Io { path: path.to_path_buf(), source }
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so an interrupted run never leaves a truncated entry.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RaterError> {
    let dir = path.parent().expect("cache paths have a parent");
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(
        ".{}.{}.{:?}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("entry"),
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_cached(dir: &Path, key: &str, expected: &[String]) -> Option<(String, ParsedResponse)> {
    let text = std::fs::read_to_string(cache_path(dir, key)).ok()?;
    let entry: CacheEntry = serde_json::from_str(&text).ok()?;
    if entry.key != key {
        return None;
    }
    let parsed = parse_response(&entry.response, expected).ok()?;
    Some((entry.response, parsed))
}

struct Job {
    occ: String,
    category: String,
    tasks: Vec<TaskItem>,
    run_index: u32,
}

/// Rates every (occupation, category) prompt `runs_per_cell` times.
///
/// Requests run on up to `max_parallel` threads. With a cache directory,
/// responses are stored under their [`cache_key`] and reused on later runs,
/// and failures after `max_attempts` are listed in `manifest.jsonl` there.
/// A failed request drops only its own records.
pub fn rate_corpus(
    backend: &dyn ChatBackend,
    config: &BackendConfig,
    spec: &PromptSpec,
    vignettes: &[OccupationVignette],
    tasks: &[TaskItem],
    cache_dir: Option<&Path>,
) -> Result<RateOutcome, RaterError> {
    config.validate()?;
    spec.validate()?;
    let mut categories: Vec<(String, Vec<TaskItem>)> = Vec::new();
    for t in tasks {
        match categories.iter_mut().find(|(c, _)| *c == t.category) {
            Some((_, v)) => v.push(t.clone()),
            None => categories.push((t.category.clone(), vec![t.clone()])),
        }
    }
    let mut jobs = Vec::new();
    for v in vignettes {
        for (cat, cat_tasks) in &categories {
            for run in 1..=config.runs_per_cell {
                jobs.push(Job {
                    occ: v.occ_code.clone(),
                    category: cat.clone(),
                    tasks: cat_tasks.clone(),
                    run_index: run,
                });
            }
        }
    }
    // Render everything up front so template errors surface before any request.
    let mut rendered = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let vignette = vignettes.iter().find(|v| v.occ_code == job.occ).expect("job built from vignettes");
        rendered.push(render_prompt(spec, vignette, &job.category, &job.tasks)?);
    }

    let next = AtomicUsize::new(0);
    let calls = AtomicUsize::new(0);
    let hits = AtomicUsize::new(0);
    let results: Mutex<Vec<RatingRecord>> = Mutex::new(Vec::new());
    let failures: Mutex<Vec<FailedRequest>> = Mutex::new(Vec::new());
    let fatal: Mutex<Option<RaterError>> = Mutex::new(None);

    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= jobs.len() || fatal.lock().expect("lock").is_some() {
            break;
        }
        let job = &jobs[i];
        let prompt = &rendered[i];
        let ids: Vec<String> = job.tasks.iter().map(|t| t.task_id.clone()).collect();
        let key = cache_key(&config.model_id, job.run_index, &prompt.system, &prompt.user);
        let mut parsed = cache_dir.and_then(|d| read_cached(d, &key, &ids)).map(|(_, p)| p);
        if parsed.is_some() {
            hits.fetch_add(1, Ordering::SeqCst);
        }
        let mut last_error = String::new();
        let mut attempts = 0;
        while parsed.is_none() && attempts < config.max_attempts {
            if attempts > 0 {
                let delay = config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                std::thread::sleep(std::time::Duration::from_millis(delay));
            }
            attempts += 1;
            let request = RateRequest {
                occ_code: job.occ.clone(),
                category: job.category.clone(),
                task_ids: ids.clone(),
                run_index: job.run_index,
                system: prompt.system.clone(),
                user: prompt.user.clone(),
                model_id: config.model_id.clone(),
                temperature: config.temperature,
            };
            calls.fetch_add(1, Ordering::SeqCst);
            match backend.complete(&request) {
                Ok(text) => match parse_response(&text, &ids) {
                    Ok(p) => {
                        if let Some(dir) = cache_dir {
                            let entry = CacheEntry {
                                key: key.clone(),
                                model_id: config.model_id.clone(),
                                run_index: job.run_index,
                                occ_code: job.occ.clone(),
                                category: job.category.clone(),
                                response: text,
                            };
                            let bytes = serde_json::to_vec_pretty(&entry).expect("serialisable");
                            if let Err(e) = write_atomic(&cache_path(dir, &key), &bytes) {
                                fatal.lock().expect("lock").get_or_insert(e);
                                return;
                            }
                        }
                        parsed = Some(p);
                    }
                    Err(e) => last_error = format!("unparseable response: {e}"),
                },
                Err(e) => {
                    last_error = e.message.clone();
                    if !e.retryable {
                        break;
                    }
                }
            }
        }
        match parsed {
            Some(p) => {
                let mut out = results.lock().expect("lock");
                for id in &ids {
                    out.push(RatingRecord {
                        occ_code: job.occ.clone(),
                        task_id: id.clone(),
                        run_index: job.run_index,
                        distribution: p.distributions[id],
                        model_id: config.model_id.clone(),
                        prompt_id: spec.prompt_id.clone(),
                        temperature: config.temperature,
                        justification: p.justifications[id].clone(),
                    });
                }
            }
            None => failures.lock().expect("lock").push(FailedRequest {
                occ_code: job.occ.clone(),
                category: job.category.clone(),
                task_ids: ids,
                run_index: job.run_index,
                attempts,
                error: last_error,
            }),
        }
    };
    std::thread::scope(|s| {
        for _ in 0..config.max_parallel.min(jobs.len().max(1)) {
            s.spawn(worker);
        }
    });
    if let Some(e) = fatal.into_inner().expect("lock") {
        return Err(e);
    }
    let mut records = results.into_inner().expect("lock");
    records.sort_by(|a, b| (&a.occ_code, &a.task_id, a.run_index).cmp(&(&b.occ_code, &b.task_id, b.run_index)));
    let mut failures = failures.into_inner().expect("lock");
    failures.sort_by(|a, b| (&a.occ_code, &a.category, a.run_index).cmp(&(&b.occ_code, &b.category, b.run_index)));
    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("manifest.jsonl");
        let mut f = std::fs::File::create(&path).map_err(io_err(&path))?;
        for fail in &failures {
            writeln!(f, "{}", serde_json::to_string(fail).expect("serialisable")).map_err(io_err(&path))?;
        }
    }
    Ok(RateOutcome { records, failures, backend_calls: calls.into_inner(), cache_hits: hits.into_inner() })
}

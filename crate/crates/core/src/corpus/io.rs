use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use csv::StringRecord;

use super::types::*;
use super::{Corpus, CorpusError};

pub const TASKS_FILE: &str = "tasks.csv";
pub const VIGNETTES_FILE: &str = "vignettes.jsonl";
pub const RATINGS_FILE: &str = "ratings.csv";
pub const SURVEY_FILE: &str = "survey.csv";
pub const VACANCIES_FILE: &str = "vacancies.csv";
pub const RIVALS_FILE: &str = "rivals.csv";
pub const TRUTH_FILE: &str = "cells_true.csv";

/// Survey columns that are not task importances, in canonical order.
pub const SURVEY_FIXED_COLUMNS: [&str; 16] = [
    "worker_id",
    "wave",
    "occ_code",
    "survey_weight",
    "female",
    "age",
    "ethnic_minority",
    "education",
    "region",
    "industry",
    "full_time",
    "self_employed",
    "computer_use",
    "ai_use",
    "log_hourly_pay",
    "usual_hours",
];

const NA: &str = "NA";

/// How an `NA` importance cell is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NaPolicy {
    /// The task was not asked; it is left out of the worker's profile.
    #[default]
    Absent,
    /// The respondent's non-answer counts as "not at all important".
    Zero,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub na_policy: NaPolicy,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusPaths {
    pub tasks: PathBuf,
    pub vignettes: PathBuf,
    pub ratings: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    pub vacancies: Option<PathBuf>,
    pub rivals: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

impl CorpusPaths {
    /// Standard file names inside `dir`; optional files are picked up if present.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            tasks: dir.join(TASKS_FILE),
            vignettes: dir.join(VIGNETTES_FILE),
            ratings: opt(RATINGS_FILE),
            survey: opt(SURVEY_FILE),
            vacancies: opt(VACANCIES_FILE),
            rivals: opt(RIVALS_FILE),
            truth: opt(TRUTH_FILE),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path).map(BufReader::new).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

/// Loads and cross-validates every file named in `paths`.
pub fn load_corpus(paths: &CorpusPaths, opts: LoadOptions) -> Result<Corpus, CorpusError> {
    let tasks = read_tasks(open(&paths.tasks)?, &file_label(&paths.tasks))?;
    let vignettes = read_vignettes(open(&paths.vignettes)?, &file_label(&paths.vignettes))?;
    let task_ids: HashSet<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    let occ_codes: HashSet<&str> = vignettes.iter().map(|v| v.occ_code.as_str()).collect();

    let check_cells = |file: &str, cells: &mut dyn Iterator<Item = (&str, &str)>| {
        let mut offenders = BTreeSet::new();
        for (occ, task) in cells {
            if !occ_codes.contains(occ) {
                offenders.insert(format!("occ_code {occ}"));
            }
            if !task_ids.contains(task) {
                offenders.insert(format!("task_id {task}"));
            }
        }
        if offenders.is_empty() {
            Ok(())
        } else {
            Err(CorpusError::Dangling { file: file.to_string(), offenders: offenders.into_iter().collect() })
        }
    };

    let ratings = match &paths.ratings {
        Some(p) => {
            let r = read_ratings(open(p)?, &file_label(p))?;
            check_cells(&file_label(p), &mut r.iter().map(|r| (r.occ_code.as_str(), r.task_id.as_str())))?;
            r
        }
        None => Vec::new(),
    };
    let truth = match &paths.truth {
        Some(p) => {
            let t = read_truth(open(p)?, &file_label(p))?;
            check_cells(&file_label(p), &mut t.keys().map(|(o, k)| (o.as_str(), k.as_str())))?;
            t
        }
        None => BTreeMap::new(),
    };
    let task_list: Vec<String> = tasks.iter().map(|t| t.task_id.clone()).collect();
    let jobs = match &paths.survey {
        Some(p) => {
            let jobs = read_survey(open(p)?, &file_label(p), &task_list, opts.na_policy)?;
            let depth = vignettes.first().map(|v| v.occ_code.len()).unwrap_or(0);
            let offenders: BTreeSet<String> = jobs
                .iter()
                .filter(|j| !j.occ_code.view(depth).is_some_and(|v| occ_codes.contains(v)))
                .map(|j| format!("worker {} occ_code {}", j.worker_id, j.occ_code))
                .collect();
            if !offenders.is_empty() {
                return Err(CorpusError::Dangling { file: file_label(p), offenders: offenders.into_iter().collect() });
            }
            jobs
        }
        None => Vec::new(),
    };
    let panel = match &paths.vacancies {
        Some(p) => read_vacancies(open(p)?, &file_label(p))?,
        None => Vec::new(),
    };
    let rivals = match &paths.rivals {
        Some(p) => Some(read_rivals(open(p)?, &file_label(p))?),
        None => None,
    };
    Ok(Corpus { tasks, vignettes, ratings, jobs, panel, rivals, truth })
}

/// Writes every non-empty component of the corpus into `dir` under the standard names.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    for (name, bytes) in canonical_files(corpus) {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}

pub(super) fn canonical_files(corpus: &Corpus) -> Vec<(&'static str, Vec<u8>)> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    write_tasks(&mut buf, &corpus.tasks).expect("in-memory write");
    out.push((TASKS_FILE, std::mem::take(&mut buf)));
    write_vignettes(&mut buf, &corpus.vignettes).expect("in-memory write");
    out.push((VIGNETTES_FILE, std::mem::take(&mut buf)));
    if !corpus.ratings.is_empty() {
        write_ratings(&mut buf, &corpus.ratings).expect("in-memory write");
        out.push((RATINGS_FILE, std::mem::take(&mut buf)));
    }
    if !corpus.jobs.is_empty() {
        let task_ids: Vec<String> = corpus.tasks.iter().map(|t| t.task_id.clone()).collect();
        write_survey(&mut buf, &corpus.jobs, &task_ids).expect("in-memory write");
        out.push((SURVEY_FILE, std::mem::take(&mut buf)));
    }
    if !corpus.panel.is_empty() {
        write_vacancies(&mut buf, &corpus.panel).expect("in-memory write");
        out.push((VACANCIES_FILE, std::mem::take(&mut buf)));
    }
    if let Some(r) = &corpus.rivals {
        write_rivals(&mut buf, r).expect("in-memory write");
        out.push((RIVALS_FILE, std::mem::take(&mut buf)));
    }
    if !corpus.truth.is_empty() {
        write_truth(&mut buf, &corpus.truth).expect("in-memory write");
        out.push((TRUTH_FILE, std::mem::take(&mut buf)));
    }
    out
}

/// Column-name lookup over a CSV header.
struct Header {
    file: String,
    index: HashMap<String, usize>,
}

impl Header {
    fn new<R: Read>(rdr: &mut csv::Reader<R>, file: &str, required: &[&str]) -> Result<Self, CorpusError> {
        let headers = rdr.headers().map_err(|e| csv_err(file, e))?.clone();
        let index: HashMap<String, usize> =
            headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
        let missing: Vec<&str> = required.iter().copied().filter(|c| !index.contains_key(*c)).collect();
        if !missing.is_empty() {
            return Err(CorpusError::Malformed {
                file: file.to_string(),
                line: 1,
                message: format!("missing required columns: {}", missing.join(", ")),
            });
        }
        Ok(Self { file: file.to_string(), index })
    }

    fn get<'r>(&self, rec: &'r StringRecord, col: &str) -> Option<&'r str> {
        self.index.get(col).and_then(|&i| rec.get(i))
    }

    fn req<'r>(&self, rec: &'r StringRecord, col: &str) -> Result<&'r str, CorpusError> {
        match self.get(rec, col).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.malformed(rec, format!("empty value in column {col}"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, rec: &StringRecord, col: &str) -> Result<T, CorpusError> {
        let raw = self.req(rec, col)?;
        raw.parse().map_err(|_| self.malformed(rec, format!("cannot parse {raw:?} in column {col}")))
    }

    /// `NA` or empty maps to `None`.
    fn opt<T: std::str::FromStr>(&self, rec: &StringRecord, col: &str) -> Result<Option<T>, CorpusError> {
        match self.get(rec, col).map(str::trim) {
            None | Some("") | Some(NA) => Ok(None),
            Some(raw) => {
                raw.parse().map(Some).map_err(|_| self.malformed(rec, format!("cannot parse {raw:?} in column {col}")))
            }
        }
    }

    fn opt_bool(&self, rec: &StringRecord, col: &str) -> Result<Option<bool>, CorpusError> {
        match self.get(rec, col).map(str::trim) {
            None | Some("") | Some(NA) => Ok(None),
            Some("1") | Some("true") => Ok(Some(true)),
            Some("0") | Some("false") => Ok(Some(false)),
            Some(raw) => Err(self.malformed(rec, format!("expected 0/1 in column {col}, got {raw:?}"))),
        }
    }

    fn malformed(&self, rec: &StringRecord, message: String) -> CorpusError {
        CorpusError::Malformed { file: self.file.clone(), line: line_of(rec), message }
    }
}

fn line_of(rec: &StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_err(file: &str, e: csv::Error) -> CorpusError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    CorpusError::Malformed { file: file.to_string(), line, message: e.to_string() }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(r)
}

fn records<R: Read>(rdr: &mut csv::Reader<R>, file: &str) -> Result<Vec<StringRecord>, CorpusError> {
    rdr.records().map(|r| r.map_err(|e| csv_err(file, e))).collect()
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| NA.to_string())
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|b| if b { "1" } else { "0" }.to_string()).unwrap_or_else(|| NA.to_string())
}

fn opt_str(v: &Option<String>) -> String {
    v.clone().unwrap_or_else(|| NA.to_string())
}

fn write_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

pub fn read_tasks<R: Read>(r: R, file: &str) -> Result<Vec<TaskItem>, CorpusError> {
    let mut rdr = reader(r);
    let h = Header::new(&mut rdr, file, &["task_id", "category", "text"])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(&mut rdr, file)? {
        let task = TaskItem {
            task_id: h.req(&rec, "task_id")?.to_string(),
            category: h.req(&rec, "category")?.to_string(),
            text: h.req(&rec, "text")?.to_string(),
        };
        if !is_category(&task.category) {
            return Err(h.malformed(&rec, format!("unknown task category {:?}", task.category)));
        }
        if !seen.insert(task.task_id.clone()) {
            return Err(CorpusError::Duplicate { file: file.to_string(), key: task.task_id });
        }
        out.push(task);
    }
    Ok(out)
}

pub fn write_tasks<W: Write>(w: W, tasks: &[TaskItem]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["task_id", "category", "text"]).map_err(write_err)?;
    for t in tasks {
        wtr.write_record([&t.task_id, &t.category, &t.text]).map_err(write_err)?;
    }
    wtr.flush()
}

pub fn read_vignettes<R: Read>(r: R, file: &str) -> Result<Vec<OccupationVignette>, CorpusError> {
    let mut out: Vec<OccupationVignette> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let lineno = i as u64 + 1;
        let line =
            line.map_err(|e| CorpusError::Malformed { file: file.into(), line: lineno, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let v: OccupationVignette = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            file: file.into(),
            line: lineno,
            message: e.to_string(),
        })?;
        OccCode::new(&v.occ_code)?;
        if v.narrative.trim().is_empty() {
            return Err(CorpusError::Malformed {
                file: file.into(),
                line: lineno,
                message: format!("empty narrative for occupation {}", v.occ_code),
            });
        }
        if !seen.insert(v.occ_code.clone()) {
            return Err(CorpusError::Duplicate { file: file.into(), key: v.occ_code });
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_vignettes<W: Write>(mut w: W, vignettes: &[OccupationVignette]) -> std::io::Result<()> {
    for v in vignettes {
        serde_json::to_writer(&mut w, v)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

const RATING_COLUMNS: [&str; 11] = [
    "occ_code",
    "task_id",
    "run_index",
    "p_e0",
    "p_e1",
    "p_e2",
    "p_e3",
    "model_id",
    "prompt_id",
    "temperature",
    "justification",
];

pub fn read_ratings<R: Read>(r: R, file: &str) -> Result<Vec<RatingRecord>, CorpusError> {
    let mut rdr = reader(r);
    let h = Header::new(&mut rdr, file, &RATING_COLUMNS[..10])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(&mut rdr, file)? {
        let occ_code = h.req(&rec, "occ_code")?.to_string();
        let task_id = h.req(&rec, "task_id")?.to_string();
        let run_index: u32 = h.parse(&rec, "run_index")?;
        if run_index < 1 {
            return Err(h.malformed(&rec, "run_index must be >= 1".into()));
        }
        let p = [h.parse(&rec, "p_e0")?, h.parse(&rec, "p_e1")?, h.parse(&rec, "p_e2")?, h.parse(&rec, "p_e3")?];
        let distribution = ExposureDistribution::new(p).map_err(|fault| CorpusError::RejectedRow {
            file: file.to_string(),
            line: line_of(&rec),
            cell: format!("{occ_code}/{task_id} run {run_index}"),
            reason: fault.to_string(),
        })?;
        let record = RatingRecord {
            occ_code,
            task_id,
            run_index,
            distribution,
            model_id: h.req(&rec, "model_id")?.to_string(),
            prompt_id: h.req(&rec, "prompt_id")?.to_string(),
            temperature: h.parse(&rec, "temperature")?,
            justification: h.get(&rec, "justification").unwrap_or("").to_string(),
        };
        let key = format!(
            "{}/{}/{}/{}/{}",
            record.occ_code, record.task_id, record.run_index, record.model_id, record.prompt_id
        );
        if !seen.insert(key.clone()) {
            return Err(CorpusError::Duplicate { file: file.to_string(), key });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_ratings<W: Write>(w: W, ratings: &[RatingRecord]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(RATING_COLUMNS).map_err(write_err)?;
    for r in ratings {
        let p = r.distribution.probs();
        wtr.write_record([
            r.occ_code.clone(),
            r.task_id.clone(),
            r.run_index.to_string(),
            num(p[0]),
            num(p[1]),
            num(p[2]),
            num(p[3]),
            r.model_id.clone(),
            r.prompt_id.clone(),
            num(r.temperature),
            r.justification.clone(),
        ])
        .map_err(write_err)?;
    }
    wtr.flush()
}

pub fn read_survey<R: Read>(
    r: R,
    file: &str,
    task_ids: &[String],
    na_policy: NaPolicy,
) -> Result<Vec<JobRecord>, CorpusError> {
    let mut rdr = reader(r);
    let h = Header::new(&mut rdr, file, &["worker_id", "wave", "occ_code", "survey_weight"])?;
    let known: HashSet<&str> =
        SURVEY_FIXED_COLUMNS.iter().copied().chain(task_ids.iter().map(String::as_str)).collect();
    let mut unknown: Vec<&String> = h.index.keys().filter(|c| !known.contains(c.as_str())).collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(CorpusError::Dangling {
            file: file.to_string(),
            offenders: unknown.into_iter().map(|c| format!("column {c}")).collect(),
        });
    }
    let task_cols: Vec<&String> = task_ids.iter().filter(|t| h.index.contains_key(t.as_str())).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(&mut rdr, file)? {
        let worker_id = h.req(&rec, "worker_id")?.to_string();
        let wave_raw = h.req(&rec, "wave")?;
        let wave = Wave::parse(wave_raw).ok_or_else(|| h.malformed(&rec, format!("unknown wave {wave_raw:?}")))?;
        let occ_code = OccCode::new(h.req(&rec, "occ_code")?).map_err(|e| h.malformed(&rec, e.to_string()))?;
        let survey_weight: f64 = h.parse(&rec, "survey_weight")?;
        if !(survey_weight > 0.0 && survey_weight.is_finite()) {
            return Err(h.malformed(&rec, format!("survey_weight must be positive, got {survey_weight}")));
        }
        let covariates = Covariates {
            female: h.opt_bool(&rec, "female")?,
            age: h.opt(&rec, "age")?,
            ethnic_minority: h.opt_bool(&rec, "ethnic_minority")?,
            education: h.opt(&rec, "education")?,
            region: h.opt(&rec, "region")?,
            industry: h.opt(&rec, "industry")?,
            full_time: h.opt_bool(&rec, "full_time")?,
            self_employed: h.opt_bool(&rec, "self_employed")?,
            computer_use: h.opt(&rec, "computer_use")?,
        };
        let outcomes = Outcomes {
            ai_use: h.opt_bool(&rec, "ai_use")?,
            log_hourly_pay: h.opt(&rec, "log_hourly_pay")?,
            usual_hours: h.opt(&rec, "usual_hours")?,
        };
        let mut importance = BTreeMap::new();
        for t in &task_cols {
            let raw = h.get(&rec, t).unwrap_or("").trim();
            if raw.is_empty() || raw == NA {
                if na_policy == NaPolicy::Zero {
                    importance.insert((*t).clone(), Importance::NotAtAll);
                }
                continue;
            }
            let imp = Importance::parse(raw).ok_or_else(|| {
                h.malformed(&rec, format!("importance {raw:?} for task {t} is not on the five-point grid"))
            })?;
            importance.insert((*t).clone(), imp);
        }
        if !seen.insert(worker_id.clone()) {
            return Err(CorpusError::Duplicate { file: file.to_string(), key: worker_id });
        }
        out.push(JobRecord { worker_id, wave, occ_code, survey_weight, covariates, outcomes, importance });
    }
    Ok(out)
}

pub fn write_survey<W: Write>(w: W, jobs: &[JobRecord], task_ids: &[String]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let header: Vec<&str> = SURVEY_FIXED_COLUMNS.iter().copied().chain(task_ids.iter().map(String::as_str)).collect();
    wtr.write_record(&header).map_err(write_err)?;
    for j in jobs {
        let c = &j.covariates;
        let o = &j.outcomes;
        let mut row = vec![
            j.worker_id.clone(),
            j.wave.as_str().to_string(),
            j.occ_code.to_string(),
            num(j.survey_weight),
            opt_bool(c.female),
            opt_num(c.age),
            opt_bool(c.ethnic_minority),
            c.education.map(|e| e.to_string()).unwrap_or_else(|| NA.into()),
            opt_str(&c.region),
            opt_str(&c.industry),
            opt_bool(c.full_time),
            opt_bool(c.self_employed),
            opt_num(c.computer_use),
            opt_bool(o.ai_use),
            opt_num(o.log_hourly_pay),
            opt_num(o.usual_hours),
        ];
        for t in task_ids {
            row.push(j.importance.get(t).map(|i| i.as_str().to_string()).unwrap_or_else(|| NA.into()));
        }
        wtr.write_record(&row).map_err(write_err)?;
    }
    wtr.flush()
}

pub fn read_vacancies<R: Read>(r: R, file: &str) -> Result<Vec<PanelCell>, CorpusError> {
    let mut rdr = reader(r);
    let h = Header::new(&mut rdr, file, &["occ_code", "area_code", "year", "month", "count"])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(&mut rdr, file)? {
        let occ_code = OccCode::new(h.req(&rec, "occ_code")?).map_err(|e| h.malformed(&rec, e.to_string()))?;
        let area_code = h.req(&rec, "area_code")?.to_string();
        let year: i32 = h.parse(&rec, "year")?;
        let month: u32 = h.parse(&rec, "month")?;
        if !(1..=12).contains(&month) {
            return Err(h.malformed(&rec, format!("month {month} out of range")));
        }
        let vacancy_count: u64 = h.parse(&rec, "count")?;
        let period = YearMonth { year, month };
        if !seen.insert((occ_code.clone(), area_code.clone(), period)) {
            return Err(CorpusError::Duplicate {
                file: file.to_string(),
                key: format!("{occ_code}/{area_code}/{year}-{month:02}"),
            });
        }
        out.push(PanelCell { occ_code, area_code, period, vacancy_count, exposure_share: None });
    }
    Ok(out)
}

pub fn write_vacancies<W: Write>(w: W, panel: &[PanelCell]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["occ_code", "area_code", "year", "month", "count"]).map_err(write_err)?;
    for c in panel {
        wtr.write_record([
            c.occ_code.to_string(),
            c.area_code.clone(),
            c.period.year.to_string(),
            c.period.month.to_string(),
            c.vacancy_count.to_string(),
        ])
        .map_err(write_err)?;
    }
    wtr.flush()
}

pub fn read_rivals<R: Read>(r: R, file: &str) -> Result<RivalIndices, CorpusError> {
    let mut rdr = reader(r);
    let h = Header::new(&mut rdr, file, &["occ_code"])?;
    let headers = rdr.headers().map_err(|e| csv_err(file, e))?.clone();
    let names: Vec<String> = headers.iter().map(|s| s.trim().to_string()).filter(|s| s != "occ_code").collect();
    let mut values = BTreeMap::new();
    for rec in records(&mut rdr, file)? {
        let occ = OccCode::new(h.req(&rec, "occ_code")?).map_err(|e| h.malformed(&rec, e.to_string()))?;
        let row = names.iter().map(|n| h.opt::<f64>(&rec, n)).collect::<Result<Vec<_>, _>>()?;
        if values.insert(occ.to_string(), row).is_some() {
            return Err(CorpusError::Duplicate { file: file.to_string(), key: occ.to_string() });
        }
    }
    Ok(RivalIndices { names, values })
}

pub fn write_rivals<W: Write>(w: W, rivals: &RivalIndices) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["occ_code".to_string()];
    header.extend(rivals.names.iter().cloned());
    wtr.write_record(&header).map_err(write_err)?;
    for (occ, vals) in &rivals.values {
        let mut row = vec![occ.clone()];
        row.extend(vals.iter().map(|v| opt_num(*v)));
        wtr.write_record(&row).map_err(write_err)?;
    }
    wtr.flush()
}

pub fn read_truth<R: Read>(r: R, file: &str) -> Result<BTreeMap<(String, String), ExposureDistribution>, CorpusError> {
    let mut rdr = reader(r);
    let h = Header::new(&mut rdr, file, &["occ_code", "task_id", "p_e0", "p_e1", "p_e2", "p_e3"])?;
    let mut out = BTreeMap::new();
    for rec in records(&mut rdr, file)? {
        let occ = h.req(&rec, "occ_code")?.to_string();
        let task = h.req(&rec, "task_id")?.to_string();
        let p = [h.parse(&rec, "p_e0")?, h.parse(&rec, "p_e1")?, h.parse(&rec, "p_e2")?, h.parse(&rec, "p_e3")?];
        let d = ExposureDistribution::new(p).map_err(|fault| CorpusError::RejectedRow {
            file: file.to_string(),
            line: line_of(&rec),
            cell: format!("{occ}/{task}"),
            reason: fault.to_string(),
        })?;
        if out.insert((occ.clone(), task.clone()), d).is_some() {
            return Err(CorpusError::Duplicate { file: file.to_string(), key: format!("{occ}/{task}") });
        }
    }
    Ok(out)
}

pub fn write_truth<W: Write>(w: W, truth: &BTreeMap<(String, String), ExposureDistribution>) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["occ_code", "task_id", "p_e0", "p_e1", "p_e2", "p_e3"]).map_err(write_err)?;
    for ((occ, task), d) in truth {
        let p = d.probs();
        wtr.write_record([occ.clone(), task.clone(), num(p[0]), num(p[1]), num(p[2]), num(p[3])]).map_err(write_err)?;
    }
    wtr.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TASKS: &str = "task_id,category,text\nR1,Reading,Reading short documents\nR2,Reading,Reading long reports\nW1,Writing,Writing short documents\nM1,Manual,Carrying heavy loads\n";

    #[test]
    fn header_driven_column_order() {
        let shuffled = "text,task_id,category\nReading forms,R1,Reading\n";
        let t = read_tasks(shuffled.as_bytes(), "tasks.csv").unwrap();
        assert_eq!(t[0].task_id, "R1");
        assert_eq!(t[0].text, "Reading forms");
    }

    #[test]
    fn rejects_unknown_category() {
        let bad = "task_id,category,text\nX,Juggling,Juggle\n";
        assert!(matches!(read_tasks(bad.as_bytes(), "tasks.csv"), Err(CorpusError::Malformed { line: 2, .. })));
    }

    #[test]
    fn rejects_far_off_distribution_with_cell_name() {
        let csv = "occ_code,task_id,run_index,p_e0,p_e1,p_e2,p_e3,model_id,prompt_id,temperature,justification\n\
                   11,R1,1,0.5,0.2,0.2,0.0,m,p,0.2,x\n";
        match read_ratings(csv.as_bytes(), "ratings.csv") {
            Err(CorpusError::RejectedRow { cell, line, .. }) => {
                assert_eq!(cell, "11/R1 run 1");
                assert_eq!(line, 2);
            }
            other => panic!("expected rejected row, got {other:?}"),
        }
    }

    #[test]
    fn renormalises_small_deviation() {
        let csv = "occ_code,task_id,run_index,p_e0,p_e1,p_e2,p_e3,model_id,prompt_id,temperature,justification\n\
                   11,R1,1,0.4995,0.2505,0.2495,0.0,m,p,0.2,x\n";
        let r = read_ratings(csv.as_bytes(), "ratings.csv").unwrap();
        let s: f64 = r[0].distribution.probs().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn survey_importance_grid_and_na_policy() {
        let ids = vec!["R1".to_string(), "R2".to_string()];
        let csv = "worker_id,wave,occ_code,survey_weight,R1,R2\nw1,2023-24,113,1.5,0.75,NA\n";
        let absent = read_survey(csv.as_bytes(), "s.csv", &ids, NaPolicy::Absent).unwrap();
        assert_eq!(absent[0].importance.len(), 1);
        let zero = read_survey(csv.as_bytes(), "s.csv", &ids, NaPolicy::Zero).unwrap();
        assert_eq!(zero[0].importance.get("R2"), Some(&Importance::NotAtAll));

        let off_grid = "worker_id,wave,occ_code,survey_weight,R1\nw1,2017,113,1,0.6\n";
        assert!(read_survey(off_grid.as_bytes(), "s.csv", &ids, NaPolicy::Absent).is_err());
        let bad_weight = "worker_id,wave,occ_code,survey_weight,R1\nw1,2017,113,0,1\n";
        assert!(read_survey(bad_weight.as_bytes(), "s.csv", &ids, NaPolicy::Absent).is_err());
        let labels = "worker_id,wave,occ_code,survey_weight,R1\nw1,2017,113,1,Very important\n";
        let j = read_survey(labels.as_bytes(), "s.csv", &ids, NaPolicy::Absent).unwrap();
        assert_eq!(j[0].importance["R1"], Importance::Very);
    }

    #[test]
    fn survey_unknown_column_is_reported() {
        let ids = vec!["R1".to_string()];
        let csv = "worker_id,wave,occ_code,survey_weight,R9\nw1,2017,113,1,1\n";
        assert!(matches!(
            read_survey(csv.as_bytes(), "s.csv", &ids, NaPolicy::Absent),
            Err(CorpusError::Dangling { .. })
        ));
    }

    #[test]
    fn tasks_round_trip_bytes() {
        let t = read_tasks(TASKS.as_bytes(), "tasks.csv").unwrap();
        let mut out = Vec::new();
        write_tasks(&mut out, &t).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), TASKS);
    }

    #[test]
    fn duplicate_vacancy_cell() {
        let csv = "occ_code,area_code,year,month,count\n113,A1,2020,1,5\n113,A1,2020,1,6\n";
        assert!(matches!(read_vacancies(csv.as_bytes(), "v.csv"), Err(CorpusError::Duplicate { .. })));
    }
}

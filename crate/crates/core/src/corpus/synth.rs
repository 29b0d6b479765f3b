//! Synthetic corpora with known parameters.
//!
//! The generator draws true cell distributions, rates them through the mock
//! backend (so `rate --backend mock` on the written corpus reproduces the
//! ratings exactly), scores every worker from those ratings, and only then draws
//! outcomes. Outcomes therefore depend on the same measured scores the studies
//! compute, and the planted coefficients are the population values of the
//! study regressions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::types::*;
use super::{Corpus, CorpusError};
use crate::index::{average_runs, occupation_stats, score_jobs, MissingPolicy, DEFAULT_OMEGA};
use crate::rater::{rate_corpus, BackendConfig, MockBackend, MockRater, PromptSpec};

/// Coefficients the generator plants in the outcome equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedEffects {
    /// Log-odds of reported AI use: `b0 + b1 * e1 + b2 * e2e3`.
    pub adoption_b0: f64,
    pub adoption_b1: f64,
    pub adoption_b2: f64,
    /// Log pay slope on the index, and its change in the later wave.
    pub wage_gaisi: f64,
    pub wage_post_gaisi: f64,
    pub wage_noise: f64,
    pub hours_intercept: f64,
    pub hours_slope: f64,
    pub hours_noise: f64,
    /// Log vacancy slope on the high-exposure share, by phase, relative to the interim.
    pub vacancy_pre: f64,
    pub vacancy_pandemic: f64,
    pub vacancy_post: f64,
    pub vacancy_noise: f64,
}

impl Default for PlantedEffects {
    fn default() -> Self {
        Self {
            adoption_b0: -3.8,
            adoption_b1: 8.0,
            adoption_b2: 4.0,
            wage_gaisi: 2.393,
            wage_post_gaisi: -0.279,
            wage_noise: 0.35,
            hours_intercept: 25.0,
            hours_slope: 0.47,
            hours_noise: 5.0,
            vacancy_pre: 0.036,
            vacancy_pandemic: -0.032,
            vacancy_post: -0.223,
            vacancy_noise: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    /// Two-digit occupation groups; these are the rated cells' occupations.
    pub occupations: usize,
    /// Three-digit minor groups under each two-digit group.
    pub minors_per_occupation: usize,
    pub tasks: usize,
    pub workers: usize,
    pub areas: usize,
    /// Panel months, starting January 2019.
    pub months: usize,
    pub wave_2017_share: f64,
    /// Share of workers routed past the management block.
    pub missing_rate: f64,
    pub runs: u32,
    /// Standard deviation of the per-run perturbation of each probability.
    pub rater_noise: f64,
    pub effects: PlantedEffects,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            occupations: 25,
            minors_per_occupation: 3,
            tasks: 44,
            workers: 20_000,
            areas: 10,
            months: 72,
            wave_2017_share: 0.4,
            missing_rate: 0.3,
            runs: 5,
            rater_noise: 0.03,
            effects: PlantedEffects::default(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidConfig(m));
        for (name, v) in [
            ("occupations", self.occupations),
            ("minors_per_occupation", self.minors_per_occupation),
            ("tasks", self.tasks),
            ("workers", self.workers),
            ("areas", self.areas),
            ("months", self.months),
            ("runs", self.runs as usize),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.occupations > 81 {
            return bad("at most 81 two-digit occupation groups".into());
        }
        if self.minors_per_occupation > 9 {
            return bad("at most 9 minor groups per occupation".into());
        }
        if !(0.0..=1.0).contains(&self.wave_2017_share) {
            return bad(format!("wave_2017_share {} outside [0, 1]", self.wave_2017_share));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate {} outside [0, 1)", self.missing_rate));
        }
        if !(self.rater_noise.is_finite() && self.rater_noise >= 0.0) {
            return bad(format!("rater_noise {} must be non-negative", self.rater_noise));
        }
        let e = &self.effects;
        for (name, sd) in
            [("wage_noise", e.wage_noise), ("hours_noise", e.hours_noise), ("vacancy_noise", e.vacancy_noise)]
        {
            if !(sd.is_finite() && sd > 0.0) {
                return bad(format!("{name} must be positive, got {sd}"));
            }
        }
        Ok(())
    }
}

/// Independent stream per component, so changing one part of the generator
/// leaves the draws of the others alone.
fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("positive sd").sample(rng)
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Default battery: (category, wording).
const BATTERY: [(&str, &str); 44] = [
    ("Manual", "Lifting or carrying loads of 10kg or more"),
    ("Manual", "Working with tools, machinery or equipment by hand"),
    ("Manual", "Standing or moving about for long periods"),
    ("Manual", "Performing precise movements with fingers or hands"),
    ("Reading", "Reading short notes, forms or instructions"),
    ("Reading", "Reading long reports, manuals or articles"),
    ("Reading", "Reading technical or professional publications"),
    ("Reading", "Checking documents for errors or omissions"),
    ("Writing", "Writing short messages, forms or notes"),
    ("Writing", "Writing long documents with correct structure"),
    ("Writing", "Preparing written proposals or summaries"),
    ("Writing", "Editing text written by others"),
    ("Numeracy", "Adding, subtracting or working out percentages"),
    ("Numeracy", "Preparing or interpreting charts and tables"),
    ("Numeracy", "Working with statistics or advanced calculations"),
    ("Numeracy", "Keeping financial records or budgets"),
    ("Planning and Organising", "Planning your own activities"),
    ("Planning and Organising", "Organising your own time"),
    ("Planning and Organising", "Scheduling the activities of others"),
    ("Expertise and Innovation", "Applying specialist knowledge or know-how"),
    ("Expertise and Innovation", "Thinking of new ideas or solutions"),
    ("Expertise and Innovation", "Learning new techniques or procedures"),
    ("Expertise and Innovation", "Keeping up with developments in the field"),
    ("Problem Analysis", "Spotting problems or faults"),
    ("Problem Analysis", "Working out the causes of problems"),
    ("Problem Analysis", "Thinking of solutions to problems"),
    ("Problem Analysis", "Analysing complex problems in depth"),
    ("Professional Communication", "Giving presentations or talks"),
    ("Professional Communication", "Explaining ideas or information to others"),
    ("Professional Communication", "Persuading or influencing others"),
    ("Professional Communication", "Negotiating with people inside or outside the organisation"),
    ("Client Interaction", "Dealing with people face to face"),
    ("Client Interaction", "Serving customers or clients"),
    ("Client Interaction", "Selling a product or service"),
    ("Client Interaction", "Advising customers or clients"),
    ("Collaboration", "Working closely with colleagues"),
    ("Collaboration", "Listening carefully to colleagues"),
    ("Collaboration", "Teaching or training others"),
    ("Emotion and Impression Management", "Caring for the welfare of others"),
    ("Emotion and Impression Management", "Managing your own feelings"),
    ("Emotion and Impression Management", "Handling the feelings of others"),
    ("Management", "Making decisions about how to organise others' work"),
    ("Management", "Motivating or coaching staff"),
    ("Management", "Monitoring the performance of staff"),
];

/// Category propensities toward E1, E2 and E3.
fn category_effects(category: &str) -> (f64, f64, f64) {
    match category {
        "Manual" => (-2.0, -1.0, -2.5),
        "Reading" => (0.8, 0.0, -3.0),
        "Writing" => (1.0, -0.1, -3.5),
        "Numeracy" => (0.2, 0.6, -3.5),
        "Planning and Organising" => (0.2, 0.5, -3.5),
        "Expertise and Innovation" => (0.3, 0.2, -3.5),
        "Problem Analysis" => (0.4, 0.4, -3.2),
        "Professional Communication" => (0.5, 0.0, -3.5),
        "Client Interaction" => (-0.3, 0.1, -3.5),
        "Collaboration" => (-0.4, 0.0, -3.5),
        "Emotion and Impression Management" => (-1.2, -0.8, -3.5),
        _ => (-0.3, 0.3, -3.5),
    }
}

fn build_tasks(n: usize) -> Vec<TaskItem> {
    (0..n)
        .map(|i| {
            let (category, text) = if n == BATTERY.len() {
                BATTERY[i]
            } else {
                let c = CATEGORIES[i % CATEGORIES.len()];
                let pool: Vec<&(&str, &str)> = BATTERY.iter().filter(|(bc, _)| *bc == c).collect();
                *pool[(i / CATEGORIES.len()) % pool.len()]
            };
            let text = if n == BATTERY.len() { text.to_string() } else { format!("{text} (item {})", i + 1) };
            TaskItem { task_id: format!("T{:02}", i + 1), category: category.to_string(), text }
        })
        .collect()
}

struct OccupationLatent {
    code: String,
    direct: f64,
    integration: f64,
    visual: f64,
    /// Category importance profile, indexed like [`CATEGORIES`].
    profile: [f64; 12],
}

fn occupation_code(i: usize) -> String {
    format!("{}{}", i % 9 + 1, i / 9 + 1)
}

fn build_occupations(cfg: &SyntheticConfig) -> Vec<OccupationLatent> {
    let mut rng = stream(cfg.seed, "occupations");
    (0..cfg.occupations)
        .map(|i| {
            let direct = normal(&mut rng, 0.7);
            let integration = normal(&mut rng, 0.8);
            let visual = normal(&mut rng, 0.5);
            let mut profile = [0.0; 12];
            for (c, p) in profile.iter_mut().enumerate() {
                *p = normal(&mut rng, 0.8);
                if c == 0 {
                    *p = -0.8 * direct + normal(&mut rng, 0.6);
                }
            }
            OccupationLatent { code: occupation_code(i), direct, integration, visual, profile }
        })
        .collect()
}

fn vignette(o: &OccupationLatent) -> OccupationVignette {
    let desk = if o.direct > 0.3 {
        "Much of the day is spent at a computer producing documents, analyses and correspondence."
    } else if o.direct < -0.3 {
        "Most of the work is hands-on and carried out away from a desk."
    } else {
        "The work mixes practical activity with paperwork and routine computer use."
    };
    let systems = if o.integration > 0.2 {
        " Specialist software and shared databases are central to daily workflows."
    } else {
        " Tools are mostly general office software and physical equipment."
    };
    OccupationVignette {
        occ_code: o.code.clone(),
        title: format!("Occupation group {}", o.code),
        narrative: format!("{desk}{systems}"),
    }
}

fn true_cells(
    cfg: &SyntheticConfig,
    occs: &[OccupationLatent],
    tasks: &[TaskItem],
) -> BTreeMap<(String, String), ExposureDistribution> {
    let mut rng = stream(cfg.seed, "cells");
    let task_jitter: Vec<[f64; 3]> =
        tasks.iter().map(|_| [normal(&mut rng, 0.3), normal(&mut rng, 0.3), normal(&mut rng, 0.3)]).collect();
    let mut out = BTreeMap::new();
    for o in occs {
        for (t, j) in tasks.iter().zip(&task_jitter) {
            let (u, v, w) = category_effects(&t.category);
            let l1 = -0.6 + u + j[0] + o.direct + normal(&mut rng, 0.25);
            let l2 = -0.8 + v + j[1] + o.integration + normal(&mut rng, 0.25);
            let l3 = w + j[2] + 0.5 * o.visual;
            let mass = [1.0, l1.exp(), l2.exp(), l3.exp()];
            out.insert((o.code.clone(), t.task_id.clone()), ExposureDistribution::from_mass(mass));
        }
    }
    out
}

fn importance_from_latent(z: f64) -> Importance {
    match z {
        z if z < -1.2 => Importance::NotAtAll,
        z if z < -0.4 => Importance::NotVery,
        z if z < 0.3 => Importance::Fairly,
        z if z < 1.0 => Importance::Very,
        _ => Importance::Essential,
    }
}

struct Minor {
    code: OccCode,
    parent: usize,
    profile: [f64; 12],
    pay_effect: f64,
    size: f64,
}

fn build_minors(cfg: &SyntheticConfig, occs: &[OccupationLatent]) -> Vec<Minor> {
    let mut rng = stream(cfg.seed, "minors");
    let mut out = Vec::new();
    for (p, o) in occs.iter().enumerate() {
        for m in 0..cfg.minors_per_occupation {
            let mut profile = o.profile;
            for v in &mut profile {
                *v += normal(&mut rng, 0.4);
            }
            out.push(Minor {
                code: OccCode::new(format!("{}{}", o.code, m + 1)).expect("digits"),
                parent: p,
                profile,
                pay_effect: normal(&mut rng, 0.2),
                size: normal(&mut rng, 0.5).exp(),
            });
        }
    }
    out
}

fn build_jobs(
    cfg: &SyntheticConfig,
    occs: &[OccupationLatent],
    minors: &[Minor],
    tasks: &[TaskItem],
) -> Vec<JobRecord> {
    let mut rng = stream(cfg.seed, "workers");
    let total: f64 = minors.iter().map(|m| m.size).sum();
    let cat_index: Vec<usize> =
        tasks.iter().map(|t| CATEGORIES.iter().position(|c| *c == t.category).expect("closed set")).collect();
    let width = cfg.workers.to_string().len().max(6);
    (0..cfg.workers)
        .map(|i| {
            let mut u = rng.random::<f64>() * total;
            let minor = minors
                .iter()
                .find(|m| {
                    u -= m.size;
                    u < 0.0
                })
                .unwrap_or(minors.last().expect("at least one minor"));
            let occ = &occs[minor.parent];
            let wave = if bernoulli(&mut rng, cfg.wave_2017_share) { Wave::W2017 } else { Wave::W2023 };
            let skip_management = bernoulli(&mut rng, cfg.missing_rate);
            let mut importance = BTreeMap::new();
            for (t, &c) in tasks.iter().zip(&cat_index) {
                let z = minor.profile[c] + normal(&mut rng, 0.6);
                if skip_management && t.category == "Management" {
                    continue;
                }
                importance.insert(t.task_id.clone(), importance_from_latent(z));
            }
            let edu_latent = 0.8 * occ.direct + normal(&mut rng, 1.0);
            let education = match edu_latent {
                z if z < -1.0 => 0,
                z if z < 0.0 => 1,
                z if z < 0.8 => 2,
                _ => 3,
            };
            let computer = importance_from_latent(occ.direct + normal(&mut rng, 0.7)).weight();
            let covariates = Covariates {
                female: Some(bernoulli(&mut rng, 0.5)),
                age: Some((18.0 + rng.random::<f64>() * 47.0).floor()),
                ethnic_minority: Some(bernoulli(&mut rng, 0.15)),
                education: Some(education),
                region: Some(format!("A{:02}", rng.random_range(0..cfg.areas) + 1)),
                industry: Some(format!("I{}", (minor.parent + rng.random_range(0..3)) % 9 + 1)),
                full_time: Some(bernoulli(&mut rng, 0.75)),
                self_employed: Some(bernoulli(&mut rng, 0.1)),
                computer_use: Some(computer),
            };
            JobRecord {
                worker_id: format!("W{:0width$}", i + 1),
                wave,
                occ_code: minor.code.clone(),
                survey_weight: (normal(&mut rng, 0.25)).exp(),
                covariates,
                outcomes: Outcomes::default(),
                importance,
            }
        })
        .collect()
}

fn draw_outcomes(
    cfg: &SyntheticConfig,
    jobs: &mut [JobRecord],
    minors: &[Minor],
    scores: &BTreeMap<String, (f64, f64, f64, f64)>,
) {
    let e = &cfg.effects;
    let mut rng = stream(cfg.seed, "outcomes");
    let mut fe = stream(cfg.seed, "wage-fe");
    let mut cell_effect: BTreeMap<String, f64> = BTreeMap::new();
    let pay: BTreeMap<&str, f64> = minors.iter().map(|m| (m.code.as_str(), m.pay_effect)).collect();
    for job in jobs.iter_mut() {
        // Workers whose exposure is undefined get no outcomes.
        let Some(&(e1, e2e3, gaisi, load)) = scores.get(&job.worker_id) else {
            continue;
        };
        let post = job.wave.is_post();
        let c = &job.covariates;
        let mut fe_draw = |key: String| *cell_effect.entry(key).or_insert_with(|| normal(&mut fe, 0.05));
        let region_wave = fe_draw(format!("r:{}:{}", c.region.as_deref().unwrap_or(""), job.wave.as_str()));
        let industry_wave = fe_draw(format!("i:{}:{}", c.industry.as_deref().unwrap_or(""), job.wave.as_str()));
        let age = c.age.unwrap_or(40.0);
        let female = f64::from(u8::from(c.female == Some(true)));
        let log_pay = 2.3
            + pay[job.occ_code.as_str()]
            + region_wave
            + industry_wave
            + 0.12 * f64::from(c.education.unwrap_or(1))
            + 0.03 * age
            - 0.0003 * age * age
            - 0.08 * female
            + 0.1 * f64::from(u8::from(c.full_time == Some(true)))
            + 0.06 * f64::from(u8::from(post))
            + e.wage_gaisi * gaisi
            + e.wage_post_gaisi * gaisi * f64::from(u8::from(post))
            + normal(&mut rng, e.wage_noise);
        let hours = (e.hours_intercept + e.hours_slope * load + normal(&mut rng, e.hours_noise)).clamp(5.0, 80.0);
        let eta = e.adoption_b0 + e.adoption_b1 * e1 + e.adoption_b2 * e2e3;
        let uses = bernoulli(&mut rng, logistic(eta));
        job.outcomes = Outcomes {
            ai_use: post.then_some(uses),
            log_hourly_pay: Some(log_pay),
            usual_hours: Some((hours * 10.0).round() / 10.0),
        };
    }
}

fn build_panel(
    cfg: &SyntheticConfig,
    minors: &[Minor],
    shares: &BTreeMap<String, f64>,
    calendar: &EventCalendar,
) -> Vec<PanelCell> {
    let e = &cfg.effects;
    let mut rng = stream(cfg.seed, "panel");
    let mut fx = stream(cfg.seed, "panel-fe");
    let areas: Vec<String> = (1..=cfg.areas).map(|a| format!("A{a:02}")).collect();
    let mut months = vec![YearMonth { year: 2019, month: 1 }];
    while months.len() < cfg.months {
        months.push(months.last().expect("non-empty").succ());
    }
    let mut area_q: BTreeMap<(usize, YearQuarter), f64> = BTreeMap::new();
    let mut major_q: BTreeMap<(String, YearQuarter), f64> = BTreeMap::new();
    let mut out = Vec::with_capacity(minors.len() * areas.len() * months.len());
    for m in minors {
        let share = shares.get(m.code.as_str()).copied().unwrap_or(0.0);
        for (a, area) in areas.iter().enumerate() {
            let level = (150.0f64).ln() + normal(&mut fx, 0.5);
            for &period in &months {
                let q = period.quarter();
                let aq = *area_q.entry((a, q)).or_insert_with(|| normal(&mut fx, 0.05));
                let mq = *major_q.entry((m.code.major().to_string(), q)).or_insert_with(|| normal(&mut fx, 0.05));
                let slope = match calendar.phase(q) {
                    Phase::PrePandemic => e.vacancy_pre,
                    Phase::Pandemic => e.vacancy_pandemic,
                    Phase::Interim => 0.0,
                    Phase::PostLaunch => e.vacancy_post,
                };
                let y = level + aq + mq + slope * share + normal(&mut rng, e.vacancy_noise);
                let count = (y.exp() - 1.0).round().max(0.0) as u64;
                out.push(PanelCell {
                    occ_code: m.code.clone(),
                    area_code: area.clone(),
                    period,
                    vacancy_count: count,
                    exposure_share: None,
                });
            }
        }
    }
    out
}

fn build_rivals(
    cfg: &SyntheticConfig,
    occs: &[OccupationLatent],
    truth: &BTreeMap<(String, String), ExposureDistribution>,
) -> RivalIndices {
    let mut rng = stream(cfg.seed, "rivals");
    let names = ["ai_exposure", "llm_exposure", "automation", "placebo"].map(String::from).to_vec();
    let mut values = BTreeMap::new();
    for (i, o) in occs.iter().enumerate() {
        let cells: Vec<&ExposureDistribution> =
            truth.iter().filter(|((occ, _), _)| *occ == o.code).map(|(_, d)| d).collect();
        let n = cells.len() as f64;
        let g = cells.iter().map(|d| d.gaisi(DEFAULT_OMEGA)).sum::<f64>() / n;
        let e1 = cells.iter().map(|d| d.probs()[1]).sum::<f64>() / n;
        let row = vec![
            Some(g + normal(&mut rng, 0.03)),
            Some(e1 + normal(&mut rng, 0.05)),
            Some(0.8 - g + normal(&mut rng, 0.05)),
            // One missing value exercises listwise deletion downstream.
            (i != 0).then(|| normal(&mut rng, 1.0)),
        ];
        values.insert(o.code.clone(), row);
    }
    RivalIndices { names, values }
}

/// High-exposure shares per minor group, computed exactly as the vacancy study does.
pub(crate) fn panel_shares(
    scores: &[crate::index::GaisiScore],
    jobs: &[JobRecord],
) -> Result<BTreeMap<String, f64>, CorpusError> {
    let stats = occupation_stats(scores, jobs, 3, 10, 0.8).map_err(|e| CorpusError::InvalidConfig(e.to_string()))?;
    Ok(stats.occupations.iter().map(|o| (o.occ_code.clone(), o.high_share)).collect())
}

/// Mock rater configuration matching a synthetic config, as used for its ratings.
pub fn synthetic_rater(cfg: &SyntheticConfig, truth: BTreeMap<(String, String), ExposureDistribution>) -> MockRater {
    MockRater::new(cfg.seed, cfg.rater_noise).with_truth(truth)
}

/// Backend settings under which the generator rates its cells.
pub fn synthetic_backend_config(cfg: &SyntheticConfig) -> BackendConfig {
    BackendConfig { runs_per_cell: cfg.runs, ..BackendConfig::default() }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let tasks = build_tasks(cfg.tasks);
    let occs = build_occupations(cfg);
    let vignettes: Vec<OccupationVignette> = occs.iter().map(vignette).collect();
    let truth = true_cells(cfg, &occs, &tasks);
    let backend = MockBackend::new(synthetic_rater(cfg, truth.clone()));
    let rated = rate_corpus(&backend, &synthetic_backend_config(cfg), &PromptSpec::default(), &vignettes, &tasks, None)
        .map_err(|e| CorpusError::InvalidConfig(format!("mock rating failed: {e}")))?;
    if !rated.failures.is_empty() {
        return Err(CorpusError::InvalidConfig(format!("{} mock requests failed", rated.failures.len())));
    }
    let minors = build_minors(cfg, &occs);
    let mut jobs = build_jobs(cfg, &occs, &minors, &tasks);
    let cells = average_runs(&rated.records).map_err(|e| CorpusError::InvalidConfig(e.to_string()))?;
    let scored = score_jobs(&jobs, &cells, MissingPolicy::Exclude, DEFAULT_OMEGA)
        .map_err(|e| CorpusError::InvalidConfig(e.to_string()))?;
    if scored.scores.is_empty() {
        return Err(CorpusError::InvalidConfig("no worker has a defined exposure".into()));
    }
    let by_id: BTreeMap<String, (f64, f64, f64, f64)> =
        scored.scores.iter().map(|s| (s.worker_id.clone(), (s.e1, s.e2e3, s.gaisi, s.task_load))).collect();
    draw_outcomes(cfg, &mut jobs, &minors, &by_id);
    let shares = panel_shares(&scored.scores, &jobs)?;
    let panel = build_panel(cfg, &minors, &shares, &EventCalendar::default());
    let rivals = build_rivals(cfg, &occs, &truth);
    Ok(Corpus { tasks, vignettes, ratings: rated.records, jobs, panel, rivals: Some(rivals), truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig { occupations: 4, tasks: 12, workers: 200, months: 6, areas: 2, ..SyntheticConfig::default() }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = generate_synthetic(&SyntheticConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn zero_noise_runs_identical() {
        let c = generate_synthetic(&SyntheticConfig { rater_noise: 0.0, ..small() }).unwrap();
        for w in c.ratings.chunks(5) {
            assert!(w.iter().all(|r| r.distribution == w[0].distribution));
        }
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(generate_synthetic(&SyntheticConfig { workers: 0, ..small() }).is_err());
    }

    #[test]
    fn default_battery_spans_categories() {
        let t = build_tasks(44);
        for c in CATEGORIES {
            assert!(t.iter().any(|x| x.category == c), "{c}");
        }
    }
}

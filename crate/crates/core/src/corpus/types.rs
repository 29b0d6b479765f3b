use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Tolerance within which a rated distribution is renormalised instead of rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-3;

/// The twelve task categories of the battery, in canonical order.
pub const CATEGORIES: [&str; 12] = [
    "Manual",
    "Reading",
    "Writing",
    "Numeracy",
    "Planning and Organising",
    "Expertise and Innovation",
    "Problem Analysis",
    "Professional Communication",
    "Client Interaction",
    "Collaboration",
    "Emotion and Impression Management",
    "Management",
];

pub fn is_category(label: &str) -> bool {
    CATEGORIES.contains(&label)
}

/// Exposure levels rated for each occupation-task cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    E0,
    E1,
    E2,
    E3,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::E0, Level::E1, Level::E2, Level::E3];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.index())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskItem {
    pub task_id: String,
    pub category: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupationVignette {
    pub occ_code: String,
    pub title: String,
    pub narrative: String,
}

/// Probabilities over `E0..E3` for one occupation-task cell and run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureDistribution([f64; 4]);

/// Why a candidate probability vector was rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionFault {
    OutOfRange { level: Level, value: f64 },
    Sum(f64),
}

impl fmt::Display for DistributionFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionFault::OutOfRange { level, value } => {
                write!(f, "probability for {level} is {value}, outside [0, 1]")
            }
            DistributionFault::Sum(s) => write!(f, "probabilities sum to {s}"),
        }
    }
}

impl ExposureDistribution {
    /// Validates and renormalises. Sums within [`RENORMALIZE_TOLERANCE`] of one
    /// are rescaled; anything further off is rejected.
    pub fn new(p: [f64; 4]) -> Result<Self, DistributionFault> {
        for (level, &value) in Level::ALL.iter().zip(p.iter()) {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(DistributionFault::OutOfRange { level: *level, value });
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(DistributionFault::Sum(sum));
        }
        // Already-normalised input is kept bit-for-bit so that write/read cycles are stable.
        if (sum - 1.0).abs() <= 8.0 * f64::EPSILON {
            return Ok(Self(p));
        }
        Ok(Self(p.map(|v| v / sum)))
    }

    /// Normalises arbitrary non-negative mass. Used by generators, never by ingest.
    pub fn from_mass(mass: [f64; 4]) -> Self {
        let sum: f64 = mass.iter().sum();
        assert!(sum > 0.0 && mass.iter().all(|m| *m >= 0.0), "mass must be non-negative with positive total");
        Self(mass.map(|v| v / sum))
    }

    pub fn probs(&self) -> [f64; 4] {
        self.0
    }

    pub fn get(&self, level: Level) -> f64 {
        self.0[level.index()]
    }

    /// Latent exposure: E2 and E3 folded together.
    pub fn latent(&self) -> f64 {
        self.0[2] + self.0[3]
    }

    /// Cell-level index `E1 + omega * (E2 + E3)`.
    pub fn gaisi(&self, omega: f64) -> f64 {
        self.0[1] + omega * self.latent()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub occ_code: String,
    pub task_id: String,
    pub run_index: u32,
    pub distribution: ExposureDistribution,
    pub model_id: String,
    pub prompt_id: String,
    pub temperature: f64,
    pub justification: String,
}

impl RatingRecord {
    pub fn key(&self) -> (&str, &str, u32, &str, &str) {
        (&self.occ_code, &self.task_id, self.run_index, &self.model_id, &self.prompt_id)
    }

    pub fn variant(&self) -> (&str, &str) {
        (&self.model_id, &self.prompt_id)
    }
}

/// Worker-reported importance on the five-point grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Importance {
    NotAtAll,
    NotVery,
    Fairly,
    Very,
    Essential,
}

impl Importance {
    pub const GRID: [Importance; 5] =
        [Importance::NotAtAll, Importance::NotVery, Importance::Fairly, Importance::Very, Importance::Essential];

    pub fn weight(self) -> f64 {
        match self {
            Importance::NotAtAll => 0.0,
            Importance::NotVery => 0.25,
            Importance::Fairly => 0.5,
            Importance::Very => 0.75,
            Importance::Essential => 1.0,
        }
    }

    pub fn from_weight(w: f64) -> Option<Self> {
        Self::GRID.into_iter().find(|i| (i.weight() - w).abs() < 1e-12)
    }

    /// Accepts numeric grid values and the verbal survey labels.
    pub fn parse(s: &str) -> Option<Self> {
        let t = s.trim();
        if let Ok(v) = t.parse::<f64>() {
            return Self::from_weight(v);
        }
        match t.to_ascii_lowercase().as_str() {
            "essential" => Some(Importance::Essential),
            "very important" => Some(Importance::Very),
            "fairly important" => Some(Importance::Fairly),
            "not very important" => Some(Importance::NotVery),
            "not at all important" => Some(Importance::NotAtAll),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Importance::NotAtAll => "0",
            Importance::NotVery => "0.25",
            Importance::Fairly => "0.5",
            Importance::Very => "0.75",
            Importance::Essential => "1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Wave {
    #[serde(rename = "2017")]
    W2017,
    #[serde(rename = "2023-24")]
    W2023,
}

impl Wave {
    pub fn as_str(self) -> &'static str {
        match self {
            Wave::W2017 => "2017",
            Wave::W2023 => "2023-24",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "2017" => Some(Wave::W2017),
            "2023-24" | "2023" | "2024" => Some(Wave::W2023),
            _ => None,
        }
    }

    pub fn is_post(self) -> bool {
        self == Wave::W2023
    }
}

/// Worker covariates. Missing survey answers are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Covariates {
    pub female: Option<bool>,
    pub age: Option<f64>,
    pub ethnic_minority: Option<bool>,
    /// 0 = below GCSE, 1 = GCSE, 2 = A-level, 3 = degree.
    pub education: Option<u8>,
    pub region: Option<String>,
    pub industry: Option<String>,
    pub full_time: Option<bool>,
    pub self_employed: Option<bool>,
    /// Importance of computer use on the same five-point grid.
    pub computer_use: Option<f64>,
}

impl Covariates {
    pub fn age_band(&self) -> Option<&'static str> {
        self.age.map(|a| match a {
            a if a < 30.0 => "<30",
            a if a < 40.0 => "30-39",
            a if a < 50.0 => "40-49",
            a if a < 60.0 => "50-59",
            _ => "60+",
        })
    }

    pub fn tertiary(&self) -> Option<bool> {
        self.education.map(|e| e >= 3)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcomes {
    pub ai_use: Option<bool>,
    pub log_hourly_pay: Option<f64>,
    pub usual_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub worker_id: String,
    pub wave: Wave,
    pub occ_code: OccCode,
    pub survey_weight: f64,
    pub covariates: Covariates,
    pub outcomes: Outcomes,
    /// Absent entries are tasks the respondent was not asked.
    pub importance: BTreeMap<String, Importance>,
}

/// An occupation code with a declared digit depth; coarser views are prefixes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccCode(String);

impl OccCode {
    pub fn new(code: impl Into<String>) -> Result<Self, CorpusError> {
        let code = code.into();
        let code = code.trim().to_string();
        if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(CorpusError::InvalidValue(format!("occupation code {code:?} is not alphanumeric")));
        }
        Ok(Self(code))
    }

    pub fn digits(&self) -> usize {
        self.0.len()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The coarser view at `depth` digits, if this code is at least that deep.
    pub fn view(&self, depth: usize) -> Option<&str> {
        (depth >= 1 && depth <= self.0.len()).then(|| &self.0[..depth])
    }

    pub fn major(&self) -> &str {
        &self.0[..1]
    }
}

impl fmt::Display for OccCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn quarter(self) -> YearQuarter {
        YearQuarter { year: self.year, quarter: (self.month - 1) / 3 + 1 }
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearQuarter {
    pub year: i32,
    pub quarter: u32,
}

impl YearQuarter {
    /// Parses `2022Q3` or `2022-Q3`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().replace('-', "");
        let (y, q) = s.split_once(['Q', 'q'])?;
        let year = y.parse().ok()?;
        let quarter = q.parse().ok()?;
        (1..=4).contains(&quarter).then_some(Self { year, quarter })
    }
}

impl YearQuarter {
    /// Consecutive integer position, for ordering and arithmetic on quarters.
    pub fn ordinal(self) -> i32 {
        self.year * 4 + self.quarter as i32 - 1
    }

    pub fn from_ordinal(o: i32) -> Self {
        Self { year: o.div_euclid(4), quarter: o.rem_euclid(4) as u32 + 1 }
    }
}

impl fmt::Display for YearQuarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelCell {
    pub occ_code: OccCode,
    pub area_code: String,
    pub period: YearMonth,
    pub vacancy_count: u64,
    /// Joined from the survey-side occupation shares; absent on ingest.
    pub exposure_share: Option<f64>,
}

impl PanelCell {
    pub fn log_outcome(&self) -> f64 {
        (self.vacancy_count as f64 + 1.0).ln()
    }
}

/// Occupation-keyed rival exposure measures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RivalIndices {
    pub names: Vec<String>,
    /// occ code → one value per name; `None` for missing.
    pub values: BTreeMap<String, Vec<Option<f64>>>,
}

impl RivalIndices {
    /// Joins on the longest prefix of `occ` present in the table.
    pub fn lookup(&self, occ: &OccCode) -> Option<&[Option<f64>]> {
        (1..=occ.digits()).rev().filter_map(|d| occ.view(d)).find_map(|v| self.values.get(v)).map(|v| v.as_slice())
    }
}

/// Phase of a quarter relative to the pandemic and the chatbot launch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PrePandemic,
    Pandemic,
    /// Between the pandemic and the launch; the omitted category.
    Interim,
    PostLaunch,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PrePandemic => "pre_pandemic",
            Phase::Pandemic => "pandemic",
            Phase::Interim => "interim",
            Phase::PostLaunch => "post_launch",
        }
    }
}

/// Quarter boundaries used by the vacancy panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCalendar {
    /// Omitted quarter of the event study.
    pub reference: YearQuarter,
    pub pandemic_start: YearQuarter,
    pub pandemic_end: YearQuarter,
    pub launch: YearQuarter,
}

impl Default for EventCalendar {
    fn default() -> Self {
        Self {
            reference: YearQuarter { year: 2022, quarter: 3 },
            pandemic_start: YearQuarter { year: 2020, quarter: 2 },
            pandemic_end: YearQuarter { year: 2021, quarter: 4 },
            launch: YearQuarter { year: 2022, quarter: 4 },
        }
    }
}

impl EventCalendar {
    pub fn phase(&self, q: YearQuarter) -> Phase {
        if q < self.pandemic_start {
            Phase::PrePandemic
        } else if q <= self.pandemic_end {
            Phase::Pandemic
        } else if q < self.launch {
            Phase::Interim
        } else {
            Phase::PostLaunch
        }
    }
}

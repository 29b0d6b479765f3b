use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde::Serialize;

use super::RaterError;

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Tag {
    TextGeneration,
    KnowledgeRetrieval,
    InformationAnalysis,
    PlanningScheduling,
    Multimodal,
    Integration,
    HumanConstraint,
    LimitedContribution,
    Uncertainty,
    Contrast,
}

pub const AFFORDANCES: [Tag; 5] =
    [Tag::TextGeneration, Tag::KnowledgeRetrieval, Tag::InformationAnalysis, Tag::PlanningScheduling, Tag::Multimodal];

impl Tag {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim() {
            "text_generation" => Tag::TextGeneration,
            "knowledge_retrieval" => Tag::KnowledgeRetrieval,
            "information_analysis" => Tag::InformationAnalysis,
            "planning_scheduling" => Tag::PlanningScheduling,
            "multimodal" => Tag::Multimodal,
            "integration" => Tag::Integration,
            "human_constraint" => Tag::HumanConstraint,
            "limited_contribution" => Tag::LimitedContribution,
            "uncertainty" => Tag::Uncertainty,
            "contrast" => Tag::Contrast,
            _ => return None,
        })
    }
}

/// Tags found in one justification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct JustificationTags {
    /// Text generation, knowledge retrieval, information analysis, planning and scheduling, multimodal.
    pub affordances: [bool; 5],
    pub integration: bool,
    pub human_constraint: bool,
    pub limited_contribution: bool,
    pub uncertainty: bool,
    pub contrast: bool,
}

impl JustificationTags {
    pub fn affordance_count(&self) -> usize {
        self.affordances.iter().filter(|a| **a).count()
    }

    /// Integration, human constraint, limited contribution, uncertainty, contrast.
    pub fn cues(&self) -> [bool; 5] {
        [self.integration, self.human_constraint, self.limited_contribution, self.uncertainty, self.contrast]
    }

    pub fn any_cue(&self) -> bool {
        self.cues().iter().any(|c| *c)
    }

    fn set(&mut self, tag: Tag) {
        match tag {
            Tag::TextGeneration => self.affordances[0] = true,
            Tag::KnowledgeRetrieval => self.affordances[1] = true,
            Tag::InformationAnalysis => self.affordances[2] = true,
            Tag::PlanningScheduling => self.affordances[3] = true,
            Tag::Multimodal => self.affordances[4] = true,
            Tag::Integration => self.integration = true,
            Tag::HumanConstraint => self.human_constraint = true,
            Tag::LimitedContribution => self.limited_contribution = true,
            Tag::Uncertainty => self.uncertainty = true,
            Tag::Contrast => self.contrast = true,
        }
    }
}

/// Case-insensitive regex patterns per tag, read from a `tag,pattern` CSV.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<(Tag, Regex)>,
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self, RaterError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| RaterError::Lexicon { line, message: e.to_string() })?;
            let (Some(tag), Some(pattern)) = (rec.get(0), rec.get(1)) else {
                return Err(RaterError::Lexicon { line, message: "expected tag,pattern".into() });
            };
            let tag =
                Tag::parse(tag).ok_or_else(|| RaterError::Lexicon { line, message: format!("unknown tag {tag}") })?;
            let re = RegexBuilder::new(pattern)
                .case_insensitive(true)
                .build()
                .map_err(|e| RaterError::Lexicon { line, message: e.to_string() })?;
            entries.push((tag, re));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RaterError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| RaterError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn tag(&self, text: &str) -> JustificationTags {
        let mut tags = JustificationTags::default();
        for (tag, re) in &self.entries {
            if re.is_match(text) {
                tags.set(*tag);
            }
        }
        tags
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("shipped lexicon is valid")
    }
}

static SHIPPED: LazyLock<Lexicon> = LazyLock::new(Lexicon::default);

/// Tags `text` with the shipped lexicon.
pub fn tag_justification(text: &str) -> JustificationTags {
    SHIPPED.tag(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_examples() {
        assert!(tag_justification("drafting the report text could be largely generated").affordances[0]);
        assert!(tag_justification("requires physical presence and manual dexterity").human_constraint);
        assert_eq!(tag_justification(""), JustificationTags::default());
    }
}

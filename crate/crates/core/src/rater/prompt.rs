use std::path::Path;
use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use super::RaterError;
use crate::corpus::{OccupationVignette, TaskItem};

/// Placeholder names a user template may reference.
pub const PLACEHOLDERS: [&str; 6] =
    ["examples", "occupation_details", "occupation_code", "category_name", "task_list_str", "threshold"];

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"));
static TOOLS_BLOCK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)\{#tools\}(.*?)\{/tools\}").expect("valid regex"));

const SYSTEM: &str = include_str!("../../data/prompts/system.txt");
const USER: &str = include_str!("../../data/prompts/user.txt");
const EXAMPLES: &str = include_str!("../../data/prompts/examples.txt");
const OUTPUT_FORMAT: &str = include_str!("../../data/prompts/output_format.txt");

/// A prompt variant. Templates use `{name}` placeholders and an optional
/// `{#tools}...{/tools}` block that is kept only when `include_existing_tools` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    pub system_text: String,
    pub user_template: String,
    pub examples_text: String,
    /// Appended after the rendered user text; empty to omit.
    pub output_format: String,
    pub threshold_pct: u32,
    pub include_examples: bool,
    pub include_existing_tools: bool,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self {
            prompt_id: "main".into(),
            system_text: SYSTEM.trim_end().into(),
            user_template: USER.into(),
            examples_text: EXAMPLES.trim_end().into(),
            output_format: OUTPUT_FORMAT.trim_end().into(),
            threshold_pct: 25,
            include_examples: true,
            include_existing_tools: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

fn read(path: &Path) -> Result<String, RaterError> {
    std::fs::read_to_string(path).map_err(|source| RaterError::Io { path: path.to_path_buf(), source })
}

impl PromptSpec {
    /// Loads `system.txt` and `user.txt` from `dir`; `examples.txt` and
    /// `output_format.txt` fall back to the shipped defaults when absent.
    pub fn from_dir(dir: &Path, prompt_id: &str) -> Result<Self, RaterError> {
        let optional = |name: &str, default: &str| -> Result<String, RaterError> {
            let p = dir.join(name);
            if p.exists() {
                Ok(read(&p)?.trim_end().to_string())
            } else {
                Ok(default.trim_end().to_string())
            }
        };
        let spec = Self {
            prompt_id: prompt_id.to_string(),
            system_text: read(&dir.join("system.txt"))?.trim_end().to_string(),
            user_template: read(&dir.join("user.txt"))?,
            examples_text: optional("examples.txt", EXAMPLES)?,
            output_format: optional("output_format.txt", OUTPUT_FORMAT)?,
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RaterError> {
        if ![25, 50].contains(&self.threshold_pct) {
            return Err(RaterError::InvalidConfig(format!("threshold must be 25 or 50, got {}", self.threshold_pct)));
        }
        if self.prompt_id.trim().is_empty() {
            return Err(RaterError::InvalidConfig("prompt id is empty".into()));
        }
        for caps in PLACEHOLDER.captures_iter(&self.user_template) {
            let name = &caps[1];
            if !PLACEHOLDERS.contains(&name) {
                return Err(RaterError::UnresolvedPlaceholder(name.to_string()));
            }
        }
        if !self.user_template.contains("{task_list_str}") {
            return Err(RaterError::InvalidConfig("user template never lists the tasks ({task_list_str})".into()));
        }
        Ok(())
    }
}

/// Renders the system and user text for one occupation and category.
pub fn render_prompt(
    spec: &PromptSpec,
    vignette: &OccupationVignette,
    category: &str,
    tasks: &[TaskItem],
) -> Result<RenderedPrompt, RaterError> {
    spec.validate()?;
    if tasks.is_empty() {
        return Err(RaterError::EmptyTaskList);
    }
    if let Some(t) = tasks.iter().find(|t| t.category != category) {
        return Err(RaterError::CategoryMismatch {
            task_id: t.task_id.clone(),
            expected: category.to_string(),
            found: t.category.clone(),
        });
    }
    let template = TOOLS_BLOCK.replace_all(&spec.user_template, |c: &Captures| {
        if spec.include_existing_tools {
            c[1].to_string()
        } else {
            String::new()
        }
    });
    let task_list = tasks.iter().map(|t| format!("- {}: {}", t.task_id, t.text)).collect::<Vec<_>>().join("\n");
    let details = format!("{} ({})\n{}", vignette.title, vignette.occ_code, vignette.narrative);
    let examples = if spec.include_examples { spec.examples_text.as_str() } else { "" };
    let threshold = spec.threshold_pct.to_string();
    let mut unresolved = None;
    let body = PLACEHOLDER.replace_all(&template, |c: &Captures| match &c[1] {
        "examples" => examples.to_string(),
        "occupation_details" => details.clone(),
        "occupation_code" => vignette.occ_code.clone(),
        "category_name" => category.to_string(),
        "task_list_str" => task_list.clone(),
        "threshold" => threshold.clone(),
        other => {
            unresolved.get_or_insert_with(|| other.to_string());
            c[0].to_string()
        }
    });
    if let Some(name) = unresolved {
        return Err(RaterError::UnresolvedPlaceholder(name));
    }
    let mut user = body.trim().to_string();
    if !spec.output_format.is_empty() {
        user.push_str("\n\n");
        user.push_str(&spec.output_format);
    }
    Ok(RenderedPrompt { system: spec.system_text.clone(), user })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vignette() -> OccupationVignette {
        OccupationVignette { occ_code: "41".into(), title: "Administrative".into(), narrative: "Office work.".into() }
    }

    fn task(id: &str, cat: &str) -> TaskItem {
        TaskItem { task_id: id.into(), category: cat.into(), text: format!("text of {id}") }
    }

    #[test]
    fn tools_block_toggles() {
        let mut spec = PromptSpec::default();
        let with = render_prompt(&spec, &vignette(), "Reading", &[task("T1", "Reading")]).unwrap();
        spec.include_existing_tools = false;
        let without = render_prompt(&spec, &vignette(), "Reading", &[task("T1", "Reading")]).unwrap();
        assert!(with.user.contains("Existing tools typically used"));
        assert!(!without.user.contains("Existing tools typically used"));
        assert!(!without.user.contains("{#tools}"));
    }

    #[test]
    fn unknown_placeholder_rejected() {
        let spec = PromptSpec { user_template: "{task_list_str} {colour}".into(), ..PromptSpec::default() };
        match render_prompt(&spec, &vignette(), "Reading", &[task("T1", "Reading")]) {
            Err(RaterError::UnresolvedPlaceholder(n)) => assert_eq!(n, "colour"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn substituted_braces_are_not_reprocessed() {
        let v = OccupationVignette { narrative: "Uses {threshold} forms.".into(), ..vignette() };
        let r = render_prompt(&PromptSpec::default(), &v, "Reading", &[task("T1", "Reading")]).unwrap();
        assert!(r.user.contains("Uses {threshold} forms."));
    }
}

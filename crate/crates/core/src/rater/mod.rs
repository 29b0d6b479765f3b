//! Prompt assembly, response parsing, backends, caching and justification tagging.
//!
//! A rating request covers one occupation, one task category and one run: the
//! rendered prompt lists every task of that category and the response must
//! carry a distribution over E0..E3 for each of them. Two backends implement
//! [`ChatBackend`]: [`HttpBackend`] speaks the common chat-completion JSON
//! schema, and [`MockBackend`] answers from a seeded [`MockRater`] so that the
//! whole pipeline runs offline and deterministically.

mod backend;
mod parse;
mod prompt;
mod run;
mod tagger;

use std::path::PathBuf;

use thiserror::Error;

pub use backend::{
    BackendConfig, BackendError, ChatBackend, HttpBackend, MockBackend, MockRater, RateRequest, DEFAULT_API_KEY_ENV,
};
pub use parse::{parse_response, ParsedResponse, ResponseError};
pub use prompt::{render_prompt, PromptSpec, RenderedPrompt, PLACEHOLDERS};
pub use run::{cache_key, rate_corpus, FailedRequest, RateOutcome};
pub use tagger::{tag_justification, JustificationTags, Lexicon, Tag, AFFORDANCES};

#[derive(Debug, Error)]
pub enum RaterError {
    #[error("invalid rater configuration: {0}")]
    InvalidConfig(String),
    #[error("prompt template references unknown placeholder {{{0}}}")]
    UnresolvedPlaceholder(String),
    #[error("no tasks to render")]
    EmptyTaskList,
    #[error("task {task_id} belongs to {found}, not {expected}")]
    CategoryMismatch { task_id: String, expected: String, found: String },
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
}

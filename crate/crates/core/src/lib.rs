//! Task-based exposure of jobs to generative AI.
//!
//! The pipeline runs in stages, each a module:
//!
//! - [`corpus`]: tasks, occupation vignettes, ratings, survey microdata and
//!   vacancy panels, plus a synthetic generator with planted effects.
//! - [`rater`]: prompt rendering, chat backends, response parsing and caching.
//! - [`index`]: run averaging, worker aggregation and occupation summaries.
//! - [`reliability`]: agreement across rating runs.
//! - [`stats`]: the estimators everything else is built on.
//! - [`studies`]: the validation and labour-market analyses.

pub mod corpus;
pub mod index;
pub mod rater;
pub mod reliability;
pub mod stats;
pub mod studies;

// The guide's code blocks run as doc tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/rating.md")]
    mod rating {}
    #[doc = include_str!("../../../book/src/index.md")]
    mod index {}
    #[doc = include_str!("../../../book/src/reliability.md")]
    mod reliability {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/studies.md")]
    mod studies {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}

//! Content-aspect analysis of social-media link archives.
//!
//! The crate turns an archive of party-account posts and the web pages they
//! link to into a statistical answer to "which kind of content gets
//! reshared?". It is organized as a pipeline:
//!
//! 1. [`ingest`] — parse post archives, resolve links through a replayable
//!    fetcher, and extract readable page text.
//! 2. [`corpus`] — normalize the page texts into a vocabulary-indexed corpus
//!    and trim the top reshare percentile of posts.
//! 3. [`topics`] — fit an LDA topic model by collapsed Gibbs sampling and
//!    pick the topic count by held-out perplexity.
//! 4. [`aspect`] — combine analyst topic labels with the document-topic
//!    posterior into per-post episodicity/thematicity scores.
//! 5. [`regression`] — fit exposure-offset Poisson and negative-binomial
//!    count models, select terms by likelihood-ratio backward elimination,
//!    and report incidence rate ratios.
//!
//! [`pipeline`] wires the stages together behind a file-based contract so
//! every stage can be rerun from its upstream artifacts, and [`config`]
//! holds the single configuration object all stages share.

pub mod aspect;
pub mod config;
pub mod corpus;
mod error;
pub mod ingest;
pub mod pipeline;
pub mod regression;
pub mod topics;

pub use error::{Error, Result};

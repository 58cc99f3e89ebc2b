//! Zero-shot multi-agent prediction for human-centered urban tasks.
//!
//! Three agent layers run over a pluggable chat backend:
//!
//! 1. [`guidance`] researches six predictive factors for each
//!    (dimension, level) pair of a task;
//! 2. [`extraction`] asks two variants per pair and location, and
//!    [`reliability`] gates them field by field, repairing only conflicts;
//! 3. [`inference`] reasons over the four records to a score in [0, 10].
//!
//! [`geo`] builds the location context, [`pipeline`] runs the layers on a
//! worker pool, and [`evaluation`] scores predictions and ablations.

pub mod cli;
pub mod config;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod geo;
pub mod guidance;
pub mod http;
pub mod inference;
pub mod llm;
pub mod pipeline;
pub mod reliability;
pub mod reply;
pub mod synthetic;

pub use error::{Error, Result};

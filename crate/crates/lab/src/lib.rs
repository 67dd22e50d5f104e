//! Experiment drivers, file formats and reports on top of `erw-core`.
//!
//! A run reads one JSON [`config::Config`], executes one
//! [`drivers::Experiment`] and writes an [`report::ExperimentReport`] plus
//! CSV tables. Reports depend only on the config and the seed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod drivers;
pub mod error;
pub mod output;
pub mod parallel;
pub mod report;
pub mod spec_file;

pub use error::{LabError, LabResult};

//! Lane-level intersection estimation from vehicle measurements.

// NaN must fail every positivity check, hence `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod ingest;
pub mod lane_course;
pub mod mcmc;
pub mod pipeline;
pub mod synthetic;
pub mod topology;

pub use error::{Error, Result};

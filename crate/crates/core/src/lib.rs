//! Joint communication, computation, caching and control (4C) for
//! collaborative multi-access edge computing.
//!
//! The pipeline: base stations are grouped into overlapping collaboration
//! spaces ([`topology`]), a seeded workload is generated for one space
//! ([`scenario`]), the relaxed allocation problem is solved by proximal
//! block-coordinate descent ([`solver`]), rounded to binary decisions
//! ([`rounding`]), and the resulting cache plane is simulated under an LFU
//! policy ([`cachesim`]). [`metrics`] and [`harness`] turn all of that into
//! reports.

pub mod cachesim;
pub mod config;
pub mod costmodel;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod projection;
pub mod rounding;
pub mod scenario;
pub mod solver;
pub mod topology;

pub use error::{Error, Result};

//! Uncoordinated multi-agent deep Q-learning for cognitive-radio transmit
//! power allocation under underlay spectrum sharing.
//!
//! The crate simulates a primary network of access points on a wrapped grid
//! sharing a band with a small secondary network of cognitive radios. Each
//! CR learns its transmit power independently; the only shared signal is one
//! bit saying whether every monitored primary link still meets the underlay
//! limit. Learned allocations are scored against an exhaustive search.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod cli;
pub mod config;
pub mod environment;
pub mod error;
pub mod harness;
pub mod linklayer;
pub mod neuralnet;
pub mod oracle;
pub mod output;
pub mod topology;

pub use error::{Error, Result};

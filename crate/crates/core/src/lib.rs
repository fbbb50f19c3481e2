//! Cross-layer root-cause analysis for video calls over 5G.
//!
//! The crate turns time-aligned RAN, packet and application telemetry into
//! per-window event feature vectors, matches them against a causal graph of
//! 5G causes and WebRTC consequences, and aggregates the matches into
//! frequency, conditional-probability and chain-ratio reports. Chains and
//! events can be redefined in a small text language ([`dsl`]), and
//! [`synth`] generates synthetic traces with known ground truth.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod dsl;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod trace;

pub use error::{DominoError, Result};

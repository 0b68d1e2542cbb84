//! Exact and randomized path signatures as features for unsupervised
//! market anomaly detection.
//!
//! * [`paths`]: multichannel series, augmentation, normalization, windows.
//! * [`tensoralg`]: truncated tensor algebra and exact signatures.
//! * [`randsig`]: randomized signatures from a random controlled ODE.
//! * [`synth`]: GBM paths and streak-suppressed fakes.
//! * [`readout`]: logistic readout and classification metrics.
//! * [`detectors`]: isolation forest, MCD and the spike benchmark.
//! * [`pipeline`]: the pump-and-dump study on trade files.
//! * [`cli`]: configuration and subcommands of the `sigad` binary.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detectors;
mod linalg;
pub mod paths;
pub mod pipeline;
pub mod randsig;
pub mod readout;
pub mod synth;
pub mod tensoralg;

//! Diagnostics toolkit for physics-informed neural networks (PINNs) on
//! macroscopic traffic flow models (LWR and ARZ).
//!
//! The crate trains small PINNs on synthetic or ingested detector data and
//! quantifies when and why they fail:
//!
//! * [`trainer`] — hybrid-loss training, L² relative errors, β sweeps, and
//!   the 1 % failure test against pure-data and pure-physics baselines.
//! * [`diagnostics`] — gradient triplet probes, dominance ratios, the
//!   positive-cone alignment test, and Hessian-eigenvector loss landscapes.
//! * [`bounds`] — CFL dataset audits and residual error lower bounds forced
//!   by sparse sampling and time averaging.
//! * [`datahub`] — Godunov ground truth, manufactured solutions with exact
//!   derivatives, detector emulation, and CSV ingestion.
//! * [`diffengine`] — the expression-graph autodiff engine behind the
//!   residuals and probes.

pub mod bounds;
pub mod cli;
pub mod datahub;
pub mod diagnostics;
pub mod diffengine;
pub mod error;
pub mod networks;
pub mod physics;
pub mod trainer;

pub use error::{Error, Result};

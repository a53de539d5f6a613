//! Transient-performance analysis of distributed-averaging (DAPI) and
//! centralized-averaging (CAPI) secondary frequency controllers under
//! power-injection disturbances and noisy frequency measurements.
//!
//! The squared H2 norm of the closed loop, with resistive power losses as the
//! performance output, measures the expected transient power loss under
//! persistent white disturbances. This crate evaluates that metric three
//! independent ways and keeps them in agreement:
//!
//! * closed-form per-mode expressions over the Laplacian spectrum
//!   ([`formulas`]),
//! * dense Lyapunov solves on the assembled closed-loop state space, both
//!   full-matrix and per-mode ([`oracle`]),
//! * Euler-Maruyama Monte-Carlo estimation of the steady-state output power
//!   ([`oracle::h2_monte_carlo`]).
//!
//! On top of the metric, [`tuning`] locates and bounds the optimal
//! distributed-averaging strength, and [`experiments`] reproduces loss
//! curves, scaling laws and density sweeps as deterministic CSV files.
//!
//! Start with the runnable examples (`cargo run --release --example ...`):
//! each major capability has one. A thin `dapi-perf` binary exposes the same
//! functionality as subcommands.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod formulas;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod tuning;

pub use error::{Error, Result};
pub use formulas::{
    capi_losses, dapi_losses, dapi_losses_correlated, dapi_losses_separated, LossBreakdown,
};
pub use graph::{LaplacianSpectrum, WeightedGraph};
pub use model::{
    assemble_capi, assemble_dapi, assemble_dapi_correlated, assemble_dapi_gamma,
    deflate_marginal_mode, ClosedLoopStateSpace, SystemParams,
};
pub use oracle::{h2_lyapunov, h2_monte_carlo, h2_per_mode, H2Result, SimConfig};

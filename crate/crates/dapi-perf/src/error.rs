//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("duplicate edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },

    #[error("edge ({i}, {j}) not present")]
    MissingEdge { i: usize, j: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("node count mismatch: {left} vs {right}")]
    NodeCountMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver did not converge")]
    EigenFailure,

    #[error("state matrix is unstable or marginal: eigenvalue {re:.6e} {im:+.6e}i")]
    NotHurwitz { re: f64, im: f64 },

    #[error("lyapunov residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    LyapunovResidual { residual: f64, tolerance: f64 },

    #[error("lyapunov reduction is singular (eigenvalue pair sums to zero)")]
    SingularLyapunov,

    #[error("marginal state is coupled (norm {norm:.3e} > {tolerance:.3e})")]
    CoupledMarginalState { norm: f64, tolerance: f64 },

    #[error("system is already deflated")]
    AlreadyDeflated,

    #[error("laplacians do not commute (||LB LC - LC LB|| = {norm:.3e})")]
    NonCommutingLaplacians { norm: f64 },

    #[error("simulation diverged at t = {t:.3}")]
    SimulationDiverged { t: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

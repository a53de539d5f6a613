//! Closed-loop state-space assembly for the DAPI- and CAPI-controlled
//! linearized swing dynamics.
//!
//! States are stacked as `[theta; omega; Omega]`: phase angles, frequency
//! deviations, and the secondary controller's integral state (per node for
//! DAPI, a single scalar for CAPI). Inputs are the `2n` white-noise channels
//! `[P; eta]` with the measurement-noise intensity ratio built into the input
//! matrix. The performance output is `y = L_G^{1/2} theta`, whose squared
//! norm is the instantaneous resistive power loss.
//!
//! The network-average phase angle is a marginally stable integrator that
//! neither feeds the dynamics nor the output; [`deflate_marginal_mode`]
//! removes it so that the Lyapunov-based H2 evaluation sees a Hurwitz state
//! matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::{WeightedGraph, ZERO_CLAMP_REL};

/// Uniform model and controller constants.
///
/// `averaging_gain` is the distributed-averaging strength (the ratio of
/// communication to susceptance weights); it is only meaningful for DAPI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Droop gain `k` (inverse damping).
    pub droop_gain: f64,
    /// Inertia-to-damping ratio `tau`, in seconds.
    pub inertia_ratio: f64,
    /// Integral controller gain `q`.
    pub integral_gain: f64,
    /// Conductance-to-susceptance ratio `alpha = g / b`.
    pub conductance_ratio: f64,
    /// Measurement-noise-to-injection-noise intensity ratio `eps >= 0`.
    pub noise_ratio: f64,
    /// Distributed-averaging strength `gamma >= 0` (DAPI only).
    pub averaging_gain: f64,
}

impl SystemParams {
    pub fn new(
        droop_gain: f64,
        inertia_ratio: f64,
        integral_gain: f64,
        conductance_ratio: f64,
        noise_ratio: f64,
        averaging_gain: f64,
    ) -> Result<Self> {
        let p = Self {
            droop_gain,
            inertia_ratio,
            integral_gain,
            conductance_ratio,
            noise_ratio,
            averaging_gain,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("droop gain k", self.droop_gain),
            ("inertia ratio tau", self.inertia_ratio),
            ("integral gain q", self.integral_gain),
            ("conductance ratio alpha", self.conductance_ratio),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.noise_ratio.is_finite() || self.noise_ratio < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise ratio eps must be >= 0, got {}",
                self.noise_ratio
            )));
        }
        if !self.averaging_gain.is_finite() || self.averaging_gain < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "averaging gain gamma must be >= 0, got {}",
                self.averaging_gain
            )));
        }
        Ok(())
    }

    /// Same parameters with a different averaging gain; convenient in sweeps.
    pub fn with_averaging_gain(self, gamma: f64) -> Self {
        Self {
            averaging_gain: gamma,
            ..self
        }
    }
}

/// Per-node droop/inertia/integral constants. The closed forms require
/// uniform parameters, but the assembly and the Lyapunov oracle do not.
#[derive(Debug, Clone)]
pub struct PerNodeParams {
    pub droop_gains: Vec<f64>,
    pub inertia_ratios: Vec<f64>,
    pub integral_gains: Vec<f64>,
    pub conductance_ratio: f64,
    pub noise_ratio: f64,
}

impl PerNodeParams {
    fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [
            ("droop gains", &self.droop_gains),
            ("inertia ratios", &self.inertia_ratios),
            ("integral gains", &self.integral_gains),
        ] {
            if v.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "{name} must have one entry per node ({n}), got {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must all be > 0")));
            }
        }
        if self.conductance_ratio.is_nan() || self.conductance_ratio <= 0.0 {
            return Err(Error::InvalidParameter("conductance ratio must be > 0".into()));
        }
        if self.noise_ratio.is_nan() || self.noise_ratio < 0.0 {
            return Err(Error::InvalidParameter("noise ratio must be >= 0".into()));
        }
        Ok(())
    }

    fn uniform(n: usize, p: &SystemParams) -> Self {
        Self {
            droop_gains: vec![p.droop_gain; n],
            inertia_ratios: vec![p.inertia_ratio; n],
            integral_gains: vec![p.integral_gain; n],
            conductance_ratio: p.conductance_ratio,
            noise_ratio: p.noise_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Dapi,
    DapiCorrelated,
    Capi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateBlock {
    PhaseAngle,
    Frequency,
    IntegralState,
}

/// Contiguous span of states belonging to one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateBlockSpan {
    pub block: StateBlock,
    pub start: usize,
    pub len: usize,
}

/// Noise-driven LTI closed loop `x' = A x + B w`, `y = C x`.
#[derive(Debug, Clone)]
pub struct ClosedLoopStateSpace {
    kind: ControllerKind,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    nodes: usize,
    blocks: Vec<StateBlockSpan>,
    deflated: bool,
    marginal_integral_states: bool,
}

impl ClosedLoopStateSpace {
    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Always `2n`: the `P` channels followed by the `eta` channels.
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn blocks(&self) -> &[StateBlockSpan] {
        &self.blocks
    }

    pub fn is_deflated(&self) -> bool {
        self.deflated
    }

    /// Set when the integral states can drift undamped while measurement
    /// noise drives them (no communication layer but `eps > 0`). The H2 norm
    /// of such a system is infinite.
    pub fn has_marginal_integral_states(&self) -> bool {
        self.marginal_integral_states
    }
}

/// Positive-semidefinite square root via eigendecomposition, with the same
/// kernel clamping as the spectrum computation so that `sqrt(L) * 1 = 0`
/// holds to machine precision rather than to `sqrt(eigensolver noise)`.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    let sqrt_vals: DVector<f64> = eig.eigenvalues.map(|lam| {
        if lam.abs() <= ZERO_CLAMP_REL * scale || lam < 0.0 {
            0.0
        } else {
            lam.sqrt()
        }
    });
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&sqrt_vals) * v.transpose())
}

fn check_same_nodes(gp: &WeightedGraph, gc: &WeightedGraph) -> Result<()> {
    if gp.node_count() != gc.node_count() {
        return Err(Error::NodeCountMismatch {
            left: gp.node_count(),
            right: gc.node_count(),
        });
    }
    Ok(())
}

fn dapi_blocks(n: usize) -> Vec<StateBlockSpan> {
    vec![
        StateBlockSpan { block: StateBlock::PhaseAngle, start: 0, len: n },
        StateBlockSpan { block: StateBlock::Frequency, start: n, len: n },
        StateBlockSpan { block: StateBlock::IntegralState, start: 2 * n, len: n },
    ]
}

fn dapi_core(
    gp: &WeightedGraph,
    l_c: DMatrix<f64>,
    pnp: &PerNodeParams,
    l_g: DMatrix<f64>,
    correlated: bool,
    marginal_integral_states: bool,
) -> Result<ClosedLoopStateSpace> {
    if !gp.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = gp.node_count();
    pnp.validate(n)?;
    let l_b = gp.laplacian();
    let eps = pnp.noise_ratio;

    let dim = 3 * n;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DMatrix::zeros(dim, 2 * n);
    for i in 0..n {
        let tau = pnp.inertia_ratios[i];
        let k = pnp.droop_gains[i];
        let q = pnp.integral_gains[i];
        // theta' = omega
        a[(i, n + i)] = 1.0;
        // tau omega' = -k L_B theta - omega + Omega + P [+ eps eta if correlated]
        for j in 0..n {
            a[(n + i, j)] = -k / tau * l_b[(i, j)];
        }
        a[(n + i, n + i)] = -1.0 / tau;
        a[(n + i, 2 * n + i)] = 1.0 / tau;
        b[(n + i, i)] = 1.0 / tau;
        if correlated {
            b[(n + i, n + i)] = eps / tau;
        }
        // q Omega' = -omega - L_C Omega + eps eta
        a[(2 * n + i, n + i)] = -1.0 / q;
        for j in 0..n {
            a[(2 * n + i, 2 * n + j)] = -l_c[(i, j)] / q;
        }
        b[(2 * n + i, n + i)] = eps / q;
    }

    let c_half = psd_sqrt(&l_g)?;
    let mut c = DMatrix::zeros(n, dim);
    c.view_mut((0, 0), (n, n)).copy_from(&c_half);

    Ok(ClosedLoopStateSpace {
        kind: if correlated {
            ControllerKind::DapiCorrelated
        } else {
            ControllerKind::Dapi
        },
        a,
        b,
        c,
        nodes: n,
        blocks: dapi_blocks(n),
        deflated: false,
        marginal_integral_states,
    })
}

/// DAPI closed loop with an explicit communication graph. The communication
/// weights are used as given; `p.averaging_gain` is not consulted.
pub fn assemble_dapi(
    gp: &WeightedGraph,
    gc: &WeightedGraph,
    p: &SystemParams,
) -> Result<ClosedLoopStateSpace> {
    p.validate()?;
    check_same_nodes(gp, gc)?;
    let marginal = p.noise_ratio > 0.0 && !gc.is_connected();
    dapi_core(
        gp,
        gc.laplacian(),
        &PerNodeParams::uniform(gp.node_count(), p),
        p.conductance_ratio * gp.laplacian(),
        false,
        marginal,
    )
}

/// DAPI closed loop with the communication layer taken as `gamma` times the
/// physical layer (`L_C = gamma L_B`).
pub fn assemble_dapi_gamma(gp: &WeightedGraph, p: &SystemParams) -> Result<ClosedLoopStateSpace> {
    p.validate()?;
    let marginal = p.noise_ratio > 0.0 && p.averaging_gain == 0.0;
    dapi_core(
        gp,
        p.averaging_gain * gp.laplacian(),
        &PerNodeParams::uniform(gp.node_count(), p),
        p.conductance_ratio * gp.laplacian(),
        false,
        marginal,
    )
}

/// DAPI variant where the measurement noise also enters the swing equation
/// (noisy frequency emulated by an inverter), correlating the two noise
/// blocks.
pub fn assemble_dapi_correlated(
    gp: &WeightedGraph,
    gc: &WeightedGraph,
    p: &SystemParams,
) -> Result<ClosedLoopStateSpace> {
    p.validate()?;
    check_same_nodes(gp, gc)?;
    let marginal = p.noise_ratio > 0.0 && !gc.is_connected();
    dapi_core(
        gp,
        gc.laplacian(),
        &PerNodeParams::uniform(gp.node_count(), p),
        p.conductance_ratio * gp.laplacian(),
        true,
        marginal,
    )
}

/// Correlated-noise DAPI with `L_C = gamma L_B`.
pub fn assemble_dapi_correlated_gamma(
    gp: &WeightedGraph,
    p: &SystemParams,
) -> Result<ClosedLoopStateSpace> {
    p.validate()?;
    let marginal = p.noise_ratio > 0.0 && p.averaging_gain == 0.0;
    dapi_core(
        gp,
        p.averaging_gain * gp.laplacian(),
        &PerNodeParams::uniform(gp.node_count(), p),
        p.conductance_ratio * gp.laplacian(),
        true,
        marginal,
    )
}

/// DAPI with an independent conductance graph defining the loss output
/// `y = L_G^{1/2} theta`. The closed forms assume `L_G = alpha L_B`; this
/// entry point keeps the Lyapunov oracle usable when that assumption is
/// relaxed.
pub fn assemble_dapi_with_conductance(
    gp: &WeightedGraph,
    gc: &WeightedGraph,
    conductance: &WeightedGraph,
    p: &SystemParams,
) -> Result<ClosedLoopStateSpace> {
    p.validate()?;
    check_same_nodes(gp, gc)?;
    check_same_nodes(gp, conductance)?;
    let marginal = p.noise_ratio > 0.0 && !gc.is_connected();
    dapi_core(
        gp,
        gc.laplacian(),
        &PerNodeParams::uniform(gp.node_count(), p),
        conductance.laplacian(),
        false,
        marginal,
    )
}

/// DAPI with per-node droop/inertia/integral constants.
pub fn assemble_dapi_per_node(
    gp: &WeightedGraph,
    gc: &WeightedGraph,
    pnp: &PerNodeParams,
) -> Result<ClosedLoopStateSpace> {
    check_same_nodes(gp, gc)?;
    let marginal = pnp.noise_ratio > 0.0 && !gc.is_connected();
    dapi_core(
        gp,
        gc.laplacian(),
        pnp,
        pnp.conductance_ratio * gp.laplacian(),
        false,
        marginal,
    )
}

/// CAPI closed loop: a single integral state driven by the network-average
/// measured frequency and broadcast to every node. `p.averaging_gain` plays
/// no role.
pub fn assemble_capi(gp: &WeightedGraph, p: &SystemParams) -> Result<ClosedLoopStateSpace> {
    p.validate()?;
    assemble_capi_per_node(
        gp,
        &PerNodeParams::uniform(gp.node_count(), p),
        p.integral_gain,
    )
}

/// CAPI with per-node droop/inertia constants; the central integrator gain
/// `q` stays scalar.
pub fn assemble_capi_per_node(
    gp: &WeightedGraph,
    pnp: &PerNodeParams,
    q: f64,
) -> Result<ClosedLoopStateSpace> {
    if !gp.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = gp.node_count();
    pnp.validate(n)?;
    if q.is_nan() || q <= 0.0 {
        return Err(Error::InvalidParameter(format!("integral gain q must be > 0, got {q}")));
    }
    let l_b = gp.laplacian();
    let eps = pnp.noise_ratio;

    let dim = 2 * n + 1;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DMatrix::zeros(dim, 2 * n);
    for i in 0..n {
        let tau = pnp.inertia_ratios[i];
        let k = pnp.droop_gains[i];
        a[(i, n + i)] = 1.0;
        for j in 0..n {
            a[(n + i, j)] = -k / tau * l_b[(i, j)];
        }
        a[(n + i, n + i)] = -1.0 / tau;
        a[(n + i, 2 * n)] = 1.0 / tau;
        b[(n + i, i)] = 1.0 / tau;
        // q Omega' = -(1/n) 1^T omega + eps 1^T eta
        a[(2 * n, n + i)] = -1.0 / (n as f64 * q);
        b[(2 * n, n + i)] = eps / q;
    }

    let c_half = psd_sqrt(&(pnp.conductance_ratio * &l_b))?;
    let mut c = DMatrix::zeros(n, dim);
    c.view_mut((0, 0), (n, n)).copy_from(&c_half);

    Ok(ClosedLoopStateSpace {
        kind: ControllerKind::Capi,
        a,
        b,
        c,
        nodes: n,
        blocks: vec![
            StateBlockSpan { block: StateBlock::PhaseAngle, start: 0, len: n },
            StateBlockSpan { block: StateBlock::Frequency, start: n, len: n },
            StateBlockSpan { block: StateBlock::IntegralState, start: 2 * n, len: 1 },
        ],
        deflated: false,
        marginal_integral_states: false,
    })
}

#[cfg(test)]
impl ClosedLoopStateSpace {
    /// Test-only escape hatch for driving the oracles with hand-built
    /// systems that the assembly operations cannot produce.
    pub(crate) fn from_raw_parts(
        kind: ControllerKind,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        nodes: usize,
        deflated: bool,
    ) -> Self {
        let dim = a.nrows();
        Self {
            kind,
            a,
            b,
            c,
            nodes,
            blocks: vec![StateBlockSpan { block: StateBlock::PhaseAngle, start: 0, len: dim }],
            deflated,
            marginal_integral_states: false,
        }
    }
}

/// Tolerance on the coupling of the removed average-phase state; anything
/// larger signals a modeling bug rather than floating-point noise.
pub const DEFLATION_COUPLING_TOL: f64 = 1e-10;

/// Removes the network-average phase angle, an undriven-by-dynamics,
/// unobservable integrator, leaving the H2 norm unchanged.
///
/// The phase block is rotated by an orthonormal basis whose first coordinate
/// is the average direction, and that coordinate is dropped. The average
/// frequency and integral modes stay: they are asymptotically stable.
pub fn deflate_marginal_mode(s: &ClosedLoopStateSpace) -> Result<ClosedLoopStateSpace> {
    if s.deflated {
        return Err(Error::AlreadyDeflated);
    }
    let n = s.nodes;
    let dim = s.state_dim();

    // Householder reflector with first column 1/sqrt(n) * ones.
    let mut u = DVector::from_element(n, -1.0 / (n as f64).sqrt());
    u[0] += 1.0;
    let v = DMatrix::identity(n, n) - (&u * u.transpose()) * (2.0 / u.dot(&u));

    // Only the phase block needs rotating; remaining blocks keep nodal
    // coordinates. t = blkdiag(v, I).
    let mut t = DMatrix::identity(dim, dim);
    t.view_mut((0, 0), (n, n)).copy_from(&v);

    let a = t.transpose() * s.a() * &t;
    let b = t.transpose() * s.b();
    let c = s.c() * &t;

    // The dropped coordinate must influence neither the other states nor the
    // output.
    let mut coupling: f64 = 0.0;
    for r in 1..dim {
        coupling += a[(r, 0)] * a[(r, 0)];
    }
    for r in 0..c.nrows() {
        coupling += c[(r, 0)] * c[(r, 0)];
    }
    let coupling = coupling.sqrt();
    if coupling > DEFLATION_COUPLING_TOL {
        return Err(Error::CoupledMarginalState {
            norm: coupling,
            tolerance: DEFLATION_COUPLING_TOL,
        });
    }

    let keep: Vec<usize> = (1..dim).collect();
    let a_red = a.select_rows(keep.iter()).select_columns(keep.iter());
    let b_red = b.select_rows(keep.iter());
    let c_red = c.select_columns(keep.iter());

    let mut blocks = s.blocks.clone();
    for span in &mut blocks {
        if span.start == 0 {
            span.len -= 1;
        } else {
            span.start -= 1;
        }
    }

    Ok(ClosedLoopStateSpace {
        kind: s.kind,
        a: a_red,
        b: b_red,
        c: c_red,
        nodes: n,
        blocks,
        deflated: true,
        marginal_integral_states: s.marginal_integral_states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_params() -> SystemParams {
        SystemParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn fig2_params(gamma: f64) -> SystemParams {
        SystemParams::new(5.0, 0.8, 0.8, 1.0, 1.0, gamma).unwrap()
    }

    #[test]
    fn dapi_two_node_explicit_matrices() {
        let gp = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let s = assemble_dapi_gamma(&gp, &unit_params()).unwrap();
        assert_eq!(s.state_dim(), 6);
        assert_eq!(s.input_dim(), 4);
        let lb = [[1.0, -1.0], [-1.0, 1.0]];
        #[rustfmt::skip]
        let expect_a = [
            [0.0, 0.0,  1.0,  0.0,  0.0,  0.0],
            [0.0, 0.0,  0.0,  1.0,  0.0,  0.0],
            [-lb[0][0], -lb[0][1], -1.0, 0.0, 1.0, 0.0],
            [-lb[1][0], -lb[1][1], 0.0, -1.0, 0.0, 1.0],
            [0.0, 0.0, -1.0,  0.0, -lb[0][0], -lb[0][1]],
            [0.0, 0.0,  0.0, -1.0, -lb[1][0], -lb[1][1]],
        ];
        for (r, row) in expect_a.iter().enumerate() {
            for (c, want) in row.iter().enumerate() {
                assert_relative_eq!(s.a()[(r, c)], want, epsilon = 1e-14);
            }
        }
        // B: P channel into omega rows, eps * eta channel into Omega rows
        for r in 0..6 {
            for c in 0..4 {
                let expect = match (r, c) {
                    (2, 0) | (3, 1) | (4, 2) | (5, 3) => 1.0,
                    _ => 0.0,
                };
                assert_eq!(s.b()[(r, c)], expect);
            }
        }
        // C annihilates the all-ones phase direction
        let ones_theta = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((s.c() * ones_theta).norm() < 1e-12);
        let h = std::f64::consts::SQRT_2 / 2.0;
        assert_relative_eq!(s.c()[(0, 0)], h, epsilon = 1e-12);
        assert_relative_eq!(s.c()[(0, 1)], -h, epsilon = 1e-12);
    }

    #[test]
    fn dapi_zero_noise_has_zero_eta_block() {
        let gp = WeightedGraph::ring(5, 0.3).unwrap();
        let p = SystemParams::new(2.0, 0.5, 0.7, 1.0, 0.0, 1.5).unwrap();
        let s = assemble_dapi_gamma(&gp, &p).unwrap();
        let n = 5;
        let eta_block = s.b().view((0, n), (s.state_dim(), n));
        assert_eq!(eta_block.norm(), 0.0);
    }

    #[test]
    fn dapi_rejects_disconnected_and_mismatched() {
        let gp = WeightedGraph::new(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(
            assemble_dapi_gamma(&gp, &unit_params()),
            Err(Error::Disconnected)
        ));
        let gp = WeightedGraph::ring(4, 1.0).unwrap();
        let gc = WeightedGraph::ring(5, 1.0).unwrap();
        assert!(matches!(
            assemble_dapi(&gp, &gc, &unit_params()),
            Err(Error::NodeCountMismatch { .. })
        ));
    }

    #[test]
    fn capi_two_node_explicit_matrices() {
        let gp = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let s = assemble_capi(&gp, &unit_params()).unwrap();
        assert_eq!(s.state_dim(), 5);
        #[rustfmt::skip]
        let expect_a = [
            [0.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [-1.0, 1.0, -1.0, 0.0, 1.0],
            [1.0, -1.0, 0.0, -1.0, 1.0],
            [0.0, 0.0, -0.5, -0.5, 0.0],
        ];
        for (r, row) in expect_a.iter().enumerate() {
            for (c, want) in row.iter().enumerate() {
                assert_relative_eq!(s.a()[(r, c)], want, epsilon = 1e-14);
            }
        }
        // eta enters only the averaged integrator row
        for c in 2..4 {
            assert_eq!(s.b()[(4, c)], 1.0);
            assert_eq!(s.b()[(2, c)], 0.0);
            assert_eq!(s.b()[(3, c)], 0.0);
        }
    }

    #[test]
    fn capi_ignores_averaging_gain() {
        let gp = WeightedGraph::ring(6, 0.2).unwrap();
        let a = assemble_capi(&gp, &fig2_params(0.5)).unwrap();
        let b = assemble_capi(&gp, &fig2_params(50.0)).unwrap();
        assert_eq!(a.a(), b.a());
        assert_eq!(a.b(), b.b());
        assert_eq!(a.c(), b.c());
    }

    #[test]
    fn correlated_reduces_to_dapi_at_zero_noise() {
        let gp = WeightedGraph::ring(4, 0.5).unwrap();
        let p = SystemParams::new(2.0, 0.6, 0.9, 1.0, 0.0, 1.2).unwrap();
        let plain = assemble_dapi_gamma(&gp, &p).unwrap();
        let corr = assemble_dapi_correlated_gamma(&gp, &p).unwrap();
        assert_eq!(plain.a(), corr.a());
        assert_eq!(plain.b(), corr.b());
        assert_eq!(plain.c(), corr.c());
    }

    #[test]
    fn correlated_eta_block_pattern() {
        let gp = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let s = assemble_dapi_correlated_gamma(&gp, &unit_params()).unwrap();
        // eta block is [0; I; I] with unit parameters
        let n = 2;
        for r in 0..n {
            for c in 0..n {
                assert_eq!(s.b()[(r, n + c)], 0.0);
                let expect = if r == c { 1.0 } else { 0.0 };
                assert_eq!(s.b()[(n + r, n + c)], expect);
                assert_eq!(s.b()[(2 * n + r, n + c)], expect);
            }
        }
    }

    #[test]
    fn gamma_zero_with_noise_is_flagged() {
        let gp = WeightedGraph::ring(5, 1.0).unwrap();
        let p = SystemParams::new(1.0, 1.0, 1.0, 1.0, 0.5, 0.0).unwrap();
        let s = assemble_dapi_gamma(&gp, &p).unwrap();
        assert!(s.has_marginal_integral_states());
        let p0 = SystemParams::new(1.0, 1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(!assemble_dapi_gamma(&gp, &p0).unwrap().has_marginal_integral_states());
    }

    #[test]
    fn deflation_drops_one_state_and_decouples() {
        let gp = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let s = assemble_dapi_gamma(&gp, &unit_params()).unwrap();
        let d = deflate_marginal_mode(&s).unwrap();
        assert_eq!(d.state_dim(), 5);
        assert!(d.is_deflated());
        assert!(matches!(deflate_marginal_mode(&d), Err(Error::AlreadyDeflated)));
        assert_eq!(d.blocks()[0].len, 1);
        assert_eq!(d.blocks()[1].start, 1);
    }

    #[test]
    fn deflated_ring_is_hurwitz() {
        let gp = WeightedGraph::ring(10, 1.0).unwrap();
        let s = assemble_dapi_gamma(&gp, &unit_params()).unwrap();
        let d = deflate_marginal_mode(&s).unwrap();
        let eigs = d.a().complex_eigenvalues();
        let abscissa = eigs.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        assert!(abscissa < -1e-6, "spectral abscissa {abscissa}");
    }

    #[test]
    fn capi_deflates_too() {
        let gp = WeightedGraph::complete(4, 0.3).unwrap();
        let s = assemble_capi(&gp, &fig2_params(1.0)).unwrap();
        let d = deflate_marginal_mode(&s).unwrap();
        assert_eq!(d.state_dim(), 8);
        let eigs = d.a().complex_eigenvalues();
        assert!(eigs.iter().all(|e| e.re < 0.0));
    }

    #[test]
    fn eigenbasis_conjugation_block_diagonalizes_dapi() {
        // Under uniform parameters the DAPI loop decouples into per-mode 3x3
        // subsystems with parameters (lambda_i, gamma lambda_i).
        let gp = WeightedGraph::ring_qfuzz(6, 2, 0.4).unwrap();
        let p = fig2_params(2.5);
        let s = assemble_dapi_gamma(&gp, &p).unwrap();
        let spec = gp.spectrum_with_vectors().unwrap();
        let v = spec.eigenvectors().unwrap();
        let n = 6;
        let mut t = DMatrix::zeros(3 * n, 3 * n);
        for blk in 0..3 {
            t.view_mut((blk * n, blk * n), (n, n)).copy_from(v);
        }
        let at = t.transpose() * s.a() * &t;
        let mut leakage: f64 = 0.0;
        for r in 0..3 * n {
            for c in 0..3 * n {
                if r % n != c % n {
                    leakage = leakage.max(at[(r, c)].abs());
                }
            }
        }
        assert!(leakage < 1e-9, "off-block leakage {leakage}");
        // spot-check one mode's 3x3 against (lambda_i, gamma lambda_i)
        let lam = spec.eigenvalues()[3];
        let (k, tau, q, g) = (5.0, 0.8, 0.8, 2.5);
        assert_relative_eq!(at[(n + 3, 3)], -k * lam / tau, epsilon = 1e-9);
        assert_relative_eq!(at[(2 * n + 3, 2 * n + 3)], -g * lam / q, epsilon = 1e-9);
    }

    #[test]
    fn per_node_parameters_accepted() {
        let gp = WeightedGraph::ring(4, 0.5).unwrap();
        let gc = WeightedGraph::ring(4, 1.0).unwrap();
        let pnp = PerNodeParams {
            droop_gains: vec![1.0, 2.0, 3.0, 4.0],
            inertia_ratios: vec![0.5, 0.6, 0.7, 0.8],
            integral_gains: vec![1.0, 1.1, 1.2, 1.3],
            conductance_ratio: 1.0,
            noise_ratio: 0.5,
        };
        let s = assemble_dapi_per_node(&gp, &gc, &pnp).unwrap();
        assert_relative_eq!(s.a()[(4, 4)], -1.0 / 0.5);
        assert_relative_eq!(s.b()[(5, 1)], 1.0 / 0.6);
        let d = deflate_marginal_mode(&s).unwrap();
        assert_eq!(d.state_dim(), 11);
    }

    #[test]
    fn custom_conductance_graph_shapes_output() {
        let gp = WeightedGraph::ring(4, 1.0).unwrap();
        let gcond = WeightedGraph::ring(4, 2.0).unwrap();
        let p = unit_params();
        let s = assemble_dapi_with_conductance(&gp, &gp, &gcond, &p).unwrap();
        // y^T y = theta^T L_G theta
        let theta = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.5]);
        let mut x = DVector::zeros(12);
        x.rows_mut(0, 4).copy_from(&theta);
        let y = s.c() * &x;
        let lg = gcond.laplacian();
        assert_relative_eq!(y.norm_squared(), (theta.transpose() * lg * theta)[0], epsilon = 1e-10);
    }
}

//! Closed-form squared H2 norms of the DAPI- and CAPI-controlled loops.
//!
//! Every expression decomposes over the Laplacian spectrum. For each nonzero
//! eigenvalue the scalar mode gain `phi` splits the mode's contribution
//! between the injection-noise part (weight `phi / (1 + phi)`) and the
//! measurement-noise part (weight `1 / (1 + phi)`); the two weights sum to
//! one. Losses diverge only in documented ways (no communication while
//! measurement noise is present), and divergence is carried as a tagged
//! value rather than a bare floating-point infinity.

use crate::error::{Error, Result};
use crate::graph::{LaplacianSpectrum, WeightedGraph, ZERO_CLAMP_REL};
use crate::model::SystemParams;
use nalgebra::SymmetricEigen;

/// Reason a loss evaluation is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    /// `gamma = 0` with measurement noise present: the integral states drift
    /// undamped while noise keeps driving them.
    ZeroAveragingGain,
    /// A communication-layer mode with zero eigenvalue (disconnected layer)
    /// while measurement noise is present.
    ZeroCommunicationMode { mode: usize },
}

/// Squared H2 losses split by noise source. `total = p_part + eta_part`
/// by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Expected losses from power-injection noise.
    pub p_part: f64,
    /// Expected losses from frequency-measurement noise; infinite only when
    /// `divergence` is set.
    pub eta_part: f64,
    pub total: f64,
    pub divergence: Option<Divergence>,
}

impl LossBreakdown {
    pub fn finite(p_part: f64, eta_part: f64) -> Self {
        Self {
            p_part,
            eta_part,
            total: p_part + eta_part,
            divergence: None,
        }
    }

    pub fn divergent(p_part: f64, reason: Divergence) -> Self {
        Self {
            p_part,
            eta_part: f64::INFINITY,
            total: f64::INFINITY,
            divergence: Some(reason),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Mode gain `phi(lambda, gamma, k, q, tau)
/// = (k q^2 lambda + q gamma lambda + tau (gamma lambda)^2) / (q + tau gamma lambda)`.
///
/// Strictly increasing in `lambda`, zero at `lambda = 0`. At `gamma = 0` it
/// degenerates to `k q lambda`, which is only a meaningful operating point
/// without measurement noise.
pub fn mode_gain(lambda: f64, p: &SystemParams) -> Result<f64> {
    p.validate()?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "laplacian eigenvalue must be >= 0, got {lambda}"
        )));
    }
    Ok(phi_raw(
        lambda,
        p.averaging_gain,
        p.droop_gain,
        p.integral_gain,
        p.inertia_ratio,
    ))
}

/// Mode gain for separated layers:
/// `(k lambda_p q^2 + lambda_c q + lambda_c^2 tau) / (q + lambda_c tau)`.
/// With `lambda_c = gamma lambda_p` it reduces to [`mode_gain`].
pub fn mode_gain_separated(lambda_p: f64, lambda_c: f64, p: &SystemParams) -> Result<f64> {
    p.validate()?;
    if lambda_p.is_nan() || lambda_c.is_nan() || lambda_p < 0.0 || lambda_c < 0.0 {
        return Err(Error::InvalidParameter(
            "laplacian eigenvalues must be >= 0".into(),
        ));
    }
    Ok(phi_hat_raw(
        lambda_p,
        lambda_c,
        p.droop_gain,
        p.integral_gain,
        p.inertia_ratio,
    ))
}

fn phi_raw(lambda: f64, gamma: f64, k: f64, q: f64, tau: f64) -> f64 {
    let gl = gamma * lambda;
    let denom = q + tau * gl;
    debug_assert!(denom > 0.0, "q + tau*gamma*lambda must be positive");
    (k * q * q * lambda + q * gl + tau * gl * gl) / denom
}

fn phi_hat_raw(lambda_p: f64, lambda_c: f64, k: f64, q: f64, tau: f64) -> f64 {
    let denom = q + lambda_c * tau;
    debug_assert!(denom > 0.0);
    (k * lambda_p * q * q + lambda_c * q + lambda_c * lambda_c * tau) / denom
}

fn check_connected(spec: &LaplacianSpectrum) -> Result<()> {
    if spec.node_count() < 2 || !spec.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(())
}

/// DAPI losses over the spectrum of the shared physical /
/// communication topology (`L_C = gamma L_B`):
///
/// `p_part   = (alpha / 2k) * sum_{i>=2} phi_i / (1 + phi_i)`
/// `eta_part = eps^2 (alpha / 2k) * sum_{i>=2} 1 / (gamma lambda_i (1 + phi_i))`
pub fn dapi_losses(spec: &LaplacianSpectrum, p: &SystemParams) -> Result<LossBreakdown> {
    p.validate()?;
    check_connected(spec)?;
    let (k, q, tau) = (p.droop_gain, p.integral_gain, p.inertia_ratio);
    let gamma = p.averaging_gain;
    let eps = p.noise_ratio;
    let prefactor = p.conductance_ratio / (2.0 * k);

    let mut p_sum = 0.0;
    for &lam in spec.nonzero() {
        let phi = phi_raw(lam, gamma, k, q, tau);
        p_sum += phi / (1.0 + phi);
    }
    let p_part = prefactor * p_sum;

    if eps == 0.0 {
        return Ok(LossBreakdown::finite(p_part, 0.0));
    }
    if gamma == 0.0 {
        return Ok(LossBreakdown::divergent(p_part, Divergence::ZeroAveragingGain));
    }
    let mut eta_sum = 0.0;
    for &lam in spec.nonzero() {
        let phi = phi_raw(lam, gamma, k, q, tau);
        eta_sum += 1.0 / (gamma * lam * (1.0 + phi));
    }
    Ok(LossBreakdown::finite(p_part, eps * eps * prefactor * eta_sum))
}

/// CAPI losses: `(alpha / 2k) (n - 1)`, independent of the measurement
/// noise and of the network topology beyond its size.
pub fn capi_losses(n: usize, p: &SystemParams) -> Result<LossBreakdown> {
    p.validate()?;
    if n < 1 {
        return Err(Error::InvalidParameter("node count must be >= 1".into()));
    }
    let p_part = p.conductance_ratio / (2.0 * p.droop_gain) * (n as f64 - 1.0);
    Ok(LossBreakdown::finite(p_part, 0.0))
}

/// Correlated-noise DAPI losses (measurement noise also enters the swing
/// equation):
///
/// `total = (alpha / 2k) sum_{i>=2} [ (1 + eps^2) phi_i / (1 + phi_i)
///          + eps^2 (2 + 1 / (gamma lambda_i)) / (1 + phi_i) ]`
///
/// reported with `p_part = (1 + eps^2) * (alpha / 2k) sum phi_i / (1 + phi_i)`
/// and `eta_part` the remainder, so that `eta_part = 0` exactly at `eps = 0`.
pub fn dapi_losses_correlated(spec: &LaplacianSpectrum, p: &SystemParams) -> Result<LossBreakdown> {
    p.validate()?;
    check_connected(spec)?;
    let (k, q, tau) = (p.droop_gain, p.integral_gain, p.inertia_ratio);
    let gamma = p.averaging_gain;
    let eps = p.noise_ratio;
    let prefactor = p.conductance_ratio / (2.0 * k);

    let mut p_sum = 0.0;
    for &lam in spec.nonzero() {
        let phi = phi_raw(lam, gamma, k, q, tau);
        p_sum += phi / (1.0 + phi);
    }
    let p_part = (1.0 + eps * eps) * prefactor * p_sum;

    if eps == 0.0 {
        return Ok(LossBreakdown::finite(p_part, 0.0));
    }
    if gamma == 0.0 {
        return Ok(LossBreakdown::divergent(p_part, Divergence::ZeroAveragingGain));
    }
    let mut eta_sum = 0.0;
    for &lam in spec.nonzero() {
        let phi = phi_raw(lam, gamma, k, q, tau);
        eta_sum += (2.0 + 1.0 / (gamma * lam)) / (1.0 + phi);
    }
    Ok(LossBreakdown::finite(p_part, eps * eps * prefactor * eta_sum))
}

/// Separated-layer DAPI losses with eigenvalues paired by index:
/// `lambda_p[i]` and `lambda_c[i]` must belong to the same mode of the
/// shared diagonalizing basis (for circulant graphs, the Fourier mode
/// index), not to the same sorted rank.
///
/// `p_part   = (alpha / 2k) sum_i phihat_i / (1 + phihat_i)`
/// `eta_part = (alpha / 2k) sum_i eps^2 / (lambda_c_i (1 + phihat_i))`
///
/// The shared kernel mode (`lambda_p = lambda_c = 0`) contributes nothing
/// and is skipped.
pub fn dapi_losses_separated_modes(
    lambda_p: &[f64],
    lambda_c: &[f64],
    p: &SystemParams,
) -> Result<LossBreakdown> {
    p.validate()?;
    if lambda_p.len() != lambda_c.len() {
        return Err(Error::NodeCountMismatch {
            left: lambda_p.len(),
            right: lambda_c.len(),
        });
    }
    let (k, q, tau) = (p.droop_gain, p.integral_gain, p.inertia_ratio);
    let eps = p.noise_ratio;
    let prefactor = p.conductance_ratio / (2.0 * k);

    let scale_p = lambda_p.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    let scale_c = lambda_c.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    let zero_p = |x: f64| x.abs() <= ZERO_CLAMP_REL * scale_p;
    let zero_c = |x: f64| x.abs() <= ZERO_CLAMP_REL * scale_c;

    let mut p_sum = 0.0;
    let mut eta_sum = 0.0;
    let mut divergence = None;
    for (i, (&lp, &lc)) in lambda_p.iter().zip(lambda_c).enumerate() {
        let lp = if zero_p(lp) { 0.0 } else { lp };
        let lc = if zero_c(lc) { 0.0 } else { lc };
        if lp == 0.0 && lc == 0.0 {
            continue; // shared kernel
        }
        if lp < 0.0 || lc < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "negative eigenvalue in mode {i}"
            )));
        }
        let phi = phi_hat_raw(lp, lc, k, q, tau);
        p_sum += phi / (1.0 + phi);
        if eps > 0.0 {
            if lc == 0.0 {
                divergence.get_or_insert(Divergence::ZeroCommunicationMode { mode: i });
            } else {
                eta_sum += eps * eps / (lc * (1.0 + phi));
            }
        }
    }
    let p_part = prefactor * p_sum;
    Ok(match divergence {
        Some(reason) => LossBreakdown::divergent(p_part, reason),
        None => LossBreakdown::finite(p_part, prefactor * eta_sum),
    })
}

/// Tolerance of the commutation gate for separated-layer evaluation.
pub const COMMUTATION_TOL: f64 = 1e-9;

/// Separated-layer DAPI losses for two graphs on the same node set whose
/// Laplacians commute (simultaneously diagonalizable), e.g. two
/// rotation-symmetric q-fuzz rings. Eigenvalues are paired through a shared
/// eigenbasis; sorted-order pairing would mispair degenerate modes.
pub fn dapi_losses_separated(
    gp: &WeightedGraph,
    gc: &WeightedGraph,
    p: &SystemParams,
) -> Result<LossBreakdown> {
    p.validate()?;
    if gp.node_count() != gc.node_count() {
        return Err(Error::NodeCountMismatch {
            left: gp.node_count(),
            right: gc.node_count(),
        });
    }
    if !gp.is_connected() {
        return Err(Error::Disconnected);
    }
    let l_b = gp.laplacian();
    let l_c = gc.laplacian();
    let comm = (&l_b * &l_c - &l_c * &l_b).norm();
    if comm > COMMUTATION_TOL {
        return Err(Error::NonCommutingLaplacians { norm: comm });
    }
    let (lambda_p, lambda_c) = simultaneous_eigenvalues(&l_b, &l_c)?;
    dapi_losses_separated_modes(&lambda_p, &lambda_c, p)
}

/// Joint eigenvalues of two commuting symmetric matrices, paired through a
/// common orthonormal eigenbasis. Eigenvectors of `a` are refined inside
/// each (numerically) degenerate eigenspace so that they diagonalize `b`
/// there as well.
fn simultaneous_eigenvalues(
    a: &nalgebra::DMatrix<f64>,
    b: &nalgebra::DMatrix<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.nrows();
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let mut basis = nalgebra::DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        basis.set_column(col, &eig.eigenvectors.column(k));
    }
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let scale = vals.iter().fold(1.0_f64, |acc, &x| acc.max(x.abs()));
    let group_tol = 1e-8 * scale;

    // rotate each degenerate eigenspace of `a` to diagonalize `b` within it
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (vals[end] - vals[start]).abs() <= group_tol {
            end += 1;
        }
        let size = end - start;
        if size > 1 {
            let sub = basis.columns(start, size).clone_owned();
            let m = sub.transpose() * b * &sub;
            let m = (&m + m.transpose()) * 0.5;
            let sub_eig =
                SymmetricEigen::try_new(m, f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
            let rotated = &sub * &sub_eig.eigenvectors;
            basis.columns_mut(start, size).copy_from(&rotated);
        }
        start = end;
    }

    // read both spectra off the shared basis and verify it diagonalizes both
    let da = basis.transpose() * a * &basis;
    let db = basis.transpose() * b * &basis;
    let mut leak: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                leak = leak.max(da[(r, c)].abs()).max(db[(r, c)].abs());
            }
        }
    }
    let scale_b = (0..n).fold(1.0_f64, |acc, i| acc.max(db[(i, i)].abs()));
    if leak > 1e-7 * scale.max(scale_b) {
        return Err(Error::NonCommutingLaplacians { norm: leak });
    }
    Ok((
        (0..n).map(|i| da[(i, i)]).collect(),
        (0..n).map(|i| db[(i, i)]).collect(),
    ))
}

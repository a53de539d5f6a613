//! Ground-truth H2 evaluations used to validate every closed form.
//!
//! Three independent routes to `||S||^2 = lim E{y^T y}`:
//!
//! * [`h2_lyapunov`]: dense observability-Gramian solve on the deflated
//!   closed loop, `value = trace(B^T X B)` with `A^T X + X A + C^T C = 0`;
//! * [`h2_per_mode`]: one small Lyapunov solve per Laplacian eigenvalue
//!   (valid under uniform parameters, where the loop block-diagonalizes);
//! * [`h2_monte_carlo`]: Euler-Maruyama simulation of the driven loop,
//!   time-averaging the output power past a burn-in horizon.

pub mod lyapunov;
pub mod verify;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formulas::{Divergence, LossBreakdown};
use crate::graph::LaplacianSpectrum;
use crate::model::{deflate_marginal_mode, ClosedLoopStateSpace, SystemParams};

pub use lyapunov::{real_schur, solve_lyapunov, solve_lyapunov_schur, SchurForm};

/// Maximum admissible relative residual of a Gramian solve.
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-9;

/// Spectral-abscissa threshold above which a state matrix is treated as
/// unstable or marginal for H2 purposes.
pub const HURWITZ_MARGIN: f64 = -1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H2Method {
    LyapunovFull,
    LyapunovPerMode,
    MonteCarlo,
}

/// A squared H2 norm with its provenance. `stderr` is populated only by the
/// Monte-Carlo estimator.
#[derive(Debug, Clone, Copy)]
pub struct H2Result {
    pub value: f64,
    pub method: H2Method,
    pub stderr: Option<f64>,
}

fn ensure_deflated(s: &ClosedLoopStateSpace) -> Result<std::borrow::Cow<'_, ClosedLoopStateSpace>> {
    if s.is_deflated() {
        Ok(std::borrow::Cow::Borrowed(s))
    } else {
        Ok(std::borrow::Cow::Owned(deflate_marginal_mode(s)?))
    }
}

fn hurwitz_schur(a: &DMatrix<f64>) -> Result<SchurForm> {
    let schur = real_schur(a)?;
    let abscissa = schur.spectral_abscissa();
    if abscissa >= HURWITZ_MARGIN {
        let worst = schur
            .eigenvalues()
            .into_iter()
            .max_by(|x, y| x.0.total_cmp(&y.0))
            .unwrap_or((abscissa, 0.0));
        return Err(Error::NotHurwitz { re: worst.0, im: worst.1 });
    }
    Ok(schur)
}

fn gramian(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let schur = hurwitz_schur(a)?;
    let m = c.transpose() * c;
    let x = solve_lyapunov_schur(&schur, &m)?;
    let residual = (a.transpose() * &x + &x * a + &m).norm() / m.norm().max(f64::MIN_POSITIVE);
    if residual > LYAPUNOV_RESIDUAL_TOL {
        return Err(Error::LyapunovResidual {
            residual,
            tolerance: LYAPUNOV_RESIDUAL_TOL,
        });
    }
    Ok(x)
}

fn trace_btxb(b: nalgebra::DMatrixView<'_, f64>, x: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for col in 0..b.ncols() {
        let bc = b.column(col);
        acc += (&bc.transpose() * x * bc)[(0, 0)];
    }
    acc.max(0.0)
}

/// Squared H2 norm via the observability Gramian of the deflated loop.
///
/// A system flagged with marginal integral states (`gamma = 0` while
/// measurement noise is present) yields an infinite norm by construction;
/// that case returns `value = +inf` instead of a solver failure.
pub fn h2_lyapunov(s: &ClosedLoopStateSpace) -> Result<H2Result> {
    if s.has_marginal_integral_states() {
        return Ok(H2Result {
            value: f64::INFINITY,
            method: H2Method::LyapunovFull,
            stderr: None,
        });
    }
    let sys = ensure_deflated(s)?;
    let x = gramian(sys.a(), sys.c())?;
    Ok(H2Result {
        value: trace_btxb(sys.b().as_view(), &x),
        method: H2Method::LyapunovFull,
        stderr: None,
    })
}

/// Like [`h2_lyapunov`] but split by input block: the first `n` channels
/// (power injections) versus the last `n` (measurement noise). For the
/// correlated-noise variant the blocks are not independent, so only the
/// total is comparable with the closed-form breakdown there.
pub fn h2_lyapunov_split(s: &ClosedLoopStateSpace) -> Result<LossBreakdown> {
    if s.has_marginal_integral_states() {
        return Err(Error::NotHurwitz { re: 0.0, im: 0.0 });
    }
    let sys = ensure_deflated(s)?;
    let x = gramian(sys.a(), sys.c())?;
    let n = sys.node_count();
    let p_part = trace_btxb(sys.b().columns(0, n), &x);
    let eta_part = trace_btxb(sys.b().columns(n, n), &x);
    Ok(LossBreakdown::finite(p_part, eta_part))
}

/// Which closed loop a per-mode evaluation describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerModeVariant {
    Dapi,
    DapiCorrelated,
    Capi,
}

/// Squared H2 norm as a sum of per-eigenvalue Lyapunov solves.
///
/// Under uniform parameters the closed loop decouples into one small
/// subsystem per Laplacian mode. The structural zero mode has zero output
/// gain and is skipped. This route is independent of both the full-matrix
/// assembly and the closed forms.
pub fn h2_per_mode(
    spec: &LaplacianSpectrum,
    p: &SystemParams,
    variant: PerModeVariant,
) -> Result<H2Result> {
    let split = h2_per_mode_split(spec, p, variant)?;
    Ok(H2Result {
        value: split.total,
        method: H2Method::LyapunovPerMode,
        stderr: None,
    })
}

/// Per-mode evaluation split by noise channel (see [`h2_lyapunov_split`]
/// for the caveat on the correlated variant).
pub fn h2_per_mode_split(
    spec: &LaplacianSpectrum,
    p: &SystemParams,
    variant: PerModeVariant,
) -> Result<LossBreakdown> {
    p.validate()?;
    if spec.node_count() < 2 || !spec.is_connected() {
        return Err(Error::Disconnected);
    }
    if matches!(variant, PerModeVariant::Dapi | PerModeVariant::DapiCorrelated)
        && p.averaging_gain == 0.0
        && p.noise_ratio > 0.0
    {
        return Ok(LossBreakdown::divergent(
            f64::NAN,
            Divergence::ZeroAveragingGain,
        ));
    }

    let (k, tau, q) = (p.droop_gain, p.inertia_ratio, p.integral_gain);
    let (alpha, eps, gamma) = (p.conductance_ratio, p.noise_ratio, p.averaging_gain);

    let mut p_sum = 0.0;
    let mut eta_sum = 0.0;
    for &lam in spec.nonzero() {
        let (a, b, c) = match variant {
            PerModeVariant::Dapi | PerModeVariant::DapiCorrelated => {
                let correlated = matches!(variant, PerModeVariant::DapiCorrelated);
                let a = DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        0.0, 1.0, 0.0,
                        -k * lam / tau, -1.0 / tau, 1.0 / tau,
                        0.0, -1.0 / q, -gamma * lam / q,
                    ],
                );
                let b = DMatrix::from_row_slice(
                    3,
                    2,
                    &[
                        0.0, 0.0,
                        1.0 / tau, if correlated { eps / tau } else { 0.0 },
                        0.0, eps / q,
                    ],
                );
                let c = DMatrix::from_row_slice(1, 3, &[(alpha * lam).sqrt(), 0.0, 0.0]);
                (a, b, c)
            }
            PerModeVariant::Capi => {
                // the central integrator couples only to the average mode,
                // which is unobservable; nonzero modes see pure droop
                let a = DMatrix::from_row_slice(
                    2,
                    2,
                    &[0.0, 1.0, -k * lam / tau, -1.0 / tau],
                );
                let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0 / tau, 0.0]);
                let c = DMatrix::from_row_slice(1, 2, &[(alpha * lam).sqrt(), 0.0]);
                (a, b, c)
            }
        };
        let x = gramian(&a, &c)?;
        p_sum += trace_btxb(b.columns(0, 1), &x);
        eta_sum += trace_btxb(b.columns(1, 1), &x);
    }
    Ok(LossBreakdown::finite(p_sum, eta_sum))
}

/// Euler-Maruyama configuration. The defaults resolve the fastest local
/// dynamics (`dt` a small fraction of the controller time constants) and mix
/// well past the slowest closed-loop mode.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub dt: f64,
    /// Burn-in horizon discarded before averaging.
    pub t_burn: f64,
    /// Averaging horizon.
    pub t_avg: f64,
    /// Independent replications (>= 4); the stderr comes from their spread.
    pub n_seeds: usize,
    /// Base seed; stream `c` of replication `r` uses
    /// `rng_seed + c * 2^20 + r` (ChaCha8).
    pub rng_seed: u64,
}

impl SimConfig {
    /// Defaults: `dt = 1e-3 min(tau, q)`, `t_burn = 50 / |Re lambda_min(A)|`
    /// with `lambda_min` the slowest deflated closed-loop eigenvalue,
    /// `t_avg = 10 t_burn`, 8 seeds.
    pub fn defaults_for(s: &ClosedLoopStateSpace, p: &SystemParams) -> Result<Self> {
        p.validate()?;
        if s.has_marginal_integral_states() {
            return Err(Error::InvalidParameter(
                "cannot derive simulation horizons for a marginal system".into(),
            ));
        }
        let sys = ensure_deflated(s)?;
        let schur = hurwitz_schur(sys.a())?;
        let slowest = schur.spectral_abscissa().abs();
        let t_burn = 50.0 / slowest;
        Ok(Self {
            dt: 1e-3 * p.inertia_ratio.min(p.integral_gain),
            t_burn,
            t_avg: 10.0 * t_burn,
            n_seeds: 8,
            rng_seed: 0,
        })
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.dt, self.t_burn, self.t_avg].iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Error::InvalidParameter(
                "dt, t_burn and t_avg must be positive".into(),
            ));
        }
        if self.n_seeds < 4 {
            return Err(Error::InvalidParameter(format!(
                "need at least 4 seeds, got {}",
                self.n_seeds
            )));
        }
        Ok(())
    }
}

/// Divergence guard threshold on the state infinity-norm.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// Monte-Carlo estimate of the squared H2 norm: the time average of
/// `y^T y` past the burn-in, averaged over independent replications, with
/// the across-seed standard error attached.
///
/// Each of the `2n` channels draws from its own counter-seeded ChaCha8
/// stream, so results are reproducible for a given config and independent of
/// scheduling.
pub fn h2_monte_carlo(s: &ClosedLoopStateSpace, cfg: &SimConfig) -> Result<H2Result> {
    cfg.validate()?;
    if s.has_marginal_integral_states() {
        // undamped driven integrators: the time average has no limit
        return Err(Error::NotHurwitz { re: 0.0, im: 0.0 });
    }
    let sys = ensure_deflated(s)?;
    let burn_steps = (cfg.t_burn / cfg.dt).ceil() as usize;
    let avg_steps = ((cfg.t_avg / cfg.dt).ceil() as usize).max(1);

    let seed_means: Result<Vec<f64>> = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|rep| simulate_one(&sys, cfg, rep as u64, burn_steps, avg_steps))
        .collect();
    let seed_means = seed_means?;

    let mean = seed_means.iter().sum::<f64>() / cfg.n_seeds as f64;
    let var = seed_means
        .iter()
        .map(|m| (m - mean) * (m - mean))
        .sum::<f64>()
        / (cfg.n_seeds as f64 - 1.0);
    let stderr = (var / cfg.n_seeds as f64).sqrt();
    Ok(H2Result {
        value: mean,
        method: H2Method::MonteCarlo,
        stderr: Some(stderr),
    })
}

fn simulate_one(
    sys: &ClosedLoopStateSpace,
    cfg: &SimConfig,
    replication: u64,
    burn_steps: usize,
    avg_steps: usize,
) -> Result<f64> {
    let a = sys.a();
    let b = sys.b();
    let c = sys.c();
    let dim = sys.state_dim();
    let channels = sys.input_dim();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();

    let mut rngs: Vec<ChaCha8Rng> = (0..channels)
        .map(|ch| {
            let seed = cfg
                .rng_seed
                .wrapping_add((ch as u64) << 20)
                .wrapping_add(replication);
            ChaCha8Rng::seed_from_u64(seed)
        })
        .collect();

    let mut x = DVector::<f64>::zeros(dim);
    let mut ax = DVector::<f64>::zeros(dim);
    let mut bxi = DVector::<f64>::zeros(dim);
    let mut xi = DVector::<f64>::zeros(channels);
    let mut y = DVector::<f64>::zeros(sys.output_dim());
    let mut acc = 0.0;

    let total_steps = burn_steps + avg_steps;
    for step in 0..total_steps {
        for (ch, rng) in rngs.iter_mut().enumerate() {
            xi[ch] = rng.sample(StandardNormal);
        }
        ax.gemv(1.0, a, &x, 0.0);
        bxi.gemv(1.0, b, &xi, 0.0);
        for i in 0..dim {
            x[i] += dt * ax[i] + sqrt_dt * bxi[i];
        }
        if step >= burn_steps {
            y.gemv(1.0, c, &x, 0.0);
            acc += y.norm_squared();
        }
        if step % 4096 == 0 && x.amax() > DIVERGENCE_LIMIT {
            return Err(Error::SimulationDiverged {
                t: step as f64 * dt,
            });
        }
    }
    Ok(acc / avg_steps as f64)
}

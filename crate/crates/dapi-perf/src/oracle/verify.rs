//! The standing cross-validation grid: closed form vs full Lyapunov vs
//! per-mode Lyapunov (relative 1e-8), with optional Monte-Carlo agreement
//! within three standard errors.
//!
//! Cases span the graph families (ring, path, complete, torus) at sizes 5,
//! 10 and 24, noise ratios {0, 0.5, 1}, averaging gains {0.5, 2, 10}, plus
//! the two published parameter sets (complete n=10 loss-curve configuration
//! and the ring scaling configuration). The n = 24 rows get their mixing
//! speed from connectivity (fuzz radius, torus) rather than from large edge
//! weights: heavy weights make the loop stiff enough that the
//! Euler-Maruyama discretization bias at the default step would exceed the
//! Monte-Carlo standard error.

use crate::error::Result;
use crate::formulas::{capi_losses, dapi_losses, dapi_losses_correlated};
use crate::graph::WeightedGraph;
use crate::model::{
    assemble_capi, assemble_dapi_correlated_gamma, assemble_dapi_gamma, ClosedLoopStateSpace,
    SystemParams,
};
use crate::oracle::{h2_lyapunov, h2_monte_carlo, h2_per_mode, PerModeVariant, SimConfig};

/// Triangle agreement tolerance between the three non-sampled routes.
pub const TRIANGLE_REL_TOL: f64 = 1e-8;
/// Monte-Carlo coverage: within this many standard errors of the Lyapunov
/// value ...
pub const MC_SIGMA: f64 = 3.0;
/// ... and within this relative gap (the default horizons deliver it).
pub const MC_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridController {
    Dapi,
    Capi,
}

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub name: String,
    pub graph: WeightedGraph,
    pub params: SystemParams,
    pub controller: GridController,
}

impl OracleCase {
    pub fn system(&self) -> Result<ClosedLoopStateSpace> {
        match self.controller {
            GridController::Dapi => assemble_dapi_gamma(&self.graph, &self.params),
            GridController::Capi => assemble_capi(&self.graph, &self.params),
        }
    }

    pub fn closed_form_total(&self) -> Result<f64> {
        Ok(match self.controller {
            GridController::Dapi => dapi_losses(&self.graph.spectrum()?, &self.params)?.total,
            GridController::Capi => capi_losses(self.graph.node_count(), &self.params)?.total,
        })
    }
}

fn p(k: f64, tau: f64, q: f64, alpha: f64, eps: f64, gamma: f64) -> SystemParams {
    SystemParams::new(k, tau, q, alpha, eps, gamma).expect("grid parameters are valid")
}

/// The standing grid of cross-validation cases (13 rows).
pub fn standing_grid() -> Vec<OracleCase> {
    let fig2 = |eps: f64, gamma: f64| p(5.0, 0.8, 0.8, 1.0, eps, gamma);
    let mut cases = vec![
        (
            "complete-n10-fig2-gamma5.6",
            WeightedGraph::complete(10, 0.05),
            fig2(1.0, 5.6),
            GridController::Dapi,
        ),
        (
            "complete-n10-fig2-gamma0.83",
            WeightedGraph::complete(10, 0.05),
            fig2(1.0, 0.83),
            GridController::Dapi,
        ),
        (
            "complete-n5-eps0-gamma0.5",
            WeightedGraph::complete(5, 0.1),
            fig2(0.0, 0.5),
            GridController::Dapi,
        ),
        (
            "ring-n10-fig3-gamma10",
            WeightedGraph::ring(10, 0.1),
            fig2(0.5, 10.0),
            GridController::Dapi,
        ),
        (
            "ring-n5-eps1-gamma2",
            WeightedGraph::ring(5, 0.1),
            fig2(1.0, 2.0),
            GridController::Dapi,
        ),
        (
            "ring24-qfuzz2-eps0.5-gamma10",
            WeightedGraph::ring_qfuzz(24, 2, 0.3),
            fig2(0.5, 10.0),
            GridController::Dapi,
        ),
        (
            "path-n5-eps1-gamma2",
            WeightedGraph::path(5, 0.5),
            fig2(1.0, 2.0),
            GridController::Dapi,
        ),
        (
            "path-n10-eps0.5-gamma10",
            WeightedGraph::path(10, 1.0),
            fig2(0.5, 10.0),
            GridController::Dapi,
        ),
        (
            "torus-4x6-eps0.5-gamma2",
            WeightedGraph::torus_2d(4, 6, 0.3),
            fig2(0.5, 2.0),
            GridController::Dapi,
        ),
        (
            "torus-4x6-eps1-gamma10",
            WeightedGraph::torus_2d(4, 6, 0.3),
            fig2(1.0, 10.0),
            GridController::Dapi,
        ),
        (
            "capi-complete-n10-fig2",
            WeightedGraph::complete(10, 0.05),
            fig2(1.0, 1.0),
            GridController::Capi,
        ),
        (
            "capi-ring-n10-fig3",
            WeightedGraph::ring(10, 0.1),
            fig2(0.5, 1.0),
            GridController::Capi,
        ),
        (
            "capi-torus-4x6-eps0",
            WeightedGraph::torus_2d(4, 6, 0.1),
            fig2(0.0, 1.0),
            GridController::Capi,
        ),
    ];
    cases
        .drain(..)
        .map(|(name, graph, params, controller)| OracleCase {
            name: name.to_string(),
            graph: graph.expect("grid graphs are valid"),
            params,
            controller,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OracleRow {
    pub case_name: String,
    pub closed_form: f64,
    pub lyapunov: f64,
    pub per_mode: f64,
    pub mc_mean: Option<f64>,
    pub mc_stderr: Option<f64>,
    /// Largest pairwise relative gap among the three non-sampled routes.
    pub max_rel_err: f64,
    pub within_tol: bool,
}

/// Runs one grid case through every route. `mc_seed = None` skips the
/// Monte-Carlo leg.
pub fn oracle_triangle_row(case: &OracleCase, mc_seed: Option<u64>) -> Result<OracleRow> {
    let closed = case.closed_form_total()?;
    let system = case.system()?;
    let lyap = h2_lyapunov(&system)?.value;
    let spec = case.graph.spectrum()?;
    let variant = match case.controller {
        GridController::Dapi => PerModeVariant::Dapi,
        GridController::Capi => PerModeVariant::Capi,
    };
    let per_mode = h2_per_mode(&spec, &case.params, variant)?.value;

    let scale = closed.abs().max(lyap.abs()).max(per_mode.abs());
    let max_rel_err = [(closed - lyap), (closed - per_mode), (lyap - per_mode)]
        .iter()
        .map(|d| d.abs() / scale)
        .fold(0.0, f64::max);
    let mut within = max_rel_err <= TRIANGLE_REL_TOL;

    let (mc_mean, mc_stderr) = match mc_seed {
        None => (None, None),
        Some(seed) => {
            let cfg = SimConfig::defaults_for(&system, &case.params)?.with_seed(seed);
            let mc = h2_monte_carlo(&system, &cfg)?;
            let stderr = mc.stderr.unwrap_or(0.0);
            let gap = (mc.value - lyap).abs();
            within = within && gap <= MC_SIGMA * stderr && gap <= MC_REL_TOL * lyap;
            (Some(mc.value), Some(stderr))
        }
    };

    Ok(OracleRow {
        case_name: case.name.clone(),
        closed_form: closed,
        lyapunov: lyap,
        per_mode,
        mc_mean,
        mc_stderr,
        max_rel_err,
        within_tol: within,
    })
}

/// Correlated-noise consistency on a DAPI grid case: appendix closed form
/// vs full Lyapunov on the correlated assembly. Returns
/// `(closed_total, lyapunov_total)`.
pub fn correlated_consistency(case: &OracleCase) -> Result<(f64, f64)> {
    let spec = case.graph.spectrum()?;
    let closed = dapi_losses_correlated(&spec, &case.params)?.total;
    let system = assemble_dapi_correlated_gamma(&case.graph, &case.params)?;
    let lyap = h2_lyapunov(&system)?.value;
    Ok((closed, lyap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_required_coverage() {
        let grid = standing_grid();
        assert!(grid.len() >= 12);
        let has = |f: &dyn Fn(&OracleCase) -> bool| grid.iter().any(f);
        assert!(has(&|c| c.name.contains("ring")));
        assert!(has(&|c| c.name.contains("path")));
        assert!(has(&|c| c.name.contains("complete")));
        assert!(has(&|c| c.name.contains("torus")));
        assert!(has(&|c| c.params.noise_ratio == 0.0));
        assert!(has(&|c| c.params.noise_ratio == 0.5));
        assert!(has(&|c| c.params.noise_ratio == 1.0));
        assert!(has(&|c| c.controller == GridController::Capi));
        for n in [5usize, 10, 24] {
            assert!(has(&|c| c.graph.node_count() == n), "missing n = {n}");
        }
    }

    #[test]
    fn triangle_holds_without_monte_carlo() {
        for case in standing_grid() {
            let row = oracle_triangle_row(&case, None).unwrap();
            assert!(
                row.within_tol,
                "case {} max_rel_err {}",
                row.case_name, row.max_rel_err
            );
        }
    }
}

//! Monte-Carlo validation of one closed-form value: simulate the driven
//! loop with Euler-Maruyama and compare the steady-state output power
//! against the analytic squared H2 norm.
//!
//! Run with: cargo run --release --example monte_carlo_check

use dapi_perf::formulas::dapi_losses;
use dapi_perf::graph::WeightedGraph;
use dapi_perf::model::{assemble_dapi_gamma, SystemParams};
use dapi_perf::oracle::{h2_monte_carlo, SimConfig};

fn main() {
    // the published complete-graph configuration at its noisy optimum
    let gp = WeightedGraph::complete(10, 0.05).unwrap();
    let p = SystemParams::new(5.0, 0.8, 0.8, 1.0, 1.0, 5.6).unwrap();
    let closed = dapi_losses(&gp.spectrum().unwrap(), &p).unwrap().total;

    let system = assemble_dapi_gamma(&gp, &p).unwrap();
    let cfg = SimConfig::defaults_for(&system, &p).unwrap().with_seed(2024);
    println!(
        "simulating {} states, dt = {}, burn {:.0}s, average {:.0}s, {} seeds",
        system.state_dim() - 1,
        cfg.dt,
        cfg.t_burn,
        cfg.t_avg,
        cfg.n_seeds
    );
    let mc = h2_monte_carlo(&system, &cfg).unwrap();
    let stderr = mc.stderr.unwrap();
    println!("closed form:  {closed:.6}");
    println!("monte carlo:  {:.6} +/- {stderr:.6}", mc.value);
    println!(
        "gap: {:.6} ({:.2} standard errors)",
        (mc.value - closed).abs(),
        (mc.value - closed).abs() / stderr
    );
}

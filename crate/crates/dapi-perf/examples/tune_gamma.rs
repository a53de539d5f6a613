//! Tune the distributed-averaging strength: the interval for the noiseless
//! optimum, the shifted noisy optimum, and the threshold above which the
//! distributed controller beats the centralized one.
//!
//! Run with: cargo run --release --example tune_gamma

use dapi_perf::graph::WeightedGraph;
use dapi_perf::model::SystemParams;
use dapi_perf::tuning::{tune, verify_ordering, DEFAULT_BRACKET};

fn main() {
    let gp = WeightedGraph::complete(10, 0.05).unwrap();
    let p = SystemParams::new(5.0, 0.8, 0.8, 1.0, 1.0, 1.0).unwrap();
    let spec = gp.spectrum().unwrap();

    let report = tune(&spec, &p, DEFAULT_BRACKET).unwrap();
    println!("noiseless optimum gamma_star     = {:.4}", report.gamma_star);
    println!("interval from the closed form    = [0, {:.4}]", report.gamma_star_upper);
    println!("noisy optimum gamma_star_eta     = {:.4}", report.gamma_star_eta);
    println!("sufficiency threshold gamma_hat  = {:.4}", report.gamma_hat);
    println!();
    for (name, gamma, losses) in &report.losses_at {
        println!(
            "losses at {name:<15} (gamma = {gamma:>7.4}): p {:.4} + eta {:.4} = {:.4}",
            losses.p_part, losses.eta_part, losses.total
        );
    }

    let ordering = verify_ordering(&spec, &p).unwrap();
    println!(
        "\nordering gamma_star_eta > gamma_star: {} ({:.4} > {:.4})",
        ordering.ordering_holds, ordering.gamma_star_eta, ordering.gamma_star
    );
    println!(
        "small gamma = {:.5} loses to CAPI: {:.4} > {:.4}",
        ordering.small_gamma_witness.0, ordering.small_gamma_witness.1, ordering.capi_total
    );
    for (gamma, total) in &ordering.above_threshold {
        println!(
            "gamma = {gamma:>7.4} (above gamma_hat) beats CAPI: {total:.4} < {:.4}",
            ordering.capi_total
        );
    }
}

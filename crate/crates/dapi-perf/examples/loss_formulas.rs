//! Closed-form loss breakdowns: how the injection and measurement-noise
//! parts trade off against the averaging strength and the topology.
//!
//! Run with: cargo run --release --example loss_formulas

use dapi_perf::formulas::{capi_losses, dapi_losses, dapi_losses_correlated};
use dapi_perf::graph::WeightedGraph;
use dapi_perf::model::SystemParams;

fn main() {
    let p = SystemParams::new(5.0, 0.8, 0.8, 1.0, 1.0, 1.0).unwrap();
    let complete = WeightedGraph::complete(10, 0.05).unwrap().spectrum().unwrap();
    let ring = WeightedGraph::ring(10, 0.1).unwrap().spectrum().unwrap();
    let capi = capi_losses(10, &p).unwrap();

    println!("CAPI reference (independent of topology shape and noise): {:.4}\n", capi.total);
    println!("{:<10} {:>8} {:>12} {:>12} {:>12}", "graph", "gamma", "p_part", "eta_part", "total");
    for (name, spec) in [("complete", &complete), ("ring", &ring)] {
        for gamma in [0.2, 1.0, 5.0, 25.0] {
            let l = dapi_losses(spec, &p.with_averaging_gain(gamma)).unwrap();
            println!(
                "{name:<10} {gamma:>8.2} {:>12.5} {:>12.5} {:>12.5}",
                l.p_part, l.eta_part, l.total
            );
        }
    }

    // without noise the distributed controller always beats the central one
    let p0 = SystemParams::new(5.0, 0.8, 0.8, 1.0, 0.0, 0.5).unwrap();
    let quiet = dapi_losses(&ring, &p0).unwrap();
    println!(
        "\nwithout measurement noise: DAPI {:.4} < CAPI {:.4}",
        quiet.total, capi.total
    );

    // with noise but no communication the losses diverge, with a reason tag
    let broken = dapi_losses(&ring, &p.with_averaging_gain(0.0)).unwrap();
    println!(
        "gamma = 0 with noise: finite p_part {:.4}, divergent eta ({:?})",
        broken.p_part,
        broken.divergence.unwrap()
    );

    // the correlated-noise variant adds strictly more loss
    let corr = dapi_losses_correlated(&ring, &p).unwrap();
    let plain = dapi_losses(&ring, &p).unwrap();
    println!(
        "\ncorrelated noise entering the swing equation: {:.4} >= plain {:.4}",
        corr.total, plain.total
    );
}

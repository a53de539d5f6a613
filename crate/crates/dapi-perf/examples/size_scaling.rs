//! How per-node losses scale with network size: linear growth on rings,
//! logarithmic growth on the torus, and the bounded injection part.
//!
//! Run with: cargo run --release --example size_scaling

use dapi_perf::experiments::{
    run_fig3, run_scaling, Fig3Config, ScalingConfig, ScalingDiagnostics,
};

fn main() {
    // per-node losses vs ring size for three averaging strengths
    let fig3 = Fig3Config {
        out_dir: std::path::PathBuf::from("results/size_scaling_example"),
        ..Fig3Config::default()
    };
    let f3 = run_fig3(&fig3).unwrap();
    println!("{:>6} {:>8} {:>18} {:>14}", "n", "gamma", "per-node DAPI", "per-node CAPI");
    for row in f3.rows.iter().filter(|r| [10, 80, 1280].contains(&r.n)) {
        println!(
            "{:>6} {:>8.1} {:>18.5} {:>14.5}",
            row.n, row.gamma, row.per_node_dapi_total, row.per_node_capi
        );
    }

    // ring: per-node measurement-noise losses double when n doubles
    let ring = ScalingConfig {
        out_dir: std::path::PathBuf::from("results/size_scaling_example/ring"),
        ..ScalingConfig::default()
    };
    let report = run_scaling(&ring).unwrap();
    if let ScalingDiagnostics::DoublingRatios { ratios, loglog_slope } = &report.diagnostics {
        println!("\nring doublings {:?}", report.sizes);
        println!("per-node eta ratios: {ratios:?}");
        println!("log-log slope {loglog_slope:.4} (linear growth -> 1)");
    }
    println!(
        "per-node injection part stays below {:.3}: max {:.5}",
        report.p_bound,
        report.per_node_p.iter().cloned().fold(0.0, f64::max)
    );

    // torus: the same losses grow only logarithmically
    let torus = ScalingConfig {
        out_dir: std::path::PathBuf::from("results/size_scaling_example/torus"),
        ..ScalingConfig::default_torus()
    };
    let report = run_scaling(&torus).unwrap();
    if let ScalingDiagnostics::LogDifferences { differences, slope_vs_log_n } = &report.diagnostics {
        println!("\ntorus sizes {:?}", report.sizes);
        println!("per-node eta successive differences: {differences:?} (log law -> constant)");
        println!("slope vs log n: {slope_vs_log_n:.5}");
    }
}

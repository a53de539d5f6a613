//! Reproduce the loss-vs-gamma curve on the published complete-graph
//! configuration and write it as CSV (the `fig2` subcommand does the same).
//!
//! Run with: cargo run --release --example loss_curve

use dapi_perf::experiments::{run_fig2, Fig2Config};

fn main() {
    let cfg = Fig2Config {
        out_dir: std::path::PathBuf::from("results/loss_curve_example"),
        ..Fig2Config::default()
    };
    let result = run_fig2(&cfg).unwrap();

    println!(
        "gamma_star = {:.4}, gamma_star_eta = {:.4}, CAPI reference {:.3}",
        result.tuning.gamma_star, result.tuning.gamma_star_eta, result.capi_total
    );
    println!("curve written to {}\n", result.csv_path.display());

    // a coarse look at the curve shape on a terminal (grid rows only)
    println!("{:>10} {:>12} {:>12}", "gamma", "total", "vs CAPI");
    for row in result.rows.iter().take(cfg.points).step_by(20) {
        let bar_len = (40.0 * (row.total_with_noise / (5.0 * result.capi_total)).min(1.0)) as usize;
        println!(
            "{:>10.3} {:>12.4} {:>12.2} {}",
            row.gamma,
            row.total_with_noise,
            row.total_with_noise / result.capi_total,
            "#".repeat(bar_len)
        );
    }
}

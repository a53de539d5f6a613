//! Densify a ring into the complete graph one chord at a time: the
//! measurement-noise losses only ever drop, the injection losses only rise.
//!
//! Run with: cargo run --release --example density_sweep

use dapi_perf::experiments::{run_density, DensityConfig};

fn main() {
    let cfg = DensityConfig {
        out_dir: std::path::PathBuf::from("results/density_sweep_example"),
        ..DensityConfig::default()
    };
    let result = run_density(&cfg).unwrap();

    println!(
        "{:>5} {:>7} {:>10} {:>10} {:>10} {:>10}",
        "step", "edges", "lambda2", "p_part", "eta_part", "total"
    );
    for row in result.rows.iter().step_by(5) {
        println!(
            "{:>5} {:>7} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            row.step, row.edges, row.lambda2, row.p_part, row.eta_part, row.total
        );
    }
    let last = result.rows.last().unwrap();
    println!(
        "{:>5} {:>7} {:>10.4} {:>10.4} {:>10.4} {:>10.4}  (complete graph)",
        last.step, last.edges, last.lambda2, last.p_part, last.eta_part, last.total
    );
    println!(
        "\nmeasurement-noise losses monotonically non-increasing: {}",
        result.eta_monotone
    );
    println!("csv written to {}", result.csv_path.display());
}

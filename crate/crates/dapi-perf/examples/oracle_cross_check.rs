//! The oracle triangle: closed forms vs full-matrix Lyapunov vs per-mode
//! Lyapunov on the standing grid (no Monte-Carlo; see monte_carlo_check).
//!
//! Run with: cargo run --release --example oracle_cross_check

use dapi_perf::oracle::verify::{oracle_triangle_row, standing_grid, TRIANGLE_REL_TOL};

fn main() {
    println!(
        "{:<32} {:>12} {:>12} {:>12} {:>10}",
        "case", "closed form", "lyapunov", "per-mode", "rel err"
    );
    let mut worst: f64 = 0.0;
    for case in standing_grid() {
        let row = oracle_triangle_row(&case, None).unwrap();
        worst = worst.max(row.max_rel_err);
        println!(
            "{:<32} {:>12.6} {:>12.6} {:>12.6} {:>10.2e}",
            row.case_name, row.closed_form, row.lyapunov, row.per_mode, row.max_rel_err
        );
    }
    println!("\nworst relative disagreement: {worst:.2e} (tolerance {TRIANGLE_REL_TOL:.0e})");
}

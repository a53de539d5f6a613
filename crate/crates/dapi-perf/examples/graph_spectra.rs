//! Build the graph families and inspect their Laplacian spectra.
//!
//! Run with: cargo run --release --example graph_spectra

use dapi_perf::graph::{ring_qfuzz_modes, torus_modes, LaplacianSpectrum, WeightedGraph};

fn show(name: &str, g: &WeightedGraph) {
    let spec = g.spectrum().unwrap();
    let head: Vec<String> = spec
        .eigenvalues()
        .iter()
        .take(6)
        .map(|v| format!("{v:.4}"))
        .collect();
    println!(
        "{name:<24} n = {:<4} |E| = {:<4} lambda2 = {:<8.4} spectrum head: [{}]",
        g.node_count(),
        g.edge_count(),
        spec.lambda2(),
        head.join(", ")
    );
}

fn main() {
    show("ring(10)", &WeightedGraph::ring(10, 0.1).unwrap());
    show("ring_qfuzz(10, q=2)", &WeightedGraph::ring_qfuzz(10, 2, 0.1).unwrap());
    show("path(10)", &WeightedGraph::path(10, 0.1).unwrap());
    show("complete(10)", &WeightedGraph::complete(10, 0.05).unwrap());
    show("torus(4 x 6)", &WeightedGraph::torus_2d(4, 6, 0.1).unwrap());

    // circulant closed forms agree with the dense eigensolver
    let g = WeightedGraph::ring_qfuzz(12, 3, 0.4).unwrap();
    let dense = g.spectrum().unwrap();
    let closed = LaplacianSpectrum::from_eigenvalues(ring_qfuzz_modes(12, 3, 0.4));
    let gap = dense
        .eigenvalues()
        .iter()
        .zip(closed.eigenvalues())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    println!("\nq-fuzz ring closed form vs dense eigensolver: max gap {gap:.2e}");

    let t = WeightedGraph::torus_2d(5, 4, 0.7).unwrap();
    let dense = t.spectrum().unwrap();
    let closed = LaplacianSpectrum::from_eigenvalues(torus_modes(5, 4, 0.7));
    let gap = dense
        .eigenvalues()
        .iter()
        .zip(closed.eigenvalues())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    println!("torus closed form vs dense eigensolver:       max gap {gap:.2e}");

    // densification lifts the spectrum (never lowers any eigenvalue)
    let before = WeightedGraph::ring(8, 0.2).unwrap();
    let after = before.add_edge(0, 4, 0.2).unwrap();
    println!("\nadding a chord to ring(8):");
    show("  before", &before);
    show("  after", &after);

    // the plain-text edge-list round trip
    let text = before.to_edge_list_string();
    let back = WeightedGraph::from_edge_list_str(&text).unwrap();
    assert_eq!(before, back);
    println!("\nedge-list format round-trips; first lines:\n{}", &text[..24.min(text.len())]);
}

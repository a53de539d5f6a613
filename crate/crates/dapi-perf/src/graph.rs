//! Weighted graphs, their Laplacians and spectra.
//!
//! The physical network and the communication layer are both symmetric,
//! positively weighted graphs. This module builds the standard families
//! (q-fuzz rings, 1D/2D lattices, complete graphs, arbitrary edge lists),
//! exposes weighted Laplacians with their eigendecompositions, and provides
//! circulant closed-form spectra that stay cheap at large sizes.
//!
//! Graphs are immutable values; edge mutations return new graphs.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues with magnitude below `ZERO_CLAMP_REL * lambda_max` are clamped
/// to exactly zero, which pins the kernel eigenvalue of every Laplacian.
pub const ZERO_CLAMP_REL: f64 = 1e-12;

/// One undirected edge; stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Symmetric positively weighted graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    /// Builds a graph from an edge list. Rejects self-loops, out-of-range
    /// endpoints, non-positive weights and duplicate undirected edges.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidGraph("node count must be >= 1".into()));
        }
        let mut list = Vec::new();
        for (i, j, weight) in edges {
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            if weight.is_nan() || weight <= 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has non-positive weight {weight}"
                )));
            }
            let (i, j) = if i < j { (i, j) } else { (j, i) };
            list.push(Edge { i, j, weight });
        }
        list.sort_by_key(|e| (e.i, e.j));
        for w in list.windows(2) {
            if w[0].i == w[1].i && w[0].j == w[1].j {
                return Err(Error::DuplicateEdge { i: w[0].i, j: w[0].j });
            }
        }
        Ok(Self { n, edges: list })
    }

    /// Ring of `n` nodes where every node also connects to its neighbours up
    /// to hop distance `q`, all with the same weight.
    ///
    /// Requires `1 <= q < n/2`; larger fuzz radii would duplicate edges.
    pub fn ring_qfuzz(n: usize, q: usize, weight: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGraph("ring needs n >= 3".into()));
        }
        if q < 1 || 2 * q >= n {
            return Err(Error::InvalidGraph(format!(
                "fuzz radius q = {q} must satisfy 1 <= q < n/2 for n = {n}"
            )));
        }
        let mut edges = Vec::with_capacity(n * q);
        for i in 0..n {
            for d in 1..=q {
                edges.push((i, (i + d) % n, weight));
            }
        }
        Self::new(n, edges)
    }

    /// Plain ring (cycle), i.e. the 1-fuzz.
    pub fn ring(n: usize, weight: f64) -> Result<Self> {
        Self::ring_qfuzz(n, 1, weight)
    }

    /// Path graph on `n >= 2` nodes (the 1D lattice).
    pub fn path(n: usize, weight: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph("path needs n >= 2".into()));
        }
        Self::new(n, (0..n - 1).map(|i| (i, i + 1, weight)))
    }

    /// Periodic 2D lattice (torus) with `rows x cols` nodes, 4-regular.
    /// Node `(r, c)` has index `r * cols + c`.
    pub fn torus_2d(rows: usize, cols: usize, weight: f64) -> Result<Self> {
        if rows < 3 || cols < 3 {
            return Err(Error::InvalidGraph("torus needs rows, cols >= 3".into()));
        }
        let idx = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::with_capacity(2 * rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                edges.push((idx(r, c), idx(r, (c + 1) % cols), weight));
                edges.push((idx(r, c), idx((r + 1) % rows, c), weight));
            }
        }
        Self::new(rows * cols, edges)
    }

    /// Non-periodic 2D grid. Provided for completeness; the scaling claims
    /// are asserted on the torus, whose spectrum has a closed form.
    pub fn grid_2d(rows: usize, cols: usize, weight: f64) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidGraph("grid needs rows, cols >= 2".into()));
        }
        let idx = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((idx(r, c), idx(r, c + 1), weight));
                }
                if r + 1 < rows {
                    edges.push((idx(r, c), idx(r + 1, c), weight));
                }
            }
        }
        Self::new(rows * cols, edges)
    }

    /// Complete graph on `n >= 2` nodes.
    pub fn complete(n: usize, weight: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph("complete graph needs n >= 2".into()));
        }
        let mut edges = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, weight));
            }
        }
        Self::new(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges
            .binary_search_by(|e| (e.i, e.j).cmp(&key))
            .ok()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edge_index(i, j).is_some()
    }

    /// Returns a new graph with the edge `(i, j, weight)` added.
    pub fn add_edge(&self, i: usize, j: usize, weight: f64) -> Result<Self> {
        if self.has_edge(i, j) {
            let (i, j) = if i < j { (i, j) } else { (j, i) };
            return Err(Error::DuplicateEdge { i, j });
        }
        let mut edges: Vec<_> = self.edges.iter().map(|e| (e.i, e.j, e.weight)).collect();
        edges.push((i, j, weight));
        Self::new(self.n, edges)
    }

    /// Returns a new graph with the weight of edge `(i, j)` multiplied by
    /// `factor > 0`.
    pub fn scale_edge(&self, i: usize, j: usize, factor: f64) -> Result<Self> {
        if factor.is_nan() || factor <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be > 0, got {factor}"
            )));
        }
        let Some(k) = self.edge_index(i, j) else {
            let (i, j) = if i < j { (i, j) } else { (j, i) };
            return Err(Error::MissingEdge { i, j });
        };
        let mut g = self.clone();
        g.edges[k].weight *= factor;
        Ok(g)
    }

    /// Returns a new graph with every weight multiplied by `factor > 0`.
    /// Scaling all weights by `c` scales every Laplacian eigenvalue by `c`.
    pub fn scale_weights(&self, factor: f64) -> Result<Self> {
        if factor.is_nan() || factor <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be > 0, got {factor}"
            )));
        }
        let mut g = self.clone();
        for e in &mut g.edges {
            e.weight *= factor;
        }
        Ok(g)
    }

    /// Weighted Laplacian: `L[i][j] = -w_ij` off-diagonal, row sums zero.
    ///
    /// The diagonal accumulates incident weights in ascending neighbour
    /// order, so summing each row's off-diagonal entries left to right and
    /// then adding the diagonal cancels exactly.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            l[(e.i, e.j)] = -e.weight;
            l[(e.j, e.i)] = -e.weight;
            l[(e.i, e.i)] += e.weight;
            l[(e.j, e.j)] += e.weight;
        }
        l
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.n
    }

    /// Sorted Laplacian eigenvalues (no eigenvectors).
    pub fn spectrum(&self) -> Result<LaplacianSpectrum> {
        self.spectrum_impl(false)
    }

    /// Sorted Laplacian eigenvalues together with an orthonormal eigenbasis.
    pub fn spectrum_with_vectors(&self) -> Result<LaplacianSpectrum> {
        self.spectrum_impl(true)
    }

    fn spectrum_impl(&self, vectors: bool) -> Result<LaplacianSpectrum> {
        let l = self.laplacian();
        let eig =
            SymmetricEigen::try_new(l.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        clamp_spectrum(&mut eigenvalues);
        let eigenvectors = if vectors {
            let mut v = DMatrix::zeros(self.n, self.n);
            for (col, &k) in order.iter().enumerate() {
                v.set_column(col, &eig.eigenvectors.column(k));
            }
            // residual check: the returned basis must diagonalize L
            let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigenvalues.clone()));
            let residual = (&l * &v - &v * lam).norm();
            let scale = eigenvalues.last().copied().unwrap_or(0.0).max(1.0);
            if residual > 1e-9 * scale {
                return Err(Error::EigenFailure);
            }
            Some(v)
        } else {
            None
        };
        Ok(LaplacianSpectrum {
            eigenvalues,
            eigenvectors,
        })
    }

    /// Serializes as the plain-text edge-list format:
    /// a header `n <count>` followed by one `i j weight` line per edge.
    pub fn to_edge_list_string(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for e in &self.edges {
            s.push_str(&format!("{} {} {}\n", e.i, e.j, e.weight));
        }
        s
    }

    /// Parses the edge-list format produced by [`Self::to_edge_list_string`].
    /// Blank lines and lines starting with `#` are ignored.
    pub fn from_edge_list_str(text: &str) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if n.is_none() {
                if fields.len() != 2 || fields[0] != "n" {
                    return Err(Error::InvalidGraph(format!(
                        "line {}: expected header 'n <count>', got '{line}'",
                        lineno + 1
                    )));
                }
                n = Some(fields[1].parse::<usize>().map_err(|_| {
                    Error::InvalidGraph(format!("line {}: bad node count", lineno + 1))
                })?);
                continue;
            }
            if fields.len() != 3 {
                return Err(Error::InvalidGraph(format!(
                    "line {}: expected 'i j weight', got '{line}'",
                    lineno + 1
                )));
            }
            let parse_err =
                |what: &str| Error::InvalidGraph(format!("line {}: bad {what}", lineno + 1));
            let i = fields[0].parse::<usize>().map_err(|_| parse_err("node id"))?;
            let j = fields[1].parse::<usize>().map_err(|_| parse_err("node id"))?;
            let w = fields[2].parse::<f64>().map_err(|_| parse_err("weight"))?;
            edges.push((i, j, w));
        }
        let n = n.ok_or_else(|| Error::InvalidGraph("missing 'n <count>' header".into()))?;
        Self::new(n, edges)
    }

    pub fn read_edge_list(path: &std::path::Path) -> Result<Self> {
        Self::from_edge_list_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_edge_list(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_edge_list_string())?)
    }
}

/// Sorted Laplacian eigenvalues, kernel eigenvalue pinned at exactly zero.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: Option<DMatrix<f64>>,
}

impl LaplacianSpectrum {
    /// Wraps an eigenvalue list (sorts and clamps the kernel to zero).
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        clamp_spectrum(&mut eigenvalues);
        Self {
            eigenvalues,
            eigenvectors: None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Nondecreasing eigenvalues; `eigenvalues()[0] == 0` always.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Algebraic connectivity; positive iff the graph is connected.
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn is_connected(&self) -> bool {
        self.lambda2() > 0.0
    }

    /// All eigenvalues past the structural zero mode, i.e. indices `1..n`.
    pub fn nonzero(&self) -> &[f64] {
        if self.eigenvalues.is_empty() {
            &[]
        } else {
            &self.eigenvalues[1..]
        }
    }

    pub fn eigenvectors(&self) -> Option<&DMatrix<f64>> {
        self.eigenvectors.as_ref()
    }
}

fn clamp_spectrum(eigenvalues: &mut [f64]) {
    let scale = eigenvalues
        .iter()
        .fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    for lam in eigenvalues.iter_mut() {
        if lam.abs() <= ZERO_CLAMP_REL * scale {
            *lam = 0.0;
        }
    }
}

/// Circulant eigenvalues of the q-fuzz ring, indexed by Fourier mode
/// `k = 0..n` (not sorted): `lambda_k = sum_d 2 w (1 - cos(2 pi k d / n))`.
pub fn ring_qfuzz_modes(n: usize, q: usize, weight: f64) -> Vec<f64> {
    let mut modes = Vec::with_capacity(n);
    for k in 0..n {
        let mut lam = 0.0;
        for d in 1..=q {
            lam += 2.0 * weight * (1.0 - (2.0 * std::f64::consts::PI * (k * d) as f64 / n as f64).cos());
        }
        modes.push(lam);
    }
    modes[0] = 0.0;
    modes
}

/// Torus eigenvalues indexed by the mode pair flattened row-major:
/// `lambda_{r,c} = 2 w (2 - cos(2 pi r / rows) - cos(2 pi c / cols))`.
pub fn torus_modes(rows: usize, cols: usize, weight: f64) -> Vec<f64> {
    let mut modes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let ar = 2.0 * std::f64::consts::PI * r as f64 / rows as f64;
            let ac = 2.0 * std::f64::consts::PI * c as f64 / cols as f64;
            modes.push(2.0 * weight * (2.0 - ar.cos() - ac.cos()));
        }
    }
    modes[0] = 0.0;
    modes
}

/// Path-graph eigenvalues `2 w (1 - cos(pi i / n))`, already nondecreasing.
pub fn path_eigenvalues(n: usize, weight: f64) -> Vec<f64> {
    (0..n)
        .map(|i| 2.0 * weight * (1.0 - (std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Complete-graph eigenvalues: zero plus `n w` with multiplicity `n - 1`.
pub fn complete_eigenvalues(n: usize, weight: f64) -> Vec<f64> {
    let mut v = vec![n as f64 * weight; n];
    v[0] = 0.0;
    v
}

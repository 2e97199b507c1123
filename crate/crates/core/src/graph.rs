//! Undirected topologies, channel Laplacians and Metropolis weights.
//!
//! Nodes are 0-based internally; the edge-list text format and every report
//! use 1-based indices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::protocol::ChannelAssignment;
use crate::rng;

/// Tolerance for the doubly stochastic row and column sums.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;
pub const POWER_ITERATION_TOLERANCE: f64 = 1e-10;
pub const POWER_ITERATION_CAP: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from 0-based edges. Edges are normalized to `(lo, hi)`
    /// and sorted.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Validation("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Validation(format!("self-loop on node {}", a + 1)));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) out of range 1..={node_count}",
                    a + 1,
                    b + 1
                )));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::Validation(format!("duplicate edge ({}, {})", a + 1, b + 1)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); node_count];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            neighbors,
        })
    }

    pub fn cycle(n: usize) -> Result<Self> {
        match n {
            0 => Self::new(0, []),
            1 => Self::new(1, []),
            2 => Self::new(2, [(0, 1)]),
            _ => Self::new(n, (0..n).map(|i| (i, (i + 1) % n))),
        }
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Sorted `(lo, hi)` pairs.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self)
    }

    /// Writes the edge-list format that [`parse_graph`] reads.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.node_count);
        for &(a, b) in &self.edges {
            writeln!(out, "{} {}", a + 1, b + 1).unwrap();
        }
        out
    }

    /// Full graph Laplacian `D − A`.
    pub fn laplacian(&self) -> ChannelLaplacian {
        let mut l = ChannelLaplacian::zeros(self.node_count);
        for &(a, b) in &self.edges {
            l.add_edge(a, b);
        }
        l
    }
}

/// Reads `N` on the first line, then one `i j` pair (1-based) per line.
/// `#` starts a comment; blank lines are skipped.
pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing node count".into(),
    })?;
    let node_count: usize = header.parse().map_err(|_| Error::Parse {
        line: first,
        msg: format!("expected node count, got {header:?}"),
    })?;
    let mut edges = Vec::new();
    for (line, body) in lines {
        let fields: Vec<&str> = body.split_whitespace().collect();
        let [a, b] = fields.as_slice() else {
            return Err(Error::Parse {
                line,
                msg: format!("expected two node indices, got {body:?}"),
            });
        };
        let parse = |s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad node index {s:?}"),
            })
        };
        let (a, b) = (parse(a)?, parse(b)?);
        if a == 0 || b == 0 {
            return Err(Error::Validation(format!("line {line}: node indices are 1-based")));
        }
        edges.push((a - 1, b - 1));
    }
    Graph::new(node_count, edges)
}

/// Breadth-first reachability from the first node.
pub fn is_connected(g: &Graph) -> bool {
    reachable_count(g.node_count, |i| g.neighbors(i).to_vec()) == g.node_count
}

fn reachable_count(n: usize, neighbors: impl Fn(usize) -> Vec<usize>) -> usize {
    if n == 0 {
        return 0;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for j in neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count
}

/// Erdős–Rényi graph, redrawn until connected.
pub fn random_connected_graph<R: Rng + ?Sized>(n: usize, edge_prob: f64, rng: &mut R) -> Graph {
    loop {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.gen_bool(edge_prob))
            .collect();
        let g = Graph::new(n, edges).expect("generated edges are valid");
        if g.is_connected() {
            return g;
        }
    }
}

/// Integer Laplacian of the subgraph carrying one channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelLaplacian {
    n: usize,
    entries: Vec<i64>,
}

impl ChannelLaplacian {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0; n * n],
        }
    }

    fn add_edge(&mut self, a: usize, b: usize) {
        let n = self.n;
        self.entries[a * n + a] += 1;
        self.entries[b * n + b] += 1;
        self.entries[a * n + b] -= 1;
        self.entries[b * n + a] -= 1;
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.n + j]
    }

    pub fn row_sums(&self) -> Vec<i64> {
        self.entries.chunks(self.n.max(1)).map(|r| r.iter().sum()).collect()
    }

    pub fn max_diagonal(&self) -> i64 {
        (0..self.n).map(|i| self.get(i, i)).max().unwrap_or(0)
    }

    /// Whether the edges present in this Laplacian span all nodes.
    pub fn is_connected(&self) -> bool {
        let n = self.n;
        reachable_count(n, |i| {
            (0..n).filter(|&j| j != i && self.get(i, j) != 0).collect()
        }) == n
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }
}

impl std::ops::Add for ChannelLaplacian {
    type Output = ChannelLaplacian;

    fn add(mut self, rhs: Self) -> Self {
        assert_eq!(self.n, rhs.n, "Laplacian sizes differ");
        for (a, b) in self.entries.iter_mut().zip(rhs.entries) {
            *a += b;
        }
        self
    }
}

/// `L_k`: −1 on edges assigned channel `channel`, per-node counts on the diagonal.
pub fn channel_laplacian(
    g: &Graph,
    assignment: &ChannelAssignment,
    channel: usize,
) -> Result<ChannelLaplacian> {
    let mut l = ChannelLaplacian::zeros(g.node_count());
    for &(a, b) in g.edges() {
        let c = assignment.get(a, b).ok_or(Error::MissingAssignment(a + 1, b + 1))?;
        if c == channel {
            l.add_edge(a, b);
        }
    }
    Ok(l)
}

/// A doubly stochastic consensus weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    /// Wraps `m` after checking nonnegativity and unit row/column sums.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.iter().any(|&x| x < 0.0) {
            return Err(Error::Validation("weight matrix has a negative entry".into()));
        }
        let w = Self(m);
        if !w.is_doubly_stochastic() {
            return Err(Error::Validation("weight matrix is not doubly stochastic".into()));
        }
        Ok(w)
    }

    /// `(1/N) 𝟏𝟏ᵀ`.
    pub fn averaging(n: usize) -> Self {
        Self(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        let ok = |s: f64| (s - 1.0).abs() <= STOCHASTIC_TOLERANCE;
        self.0.row_iter().all(|r| ok(r.sum())) && self.0.column_iter().all(|c| ok(c.sum()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.0 == self.0.transpose()
    }
}

/// `w_ij = 1 / (2 max(d_i, d_j))` on edges, remainder on the diagonal.
pub fn metropolis_weights(g: &Graph) -> Result<WeightMatrix> {
    if !g.is_connected() {
        return Err(Error::NotConnected);
    }
    let n = g.node_count();
    let mut m = DMatrix::zeros(n, n);
    for &(a, b) in g.edges() {
        let w = 1.0 / (2.0 * g.degree(a).max(g.degree(b)) as f64);
        m[(a, b)] = w;
        m[(b, a)] = w;
    }
    for i in 0..n {
        let off: f64 = g
            .neighbors(i)
            .iter()
            .map(|&j| 1.0 / (2.0 * g.degree(i).max(g.degree(j)) as f64))
            .sum();
        m[(i, i)] = 1.0 - off;
    }
    Ok(WeightMatrix(m))
}

/// Spectral norm of `W − (1/N)𝟏𝟏ᵀ` with the default power-iteration seed.
pub fn spectral_gap(w: &WeightMatrix) -> Result<f64> {
    spectral_gap_seeded(w, 0)
}

/// Power iteration on `(W − J)ᵀ(W − J)`. Stops when the Rayleigh quotient
/// moves by less than [`POWER_ITERATION_TOLERANCE`] (relative) and the
/// residual is small enough that the estimate sits on the top eigenvalue.
pub fn spectral_gap_seeded(w: &WeightMatrix, seed: u64) -> Result<f64> {
    let n = w.size();
    if n == 0 {
        return Ok(0.0);
    }
    let deviation = w.matrix() - DMatrix::from_element(n, n, 1.0 / n as f64);
    if deviation.norm() <= 1e-14 {
        return Ok(0.0);
    }
    let gram = deviation.transpose() * &deviation;

    let mut rng = rng::stream(seed, &[rng::TAG_POWER, n as u64]);
    let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    v.normalize_mut();
    let mut estimate = 0.0_f64;
    for _ in 0..POWER_ITERATION_CAP {
        let next = &gram * &v;
        let rayleigh = v.dot(&next);
        let norm = next.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let residual = (&next - &v * rayleigh).norm();
        let settled = (rayleigh - estimate).abs() <= POWER_ITERATION_TOLERANCE * rayleigh
            && residual <= POWER_ITERATION_TOLERANCE.sqrt() * rayleigh;
        estimate = rayleigh;
        v = next / norm;
        if settled {
            return Ok(estimate.max(0.0).sqrt());
        }
    }
    Err(Error::NoConvergence(POWER_ITERATION_CAP))
}

/// Upper bound `1 − 1/(71 N²)` on the Metropolis spectral norm.
pub fn metropolis_gap_bound(n: usize) -> f64 {
    1.0 - 1.0 / (71.0 * (n * n) as f64)
}

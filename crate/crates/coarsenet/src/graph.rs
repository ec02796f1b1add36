//! Sparse graph representation, coarse-graph construction, and the normalized
//! propagation operator shared by every other module.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Train / valid / test membership of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Adjacency list: for node `i`, sorted `(neighbor, weight)` entries.
/// Coarse graphs may carry a diagonal entry `(i, w)` for intra-cluster weight.
pub type AdjList = Vec<Vec<(u32, f64)>>;

/// Immutable weighted undirected graph with dense node features.
///
/// Simple by construction: no self-loops, no duplicate edges, strictly
/// positive weights, symmetric adjacency.
#[derive(Clone, Debug)]
pub struct Graph {
    pub n: usize,
    pub adj: AdjList,
    pub x: Matrix,
    pub labels: Vec<Option<u32>>,
    pub splits: Vec<Option<Split>>,
    /// Weighted degree: row sum of the adjacency (no diagonal exists here).
    pub degrees: Vec<f64>,
}

impl Graph {
    /// Build from an undirected edge list (each unordered pair at most once).
    pub fn new(
        n: usize,
        edges: &[(u32, u32, f64)],
        x: Matrix,
        labels: Vec<Option<u32>>,
        splits: Vec<Option<Split>>,
    ) -> Result<Self> {
        if x.rows != n {
            return Err(Error::input(format!(
                "feature matrix has {} rows for {} nodes",
                x.rows, n
            )));
        }
        if !labels.is_empty() && labels.len() != n {
            return Err(Error::input("label vector length mismatch"));
        }
        if !splits.is_empty() && splits.len() != n {
            return Err(Error::input("split vector length mismatch"));
        }
        let labels = if labels.is_empty() { vec![None; n] } else { labels };
        let splits = if splits.is_empty() { vec![None; n] } else { splits };

        let mut adj: AdjList = vec![Vec::new(); n];
        for &(u, v, w) in edges {
            let (u, v) = (u as usize, v as usize);
            if u >= n || v >= n {
                return Err(Error::input(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(Error::input(format!("self-loop on node {u}")));
            }
            if w <= 0.0 || !w.is_finite() {
                return Err(Error::input(format!("non-positive weight on ({u}, {v})")));
            }
            adj[u].push((v as u32, w));
            adj[v].push((u as u32, w));
        }
        for (i, row) in adj.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::input(format!("duplicate edge at node {i}")));
            }
        }
        let degrees = adj
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect();
        Ok(Graph { n, adj, x, labels, splits, degrees })
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn total_weight(&self) -> f64 {
        self.adj
            .iter()
            .flat_map(|row| row.iter().map(|&(_, w)| w))
            .sum()
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adj[u as usize]
            .binary_search_by_key(&v, |&(j, _)| j)
            .is_ok()
    }
}

/// Assignment of original nodes to dense supernode ids `[0, n')`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub assign: Vec<u32>,
    pub n_prime: usize,
    pub sizes: Vec<u32>,
}

impl Partition {
    /// Validate that `assign` covers `[0, n_prime)` densely.
    pub fn new(assign: Vec<u32>, n_prime: usize) -> Result<Self> {
        let mut sizes = vec![0u32; n_prime];
        for &s in &assign {
            let s = s as usize;
            if s >= n_prime {
                return Err(Error::input(format!("supernode id {s} out of range")));
            }
            sizes[s] += 1;
        }
        if sizes.iter().any(|&c| c == 0) {
            return Err(Error::input("empty supernode in partition"));
        }
        Ok(Partition { assign, n_prime, sizes })
    }

    pub fn identity(n: usize) -> Self {
        Partition {
            assign: (0..n as u32).collect(),
            n_prime: n,
            sizes: vec![1; n],
        }
    }

    /// `other` partitions this partition's supernodes; returns the composed
    /// partition of the original nodes.
    pub fn compose(&self, other: &Partition) -> Result<Partition> {
        if other.assign.len() != self.n_prime {
            return Err(Error::input("composed partition arity mismatch"));
        }
        let assign = self
            .assign
            .iter()
            .map(|&s| other.assign[s as usize])
            .collect();
        Partition::new(assign, other.n_prime)
    }
}

/// Weighted coarse graph. The adjacency may carry diagonal entries from
/// intra-cluster edges; `degrees` are row sums including the diagonal.
#[derive(Clone, Debug)]
pub struct CoarseGraph {
    pub n_prime: usize,
    pub adj: AdjList,
    pub sizes: Vec<u64>,
    pub x: Matrix,
    pub degrees: Vec<f64>,
    pub labels: Vec<Option<u32>>,
}

impl CoarseGraph {
    /// View an original graph as the identity coarsening of itself.
    pub fn from_graph(g: &Graph) -> Self {
        CoarseGraph {
            n_prime: g.n,
            adj: g.adj.clone(),
            sizes: vec![1; g.n],
            x: g.x.clone(),
            degrees: g.degrees.clone(),
            labels: g.labels.clone(),
        }
    }

    pub fn total_weight(&self) -> f64 {
        // Off-diagonal entries are stored twice, the diagonal once; the sum
        // over A' counts the diagonal once as well only if we did not fold
        // both triangle halves in. We fold a_uv + a_vu into one diagonal
        // entry, so the plain sum over stored entries equals sum over A'.
        self.adj
            .iter()
            .flat_map(|row| row.iter().map(|&(_, w)| w))
            .sum()
    }

    pub fn weight_between(&self, u: u32, v: u32) -> f64 {
        match self.adj[u as usize].binary_search_by_key(&v, |&(j, _)| j) {
            Ok(k) => self.adj[u as usize][k].1,
            Err(_) => 0.0,
        }
    }

    /// Self-loop weight normalizers `d_i + |C_i|` used by the propagation
    /// operator.
    pub fn normalizer(&self, i: usize) -> f64 {
        self.degrees[i] + self.sizes[i] as f64
    }
}

/// Majority label with ties broken by the smallest class id.
pub fn majority_label(counts: &std::collections::BTreeMap<u32, usize>) -> Option<u32> {
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&c, _)| c)
}

/// Coarse-graph construction `A' = P^T A P`, `X' = C^{-1} P^T X`,
/// computed sparsely.
pub fn build_coarse(g: &Graph, p: &Partition) -> Result<CoarseGraph> {
    if p.assign.len() != g.n {
        return Err(Error::input(format!(
            "partition covers {} nodes, graph has {}",
            p.assign.len(),
            g.n
        )));
    }
    let np = p.n_prime;
    let mut rows: Vec<std::collections::BTreeMap<u32, f64>> =
        vec![std::collections::BTreeMap::new(); np];
    for u in 0..g.n {
        let su = p.assign[u];
        for &(v, w) in &g.adj[u] {
            let sv = p.assign[v as usize];
            // Each directed entry contributes once; intra-cluster pairs fold
            // both directions onto the diagonal.
            *rows[su as usize].entry(sv).or_insert(0.0) += w;
        }
    }
    let adj: AdjList = rows
        .into_iter()
        .map(|r| r.into_iter().collect::<Vec<_>>())
        .collect();
    let degrees: Vec<f64> = adj
        .iter()
        .map(|row| row.iter().map(|&(_, w)| w).sum())
        .collect();

    let d = g.x.cols;
    let mut x = Matrix::zeros(np, d);
    for u in 0..g.n {
        let su = p.assign[u] as usize;
        let src = g.x.row(u);
        let dst = x.row_mut(su);
        for (a, b) in dst.iter_mut().zip(src) {
            *a += b;
        }
    }
    for s in 0..np {
        let inv = 1.0 / p.sizes[s] as f64;
        for v in x.row_mut(s) {
            *v *= inv;
        }
    }

    let mut label_counts = vec![std::collections::BTreeMap::new(); np];
    for u in 0..g.n {
        if let Some(c) = g.labels[u] {
            *label_counts[p.assign[u] as usize].entry(c).or_insert(0) += 1;
        }
    }
    let labels = label_counts.iter().map(majority_label).collect();

    Ok(CoarseGraph {
        n_prime: np,
        adj,
        sizes: p.sizes.iter().map(|&c| c as u64).collect(),
        x,
        degrees,
        labels,
    })
}

/// Contract an already-coarse graph by a partition over its supernodes.
///
/// Features are the size-weighted mean of supernode features, so the result
/// always equals the unweighted mean over original member nodes. Labels are
/// not propagated; derive them from the composed partition when needed.
pub fn contract(cg: &CoarseGraph, p: &Partition) -> Result<CoarseGraph> {
    if p.assign.len() != cg.n_prime {
        return Err(Error::input("contraction partition arity mismatch"));
    }
    let np = p.n_prime;
    let mut rows: Vec<std::collections::BTreeMap<u32, f64>> =
        vec![std::collections::BTreeMap::new(); np];
    for u in 0..cg.n_prime {
        let su = p.assign[u];
        for &(v, w) in &cg.adj[u] {
            *rows[su as usize].entry(p.assign[v as usize]).or_insert(0.0) += w;
        }
    }
    let adj: AdjList = rows
        .into_iter()
        .map(|r| r.into_iter().collect::<Vec<_>>())
        .collect();
    let degrees: Vec<f64> = adj
        .iter()
        .map(|row| row.iter().map(|&(_, w)| w).sum())
        .collect();

    let mut sizes = vec![0u64; np];
    for u in 0..cg.n_prime {
        sizes[p.assign[u] as usize] += cg.sizes[u];
    }
    let d = cg.x.cols;
    let mut x = Matrix::zeros(np, d);
    for u in 0..cg.n_prime {
        let su = p.assign[u] as usize;
        let wu = cg.sizes[u] as f64;
        let src = cg.x.row(u);
        let dst = x.row_mut(su);
        for (a, b) in dst.iter_mut().zip(src) {
            *a += wu * b;
        }
    }
    for s in 0..np {
        let inv = 1.0 / sizes[s] as f64;
        for v in x.row_mut(s) {
            *v *= inv;
        }
    }

    Ok(CoarseGraph {
        n_prime: np,
        adj,
        sizes,
        x,
        degrees,
        labels: vec![None; np],
    })
}

/// Normalized propagation `H = D~^{-1/2} A~ D~^{-1/2} X` where
/// `A~ = A + diag(sizes)` and `D~ = D + diag(sizes)`.
///
/// `sizes[i] >= 1` plays the role of the analytic self-loop; pass all ones
/// for an original graph and `|C_i|` for a coarse graph. Diagonal entries
/// already present in `adjacency` are treated as ordinary neighbors.
pub fn normalized_propagate(adjacency: &AdjList, sizes: &[f64], x: &Matrix) -> Result<Matrix> {
    let n = adjacency.len();
    if sizes.len() != n || x.rows != n {
        return Err(Error::input("propagate: size/shape mismatch"));
    }
    if sizes.iter().any(|&c| c < 1.0) {
        return Err(Error::input("propagate: sizes must be >= 1"));
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = adjacency[i].iter().map(|&(_, w)| w).sum();
            deg + sizes[i]
        })
        .collect();
    let d = x.cols;
    let mut out = Matrix::zeros(n, d);
    out.data
        .par_chunks_mut(d.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let ni = norms[i];
            let self_coef = sizes[i] / ni;
            for (o, v) in row.iter_mut().zip(x.row(i)) {
                *o = self_coef * v;
            }
            let scale = 1.0 / ni.sqrt();
            for &(j, w) in &adjacency[i] {
                let coef = scale * w / norms[j as usize].sqrt();
                for (o, v) in row.iter_mut().zip(x.row(j as usize)) {
                    *o += coef * v;
                }
            }
        });
    Ok(out)
}

/// `K`-fold propagation of the original graph's features with unit
/// self-loops: the trivially parameterized SGC embedding. `K = 0` returns
/// `X` unchanged.
pub fn sgc_embed(g: &Graph, k: usize) -> Matrix {
    let sizes = vec![1.0; g.n];
    let mut h = g.x.clone();
    for _ in 0..k {
        h = normalized_propagate(&g.adj, &sizes, &h).expect("validated graph");
    }
    h
}

/// `K`-fold coarse propagation with `|C_i|` self-loops.
pub fn coarse_sgc_embed(cg: &CoarseGraph, k: usize) -> Matrix {
    let sizes: Vec<f64> = cg.sizes.iter().map(|&c| c as f64).collect();
    let mut h = cg.x.clone();
    for _ in 0..k {
        h = normalized_propagate(&cg.adj, &sizes, &h).expect("validated graph");
    }
    h
}

//! Exact and approximate merge-cost evaluation backed by the per-supernode
//! summation and influence caches, plus the global objective and a
//! brute-force oracle.

use crate::error::{Error, Result};
use crate::graph::{
    build_coarse, contract, normalized_propagate, CoarseGraph, Graph, Partition,
};
use crate::matrix::{axpy, l1_diff};

/// Desk-scale guard for the brute-force oracle.
pub const BRUTE_FORCE_LIMIT: usize = 2_000;

/// Read access to a coarse graph's structure, shared by the immutable
/// snapshot type and the coarsener's mutable working state.
pub trait CoarseView {
    fn feat_dim(&self) -> usize;
    /// Member count `|C_u|`.
    fn size(&self, u: u32) -> f64;
    /// Weighted degree including any diagonal entry.
    fn degree(&self, u: u32) -> f64;
    fn features(&self, u: u32) -> &[f64];
    /// Sorted `(neighbor, weight)` row, diagonal included when present.
    fn neighbors(&self, u: u32) -> &[(u32, f64)];

    /// Self-loop normalizer `d_u + |C_u|`.
    fn normalizer(&self, u: u32) -> f64 {
        self.degree(u) + self.size(u)
    }

    fn weight_between(&self, u: u32, v: u32) -> f64 {
        match self.neighbors(u).binary_search_by_key(&v, |&(j, _)| j) {
            Ok(k) => self.neighbors(u)[k].1,
            Err(_) => 0.0,
        }
    }
}

impl CoarseView for CoarseGraph {
    fn feat_dim(&self) -> usize {
        self.x.cols
    }
    fn size(&self, u: u32) -> f64 {
        self.sizes[u as usize] as f64
    }
    fn degree(&self, u: u32) -> f64 {
        self.degrees[u as usize]
    }
    fn features(&self, u: u32) -> &[f64] {
        self.x.row(u as usize)
    }
    fn neighbors(&self, u: u32) -> &[(u32, f64)] {
        &self.adj[u as usize]
    }
}

/// Cached convolution state per supernode:
/// `s[i] = sum_j a_ji x_j / sqrt(n_j)` over stored row entries (diagonal
/// included), `infl[i] = sum_{j != i} a_ij / sqrt(n_j)`, and the current
/// one-layer output `h[i] = (|C_i|/n_i) x_i + s[i] / sqrt(n_i)`.
#[derive(Clone, Debug)]
pub struct ConvCache {
    pub h: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub infl: Vec<f64>,
}

impl ConvCache {
    /// Build all three caches in one pass over the edges.
    pub fn init<V: CoarseView>(view: &V, n: usize) -> Self {
        let d = view.feat_dim();
        let mut cache = ConvCache {
            h: vec![vec![0.0; d]; n],
            s: vec![vec![0.0; d]; n],
            infl: vec![0.0; n],
        };
        for i in 0..n as u32 {
            cache.refresh_row(view, i);
        }
        cache
    }

    /// Recompute `s`, `infl`, and `h` for one supernode from the current
    /// structure.
    pub fn refresh_row<V: CoarseView>(&mut self, view: &V, i: u32) {
        let d = view.feat_dim();
        let s = &mut self.s[i as usize];
        s.resize(d, 0.0);
        s.iter_mut().for_each(|v| *v = 0.0);
        let mut infl = 0.0;
        for &(j, w) in view.neighbors(i) {
            let scale = w / view.normalizer(j).sqrt();
            axpy(scale, view.features(j), s);
            if j != i {
                infl += scale;
            }
        }
        self.infl[i as usize] = infl;
        let ni = view.normalizer(i);
        let h = &mut self.h[i as usize];
        h.resize(d, 0.0);
        let self_coef = view.size(i) / ni;
        let s_coef = 1.0 / ni.sqrt();
        for ((hv, xv), sv) in h.iter_mut().zip(view.features(i)).zip(self.s[i as usize].iter()) {
            *hv = self_coef * xv + s_coef * sv;
        }
    }

    /// Maximum absolute deviation of the cached state from a direct
    /// recomputation over the ids in `live`. Debug-mode consistency check.
    pub fn max_deviation<V: CoarseView>(&self, view: &V, live: &[u32]) -> f64 {
        let mut fresh = self.clone();
        let mut worst: f64 = 0.0;
        for &i in live {
            fresh.refresh_row(view, i);
            worst = worst
                .max(l1_diff(&fresh.h[i as usize], &self.h[i as usize]))
                .max(l1_diff(&fresh.s[i as usize], &self.s[i as usize]))
                .max((fresh.infl[i as usize] - self.infl[i as usize]).abs());
        }
        worst
    }
}

/// Closed-form state of the supernode that a merge of `(u, v)` would create.
pub struct MergedNode {
    pub size: f64,
    pub degree: f64,
    pub normalizer: f64,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub weight_uv: f64,
}

/// Evaluate the merged supernode's features, summation cache, and one-layer
/// representation from cached quantities only (no neighbor traversal).
pub fn merged_node<V: CoarseView>(cache: &ConvCache, view: &V, u: u32, v: u32) -> MergedNode {
    let (cu, cv) = (view.size(u), view.size(v));
    let (du, dv) = (view.degree(u), view.degree(v));
    let (nu, nv) = (view.normalizer(u), view.normalizer(v));
    let a_uv = view.weight_between(u, v);
    let a_uu = view.weight_between(u, u);
    let a_vv = view.weight_between(v, v);

    let size = cu + cv;
    let degree = du + dv;
    let norm = degree + size;
    let d = view.feat_dim();

    let mut x = vec![0.0; d];
    axpy(cu / size, view.features(u), &mut x);
    axpy(cv / size, view.features(v), &mut x);

    // New diagonal folds both old diagonals and both directions of the
    // former u-v edge.
    let a_mm = a_uu + a_vv + 2.0 * a_uv;
    let mut s = cache.s[u as usize].clone();
    for (sv, t) in s.iter_mut().zip(&cache.s[v as usize]) {
        *sv += t;
    }
    axpy(-(a_uu + a_uv) / nu.sqrt(), view.features(u), &mut s);
    axpy(-(a_vv + a_uv) / nv.sqrt(), view.features(v), &mut s);
    axpy(a_mm / norm.sqrt(), &x, &mut s);

    let mut h = vec![0.0; d];
    let self_coef = size / norm;
    let s_coef = 1.0 / norm.sqrt();
    for ((hv, xv), sv) in h.iter_mut().zip(&x).zip(&s) {
        *hv = self_coef * xv + s_coef * sv;
    }

    MergedNode {
        size,
        degree,
        normalizer: norm,
        x,
        h,
        s,
        weight_uv: a_uv,
    }
}

/// Two-pointer union of two sorted adjacency rows, excluding the endpoints
/// themselves. Yields `(id, weight_to_u, weight_to_v)` in ascending id order.
pub fn neighbor_union(
    row_u: &[(u32, f64)],
    row_v: &[(u32, f64)],
    u: u32,
    v: u32,
) -> Vec<(u32, f64, f64)> {
    let mut out = Vec::with_capacity(row_u.len() + row_v.len());
    let (mut a, mut b) = (0, 0);
    while a < row_u.len() || b < row_v.len() {
        let next = match (row_u.get(a), row_v.get(b)) {
            (Some(&(i, wu)), Some(&(j, _))) if i < j => {
                a += 1;
                (i, wu, 0.0)
            }
            (Some(&(i, wu)), Some(&(j, wv))) if i == j => {
                a += 1;
                b += 1;
                (i, wu, wv)
            }
            (_, Some(&(j, wv))) => {
                b += 1;
                (j, 0.0, wv)
            }
            (Some(&(i, wu)), None) => {
                a += 1;
                (i, wu, 0.0)
            }
            (None, None) => unreachable!(),
        };
        if next.0 != u && next.0 != v {
            out.push(next);
        }
    }
    out
}

fn check_pair<V: CoarseView>(view: &V, u: u32, v: u32) -> Result<()> {
    if u == v {
        return Err(Error::input("cannot merge a supernode with itself"));
    }
    let _ = view; // liveness is the caller's registry concern
    Ok(())
}

/// Exact merge cost: the L1 change in the one-layer convolution output over
/// the merged pair and its one-hop neighborhood. Pure read.
pub fn exact_cost<V: CoarseView>(cache: &ConvCache, view: &V, u: u32, v: u32) -> Result<f64> {
    check_pair(view, u, v)?;
    let m = merged_node(cache, view, u, v);
    let mut cost = l1_diff(&cache.h[u as usize], &m.h) + l1_diff(&cache.h[v as usize], &m.h);

    let (xu, xv) = (view.features(u), view.features(v));
    let su = view.normalizer(u).sqrt();
    let sv = view.normalizer(v).sqrt();
    let sm = m.normalizer.sqrt();
    // Ordered union of both endpoint neighborhoods keeps the floating-point
    // accumulation order reproducible.
    for (i, a_ui, a_vi) in neighbor_union(view.neighbors(u), view.neighbors(v), u, v) {
        // h_i - h'_i collapses to the change in the i row of the weighted
        // neighbor sum; sizes and degrees of i are untouched by the merge.
        let coef = 1.0 / view.normalizer(i).sqrt();
        let mut delta = 0.0;
        let cm = (a_ui + a_vi) / sm;
        for k in 0..view.feat_dim() {
            let t = a_ui / su * xu[k] + a_vi / sv * xv[k] - cm * m.x[k];
            delta += t.abs();
        }
        cost += coef * delta;
    }
    Ok(cost)
}

/// Upper-bound merge cost from the influence cache; constant in the
/// neighborhood size. Pure read.
pub fn approx_cost<V: CoarseView>(cache: &ConvCache, view: &V, u: u32, v: u32) -> Result<f64> {
    check_pair(view, u, v)?;
    let m = merged_node(cache, view, u, v);
    let mut cost = l1_diff(&cache.h[u as usize], &m.h) + l1_diff(&cache.h[v as usize], &m.h);

    let sm = m.normalizer.sqrt();
    let (xu, xv) = (view.features(u), view.features(v));
    let su = view.normalizer(u).sqrt();
    let sv = view.normalizer(v).sqrt();
    let mut du = 0.0;
    let mut dv = 0.0;
    for k in 0..view.feat_dim() {
        let xm = m.x[k] / sm;
        du += (xm - xu[k] / su).abs();
        dv += (xm - xv[k] / sv).abs();
    }
    cost += du * cache.infl[u as usize] + dv * cache.infl[v as usize];
    Ok(cost)
}

/// Global convolution-matching objective of a partition: the summed L1
/// difference between the lifted coarse convolution output and the original
/// graph's output.
pub fn objective_value(g: &Graph, p: &Partition) -> Result<f64> {
    let cg = build_coarse(g, p)?;
    let ones = vec![1.0; g.n];
    let h = normalized_propagate(&g.adj, &ones, &g.x)?;
    let sizes: Vec<f64> = cg.sizes.iter().map(|&c| c as f64).collect();
    let h_coarse = normalized_propagate(&cg.adj, &sizes, &cg.x)?;
    let mut total = 0.0;
    for i in 0..g.n {
        total += l1_diff(h_coarse.row(p.assign[i] as usize), h.row(i));
    }
    Ok(total)
}

/// Reference semantics for [`exact_cost`]: recompute the full one-layer
/// output before and after merging `(u, v)` and return the global L1
/// difference with the merged row lifted to both members.
pub fn brute_force_cost(cg: &CoarseGraph, u: u32, v: u32) -> Result<f64> {
    if cg.n_prime > BRUTE_FORCE_LIMIT {
        return Err(Error::ScaleGuard(format!(
            "brute-force oracle limited to {BRUTE_FORCE_LIMIT} supernodes, got {}",
            cg.n_prime
        )));
    }
    if u == v || u as usize >= cg.n_prime || v as usize >= cg.n_prime {
        return Err(Error::input("invalid merge pair"));
    }
    let sizes: Vec<f64> = cg.sizes.iter().map(|&c| c as f64).collect();
    let before = normalized_propagate(&cg.adj, &sizes, &cg.x)?;

    // One-merge partition of the supernode ids.
    let (lo, hi) = if u < v { (u, v) } else { (v, u) };
    let mut assign = Vec::with_capacity(cg.n_prime);
    let mut next = 0u32;
    let mut map = vec![0u32; cg.n_prime];
    for i in 0..cg.n_prime as u32 {
        if i == hi {
            map[i as usize] = map[lo as usize];
        } else {
            map[i as usize] = next;
            next += 1;
        }
        assign.push(map[i as usize]);
    }
    let p = Partition::new(assign, next as usize)?;
    let merged = contract(cg, &p)?;
    let msizes: Vec<f64> = merged.sizes.iter().map(|&c| c as f64).collect();
    let after = normalized_propagate(&merged.adj, &msizes, &merged.x)?;

    let mut cost = 0.0;
    for i in 0..cg.n_prime {
        cost += l1_diff(after.row(p.assign[i] as usize), before.row(i));
    }
    Ok(cost)
}

/// Convenience wrapper: brute-force cost of one extra merge on top of an
/// existing partition of `g`.
pub fn brute_force_cost_on(g: &Graph, p_before: &Partition, pair: (u32, u32)) -> Result<f64> {
    let cg = build_coarse(g, p_before)?;
    brute_force_cost(&cg, pair.0, pair.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn graph(n: usize, edges: &[(u32, u32, f64)], x: &[Vec<f64>]) -> Graph {
        Graph::new(n, edges, Matrix::from_rows(x).unwrap(), vec![], vec![]).unwrap()
    }

    fn cache_of(cg: &CoarseGraph) -> ConvCache {
        ConvCache::init(cg, cg.n_prime)
    }

    #[test]
    fn init_cache_isolated() {
        let g = graph(1, &[], &[vec![3.0]]);
        let cg = CoarseGraph::from_graph(&g);
        let c = cache_of(&cg);
        assert_eq!(c.s[0], vec![0.0]);
        assert_eq!(c.infl[0], 0.0);
        assert_eq!(c.h[0], vec![3.0]);
    }

    #[test]
    fn init_cache_two_node() {
        let g = graph(2, &[(0, 1, 1.0)], &[vec![1.0], vec![0.0]]);
        let cg = CoarseGraph::from_graph(&g);
        let c = cache_of(&cg);
        let r = 1.0 / 2f64.sqrt();
        assert!((c.s[1][0] - r).abs() < 1e-12);
        assert!(c.s[0][0].abs() < 1e-12);
        assert!((c.infl[0] - r).abs() < 1e-12);
        assert!((c.infl[1] - r).abs() < 1e-12);
        assert!((c.h[0][0] - 0.5).abs() < 1e-12);
        assert!((c.h[1][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn init_cache_matches_propagate() {
        let g = graph(
            4,
            &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (0, 3, 1.5)],
            &[vec![1.0, 2.0], vec![0.0, 1.0], vec![-1.0, 0.5], vec![2.0, 0.0]],
        );
        let cg = CoarseGraph::from_graph(&g);
        let c = cache_of(&cg);
        let h = normalized_propagate(&cg.adj, &[1.0; 4], &cg.x).unwrap();
        for i in 0..4 {
            assert!(l1_diff(&c.h[i], h.row(i)) < 1e-12);
        }
    }

    #[test]
    fn exact_cost_identical_isolated_nodes_zero() {
        let g = graph(2, &[], &[vec![4.0], vec![4.0]]);
        let cg = CoarseGraph::from_graph(&g);
        let c = cache_of(&cg);
        assert!(exact_cost(&c, &cg, 0, 1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn exact_cost_two_node_merge_zero() {
        let g = graph(2, &[(0, 1, 1.0)], &[vec![1.0], vec![0.0]]);
        let cg = CoarseGraph::from_graph(&g);
        let c = cache_of(&cg);
        assert!(exact_cost(&c, &cg, 0, 1).unwrap().abs() < 1e-12);
        assert!(brute_force_cost(&cg, 0, 1).unwrap().abs() < 1e-12);
    }

    /// Two disjoint edges u-w, v-z with x_u = 1 and 0 elsewhere; merging the
    /// non-adjacent (u, v) costs exactly 1 and the bound is tight.
    #[test]
    fn disjoint_edges_cost_one() {
        let g = graph(
            4,
            &[(0, 1, 1.0), (2, 3, 1.0)],
            &[vec![1.0], vec![0.0], vec![0.0], vec![0.0]],
        );
        let cg = CoarseGraph::from_graph(&g);
        let c = cache_of(&cg);
        let exact = exact_cost(&c, &cg, 0, 2).unwrap();
        let approx = approx_cost(&c, &cg, 0, 2).unwrap();
        let brute = brute_force_cost(&cg, 0, 2).unwrap();
        assert!((exact - 1.0).abs() < 1e-9, "exact = {exact}");
        assert!((approx - exact).abs() < 1e-12);
        assert!((brute - exact).abs() < 1e-12);
    }

    #[test]
    fn approx_identical_isolated_zero() {
        let g = graph(2, &[], &[vec![4.0], vec![4.0]]);
        let cg = CoarseGraph::from_graph(&g);
        let c = cache_of(&cg);
        assert!(approx_cost(&c, &cg, 0, 1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn approx_slack_for_adjacent_pair() {
        let g = graph(2, &[(0, 1, 1.0)], &[vec![1.0], vec![0.0]]);
        let cg = CoarseGraph::from_graph(&g);
        let c = cache_of(&cg);
        let approx = approx_cost(&c, &cg, 0, 1).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let expected = r * ((0.25 - r).abs() + 0.25);
        assert!((approx - expected).abs() < 1e-12, "approx = {approx}");
        assert!(approx >= exact_cost(&c, &cg, 0, 1).unwrap());
    }

    #[test]
    fn objective_identity_zero() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)], &[vec![1.0], vec![0.0], vec![2.0]]);
        let p = Partition::identity(3);
        assert!(objective_value(&g, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn objective_two_node_merge_all_zero() {
        let g = graph(2, &[(0, 1, 1.0)], &[vec![1.0], vec![0.0]]);
        let p = Partition::new(vec![0, 0], 1).unwrap();
        assert!(objective_value(&g, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn brute_force_scale_guard() {
        let n = BRUTE_FORCE_LIMIT + 1;
        let x = Matrix::zeros(n, 1);
        let g = Graph::new(n, &[], x, vec![], vec![]).unwrap();
        let cg = CoarseGraph::from_graph(&g);
        assert!(matches!(
            brute_force_cost(&cg, 0, 1),
            Err(Error::ScaleGuard(_))
        ));
    }

    #[test]
    fn rejects_self_pair() {
        let g = graph(2, &[(0, 1, 1.0)], &[vec![1.0], vec![0.0]]);
        let cg = CoarseGraph::from_graph(&g);
        let c = cache_of(&cg);
        assert!(exact_cost(&c, &cg, 1, 1).is_err());
    }
}

//! Candidate merge-pair generation from SGC embeddings: exact matches,
//! per-node nearest neighbors, and globally nearest pairs.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{sgc_embed, Graph};
use crate::matrix::{l1_diff, Matrix};

/// Above this many rows, per-node kNN search switches from the exact scan to
/// bucketed search under seeded random-hyperplane hashing.
const EXACT_KNN_LIMIT: usize = 20_000;
/// Above this many rows, the global nearest-pair pool is restricted to the
/// union of per-node `2*k1` nearest lists instead of all pairs.
const ALL_PAIRS_LIMIT: usize = 5_000;
const LSH_PLANES: usize = 8;

/// Candidate-pair graph over current supernode ids. Costs are attached later
/// by the cost engine; the pair list is sorted and duplicate-free with
/// `u < v` in every entry.
#[derive(Clone, Debug, Default)]
pub struct MergeGraph {
    pub pairs: Vec<(u32, u32)>,
}

#[derive(Clone, Copy, Debug)]
pub struct CandidateConfig {
    /// SGC propagation depth for the matching embedding.
    pub sgc_k: usize,
    /// PCA target dimension for the search embedding.
    pub pca_dim: usize,
    /// Nearest neighbors per node.
    pub k1: usize,
    /// Fraction of `n` taken as the global nearest-pair count.
    pub d_nn: f64,
    pub seed: u64,
}

/// Project mean-centered `h` onto its top-`p` principal directions.
///
/// Seeded orthogonal power iteration with deflation against earlier
/// components; deterministic for a fixed seed. Rank-deficient inputs yield
/// zero-padded trailing columns. `p >= d` returns the centered matrix
/// unchanged.
pub fn pca_reduce(h: &Matrix, p: usize, seed: u64) -> Result<Matrix> {
    if p < 1 {
        return Err(Error::input("pca dimension must be >= 1"));
    }
    let (n, d) = (h.rows, h.cols);
    let mut centered = h.clone();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(h.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n.max(1) as f64;
    }
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    if p >= d {
        return Ok(centered);
    }

    // Matrix-free action of the d x d covariance: v -> H^T (H v) / n.
    let cov_apply = |v: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            let row = centered.row(i);
            let proj: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            for (o, a) in out.iter_mut().zip(row) {
                *o += proj * a;
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(p);
    let total_var: f64 = centered.data.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
    let rank_tol = total_var.max(1.0) * 1e-12;
    for _ in 0..p {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut w = vec![0.0; d];
        let mut eig = 0.0;
        for _ in 0..60 {
            orthogonalize(&mut v, &components);
            let norm = normalize(&mut v);
            if norm < 1e-300 {
                break;
            }
            cov_apply(&v, &mut w);
            orthogonalize(&mut w, &components);
            let new_eig: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
            let wnorm = normalize(&mut w);
            if wnorm < rank_tol {
                eig = 0.0;
                break;
            }
            let drift = 1.0 - w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs();
            std::mem::swap(&mut v, &mut w);
            eig = new_eig;
            if drift < 1e-13 {
                break;
            }
        }
        if eig <= rank_tol {
            break; // remaining components are numerically zero
        }
        components.push(v.clone());
    }

    let mut out = Matrix::zeros(n, p);
    for i in 0..n {
        let row = centered.row(i);
        for (k, comp) in components.iter().enumerate() {
            out.row_mut(i)[k] = row.iter().zip(comp).map(|(a, b)| a * b).sum();
        }
    }
    Ok(out)
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
        for (a, c) in v.iter_mut().zip(b) {
            *a -= proj * c;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        for a in v.iter_mut() {
            *a /= norm;
        }
    }
    norm
}

/// Pairs of bitwise-identical embedding rows. Each equality group of size
/// `m` contributes `m - 1` pairs chaining its members in ascending id order.
pub fn exact_match_pairs(h: &Matrix) -> Vec<(u32, u32)> {
    let mut groups: HashMap<Vec<u64>, Vec<u32>> = HashMap::new();
    for i in 0..h.rows {
        let key: Vec<u64> = h.row(i).iter().map(|v| v.to_bits()).collect();
        groups.entry(key).or_default().push(i as u32);
    }
    let mut pairs = Vec::new();
    for members in groups.values() {
        for w in members.windows(2) {
            pairs.push((w[0], w[1]));
        }
    }
    pairs.sort_unstable();
    pairs
}

fn l1_row(h: &Matrix, i: usize, j: usize) -> f64 {
    l1_diff(h.row(i), h.row(j))
}

/// `k1` L1-nearest rows for every node, deduplicated to unordered pairs.
/// Ties break toward the smaller node id. Exact scan up to
/// [`EXACT_KNN_LIMIT`] rows, seeded LSH buckets beyond.
pub fn knn_pairs(h: &Matrix, k1: usize, seed: u64) -> Result<Vec<(u32, u32)>> {
    if k1 < 1 {
        return Err(Error::input("k1 must be >= 1"));
    }
    let n = h.rows;
    let per_node: Vec<Vec<u32>> = if n <= EXACT_KNN_LIMIT {
        let all: Vec<u32> = (0..n as u32).collect();
        (0..n)
            .into_par_iter()
            .map(|i| nearest_in(h, i, &all, k1))
            .collect()
    } else {
        let buckets = lsh_buckets(h, seed);
        let mut membership: HashMap<u32, Vec<u32>> = HashMap::new();
        for bucket in buckets.values() {
            for &i in bucket {
                membership.insert(i, bucket.clone());
            }
        }
        (0..n)
            .into_par_iter()
            .map(|i| nearest_in(h, i, &membership[&(i as u32)], k1))
            .collect()
    };
    let mut pairs = Vec::new();
    for (i, nbrs) in per_node.iter().enumerate() {
        for &j in nbrs {
            let (a, b) = ordered(i as u32, j);
            pairs.push((a, b));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

fn nearest_in(h: &Matrix, i: usize, pool: &[u32], k1: usize) -> Vec<u32> {
    let mut dists: Vec<(f64, u32)> = pool
        .iter()
        .filter(|&&j| j as usize != i)
        .map(|&j| (l1_row(h, i, j as usize), j))
        .collect();
    dists.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    dists.truncate(k1);
    dists.into_iter().map(|(_, j)| j).collect()
}

fn lsh_buckets(h: &Matrix, seed: u64) -> HashMap<u32, Vec<u32>> {
    let d = h.cols;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let planes: Vec<Vec<f64>> = (0..LSH_PLANES)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut buckets: HashMap<u32, Vec<u32>> = HashMap::new();
    for i in 0..h.rows {
        let row = h.row(i);
        let mut sig = 0u32;
        for (b, plane) in planes.iter().enumerate() {
            let s: f64 = row.iter().zip(plane).map(|(a, p)| a * p).sum();
            if s >= 0.0 {
                sig |= 1 << b;
            }
        }
        buckets.entry(sig).or_default().push(i as u32);
    }
    buckets
}

/// The `k2` unordered pairs with the smallest L1 distance. The candidate
/// pool is all pairs for small inputs and the union of per-node `2*k1`
/// nearest lists beyond [`ALL_PAIRS_LIMIT`].
pub fn global_nearest_pairs(h: &Matrix, k2: usize, k1: usize, seed: u64) -> Result<Vec<(u32, u32)>> {
    if k2 == 0 {
        return Ok(Vec::new());
    }
    let n = h.rows;
    let pool: Vec<(u32, u32)> = if n <= ALL_PAIRS_LIMIT {
        let mut v = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n as u32 {
            for j in i + 1..n as u32 {
                v.push((i, j));
            }
        }
        v
    } else {
        knn_pairs(h, 2 * k1.max(1), seed)?
    };
    let mut scored: Vec<(f64, u32, u32)> = pool
        .into_par_iter()
        .map(|(i, j)| (l1_row(h, i as usize, j as usize), i, j))
        .collect();
    scored.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    scored.truncate(k2);
    let mut pairs: Vec<(u32, u32)> = scored.into_iter().map(|(_, i, j)| (i, j)).collect();
    pairs.sort_unstable();
    Ok(pairs)
}

#[inline]
fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Union of all three candidate sources given the full-precision embedding
/// (for bitwise matching) and the reduced search embedding.
pub fn candidate_pairs(
    h_full: &Matrix,
    h_search: &Matrix,
    k1: usize,
    d_nn: f64,
    seed: u64,
) -> Result<Vec<(u32, u32)>> {
    let k2 = (d_nn * h_full.rows as f64).round() as usize;
    let mut pairs = exact_match_pairs(h_full);
    pairs.extend(knn_pairs(h_search, k1, seed)?);
    pairs.extend(global_nearest_pairs(h_search, k2, k1, seed)?);
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

/// Algorithm entry point: SGC-embed, PCA-reduce, and pool the three
/// candidate sources into the initial merge-graph. Costs are left unset.
pub fn build_merge_graph(g: &Graph, cfg: &CandidateConfig) -> Result<MergeGraph> {
    let h_full = sgc_embed(g, cfg.sgc_k);
    let h_search = pca_reduce(&h_full, cfg.pca_dim.min(h_full.cols.max(1)), cfg.seed)?;
    let pairs = candidate_pairs(&h_full, &h_search, cfg.k1, cfg.d_nn, cfg.seed)?;
    Ok(MergeGraph { pairs })
}

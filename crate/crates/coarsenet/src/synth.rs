//! Seeded synthetic citation-network generator: a stochastic block model
//! with class-correlated sparse binary features and planetoid-style splits
//! (20 train nodes per class, then 500 valid and 1000 test nodes).
//!
//! Two presets mirror the shapes of the classic citation benchmarks so the
//! pipeline can be exercised end to end without any dataset download.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Split};
use crate::matrix::Matrix;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n: usize,
    pub classes: usize,
    pub feat_dim: usize,
    /// Expected within-class degree per node.
    pub intra_deg: f64,
    /// Expected cross-class degree per node.
    pub inter_deg: f64,
    /// Probability a centroid coordinate is active for a class.
    pub centroid_density: f64,
    /// Per-coordinate flip probability applied to each node's centroid copy.
    pub noise: f64,
    pub train_per_class: usize,
    pub valid_count: usize,
    pub test_count: usize,
}

impl SynthConfig {
    /// ~2.7k nodes, 7 classes: the shape of the larger citation benchmark.
    pub fn cora_like() -> Self {
        SynthConfig {
            n: 2708,
            classes: 7,
            feat_dim: 512,
            intra_deg: 13.0,
            inter_deg: 3.0,
            centroid_density: 0.08,
            noise: 0.01,
            train_per_class: 20,
            valid_count: 500,
            test_count: 1000,
        }
    }

    /// ~3.3k nodes, 6 classes: the shape of the sparser citation benchmark.
    pub fn citeseer_like() -> Self {
        SynthConfig {
            n: 3327,
            classes: 6,
            feat_dim: 440,
            intra_deg: 6.0,
            inter_deg: 1.0,
            centroid_density: 0.08,
            noise: 0.01,
            train_per_class: 20,
            valid_count: 500,
            test_count: 1000,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "cora" => Some(Self::cora_like()),
            "citeseer" => Some(Self::citeseer_like()),
            _ => None,
        }
    }
}

/// Generate a labeled, split, featured graph from `cfg` with all randomness
/// drawn from `seed`.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n;
    let c = cfg.classes;

    // Round-robin class assignment, then a seeded shuffle so class blocks are
    // not contiguous in id space.
    let mut classes: Vec<u32> = (0..n).map(|i| (i % c) as u32).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        classes.swap(i, j);
    }
    let class_size = n as f64 / c as f64;

    // Class centroids: sparse binary patterns.
    let centroids: Vec<Vec<bool>> = (0..c)
        .map(|_| {
            (0..cfg.feat_dim)
                .map(|_| rng.gen_bool(cfg.centroid_density))
                .collect()
        })
        .collect();
    let mut x = Matrix::zeros(n, cfg.feat_dim);
    for i in 0..n {
        let cen = &centroids[classes[i] as usize];
        let row = x.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let mut bit = cen[j];
            if rng.gen_bool(cfg.noise) {
                bit = !bit;
            }
            *v = if bit { 1.0 } else { 0.0 };
        }
    }

    // SBM edges: per-pair Bernoulli with within/between probabilities chosen
    // so expected degrees match the config.
    let p_in = (cfg.intra_deg / class_size).min(1.0);
    let p_out = (cfg.inter_deg / (n as f64 - class_size)).min(1.0);
    let mut edges: Vec<(u32, u32, f64)> = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if classes[u] == classes[v] { p_in } else { p_out };
            if rng.gen_bool(p) {
                edges.push((u as u32, v as u32, 1.0));
            }
        }
    }

    // Planetoid-style splits over a seeded node order.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut splits: Vec<Option<Split>> = vec![None; n];
    let mut taken_per_class = vec![0usize; c];
    let mut rest = Vec::new();
    for &i in &order {
        let cl = classes[i] as usize;
        if taken_per_class[cl] < cfg.train_per_class {
            taken_per_class[cl] += 1;
            splits[i] = Some(Split::Train);
        } else {
            rest.push(i);
        }
    }
    for (k, &i) in rest.iter().enumerate() {
        if k < cfg.valid_count {
            splits[i] = Some(Split::Valid);
        } else if k < cfg.valid_count + cfg.test_count {
            splits[i] = Some(Split::Test);
        }
    }

    let labels = classes.into_iter().map(Some).collect();
    Graph::new(n, &edges, x, labels, splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n: 300,
            classes: 3,
            feat_dim: 32,
            intra_deg: 4.0,
            inter_deg: 1.0,
            centroid_density: 0.2,
            noise: 0.02,
            train_per_class: 10,
            valid_count: 50,
            test_count: 100,
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate(&small(), 7).unwrap();
        let b = generate(&small(), 7).unwrap();
        assert_eq!(a.adj, b.adj);
        for (x, y) in a.x.data.iter().zip(&b.x.data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.splits, b.splits);
        let c = generate(&small(), 8).unwrap();
        assert_ne!(a.adj, c.adj);
    }

    #[test]
    fn split_counts_and_label_coverage() {
        let g = generate(&small(), 1).unwrap();
        let count = |s: Split| g.splits.iter().filter(|&&x| x == Some(s)).count();
        assert_eq!(count(Split::Train), 30);
        assert_eq!(count(Split::Valid), 50);
        assert_eq!(count(Split::Test), 100);
        assert!(g.labels.iter().all(Option::is_some));
        for c in 0..3u32 {
            let t = (0..g.n)
                .filter(|&i| g.splits[i] == Some(Split::Train) && g.labels[i] == Some(c))
                .count();
            assert_eq!(t, 10);
        }
    }

    #[test]
    fn homophily_dominates() {
        let g = generate(&small(), 2).unwrap();
        let mut intra = 0usize;
        let mut inter = 0usize;
        for u in 0..g.n as u32 {
            for &(v, _) in &g.adj[u as usize] {
                if u < v {
                    if g.labels[u as usize] == g.labels[v as usize] {
                        intra += 1;
                    } else {
                        inter += 1;
                    }
                }
            }
        }
        assert!(intra > 2 * inter, "intra {intra} inter {inter}");
    }

    #[test]
    fn expected_degree_roughly_matches() {
        let g = generate(&small(), 3).unwrap();
        let mean_deg = 2.0 * g.edge_count() as f64 / g.n as f64;
        // Expectation is intra + inter = 4.5.
        assert!((3.0..6.5).contains(&mean_deg), "mean degree {mean_deg}");
    }

    #[test]
    fn presets_have_expected_shapes() {
        let a = SynthConfig::preset("cora").unwrap();
        assert_eq!((a.n, a.classes), (2708, 7));
        let b = SynthConfig::preset("citeseer").unwrap();
        assert_eq!((b.n, b.classes), (3327, 6));
        assert!(SynthConfig::preset("pubmed").is_none());
    }
}

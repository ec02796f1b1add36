//! Downstream verification: a linear SGC classifier for node classification
//! and a dot-product scorer for link prediction, trained on the coarse
//! graph and evaluated on the original graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{coarse_sgc_embed, majority_label, sgc_embed, CoarseGraph, Graph, Partition, Split};
use crate::matrix::{dot, Matrix};

/// Linear SGC model: a single weight matrix applied to K-fold propagated
/// features.
#[derive(Clone, Debug)]
pub struct SgcModel {
    pub theta: Matrix,
    pub k: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Embedding dimension for the link-prediction scorer.
    pub embed_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.2,
            epochs: 100,
            l2: 5e-6,
            seed: 0,
            embed_dim: 16,
        }
    }
}

/// Single-line JSON evaluation record.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub metric: String,
    pub valid: f64,
    pub test: f64,
    pub ratio: f64,
    pub summarize_s: f64,
    pub train_s: f64,
}

/// Training labels for supernodes: a supernode carries one iff at least one
/// member is in the train split; the label is the majority over train-split
/// members only, ties toward the smallest class id.
pub fn supernode_train_labels(g: &Graph, p: &Partition) -> Vec<Option<u32>> {
    let mut counts = vec![std::collections::BTreeMap::new(); p.n_prime];
    for v in 0..g.n {
        if g.splits[v] == Some(Split::Train) {
            if let Some(c) = g.labels[v] {
                *counts[p.assign[v] as usize].entry(c).or_insert(0) += 1;
            }
        }
    }
    counts.iter().map(majority_label).collect()
}

fn num_classes(labels: &[Option<u32>]) -> usize {
    labels
        .iter()
        .flatten()
        .map(|&c| c as usize + 1)
        .max()
        .unwrap_or(0)
}

/// Fit a softmax classifier on K-fold coarse-propagated features by
/// full-batch gradient descent with L2 regularization. Zero initialization;
/// deterministic. The step is halved whenever the loss fails to decrease.
pub fn train_sgc_nc(
    cg: &CoarseGraph,
    train_labels: &[Option<u32>],
    k: usize,
    classes: usize,
    cfg: &TrainConfig,
) -> Result<SgcModel> {
    let z = coarse_sgc_embed(cg, k);
    let rows: Vec<usize> = (0..cg.n_prime)
        .filter(|&i| train_labels[i].is_some())
        .collect();
    if rows.is_empty() {
        return Err(Error::input("no train-labeled supernodes"));
    }
    let classes = classes.max(num_classes(train_labels));
    let d = z.cols;
    let m = rows.len() as f64;
    let mut theta = Matrix::zeros(d, classes);
    let mut lr = cfg.lr;
    let mut prev_loss = f64::INFINITY;
    for _ in 0..cfg.epochs {
        let mut grad = Matrix::zeros(d, classes);
        let mut loss = 0.0;
        for &i in &rows {
            let zi = z.row(i);
            let y = train_labels[i].unwrap() as usize;
            let mut logits = vec![0.0; classes];
            for (c, l) in logits.iter_mut().enumerate() {
                *l = (0..d).map(|j| zi[j] * theta.row(j)[c]).sum();
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            loss -= ((exps[y] / denom).max(1e-300)).ln() / m;
            for (c, &e) in exps.iter().enumerate() {
                let resid = (e / denom - if c == y { 1.0 } else { 0.0 }) / m;
                for j in 0..d {
                    grad.row_mut(j)[c] += resid * zi[j];
                }
            }
        }
        let reg: f64 = theta.data.iter().map(|t| t * t).sum();
        loss += cfg.l2 * reg;
        for (gv, tv) in grad.data.iter_mut().zip(&theta.data) {
            *gv += 2.0 * cfg.l2 * tv;
        }
        if loss > prev_loss + 1e-6 {
            lr *= 0.5;
        }
        prev_loss = loss;
        for (tv, gv) in theta.data.iter_mut().zip(&grad.data) {
            *tv -= lr * gv;
        }
    }
    Ok(SgcModel { theta, k })
}

fn predict(z: &Matrix, theta: &Matrix, i: usize) -> usize {
    let zi = z.row(i);
    let classes = theta.cols;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for c in 0..classes {
        let l: f64 = (0..theta.rows).map(|j| zi[j] * theta.row(j)[c]).sum();
        if l > best.0 {
            best = (l, c);
        }
    }
    best.1
}

/// Accuracy of `argmax Z theta` on the original graph's valid and test
/// splits.
pub fn infer_nc(g: &Graph, model: &SgcModel) -> Result<(f64, f64)> {
    if g.x.cols != model.theta.rows {
        return Err(Error::input("feature dimension mismatch"));
    }
    let z = sgc_embed(g, model.k);
    let acc = |split: Split| {
        let mut hit = 0usize;
        let mut total = 0usize;
        for i in 0..g.n {
            if g.splits[i] == Some(split) {
                if let Some(y) = g.labels[i] {
                    total += 1;
                    if predict(&z, &model.theta, i) == y as usize {
                        hit += 1;
                    }
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    };
    Ok((acc(Split::Valid), acc(Split::Test)))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Area under the ROC curve via the rank statistic, ties counted half.
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    if pos.is_empty() || neg.is_empty() {
        return 0.0;
    }
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() as f64 * neg.len() as f64)
}

/// Remove a seeded random fraction of edges from `g`, returning the reduced
/// graph and the held-out positive pairs.
pub fn split_edges(g: &Graph, frac: f64, seed: u64) -> Result<(Graph, Vec<(u32, u32)>)> {
    let mut edges: Vec<(u32, u32, f64)> = Vec::new();
    for u in 0..g.n as u32 {
        for &(v, w) in &g.adj[u as usize] {
            if u < v {
                edges.push((u, v, w));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holdout = ((edges.len() as f64) * frac).round() as usize;
    // Partial Fisher-Yates: the first `holdout` slots become the held-out set.
    for i in 0..holdout.min(edges.len().saturating_sub(1)) {
        let j = rng.gen_range(i..edges.len());
        edges.swap(i, j);
    }
    let heldout: Vec<(u32, u32)> = edges[..holdout].iter().map(|&(u, v, _)| (u, v)).collect();
    let remaining = &edges[holdout..];
    let g2 = Graph::new(
        g.n,
        remaining,
        g.x.clone(),
        g.labels.clone(),
        g.splits.clone(),
    )?;
    Ok((g2, heldout))
}

fn sample_negatives<F: Fn(u32, u32) -> bool>(
    n: usize,
    count: usize,
    is_edge: F,
    rng: &mut ChaCha8Rng,
) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(count);
    let mut guard = 0usize;
    while out.len() < count && guard < count * 1000 + 1000 {
        guard += 1;
        let a = rng.gen_range(0..n as u32);
        let b = rng.gen_range(0..n as u32);
        if a != b && !is_edge(a.min(b), a.max(b)) {
            out.push((a.min(b), a.max(b)));
        }
    }
    out
}

/// Train the dot-product link scorer on the coarse graph (positives: coarse
/// edges; negatives: seeded uniform non-adjacent pairs, 1:1) and report AUC
/// on the original graph's held-out positives against seeded negatives.
///
/// Held-out positives are split in half into valid and test sets.
pub fn train_eval_lp(
    cg: &CoarseGraph,
    g_original: &Graph,
    heldout_pos: &[(u32, u32)],
    k: usize,
    cfg: &TrainConfig,
) -> Result<(SgcModel, f64, f64)> {
    let mut pos: Vec<(u32, u32)> = Vec::new();
    for u in 0..cg.n_prime as u32 {
        for &(v, _) in &cg.adj[u as usize] {
            if u < v {
                pos.push((u, v));
            }
        }
    }
    if pos.is_empty() {
        return Err(Error::input("no positive coarse edges"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let neg = sample_negatives(
        cg.n_prime,
        pos.len(),
        |a, b| cg.weight_between(a, b) > 0.0,
        &mut rng,
    );

    let z = coarse_sgc_embed(cg, k);
    let d = z.cols;
    let e = cfg.embed_dim;
    let mut theta = Matrix::zeros(d, e);
    for t in theta.data.iter_mut() {
        *t = rng.gen_range(-0.05..0.05);
    }
    let m = (pos.len() + neg.len()) as f64;
    let mut lr = cfg.lr;
    let mut prev_loss = f64::INFINITY;
    for _ in 0..cfg.epochs {
        // E = Z' theta, then gradients flow through pair scores.
        let emb = matmul(&z, &theta);
        let mut grad_emb = Matrix::zeros(cg.n_prime, e);
        let mut loss = 0.0;
        for (pairs, y) in [(&pos, 1.0), (&neg, 0.0)] {
            for &(a, b) in pairs.iter() {
                let (a, b) = (a as usize, b as usize);
                let s = dot(emb.row(a), emb.row(b));
                let p = sigmoid(s);
                loss -= (if y > 0.5 { p } else { 1.0 - p }).max(1e-300).ln() / m;
                let r = (p - y) / m;
                for j in 0..e {
                    grad_emb.row_mut(a)[j] += r * emb.row(b)[j];
                    grad_emb.row_mut(b)[j] += r * emb.row(a)[j];
                }
            }
        }
        let mut grad = matmul_tn(&z, &grad_emb);
        let reg: f64 = theta.data.iter().map(|t| t * t).sum();
        loss += cfg.l2 * reg;
        for (gv, tv) in grad.data.iter_mut().zip(&theta.data) {
            *gv += 2.0 * cfg.l2 * tv;
        }
        if loss > prev_loss + 1e-6 {
            lr *= 0.5;
        }
        prev_loss = loss;
        for (tv, gv) in theta.data.iter_mut().zip(&grad.data) {
            *tv -= lr * gv;
        }
    }
    let model = SgcModel { theta, k };

    // Original-graph evaluation with the shared weights.
    let z_orig = sgc_embed(g_original, k);
    let emb = matmul(&z_orig, &model.theta);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5151_5151);
    let negatives = sample_negatives(
        g_original.n,
        heldout_pos.len(),
        |a, b| g_original.has_edge(a, b),
        &mut eval_rng,
    );
    let score = |pairs: &[(u32, u32)]| -> Vec<f64> {
        pairs
            .iter()
            .map(|&(a, b)| dot(emb.row(a as usize), emb.row(b as usize)))
            .collect()
    };
    let half_p = heldout_pos.len() / 2;
    let half_n = negatives.len() / 2;
    let valid = auc(
        &score(&heldout_pos[..half_p]),
        &score(&negatives[..half_n]),
    );
    let test = auc(&score(&heldout_pos[half_p..]), &score(&negatives[half_n..]));
    Ok((model, valid, test))
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows);
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let ra = a.row(i);
        let ro = out.row_mut(i);
        for (j, &av) in ra.iter().enumerate() {
            if av != 0.0 {
                let rb = b.row(j);
                for (o, &bv) in ro.iter_mut().zip(rb) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

/// `a^T b` for tall-skinny operands.
fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows);
    let mut out = Matrix::zeros(a.cols, b.cols);
    for i in 0..a.rows {
        let ra = a.row(i);
        let rb = b.row(i);
        for (j, &av) in ra.iter().enumerate() {
            if av != 0.0 {
                let ro = out.row_mut(j);
                for (o, &bv) in ro.iter_mut().zip(rb) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_coarse;

    fn labeled_graph() -> Graph {
        // Two isolated nodes, opposite one-hot features and labels.
        Graph::new(
            2,
            &[],
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![Some(0), Some(1)],
            vec![Some(Split::Train), Some(Split::Train)],
        )
        .unwrap()
    }

    #[test]
    fn nc_single_supernode_single_class() {
        let g = Graph::new(
            1,
            &[],
            Matrix::from_rows(&[vec![2.0]]).unwrap(),
            vec![Some(0)],
            vec![Some(Split::Train)],
        )
        .unwrap();
        let p = Partition::identity(1);
        let cg = build_coarse(&g, &p).unwrap();
        let labels = supernode_train_labels(&g, &p);
        let model = train_sgc_nc(&cg, &labels, 2, 1, &TrainConfig::default()).unwrap();
        let z = coarse_sgc_embed(&cg, 2);
        assert_eq!(predict(&z, &model.theta, 0), 0);
    }

    #[test]
    fn nc_separable_two_nodes_perfect() {
        let g = labeled_graph();
        let p = Partition::identity(2);
        let cg = build_coarse(&g, &p).unwrap();
        let labels = supernode_train_labels(&g, &p);
        let model = train_sgc_nc(&cg, &labels, 2, 2, &TrainConfig::default()).unwrap();
        // Identical copy with test splits.
        let test_g = Graph::new(
            2,
            &[],
            g.x.clone(),
            g.labels.clone(),
            vec![Some(Split::Test), Some(Split::Test)],
        )
        .unwrap();
        let (_, test_acc) = infer_nc(&test_g, &model).unwrap();
        assert_eq!(test_acc, 1.0);
    }

    #[test]
    fn nc_errors_without_train_labels() {
        let g = labeled_graph();
        let p = Partition::identity(2);
        let cg = build_coarse(&g, &p).unwrap();
        assert!(train_sgc_nc(&cg, &[None, None], 2, 2, &TrainConfig::default()).is_err());
    }

    #[test]
    fn nc_permutation_invariant_accuracy() {
        let g = Graph::new(
            3,
            &[(0, 1, 1.0)],
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]]).unwrap(),
            vec![Some(0), Some(0), Some(1)],
            vec![
                Some(Split::Train),
                Some(Split::Test),
                Some(Split::Train),
            ],
        )
        .unwrap();
        let p = Partition::identity(3);
        let cg = build_coarse(&g, &p).unwrap();
        let labels = supernode_train_labels(&g, &p);
        let model = train_sgc_nc(&cg, &labels, 2, 2, &TrainConfig::default()).unwrap();
        let (_, acc) = infer_nc(&g, &model).unwrap();

        // Permute node ids 0 -> 2, 1 -> 0, 2 -> 1.
        let perm = [2u32, 0, 1];
        let g2 = Graph::new(
            3,
            &[(perm[0], perm[1], 1.0)],
            Matrix::from_rows(&[vec![0.9, 0.1], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            vec![Some(0), Some(1), Some(0)],
            vec![Some(Split::Test), Some(Split::Train), Some(Split::Train)],
        )
        .unwrap();
        let (_, acc2) = infer_nc(&g2, &model).unwrap();
        assert_eq!(acc, acc2);
    }

    #[test]
    fn lp_two_cliques_auc_high() {
        // Two 4-cliques with clique-indicator features.
        let mut edges = Vec::new();
        for base in [0u32, 4] {
            for i in 0..4 {
                for j in i + 1..4 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| if i < 4 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let g = Graph::new(8, &edges, Matrix::from_rows(&rows).unwrap(), vec![], vec![]).unwrap();
        let (train_g, heldout) = split_edges(&g, 0.2, 3).unwrap();
        let cg = build_coarse(&train_g, &Partition::identity(8)).unwrap();
        let cfg = TrainConfig {
            lr: 0.5,
            epochs: 300,
            l2: 0.0,
            seed: 3,
            embed_dim: 4,
        };
        let (_, valid, test) = train_eval_lp(&cg, &g, &heldout, 2, &cfg).unwrap();
        // Tiny sets; both halves should separate perfectly.
        assert!(valid >= 0.99, "valid auc {valid}");
        assert!(test >= 0.99, "test auc {test}");
    }

    #[test]
    fn lp_errors_without_positives() {
        let g = Graph::new(2, &[], Matrix::zeros(2, 1), vec![], vec![]).unwrap();
        let cg = build_coarse(&g, &Partition::identity(2)).unwrap();
        assert!(train_eval_lp(&cg, &g, &[], 2, &TrainConfig::default()).is_err());
    }

    #[test]
    fn auc_basics() {
        assert_eq!(auc(&[2.0, 3.0], &[0.0, 1.0]), 1.0);
        assert_eq!(auc(&[1.0], &[1.0]), 0.5);
        assert_eq!(auc(&[0.0], &[1.0]), 0.0);
    }
}

//! Batched non-overlapping merges with incremental state and cache updates,
//! local cost refresh, and the multi-level driver.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rayon::prelude::*;

use crate::candidates::{candidate_pairs, pca_reduce, CandidateConfig, MergeGraph};
use crate::cost::{approx_cost, exact_cost, merged_node, neighbor_union, ConvCache, CoarseView};
use crate::error::{Error, Result};
use crate::graph::{build_coarse, coarse_sgc_embed, CoarseGraph, Graph, Partition};
use crate::matrix::{axpy, l1_diff, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostMode {
    Exact,
    Approx,
}

#[derive(Clone, Debug)]
pub struct CoarsenConfig {
    /// Target supernode ratio `n' / n` in `(0, 1]`.
    pub ratio: f64,
    /// Non-overlapping merges applied per level.
    pub batch: usize,
    pub candidates: CandidateConfig,
    pub cost_mode: CostMode,
    /// Cross-check incremental state against a from-scratch rebuild after
    /// every level. Slow; test and debugging use only.
    pub debug_verify: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub n_prime: usize,
    pub total_weight: f64,
    pub merges: usize,
    pub wall_s: f64,
}

/// Ordered partition snapshots, one per coarsening level. Level 0 is the
/// identity partition.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub levels: Vec<Partition>,
    pub stats: Vec<LevelStats>,
    /// Wall time of candidate-pair generation (shared by both cost modes).
    pub candidate_wall_s: f64,
    /// Wall time of the initial cost pass over all candidate pairs.
    pub initial_cost_wall_s: f64,
    /// Candidate pairs ran out before the target ratio was reached.
    pub exhausted: bool,
}

impl Hierarchy {
    /// Summarization time: cost evaluation plus the merge loop, excluding
    /// candidate generation.
    pub fn summarize_wall_s(&self) -> f64 {
        self.initial_cost_wall_s + self.stats.iter().map(|s| s.wall_s).sum::<f64>()
    }
}

impl Hierarchy {
    pub fn final_partition(&self) -> &Partition {
        self.levels.last().expect("level 0 always present")
    }
}

#[derive(Clone, Copy, Debug)]
struct CostRecord {
    cost: f64,
    ver_a: u64,
    ver_b: u64,
}

/// Mutable coarsening state: growing per-supernode arrays addressed by id,
/// the convolution cache, the merge-graph with lazily invalidated costs,
/// and the accumulated original-node assignment.
pub struct CoarseState {
    feat_dim: usize,

    adj: Vec<Vec<(u32, f64)>>,
    size: Vec<u64>,
    degree: Vec<f64>,
    x: Vec<Vec<f64>>,
    live: Vec<bool>,
    version: Vec<u64>,
    members: Vec<Vec<u32>>,
    assign: Vec<u32>,
    pub cache: ConvCache,
    merge_adj: Vec<BTreeSet<u32>>,
    costs: HashMap<(u32, u32), CostRecord>,
    n_live: usize,
}

impl CoarseView for CoarseState {
    fn feat_dim(&self) -> usize {
        self.feat_dim
    }
    fn size(&self, u: u32) -> f64 {
        self.size[u as usize] as f64
    }
    fn degree(&self, u: u32) -> f64 {
        self.degree[u as usize]
    }
    fn features(&self, u: u32) -> &[f64] {
        &self.x[u as usize]
    }
    fn neighbors(&self, u: u32) -> &[(u32, f64)] {
        &self.adj[u as usize]
    }
}

impl CoarseState {
    pub fn new(g: &Graph, mg: &MergeGraph) -> Self {
        let n = g.n;
        let mut state = CoarseState {
            feat_dim: g.x.cols,

            adj: g.adj.clone(),
            size: vec![1; n],
            degree: g.degrees.clone(),
            x: (0..n).map(|i| g.x.row(i).to_vec()).collect(),
            live: vec![true; n],
            version: vec![0; n],
            members: (0..n as u32).map(|i| vec![i]).collect(),
            assign: (0..n as u32).collect(),
            cache: ConvCache {
                h: Vec::new(),
                s: Vec::new(),
                infl: Vec::new(),
            },
            merge_adj: vec![BTreeSet::new(); n],
            costs: HashMap::new(),
            n_live: n,
        };
        let cache = ConvCache::init(&state, n);
        state.cache = cache;
        for &(u, v) in &mg.pairs {
            state.merge_adj[u as usize].insert(v);
            state.merge_adj[v as usize].insert(u);
        }
        state
    }

    pub fn n_live(&self) -> usize {
        self.n_live
    }

    pub fn is_live(&self, u: u32) -> bool {
        self.live[u as usize]
    }

    pub fn live_ids(&self) -> Vec<u32> {
        (0..self.live.len() as u32)
            .filter(|&i| self.live[i as usize])
            .collect()
    }

    /// All current merge-graph pairs, `u < v`, sorted.
    pub fn merge_pairs_list(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (u, nbrs) in self.merge_adj.iter().enumerate() {
            for &v in nbrs.range(u as u32 + 1..) {
                out.push((u as u32, v));
            }
        }
        out
    }

    fn record_key(u: u32, v: u32) -> (u32, u32) {
        if u < v {
            (u, v)
        } else {
            (v, u)
        }
    }

    fn record_valid(&self, key: (u32, u32), rec: &CostRecord) -> bool {
        self.live[key.0 as usize]
            && self.live[key.1 as usize]
            && rec.ver_a == self.version[key.0 as usize]
            && rec.ver_b == self.version[key.1 as usize]
    }

    pub fn pair_cost(&self, u: u32, v: u32) -> Option<f64> {
        let key = Self::record_key(u, v);
        self.costs
            .get(&key)
            .filter(|rec| self.record_valid(key, rec))
            .map(|rec| rec.cost)
    }

    fn eval_cost(&self, mode: CostMode, u: u32, v: u32) -> Result<f64> {
        match mode {
            CostMode::Exact => exact_cost(&self.cache, self, u, v),
            CostMode::Approx => approx_cost(&self.cache, self, u, v),
        }
    }

    /// Compute and store costs for the given pairs at current versions.
    pub fn compute_costs(&mut self, mode: CostMode, pairs: &[(u32, u32)]) -> Result<()> {
        let computed: Vec<((u32, u32), f64)> = pairs
            .par_iter()
            .map(|&(u, v)| self.eval_cost(mode, u, v).map(|c| ((u, v), c)))
            .collect::<Result<_>>()?;
        for ((u, v), cost) in computed {
            let key = Self::record_key(u, v);
            self.costs.insert(
                key,
                CostRecord {
                    cost,
                    ver_a: self.version[key.0 as usize],
                    ver_b: self.version[key.1 as usize],
                },
            );
        }
        Ok(())
    }

    pub fn compute_all_costs(&mut self, mode: CostMode) -> Result<()> {
        let pairs = self.merge_pairs_list();
        self.compute_costs(mode, &pairs)
    }

    /// Greedy scan of version-current pairs in ascending cost order,
    /// accepting a pair iff neither endpoint was already accepted. Ties
    /// break lexicographically.
    pub fn top_k_non_overlap(&self, k: usize) -> Vec<(u32, u32)> {
        let mut valid: Vec<(f64, u32, u32)> = self
            .costs
            .iter()
            .filter(|(key, rec)| self.record_valid(**key, rec))
            .map(|(&(u, v), rec)| (rec.cost, u, v))
            .collect();
        valid.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut used: BTreeSet<u32> = BTreeSet::new();
        let mut out = Vec::with_capacity(k);
        for (_, u, v) in valid {
            if out.len() == k {
                break;
            }
            if !used.contains(&u) && !used.contains(&v) {
                used.insert(u);
                used.insert(v);
                out.push((u, v));
            }
        }
        out
    }

    /// Apply a batch of non-overlapping merges sequentially, maintaining
    /// the coarse structure, the convolution cache, the merge-graph, and
    /// version stamps. Returns the new supernode ids.
    pub fn merge_pairs(&mut self, pairs: &[(u32, u32)]) -> Result<Vec<u32>> {
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        for &(u, v) in pairs {
            if u == v || !seen.insert(u) || !seen.insert(v) {
                return Err(Error::input("overlapping merge batch"));
            }
            if !self.live[u as usize] || !self.live[v as usize] {
                return Err(Error::input("merge endpoint is not live"));
            }
        }
        let mut new_ids = Vec::with_capacity(pairs.len());
        for &(u, v) in pairs {
            new_ids.push(self.merge_one(u, v));
        }
        Ok(new_ids)
    }

    fn merge_one(&mut self, u: u32, v: u32) -> u32 {
        let m = merged_node(&self.cache, self, u, v);
        let s = self.adj.len() as u32;
        let (nu, nv) = (self.normalizer(u), self.normalizer(v));
        let nm = m.normalizer;

        // Neighbor rows: retarget edges to s, patch the summation and
        // influence caches with the closed-form deltas, refresh h rows.
        let union = neighbor_union(&self.adj[u as usize], &self.adj[v as usize], u, v);
        let mut s_row: Vec<(u32, f64)> = Vec::with_capacity(union.len() + 1);
        for &(i, a_ui, a_vi) in &union {
            let iu = i as usize;
            let a_si = a_ui + a_vi;
            s_row.push((i, a_si));

            let srow = &mut self.cache.s[iu];
            axpy(-a_ui / nu.sqrt(), &self.x[u as usize], srow);
            axpy(-a_vi / nv.sqrt(), &self.x[v as usize], srow);
            axpy(a_si / nm.sqrt(), &m.x, srow);
            self.cache.infl[iu] +=
                -a_ui / nu.sqrt() - a_vi / nv.sqrt() + a_si / nm.sqrt();

            let ni = self.normalizer(i);
            let self_coef = self.size[iu] as f64 / ni;
            let s_coef = 1.0 / ni.sqrt();
            for k in 0..self.feat_dim {
                self.cache.h[iu][k] = self_coef * self.x[iu][k] + s_coef * self.cache.s[iu][k];
            }

            // Drop u and v from i's adjacency, append s (largest id so far,
            // keeps the row sorted).
            self.adj[iu].retain(|&(j, _)| j != u && j != v);
            self.adj[iu].push((s, a_si));
            self.version[iu] += 1;
        }
        let a_mm =
            self.weight_between(u, u) + self.weight_between(v, v) + 2.0 * m.weight_uv;
        if a_mm > 0.0 {
            s_row.push((s, a_mm));
        }

        // Influence of the merged node from the cached endpoint influences.
        let infl_m = (self.cache.infl[u as usize] - m.weight_uv / nv.sqrt())
            + (self.cache.infl[v as usize] - m.weight_uv / nu.sqrt());

        self.adj.push(s_row);
        self.adj[u as usize] = Vec::new();
        self.adj[v as usize] = Vec::new();
        self.size.push(m.size as u64);
        self.degree.push(m.degree);
        self.x.push(m.x);
        self.live.push(true);
        self.live[u as usize] = false;
        self.live[v as usize] = false;
        self.version.push(0);
        self.cache.h.push(m.h);
        self.cache.s.push(m.s);
        self.cache.infl.push(infl_m);
        self.n_live -= 1;

        let mut members = std::mem::take(&mut self.members[u as usize]);
        members.append(&mut self.members[v as usize]);
        for &orig in &members {
            self.assign[orig as usize] = s;
        }
        self.members.push(members);

        // Merge-graph contraction: retarget pairs incident to u or v, drop
        // the (u, v) pair itself, collapse duplicates via the set insert.
        self.costs.remove(&Self::record_key(u, v));
        let mut mg_nbrs = std::mem::take(&mut self.merge_adj[u as usize]);
        mg_nbrs.extend(std::mem::take(&mut self.merge_adj[v as usize]));
        let mut s_mg = BTreeSet::new();
        for w in mg_nbrs {
            if w == u || w == v {
                continue;
            }
            self.costs.remove(&Self::record_key(u, w));
            self.costs.remove(&Self::record_key(v, w));
            self.merge_adj[w as usize].remove(&u);
            self.merge_adj[w as usize].remove(&v);
            self.merge_adj[w as usize].insert(s);
            s_mg.insert(w);
        }
        self.merge_adj.push(s_mg);
        s
    }

    /// Refresh the cost of every merge-graph pair with at least one
    /// endpoint in `S ∪ N_coarse(S)` where `S` is the given supernode set.
    pub fn recompute_local_costs(&mut self, mode: CostMode, new_supernodes: &[u32]) -> Result<()> {
        let mut region: BTreeSet<u32> = BTreeSet::new();
        for &s in new_supernodes {
            region.insert(s);
            for &(i, _) in self.neighbors(s) {
                if i != s && self.live[i as usize] {
                    region.insert(i);
                }
            }
        }
        let mut pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
        for &r in &region {
            for &w in &self.merge_adj[r as usize] {
                pairs.insert(Self::record_key(r, w));
            }
        }
        let pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
        self.compute_costs(mode, &pairs)
    }

    /// Partition of the original nodes onto dense coarse ids, ordered by
    /// live supernode id.
    pub fn partition_snapshot(&self) -> Partition {
        let live = self.live_ids();
        let mut rank = vec![u32::MAX; self.adj.len()];
        for (r, &id) in live.iter().enumerate() {
            rank[id as usize] = r as u32;
        }
        let assign = self
            .assign
            .iter()
            .map(|&id| rank[id as usize])
            .collect::<Vec<_>>();
        Partition::new(assign, live.len()).expect("state assignment is dense")
    }

    /// Dense immutable snapshot of the current coarse graph.
    pub fn snapshot_coarse(&self) -> CoarseGraph {
        let live = self.live_ids();
        let mut rank = vec![u32::MAX; self.adj.len()];
        for (r, &id) in live.iter().enumerate() {
            rank[id as usize] = r as u32;
        }
        let mut adj = Vec::with_capacity(live.len());
        let mut x = Matrix::zeros(live.len(), self.feat_dim);
        for (r, &id) in live.iter().enumerate() {
            adj.push(
                self.adj[id as usize]
                    .iter()
                    .map(|&(j, w)| (rank[j as usize], w))
                    .collect::<Vec<_>>(),
            );
            x.row_mut(r).copy_from_slice(&self.x[id as usize]);
        }
        let degrees = live.iter().map(|&id| self.degree[id as usize]).collect();
        let sizes = live.iter().map(|&id| self.size[id as usize]).collect();
        CoarseGraph {
            n_prime: live.len(),
            adj,
            sizes,
            x,
            degrees,
            labels: vec![None; live.len()],
        }
    }

    /// Maximum deviation between the incremental state (adjacency, sizes,
    /// features, h, s, infl) and a from-scratch rebuild from the
    /// accumulated partition. Testing and debug-verify hook.
    pub fn verify_against(&self, g: &Graph) -> Result<f64> {
        let p = self.partition_snapshot();
        let rebuilt = build_coarse(g, &p)?;
        let snap = self.snapshot_coarse();
        let mut worst: f64 = 0.0;
        if rebuilt.n_prime != snap.n_prime {
            return Err(Error::input("supernode count mismatch"));
        }
        for i in 0..snap.n_prime {
            if rebuilt.sizes[i] != snap.sizes[i] {
                return Err(Error::input(format!("size mismatch at supernode {i}")));
            }
            worst = worst.max((rebuilt.degrees[i] - snap.degrees[i]).abs());
            worst = worst.max(l1_diff(rebuilt.x.row(i), snap.x.row(i)));
            let mut a = rebuilt.adj[i].clone();
            let b = &snap.adj[i];
            a.retain(|&(_, w)| w != 0.0);
            if a.len() != b.len() {
                return Err(Error::input(format!("adjacency mismatch at {i}")));
            }
            for (&(ja, wa), &(jb, wb)) in a.iter().zip(b) {
                if ja != jb {
                    return Err(Error::input(format!("neighbor mismatch at {i}")));
                }
                worst = worst.max((wa - wb).abs());
            }
        }
        let fresh = ConvCache::init(&rebuilt, rebuilt.n_prime);
        let live = self.live_ids();
        for (r, &id) in live.iter().enumerate() {
            worst = worst.max(l1_diff(&fresh.h[r], &self.cache.h[id as usize]));
            worst = worst.max(l1_diff(&fresh.s[r], &self.cache.s[id as usize]));
            worst = worst.max((fresh.infl[r] - self.cache.infl[id as usize]).abs());
        }
        Ok(worst)
    }

    /// Inject fresh candidate pairs (live-id space); pairs already present
    /// are ignored. Returns the pairs that still need costs.
    fn add_candidate_pairs(&mut self, pairs: &[(u32, u32)]) -> Vec<(u32, u32)> {
        let mut fresh = Vec::new();
        for &(u, v) in pairs {
            let key = Self::record_key(u, v);
            if self.merge_adj[key.0 as usize].insert(key.1) {
                self.merge_adj[key.1 as usize].insert(key.0);
                fresh.push(key);
            } else if self.pair_cost(key.0, key.1).is_none() {
                fresh.push(key);
            }
        }
        fresh
    }
}

/// Run the full multi-level coarsening loop down to `ratio * n` supernodes.
///
/// On candidate exhaustion the merge-graph is regenerated once from the
/// current coarse graph's SGC embedding; a second exhaustion returns the
/// hierarchy reached so far with `exhausted = true`.
pub fn coarsen(g: &Graph, config: &CoarsenConfig) -> Result<Hierarchy> {
    if !(config.ratio > 0.0 && config.ratio <= 1.0) {
        return Err(Error::input("ratio must be in (0, 1]"));
    }
    if config.batch < 1 {
        return Err(Error::input("batch size must be >= 1"));
    }
    let mut hierarchy = Hierarchy {
        levels: vec![Partition::identity(g.n)],
        stats: vec![LevelStats {
            level: 0,
            n_prime: g.n,
            total_weight: g.total_weight(),
            merges: 0,
            wall_s: 0.0,
        }],
        candidate_wall_s: 0.0,
        initial_cost_wall_s: 0.0,
        exhausted: false,
    };
    let target = config.ratio * g.n as f64;
    if g.n as f64 <= target {
        return Ok(hierarchy);
    }

    let t0 = Instant::now();
    let mg = crate::candidates::build_merge_graph(g, &config.candidates)?;
    let mut state = CoarseState::new(g, &mg);
    hierarchy.candidate_wall_s = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    state.compute_all_costs(config.cost_mode)?;
    hierarchy.initial_cost_wall_s = t0.elapsed().as_secs_f64();

    let mut regenerated = false;
    while state.n_live() as f64 > target && state.n_live() > 1 {
        let start = Instant::now();
        let budget = config.batch.min(state.n_live() - 1);
        let batch = state.top_k_non_overlap(budget);
        if batch.is_empty() {
            if regenerated {
                hierarchy.exhausted = true;
                break;
            }
            regenerated = true;
            regenerate_candidates(&mut state, config)?;
            continue;
        }
        let new_ids = state.merge_pairs(&batch)?;
        state.recompute_local_costs(config.cost_mode, &new_ids)?;

        let level = hierarchy.levels.len();
        let snapshot = state.partition_snapshot();
        if config.debug_verify {
            let dev = state.verify_against(g)?;
            if dev > 1e-9 {
                return Err(Error::input(format!(
                    "debug-verify: incremental state deviates by {dev:e} at level {level}"
                )));
            }
        }
        hierarchy.stats.push(LevelStats {
            level,
            n_prime: state.n_live(),
            total_weight: state.snapshot_total_weight(),
            merges: batch.len(),
            wall_s: start.elapsed().as_secs_f64(),
        });
        hierarchy.levels.push(snapshot);
    }
    Ok(hierarchy)
}

impl CoarseState {
    fn snapshot_total_weight(&self) -> f64 {
        self.live_ids()
            .iter()
            .flat_map(|&i| self.adj[i as usize].iter().map(|&(_, w)| w))
            .sum()
    }
}

/// Rebuild the merge-graph from the current coarse graph's embedding and
/// cost the fresh pairs. Used once when candidates run out early.
fn regenerate_candidates(state: &mut CoarseState, config: &CoarsenConfig) -> Result<()> {
    let cg = state.snapshot_coarse();
    let live = state.live_ids();
    let h_full = coarse_sgc_embed(&cg, config.candidates.sgc_k);
    let h_search = pca_reduce(
        &h_full,
        config.candidates.pca_dim.min(h_full.cols.max(1)),
        config.candidates.seed,
    )?;
    let dense_pairs = candidate_pairs(
        &h_full,
        &h_search,
        config.candidates.k1,
        config.candidates.d_nn,
        config.candidates.seed,
    )?;
    let pairs: Vec<(u32, u32)> = dense_pairs
        .into_iter()
        .map(|(a, b)| (live[a as usize], live[b as usize]))
        .collect();
    let fresh = state.add_candidate_pairs(&pairs);
    state.compute_costs(config.cost_mode, &fresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::CandidateConfig;
    use crate::matrix::Matrix;

    fn graph(n: usize, edges: &[(u32, u32, f64)], x: &[Vec<f64>]) -> Graph {
        Graph::new(n, edges, Matrix::from_rows(x).unwrap(), vec![], vec![]).unwrap()
    }

    fn state_with_pairs(g: &Graph, pairs: &[(u32, u32)]) -> CoarseState {
        let mg = MergeGraph {
            pairs: pairs.to_vec(),
        };
        CoarseState::new(g, &mg)
    }

    fn cand_cfg() -> CandidateConfig {
        CandidateConfig {
            sgc_k: 2,
            pca_dim: 4,
            k1: 1,
            d_nn: 0.0,
            seed: 7,
        }
    }

    #[test]
    fn top_k_blocks_overlapping_pairs() {
        // Chain a-b-c-d with costs 0.1, 0.2, 0.3: (b,c) is blocked.
        let g = graph(
            4,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
            &[vec![0.0], vec![0.0], vec![0.0], vec![0.0]],
        );
        let mut st = state_with_pairs(&g, &[(0, 1), (1, 2), (2, 3)]);
        for (pair, cost) in [((0, 1), 0.1), ((1, 2), 0.2), ((2, 3), 0.3)] {
            st.costs.insert(
                pair,
                CostRecord {
                    cost,
                    ver_a: 0,
                    ver_b: 0,
                },
            );
        }
        assert_eq!(st.top_k_non_overlap(2), vec![(0, 1), (2, 3)]);
        assert_eq!(st.top_k_non_overlap(1), vec![(0, 1)]);
    }

    #[test]
    fn merge_identical_isolated_nodes() {
        let g = graph(2, &[], &[vec![4.0], vec![4.0]]);
        let mut st = state_with_pairs(&g, &[(0, 1)]);
        st.compute_all_costs(CostMode::Exact).unwrap();
        let ids = st.merge_pairs(&[(0, 1)]).unwrap();
        let s = ids[0];
        assert_eq!(st.size[s as usize], 2);
        assert!(st.adj[s as usize].is_empty());
        assert_eq!(st.x[s as usize], vec![4.0]);
        assert_eq!(st.cache.h[s as usize], vec![4.0]);
        assert!(st.verify_against(&g).unwrap() < 1e-12);
    }

    #[test]
    fn merge_two_node_edge() {
        let g = graph(2, &[(0, 1, 1.0)], &[vec![1.0], vec![0.0]]);
        let mut st = state_with_pairs(&g, &[(0, 1)]);
        let ids = st.merge_pairs(&[(0, 1)]).unwrap();
        let s = ids[0] as usize;
        assert_eq!(st.n_live(), 1);
        assert_eq!(st.adj[s], vec![(ids[0], 2.0)]);
        assert_eq!(st.degree[s], 2.0);
        assert_eq!(st.x[s], vec![0.5]);
        assert!(l1_diff(&st.cache.h[s], &[0.5]) < 1e-12);
        assert!(st.verify_against(&g).unwrap() < 1e-12);
    }

    #[test]
    fn merge_rejects_overlap_and_dead() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)], &[vec![0.0], vec![0.0], vec![0.0]]);
        let mut st = state_with_pairs(&g, &[(0, 1), (1, 2)]);
        assert!(st.merge_pairs(&[(0, 1), (1, 2)]).is_err());
        st.merge_pairs(&[(0, 1)]).unwrap();
        assert!(st.merge_pairs(&[(1, 2)]).is_err());
    }

    #[test]
    fn local_recompute_leaves_other_component_untouched() {
        // Two disjoint paths; merging in one leaves the other's costs
        // bit-identical.
        let g = graph(
            6,
            &[(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 2.0)],
            &[vec![1.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0], vec![6.0]],
        );
        let mut st = state_with_pairs(&g, &[(0, 1), (3, 4), (4, 5)]);
        st.compute_all_costs(CostMode::Exact).unwrap();
        let before_34 = st.pair_cost(3, 4).unwrap();
        let before_45 = st.pair_cost(4, 5).unwrap();
        let ids = st.merge_pairs(&[(0, 1)]).unwrap();
        st.recompute_local_costs(CostMode::Exact, &ids).unwrap();
        assert_eq!(st.pair_cost(3, 4).unwrap().to_bits(), before_34.to_bits());
        assert_eq!(st.pair_cost(4, 5).unwrap().to_bits(), before_45.to_bits());
    }

    #[test]
    fn refreshed_cost_equals_cold_recompute() {
        let g = graph(
            5,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)],
            &[vec![1.0], vec![0.5], vec![0.25], vec![0.1], vec![0.0]],
        );
        let mut st = state_with_pairs(&g, &[(0, 1), (2, 3), (3, 4)]);
        st.compute_all_costs(CostMode::Exact).unwrap();
        let ids = st.merge_pairs(&[(0, 1)]).unwrap();
        st.recompute_local_costs(CostMode::Exact, &ids).unwrap();
        for (u, v) in st.merge_pairs_list() {
            let cold = exact_cost(&st.cache, &st, u, v).unwrap();
            assert!((st.pair_cost(u, v).unwrap() - cold).abs() < 1e-15);
        }
    }

    #[test]
    fn dead_pairs_never_selected() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)], &[vec![0.0], vec![0.0], vec![0.0]]);
        let mut st = state_with_pairs(&g, &[(0, 1), (1, 2)]);
        st.compute_all_costs(CostMode::Exact).unwrap();
        let ids = st.merge_pairs(&[(0, 1)]).unwrap();
        st.recompute_local_costs(CostMode::Exact, &ids).unwrap();
        for (u, v) in st.top_k_non_overlap(10) {
            assert!(st.is_live(u) && st.is_live(v));
        }
    }

    #[test]
    fn coarsen_ratio_one_identity_only() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)], &[vec![0.0], vec![0.0], vec![0.0]]);
        let cfg = CoarsenConfig {
            ratio: 1.0,
            batch: 1,
            candidates: cand_cfg(),
            cost_mode: CostMode::Exact,
            debug_verify: true,
        };
        let h = coarsen(&g, &cfg).unwrap();
        assert_eq!(h.levels.len(), 1);
        assert_eq!(h.levels[0], Partition::identity(3));
    }

    #[test]
    fn coarsen_merges_zero_cost_twins_first() {
        // Two identical isolated nodes plus one distinct node.
        let g = graph(3, &[], &[vec![1.0], vec![1.0], vec![9.0]]);
        let cfg = CoarsenConfig {
            ratio: 0.67,
            batch: 1,
            candidates: cand_cfg(),
            cost_mode: CostMode::Exact,
            debug_verify: true,
        };
        let h = coarsen(&g, &cfg).unwrap();
        let p = h.final_partition();
        assert_eq!(p.n_prime, 2);
        assert_eq!(p.assign[0], p.assign[1]);
        assert_ne!(p.assign[0], p.assign[2]);
    }
}

//! Semantic stream: spatially contiguous clustering, CLS-attention cluster
//! scoring, and size-aware cluster representation.
//!
//! Clustering is a single raster-order pass: each cell may adopt as parent the
//! most cosine-similar of its already-visited 8-neighbors, provided that
//! similarity clears a λ-controlled threshold. Parents always point to earlier
//! cells, so the link structure is a forest and every cluster is 8-connected
//! by construction.

use crate::error::{Error, Result};
use crate::grid::{Coord, FeatureGrid, TokenSource};

/// Threshold endpoints for the λ-controlled maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScsaConfig {
    /// Similarity threshold τ(λ) endpoints, τ(0) = `tau_min`, τ(1) = `tau_max`.
    pub tau_min: f64,
    pub tau_max: f64,
    /// Size threshold θ(λ) endpoints for summary-vs-original representation.
    pub theta_min: usize,
    pub theta_max: usize,
}

impl Default for ScsaConfig {
    fn default() -> Self {
        Self {
            tau_min: 0.65,
            tau_max: 0.95,
            theta_min: 2,
            theta_max: 8,
        }
    }
}

impl ScsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0 && self.tau_min < self.tau_max && self.tau_max <= 1.0) {
            return Err(Error::Config(format!(
                "scsa thresholds need 0 < tau_min < tau_max <= 1, got ({}, {})",
                self.tau_min, self.tau_max
            )));
        }
        if self.theta_min > self.theta_max {
            return Err(Error::Config(format!(
                "scsa size thresholds need theta_min <= theta_max, got ({}, {})",
                self.theta_min, self.theta_max
            )));
        }
        Ok(())
    }
}

/// Affine similarity threshold, strictly increasing in λ.
pub fn tau_of_lambda(lambda: f64, cfg: &ScsaConfig) -> f64 {
    cfg.tau_min + (cfg.tau_max - cfg.tau_min) * lambda
}

/// Affine size threshold, rounded, monotone nondecreasing in λ.
pub fn theta_of_lambda(lambda: f64, cfg: &ScsaConfig) -> usize {
    (cfg.theta_min as f64 + (cfg.theta_max - cfg.theta_min) as f64 * lambda).round() as usize
}

/// One spatially contiguous cluster: raster-ordered member cells and the
/// cumulative CLS attention filled in by [`score_clusters`].
#[derive(Clone, Debug)]
pub struct Cluster {
    /// Raster index of the forest root.
    pub root: usize,
    /// Member cell raster indices, ascending.
    pub members: Vec<usize>,
    /// Cumulative CLS attention; 0 until scored.
    pub importance: f64,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Forest of parent links plus the derived clusters, ids in raster order of
/// their roots.
#[derive(Clone, Debug)]
pub struct ClusterSet {
    /// Raw parent links: `parent[i] == i` iff `i` is a root, otherwise
    /// `parent[i] < i` and the two cells are 8-adjacent.
    pub parent: Vec<u32>,
    pub clusters: Vec<Cluster>,
    /// Cell raster index → cluster id.
    pub cell_cluster: Vec<u32>,
    pub tau_used: f64,
}

impl ClusterSet {
    pub fn cluster_of(&self, cell: usize) -> usize {
        self.cell_cluster[cell] as usize
    }
}

/// Cosine similarity with 64-bit accumulation; zero vectors compare as 0 so
/// degenerate features never merge.
fn cosine(a: &[f32], b: &[f32], norm_a: f64, norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        dot += *x as f64 * *y as f64;
    }
    dot / (norm_a * norm_b)
}

fn cell_norms(grid: &FeatureGrid) -> Vec<f64> {
    (0..grid.cells())
        .map(|i| {
            grid.feature(i)
                .iter()
                .map(|&v| v as f64 * v as f64)
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Single raster-order clustering pass at threshold `tau`.
///
/// For each cell the already-visited 8-neighbors are scanned in raster order;
/// the argmax-cosine neighbor becomes the parent when the maximum strictly
/// exceeds `tau` (ties keep the earliest neighbor).
pub fn cluster_grid(grid: &FeatureGrid, tau: f64) -> Result<ClusterSet> {
    if grid.cells() == 0 || grid.dim() == 0 {
        return Err(Error::invalid("cluster input", "empty grid"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("tau", format!("{tau} outside (0,1]")));
    }
    let (h, w) = (grid.height(), grid.width());
    let norms = cell_norms(grid);
    let mut parent: Vec<u32> = (0..grid.cells() as u32).collect();

    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let mut best: Option<(usize, f64)> = None;
            // Visited 8-neighbors in raster order: NW, N, NE, W.
            let mut consider = |r: usize, c: usize| {
                let j = r * w + c;
                let sim = cosine(grid.feature(i), grid.feature(j), norms[i], norms[j]);
                if best.map_or(true, |(_, s)| sim > s) {
                    best = Some((j, sim));
                }
            };
            if row > 0 {
                if col > 0 {
                    consider(row - 1, col - 1);
                }
                consider(row - 1, col);
                if col + 1 < w {
                    consider(row - 1, col + 1);
                }
            }
            if col > 0 {
                consider(row, col - 1);
            }
            if let Some((j, sim)) = best {
                if sim > tau {
                    parent[i] = j as u32;
                }
            }
        }
    }

    Ok(build_cluster_set(parent, tau))
}

/// Resolve roots (single pass: parents always point backwards) and group
/// cells into clusters ordered by root raster index.
fn build_cluster_set(parent: Vec<u32>, tau_used: f64) -> ClusterSet {
    let n = parent.len();
    let mut root = vec![0u32; n];
    let mut cluster_id = vec![u32::MAX; n];
    let mut clusters: Vec<Cluster> = Vec::new();
    for i in 0..n {
        let p = parent[i] as usize;
        root[i] = if p == i { i as u32 } else { root[p] };
        let r = root[i] as usize;
        if cluster_id[r] == u32::MAX {
            cluster_id[r] = clusters.len() as u32;
            clusters.push(Cluster {
                root: r,
                members: Vec::new(),
                importance: 0.0,
            });
        }
        clusters[cluster_id[r] as usize].members.push(i);
    }
    let cell_cluster = (0..n).map(|i| cluster_id[root[i] as usize]).collect();
    ClusterSet {
        parent,
        clusters,
        cell_cluster,
        tau_used,
    }
}

/// Eq-style scaled dot-product CLS attention over all cells: softmax of
/// `(q·kᵀ)/√d`, max-subtracted, accumulated in f64.
pub fn cls_attention(q_cls: &[f32], keys: &[f32], scale_dim: usize) -> Result<Vec<f32>> {
    let d = q_cls.len();
    if d == 0 || scale_dim == 0 {
        return Err(Error::invalid("cls_attention", "zero dimension"));
    }
    if keys.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            what: "keys",
            expected: d,
            got: keys.len(),
        });
    }
    if let Some(index) = q_cls.iter().chain(keys).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "cls_attention input",
            index,
        });
    }
    let cells = keys.len() / d;
    let scale = 1.0 / (scale_dim as f64).sqrt();
    let mut logits = vec![0.0f64; cells];
    for (i, logit) in logits.iter_mut().enumerate() {
        let key = &keys[i * d..(i + 1) * d];
        let mut dot = 0.0f64;
        for (q, k) in q_cls.iter().zip(key) {
            dot += *q as f64 * *k as f64;
        }
        *logit = dot * scale;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0f64;
    for logit in &mut logits {
        *logit = (*logit - max).exp();
        denom += *logit;
    }
    Ok(logits.into_iter().map(|e| (e / denom) as f32).collect())
}

/// Fill cluster importance with the cumulative attention of the members.
pub fn score_clusters(set: &mut ClusterSet, cls_attn: &[f32]) {
    assert_eq!(cls_attn.len(), set.parent.len(), "attention map size mismatch");
    for cluster in &mut set.clusters {
        cluster.importance = cluster
            .members
            .iter()
            .map(|&i| cls_attn[i] as f64)
            .sum::<f64>();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    /// Exact copy of one member cell's feature vector.
    KeptOriginal,
    /// Attention-weighted average over the cluster.
    Summary,
}

#[derive(Clone, Debug)]
pub struct SemanticToken {
    pub vector: Vec<f32>,
    pub source: TokenSource,
    pub kind: TokenKind,
    pub importance: f64,
}

/// Emit up to `n_sem` representative tokens from the scored clusters,
/// descending importance (ties → lower cluster id). Clusters at or below
/// `theta_size` keep the member with the highest attention verbatim; larger
/// clusters emit the attention-weighted mean (plain mean if the cluster's
/// attention mass is exactly zero).
pub fn represent_clusters(
    grid: &FeatureGrid,
    set: &ClusterSet,
    cls_attn: &[f32],
    n_sem: usize,
    theta_size: usize,
) -> Vec<SemanticToken> {
    if n_sem == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..set.clusters.len()).collect();
    order.sort_by(|&a, &b| {
        set.clusters[b]
            .importance
            .partial_cmp(&set.clusters[a].importance)
            .expect("importance is finite")
            .then(a.cmp(&b))
    });
    order.truncate(n_sem);

    let d = grid.dim();
    let w = grid.width();
    order
        .into_iter()
        .map(|id| {
            let cluster = &set.clusters[id];
            if cluster.size() <= theta_size {
                // Raster-ordered members + strict comparison → first max wins.
                let best = cluster
                    .members
                    .iter()
                    .copied()
                    .fold(None::<(usize, f32)>, |acc, i| match acc {
                        Some((_, a)) if cls_attn[i] <= a => acc,
                        _ => Some((i, cls_attn[i])),
                    })
                    .expect("clusters are non-empty")
                    .0;
                SemanticToken {
                    vector: grid.feature(best).to_vec(),
                    source: TokenSource::Cell(Coord::from_raster(best, w)),
                    kind: TokenKind::KeptOriginal,
                    importance: cluster.importance,
                }
            } else {
                let mass: f64 = cluster.members.iter().map(|&i| cls_attn[i] as f64).sum();
                let mut acc = vec![0.0f64; d];
                for &i in &cluster.members {
                    let weight = if mass == 0.0 {
                        1.0 / cluster.size() as f64
                    } else {
                        cls_attn[i] as f64 / mass
                    };
                    for (a, &v) in acc.iter_mut().zip(grid.feature(i)) {
                        *a += weight * v as f64;
                    }
                }
                SemanticToken {
                    vector: acc.into_iter().map(|v| v as f32).collect(),
                    source: TokenSource::Cluster(id),
                    kind: TokenKind::Summary,
                    importance: cluster.importance,
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn grid_from(h: usize, w: usize, d: usize, features: Vec<f32>) -> FeatureGrid {
        FeatureGrid::new(h, w, d, features).unwrap()
    }

    fn random_grid(h: usize, w: usize, d: usize, seed: u64) -> FeatureGrid {
        let mut rng = SplitMix64::new(seed);
        let features = (0..h * w * d)
            .map(|_| rng.next_range(-1.0, 1.0) as f32)
            .collect();
        grid_from(h, w, d, features)
    }

    #[test]
    fn tau_theta_endpoints_and_midpoints() {
        let cfg = ScsaConfig::default();
        assert_eq!(tau_of_lambda(0.0, &cfg), 0.65);
        assert_eq!(tau_of_lambda(1.0, &cfg), 0.95);
        assert!((tau_of_lambda(0.5, &cfg) - 0.80).abs() < 1e-12);
        assert_eq!(theta_of_lambda(0.0, &cfg), 2);
        assert_eq!(theta_of_lambda(1.0, &cfg), 8);
        assert_eq!(theta_of_lambda(0.5, &cfg), 5);
    }

    #[test]
    fn identical_features_form_one_cluster() {
        let grid = grid_from(3, 4, 2, [1.0f32, 2.0].repeat(12));
        let set = cluster_grid(&grid, 0.9).unwrap();
        assert_eq!(set.clusters.len(), 1);
        assert_eq!(set.clusters[0].size(), 12);
    }

    #[test]
    fn orthogonal_features_stay_singletons() {
        // 2x2 grid, 4-dim one-hot features: pairwise cosine 0.
        let mut features = vec![0.0f32; 16];
        for i in 0..4 {
            features[i * 4 + i] = 1.0;
        }
        let grid = grid_from(2, 2, 4, features);
        let set = cluster_grid(&grid, 0.1).unwrap();
        assert_eq!(set.clusters.len(), 4);
        assert!(set.clusters.iter().all(|c| c.size() == 1));
    }

    #[test]
    fn two_halves_make_two_clusters() {
        // Left half u = e0, right half v = e1, cos(u,v) = 0 < tau.
        let mut features = Vec::new();
        for _row in 0..4 {
            for col in 0..4 {
                features.extend(if col < 2 { [1.0f32, 0.0] } else { [0.0, 1.0] });
            }
        }
        let grid = grid_from(4, 4, 2, features);
        let set = cluster_grid(&grid, 0.5).unwrap();
        assert_eq!(set.clusters.len(), 2);
        assert!(set.clusters.iter().all(|c| c.size() == 8));
    }

    #[test]
    fn zero_vectors_never_merge() {
        let grid = grid_from(1, 3, 2, vec![0.0; 6]);
        let set = cluster_grid(&grid, 0.5).unwrap();
        assert_eq!(set.clusters.len(), 3);
    }

    #[test]
    fn cluster_count_monotone_in_tau() {
        let grid = random_grid(12, 12, 8, 99);
        let mut last = 0usize;
        for tau in [0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5] {
            let count = cluster_grid(&grid, tau).unwrap().clusters.len();
            if last > 0 {
                assert!(count <= last, "count grew from {last} to {count} at tau {tau}");
            }
            last = count;
        }
    }

    #[test]
    fn clusters_are_eight_connected() {
        for seed in 0..10 {
            let grid = random_grid(9, 7, 4, seed);
            let set = cluster_grid(&grid, 0.6).unwrap();
            for cluster in &set.clusters {
                assert_flood_fill_connected(&cluster.members, grid.width());
            }
            let total: usize = set.clusters.iter().map(Cluster::size).sum();
            assert_eq!(total, grid.cells());
        }
    }

    fn assert_flood_fill_connected(members: &[usize], w: usize) {
        use std::collections::{HashSet, VecDeque};
        let set: HashSet<usize> = members.iter().copied().collect();
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([members[0]]);
        seen.insert(members[0]);
        while let Some(i) = queue.pop_front() {
            let c = Coord::from_raster(i, w);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (r, col) = (c.row as i64 + dr, c.col as i64 + dc);
                    if r < 0 || col < 0 {
                        continue;
                    }
                    let j = r as usize * w + col as usize;
                    if set.contains(&j) && seen.insert(j) {
                        queue.push_back(j);
                    }
                }
            }
        }
        assert_eq!(seen.len(), members.len(), "cluster not 8-connected");
    }

    #[test]
    fn attention_uniform_for_zero_query() {
        let keys = vec![0.5f32; 6 * 4];
        let attn = cls_attention(&[0.0; 4], &keys, 4).unwrap();
        for &a in &attn {
            assert!((a - 1.0 / 6.0).abs() < 1e-7);
        }
    }

    #[test]
    fn attention_concentrates_on_aligned_key() {
        // One key strongly aligned with the query, others orthogonal.
        let q = [10.0f32, 0.0];
        let mut keys = vec![0.0f32; 5 * 2];
        keys[0] = 10.0;
        for i in 1..5 {
            keys[i * 2 + 1] = 1.0;
        }
        let attn = cls_attention(&q, &keys, 2).unwrap();
        assert!(attn[0] > 0.99, "got {}", attn[0]);
        let sum: f64 = attn.iter().map(|&a| a as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn attention_rejects_non_finite() {
        let err = cls_attention(&[f32::INFINITY, 0.0], &[0.0; 4], 2);
        assert!(err.is_err());
    }

    #[test]
    fn importance_sums_match_brute_force() {
        let grid = random_grid(6, 6, 4, 5);
        let mut rng = SplitMix64::new(17);
        let raw: Vec<f64> = (0..36).map(|_| rng.next_f64()).collect();
        let total: f64 = raw.iter().sum();
        let attn: Vec<f32> = raw.iter().map(|v| (v / total) as f32).collect();
        let mut set = cluster_grid(&grid, 0.6).unwrap();
        score_clusters(&mut set, &attn);
        let mut sum = 0.0;
        for cluster in &set.clusters {
            let oracle: f64 = cluster.members.iter().map(|&i| attn[i] as f64).sum();
            assert!((cluster.importance - oracle).abs() < 1e-9);
            sum += cluster.importance;
        }
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn singleton_cluster_token_is_exact_copy() {
        let grid = random_grid(2, 2, 3, 8);
        // Orthogonalize: force singletons by zeroing threshold pass.
        let set = cluster_grid(&grid, 0.999999).unwrap();
        let attn = vec![0.25f32; 4];
        let mut scored = set.clone();
        score_clusters(&mut scored, &attn);
        let tokens = represent_clusters(&grid, &scored, &attn, 4, 4);
        for token in &tokens {
            if let TokenSource::Cell(c) = token.source {
                assert_eq!(token.vector.as_slice(), grid.feature_at(c));
                assert_eq!(token.kind, TokenKind::KeptOriginal);
            } else {
                panic!("expected kept-original token");
            }
        }
    }

    #[test]
    fn equal_attention_pair_averages() {
        let grid = grid_from(1, 2, 2, vec![1.0, 0.0, 0.999, 0.01]);
        let mut set = cluster_grid(&grid, 0.9).unwrap();
        assert_eq!(set.clusters.len(), 1);
        let attn = vec![0.5f32, 0.5];
        score_clusters(&mut set, &attn);
        let tokens = represent_clusters(&grid, &set, &attn, 1, 1);
        assert_eq!(tokens[0].kind, TokenKind::Summary);
        let u = grid.feature(0);
        let v = grid.feature(1);
        for i in 0..2 {
            let expected = ((u[i] as f64 + v[i] as f64) / 2.0) as f32;
            assert_eq!(tokens[0].vector[i], expected);
        }
    }

    #[test]
    fn weighted_mean_matches_oracle_and_stays_in_hull() {
        let grid = random_grid(5, 5, 6, 77);
        let mut rng = SplitMix64::new(78);
        let raw: Vec<f64> = (0..25).map(|_| rng.next_f64()).collect();
        let total: f64 = raw.iter().sum();
        let attn: Vec<f32> = raw.iter().map(|v| (v / total) as f32).collect();
        let mut set = cluster_grid(&grid, 0.5).unwrap();
        score_clusters(&mut set, &attn);
        let tokens = represent_clusters(&grid, &set, &attn, set.clusters.len(), 0);
        for token in tokens {
            let TokenSource::Cluster(id) = token.source else {
                panic!("theta 0 forces summaries");
            };
            let cluster = &set.clusters[id];
            let mass: f64 = cluster.members.iter().map(|&i| attn[i] as f64).sum();
            for d in 0..grid.dim() {
                let oracle: f64 = cluster
                    .members
                    .iter()
                    .map(|&i| attn[i] as f64 / mass * grid.feature(i)[d] as f64)
                    .sum();
                let got = token.vector[d] as f64;
                let denom = oracle.abs().max(1e-12);
                assert!((got - oracle).abs() / denom < 1e-6);
                let lo = cluster
                    .members
                    .iter()
                    .map(|&i| grid.feature(i)[d])
                    .fold(f32::INFINITY, f32::min);
                let hi = cluster
                    .members
                    .iter()
                    .map(|&i| grid.feature(i)[d])
                    .fold(f32::NEG_INFINITY, f32::max);
                assert!(token.vector[d] >= lo && token.vector[d] <= hi);
            }
        }
    }

    #[test]
    fn zero_mass_cluster_falls_back_to_plain_mean() {
        let grid = grid_from(1, 2, 1, vec![1.0, 3.0]);
        let mut set = cluster_grid(&grid, 0.9).unwrap();
        // All attention mass on some other grid: emulate by zero attention.
        let attn = vec![0.0f32, 0.0];
        score_clusters(&mut set, &attn);
        let tokens = represent_clusters(&grid, &set, &attn, 1, 1);
        assert_eq!(tokens[0].vector[0], 2.0);
    }

    #[test]
    fn token_count_is_min_of_budget_and_clusters() {
        let grid = random_grid(4, 4, 3, 3);
        let mut set = cluster_grid(&grid, 0.95).unwrap();
        let attn = vec![1.0 / 16.0; 16];
        score_clusters(&mut set, &attn);
        let k = set.clusters.len();
        assert_eq!(represent_clusters(&grid, &set, &attn, k + 5, 2).len(), k);
        assert_eq!(represent_clusters(&grid, &set, &attn, 3, 2).len(), 3.min(k));
        assert!(represent_clusters(&grid, &set, &attn, 0, 2).is_empty());
    }

    #[test]
    fn tokens_sorted_by_descending_importance() {
        let grid = random_grid(6, 6, 4, 21);
        let mut rng = SplitMix64::new(22);
        let raw: Vec<f64> = (0..36).map(|_| rng.next_f64()).collect();
        let total: f64 = raw.iter().sum();
        let attn: Vec<f32> = raw.iter().map(|v| (v / total) as f32).collect();
        let mut set = cluster_grid(&grid, 0.7).unwrap();
        score_clusters(&mut set, &attn);
        let tokens = represent_clusters(&grid, &set, &attn, 10, 3);
        for pair in tokens.windows(2) {
            assert!(pair[0].importance >= pair[1].importance);
        }
    }
}

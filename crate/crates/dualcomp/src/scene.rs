//! Synthetic scene benchmark: a seeded generator with ground truth, fidelity
//! metrics, the retention sweep, the ablation matrix, and the synthetic text
//! corpus used to pretrain the router.
//!
//! Scenes are desk-scale stand-ins for overhead imagery: orthogonal base
//! features for background, objects, and roads; rectangular or elliptic
//! object blobs; scene-crossing rasterized polyline roads with a per-road
//! contrast level; CLS attention elevated on objects; a text-similarity map
//! keyed to the task kind. Everything is a pure function of the spec.

use rayon::prelude::*;

use crate::config::{FlopsSection, RhoTargets, RunConfig};
use crate::error::{Error, Result};
use crate::fusion::Stream;
use crate::grid::{Coord, FeatureGrid, TokenSource};
use crate::igsr;
use crate::io::report::SweepRow;
use crate::lexicon::{rule_label, Lexicon};
use crate::pipeline::{compress_grid, PipelineOptions, PipelineOutput, StreamOverride};
use crate::rng::SplitMix64;
use crate::router::{InstructionRepr, LabelRecord, TaskPolicy};
use crate::scsa::ClusterSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Semantic,
    Balanced,
    Geometric,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Semantic => "semantic",
            TaskKind::Balanced => "balanced",
            TaskKind::Geometric => "geometric",
        }
    }

    pub const ALL: [TaskKind; 3] = [TaskKind::Semantic, TaskKind::Balanced, TaskKind::Geometric];
}

/// Default duality factor per task kind.
pub fn default_lambda(kind: TaskKind) -> f64 {
    match kind {
        TaskKind::Semantic => 0.1,
        TaskKind::Balanced => 0.5,
        TaskKind::Geometric => 0.9,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub n_objects: usize,
    /// Object extent per axis, in cells.
    pub object_size_range: (usize, usize),
    pub n_roads: usize,
    /// Waypoints per road (≥ 2); first and last land on opposite borders so
    /// roads cross the scene.
    pub road_waypoints: usize,
    /// Isolated single-cell saliency spikes (parked vehicles, boulders,
    /// rooftop glints) that carry no task evidence.
    pub n_clutter: usize,
    pub noise_scale: f64,
    pub seed: u64,
    pub task_kind: TaskKind,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 24,
            width: 24,
            dim: 64,
            n_objects: 4,
            object_size_range: (2, 5),
            n_roads: 2,
            road_waypoints: 2,
            n_clutter: 12,
            noise_scale: 0.05,
            seed: 0,
            task_kind: TaskKind::Balanced,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height * self.width < 16 {
            return Err(Error::invalid("scene spec", "grid smaller than 16 cells"));
        }
        if self.dim < 5 {
            return Err(Error::invalid("scene spec", "dim must be >= 5"));
        }
        let (lo, hi) = self.object_size_range;
        if lo == 0 || lo > hi {
            return Err(Error::invalid("scene spec", "bad object size range"));
        }
        if self.n_roads > 0 && self.road_waypoints < 2 {
            return Err(Error::invalid("scene spec", "roads need >= 2 waypoints"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::invalid("scene spec", "bad noise scale"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub height: usize,
    pub width: usize,
    pub object_mask: Vec<bool>,
    pub road_masks: Vec<Vec<bool>>,
    pub clutter_mask: Vec<bool>,
    pub object_feature: Vec<f32>,
    pub road_feature: Vec<f32>,
    pub background_feature: Vec<f32>,
    pub task_kind: TaskKind,
}

fn normalize_f64(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Four exactly orthonormal base directions (random, then Gram-Schmidt):
/// background, object, road, clutter.
fn base_features(rng: &mut SplitMix64, dim: usize) -> [Vec<f64>; 4] {
    let mut vs: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..dim).map(|_| rng.next_normal()).collect())
        .collect();
    for i in 0..4 {
        for j in 0..i {
            let dot: f64 = vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum();
            let prev = vs[j].clone();
            for (a, b) in vs[i].iter_mut().zip(prev) {
                *a -= dot * b;
            }
        }
        normalize_f64(&mut vs[i]);
    }
    let mut it = vs.into_iter();
    [
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ]
}

/// 8-connected integer line rasterization.
fn bresenham(a: Coord, b: Coord) -> Vec<Coord> {
    let (mut x0, mut y0) = (a.col as i64, a.row as i64);
    let (x1, y1) = (b.col as i64, b.row as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut cells = Vec::new();
    loop {
        cells.push(Coord::new(y0 as usize, x0 as usize));
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
    cells
}

fn border_point(rng: &mut SplitMix64, h: usize, w: usize, side: usize) -> Coord {
    match side {
        0 => Coord::new(0, rng.next_usize(w)),
        1 => Coord::new(h - 1, rng.next_usize(w)),
        2 => Coord::new(rng.next_usize(h), 0),
        _ => Coord::new(rng.next_usize(h), w - 1),
    }
}

/// Generate a scene and its ground truth. Bitwise reproducible per spec.
///
/// Mask precedence where blobs overlap: objects over roads (road masks
/// exclude cells claimed by an object). Where two roads cross, the
/// lower-index road supplies the feature; both road masks keep the cell.
pub fn generate_scene(spec: &SceneSpec) -> Result<(FeatureGrid, GroundTruth)> {
    spec.validate()?;
    let (h, w, d) = (spec.height, spec.width, spec.dim);
    let cells = h * w;
    let mut rng = SplitMix64::new(spec.seed);
    let [background, object, road, clutter] = base_features(&mut rng, d);

    // Roads: scene-crossing polylines with a contrast dip mid-scene (both
    // ends strong, the middle faint, as under shadow or canopy).
    let mut road_cells: Vec<Vec<Coord>> = Vec::with_capacity(spec.n_roads);
    let mut road_mixes: Vec<(f64, f64)> = Vec::with_capacity(spec.n_roads);
    for _ in 0..spec.n_roads {
        let mix_ends = rng.next_range(0.85, 0.95);
        road_mixes.push((mix_ends, 0.25));
        let entry_side = rng.next_usize(4);
        let exit_side = match entry_side {
            0 => 1,
            1 => 0,
            2 => 3,
            _ => 2,
        };
        let mut waypoints = vec![border_point(&mut rng, h, w, entry_side)];
        for _ in 0..spec.road_waypoints.saturating_sub(2) {
            waypoints.push(Coord::new(rng.next_usize(h), rng.next_usize(w)));
        }
        waypoints.push(border_point(&mut rng, h, w, exit_side));
        let mut cells_of_road = Vec::new();
        for pair in waypoints.windows(2) {
            for coord in bresenham(pair[0], pair[1]) {
                if cells_of_road.last() != Some(&coord) {
                    cells_of_road.push(coord);
                }
            }
        }
        road_cells.push(cells_of_road);
    }

    // Objects: rectangular or elliptic blobs.
    let mut object_mask = vec![false; cells];
    let (size_lo, size_hi) = spec.object_size_range;
    for _ in 0..spec.n_objects {
        let center_r = rng.next_usize(h);
        let center_c = rng.next_usize(w);
        let extent_r = size_lo + rng.next_usize(size_hi - size_lo + 1);
        let extent_c = size_lo + rng.next_usize(size_hi - size_lo + 1);
        let elliptic = rng.next_f64() < 0.5;
        let (ar, ac) = (extent_r as f64 / 2.0, extent_c as f64 / 2.0);
        for row in center_r.saturating_sub(extent_r / 2)..=(center_r + extent_r / 2).min(h - 1) {
            for col in center_c.saturating_sub(extent_c / 2)..=(center_c + extent_c / 2).min(w - 1)
            {
                if elliptic {
                    let dr = (row as f64 - center_r as f64) / ar.max(0.5);
                    let dc = (col as f64 - center_c as f64) / ac.max(0.5);
                    if dr * dr + dc * dc > 1.0 {
                        continue;
                    }
                }
                object_mask[row * w + col] = true;
            }
        }
    }

    // Clutter: isolated spike cells, never on objects.
    let mut clutter_mask = vec![false; cells];
    for _ in 0..spec.n_clutter {
        let i = rng.next_usize(cells);
        if !object_mask[i] {
            clutter_mask[i] = true;
        }
    }

    // Object-over-road precedence; first road wins feature at crossings.
    // Each owned cell remembers its fractional position along its road so
    // the contrast fade can be evaluated per cell.
    let mut road_owner = vec![usize::MAX; cells];
    let mut road_fade_pos = vec![0.0f64; cells];
    let mut road_masks = vec![vec![false; cells]; spec.n_roads];
    for (road_index, coords) in road_cells.iter().enumerate() {
        let last = (coords.len() - 1).max(1) as f64;
        for (position, coord) in coords.iter().enumerate() {
            let i = coord.raster(w);
            if object_mask[i] {
                continue;
            }
            road_masks[road_index][i] = true;
            if road_owner[i] == usize::MAX {
                road_owner[i] = road_index;
                road_fade_pos[i] = position as f64 / last;
            }
        }
    }

    // Feature precedence: object > road > clutter > background.
    for (c, &owned) in clutter_mask.iter_mut().zip(&road_owner) {
        *c &= owned == usize::MAX;
    }

    // Cell features: objects, roads, and clutter exact; background
    // noise-perturbed.
    let noise_per_dim = spec.noise_scale / (d as f64).sqrt();
    let mut features = vec![0.0f32; cells * d];
    for i in 0..cells {
        let out = &mut features[i * d..(i + 1) * d];
        if object_mask[i] {
            for (o, v) in out.iter_mut().zip(&object) {
                *o = *v as f32;
            }
        } else if road_owner[i] != usize::MAX {
            let (mix_ends, mix_middle) = road_mixes[road_owner[i]];
            // |2t−1| is 1 at either end and 0 mid-road.
            let end_proximity = (2.0 * road_fade_pos[i] - 1.0).abs();
            let m = mix_middle + (mix_ends - mix_middle) * end_proximity;
            let mut v: Vec<f64> = background
                .iter()
                .zip(&road)
                .map(|(b, r)| (1.0 - m) * b + m * r)
                .collect();
            normalize_f64(&mut v);
            for (o, x) in out.iter_mut().zip(&v) {
                *o = *x as f32;
            }
        } else if clutter_mask[i] {
            for (o, v) in out.iter_mut().zip(&clutter) {
                *o = *v as f32;
            }
        } else {
            let mut cell: Vec<f64> = background
                .iter()
                .map(|b| b + noise_per_dim * rng.next_normal())
                .collect();
            normalize_f64(&mut cell);
            for (o, v) in out.iter_mut().zip(&cell) {
                *o = *v as f32;
            }
        }
    }

    // CLS attention: softmax of a score map elevated on object cells.
    let mut scores = vec![0.0f64; cells];
    for (i, score) in scores.iter_mut().enumerate() {
        *score = if object_mask[i] { 4.0 } else { 0.0 }
            + spec.noise_scale * rng.next_range(-1.0, 1.0);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for s in &mut scores {
        *s = (*s - max).exp();
        denom += *s;
    }
    let cls_attn: Vec<f32> = scores.iter().map(|s| (s / denom) as f32).collect();

    let grid = FeatureGrid::new(h, w, d, features)?.with_cls_attn(cls_attn)?;

    // Text similarity keyed to the task kind.
    let query: Vec<f32> = match spec.task_kind {
        TaskKind::Semantic => object.iter().map(|&v| v as f32).collect(),
        TaskKind::Geometric => road.iter().map(|&v| v as f32).collect(),
        TaskKind::Balanced => {
            let mut blend: Vec<f64> = object.iter().zip(&road).map(|(a, b)| a + b).collect();
            normalize_f64(&mut blend);
            blend.iter().map(|&v| v as f32).collect()
        }
    };
    let text_sim: Vec<f32> = igsr::text_relevance(&grid, &query)?
        .into_iter()
        .map(|v| v as f32)
        .collect();
    let grid = grid.with_text_sim(text_sim)?;

    let truth = GroundTruth {
        height: h,
        width: w,
        object_mask,
        road_masks,
        clutter_mask,
        object_feature: object.iter().map(|&v| v as f32).collect(),
        road_feature: road.iter().map(|&v| v as f32).collect(),
        background_feature: background.iter().map(|&v| v as f32).collect(),
        task_kind: spec.task_kind,
    };
    Ok((grid, truth))
}

// ── Fidelity metrics ─────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct FidelityReport {
    pub object_preservation: f64,
    pub path_recall: f64,
    pub path_connected: Vec<bool>,
    pub compression_ratio: f64,
    pub tokens_kept: usize,
    pub flops_proxy: f64,
    pub object_vacuous: bool,
    pub path_vacuous: bool,
}

impl FidelityReport {
    pub fn path_connected_frac(&self) -> f64 {
        if self.path_connected.is_empty() {
            1.0
        } else {
            self.path_connected.iter().filter(|&&c| c).count() as f64
                / self.path_connected.len() as f64
        }
    }
}

/// Fraction of object-mask cells that are either a retained token's source
/// cell or a member of a semantic cluster whose representative survived into
/// the sequence. No object cells → vacuously 1.
pub fn object_preservation(
    seq: &crate::fusion::CompressedSequence,
    clusters: Option<&ClusterSet>,
    truth: &GroundTruth,
) -> (f64, bool) {
    let total = truth.object_mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return (1.0, true);
    }
    let cells = truth.height * truth.width;
    let mut preserved = vec![false; cells];
    for token in &seq.tokens {
        match token.source {
            TokenSource::Cell(coord) => {
                preserved[coord.raster(truth.width)] = true;
                if token.stream == Stream::Semantic {
                    if let Some(set) = clusters {
                        let id = set.cluster_of(coord.raster(truth.width));
                        for &member in &set.clusters[id].members {
                            preserved[member] = true;
                        }
                    }
                }
            }
            TokenSource::Cluster(id) => {
                if let Some(set) = clusters {
                    for &member in &set.clusters[id].members {
                        preserved[member] = true;
                    }
                }
            }
        }
    }
    let hit = truth
        .object_mask
        .iter()
        .zip(&preserved)
        .filter(|(&m, &p)| m && p)
        .count();
    (hit as f64 / total as f64, false)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Recall: fraction of road cells within Chebyshev `radius` of a retained
/// geometric token. Connectivity: per road, the geometric tokens inside that
/// road's radius-neighborhood form exactly one 8-connected component.
/// No road cells at all → vacuously (1, [], true).
pub fn path_recall(
    seq: &crate::fusion::CompressedSequence,
    truth: &GroundTruth,
    radius: usize,
) -> (f64, Vec<bool>, bool) {
    let cells = truth.height * truth.width;
    let mut road_union = vec![false; cells];
    for mask in &truth.road_masks {
        for (u, &m) in road_union.iter_mut().zip(mask) {
            *u |= m;
        }
    }
    let total = road_union.iter().filter(|&&m| m).count();
    if total == 0 {
        return (1.0, vec![true; truth.road_masks.len()], true);
    }

    let geo_tokens: Vec<Coord> = seq
        .tokens
        .iter()
        .filter(|t| t.stream == Stream::Geometric)
        .filter_map(|t| match t.source {
            TokenSource::Cell(c) => Some(c),
            TokenSource::Cluster(_) => None,
        })
        .collect();

    // Dilate token positions by `radius`.
    let mut covered = vec![false; cells];
    for coord in &geo_tokens {
        let r0 = coord.row.saturating_sub(radius);
        let r1 = (coord.row + radius).min(truth.height - 1);
        let c0 = coord.col.saturating_sub(radius);
        let c1 = (coord.col + radius).min(truth.width - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                covered[row * truth.width + col] = true;
            }
        }
    }
    let hit = road_union
        .iter()
        .zip(&covered)
        .filter(|(&m, &c)| m && c)
        .count();
    let recall = hit as f64 / total as f64;

    let connected = truth
        .road_masks
        .iter()
        .map(|mask| {
            let near: Vec<usize> = geo_tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| {
                    mask.iter().enumerate().any(|(i, &m)| {
                        m && Coord::from_raster(i, truth.width).chebyshev(t) <= radius
                    })
                })
                .map(|(index, _)| index)
                .collect();
            if near.is_empty() {
                return false;
            }
            let mut uf = UnionFind::new(near.len());
            for i in 0..near.len() {
                for j in i + 1..near.len() {
                    if geo_tokens[near[i]].chebyshev(&geo_tokens[near[j]]) <= 1 {
                        uf.union(i, j);
                    }
                }
            }
            let root = uf.find(0);
            (1..near.len()).all(|i| uf.find(i) == root)
        })
        .collect();
    (recall, connected, false)
}

/// Linear-plus-quadratic host-cost estimate; relative comparisons only.
pub fn flops_proxy(tokens_kept: usize, flops: &FlopsSection) -> f64 {
    let t = tokens_kept as f64;
    flops.per_token * t + flops.per_token_pair * t * t
}

/// Metrics for one pipeline run against a scene's ground truth.
pub fn evaluate(
    output: &PipelineOutput,
    truth: &GroundTruth,
    flops: &FlopsSection,
) -> FidelityReport {
    let tokens_kept = output.sequence.tokens.len();
    let (preservation, object_vacuous) =
        object_preservation(&output.sequence, output.clusters.as_ref(), truth);
    let (recall, connected, path_vacuous) = path_recall(&output.sequence, truth, 1);
    FidelityReport {
        object_preservation: preservation,
        path_recall: recall,
        path_connected: connected,
        compression_ratio: output.sequence.n_max as f64 / tokens_kept.max(1) as f64,
        tokens_kept,
        flops_proxy: flops_proxy(tokens_kept, flops),
        object_vacuous,
        path_vacuous,
    }
}

// ── Sweep and ablation runners ───────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    ScsaOnly,
    IgsrOnly,
    TopK,
    TasmOff,
    IndexReorder,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::ScsaOnly,
        Variant::IgsrOnly,
        Variant::TopK,
        Variant::TasmOff,
        Variant::IndexReorder,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::ScsaOnly => "scsa_only",
            Variant::IgsrOnly => "igsr_only",
            Variant::TopK => "top_k",
            Variant::TasmOff => "tasm_off",
            Variant::IndexReorder => "index_reorder",
        }
    }

    pub fn options(&self) -> PipelineOptions {
        let mut options = PipelineOptions::default();
        match self {
            Variant::Full => {}
            Variant::ScsaOnly => options.budget_override = Some(StreamOverride::SemanticOnly),
            Variant::IgsrOnly => options.budget_override = Some(StreamOverride::GeometricOnly),
            Variant::TopK => options.top_k_selection = true,
            Variant::TasmOff => options.use_text_modulation = false,
            Variant::IndexReorder => {
                options.unroll_mode = crate::fusion::UnrollMode::IndexReorder
            }
        }
        options
    }
}

fn run_row(
    spec: &SceneSpec,
    rho: f64,
    lambda: f64,
    variant: Variant,
    config: &RunConfig,
) -> Result<SweepRow> {
    let (grid, truth) = generate_scene(spec)?;
    let report = if rho == 1.0 && variant == Variant::Full {
        // Baseline row: identity compression, every token retained.
        let n_max = grid.cells();
        FidelityReport {
            object_preservation: 1.0,
            path_recall: 1.0,
            path_connected: vec![true; truth.road_masks.len()],
            compression_ratio: 1.0,
            tokens_kept: n_max,
            flops_proxy: flops_proxy(n_max, &config.flops),
            object_vacuous: truth.object_mask.iter().all(|&m| !m),
            path_vacuous: truth.road_masks.iter().all(|m| m.iter().all(|&c| !c)),
        }
    } else {
        let policy = TaskPolicy { lambda, rho };
        let output = compress_grid(&grid, &policy, config, &variant.options())?;
        evaluate(&output, &truth, &config.flops)
    };
    Ok(SweepRow {
        scene_seed: spec.seed,
        task_kind: spec.task_kind.as_str().into(),
        variant: variant.as_str().into(),
        rho,
        lambda,
        tokens_kept: report.tokens_kept,
        compression_ratio: report.compression_ratio,
        object_preservation: report.object_preservation,
        path_recall: report.path_recall,
        path_connected_frac: report.path_connected_frac(),
        flops_proxy: report.flops_proxy,
        object_vacuous: report.object_vacuous,
        path_vacuous: report.path_vacuous,
    })
}

/// Run the full pipeline per (scene, ρ) with the task-kind λ; ρ = 1 rows are
/// the identity-compression baseline. Rows come back scene-major in the
/// given order regardless of parallelism.
pub fn duality_sweep(
    specs: &[SceneSpec],
    rho_list: &[f64],
    lambda_for: impl Fn(TaskKind) -> f64 + Sync,
    config: &RunConfig,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(&SceneSpec, f64)> = specs
        .iter()
        .flat_map(|spec| rho_list.iter().map(move |&rho| (spec, rho)))
        .collect();
    jobs.par_iter()
        .map(|(spec, rho)| run_row(spec, *rho, lambda_for(spec.task_kind), Variant::Full, config))
        .collect()
}

/// Run all six variants per scene at one (ρ, λ); rows grouped variant-major
/// (one block per variant).
pub fn ablation_matrix(
    specs: &[SceneSpec],
    rho: f64,
    lambda: f64,
    config: &RunConfig,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(Variant, &SceneSpec)> = Variant::ALL
        .iter()
        .flat_map(|&variant| specs.iter().map(move |spec| (variant, spec)))
        .collect();
    jobs.par_iter()
        .map(|(variant, spec)| run_row(spec, rho, lambda, *variant, config))
        .collect()
}

// ── Synthetic instruction corpus ─────────────────────────────────────────

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic bag-of-words embedding: each word hashes to a fixed random
/// unit vector, mean-pooled over the text. Stands in for a real text encoder
/// in offline training and the synthetic benchmark. Words are sorted before
/// accumulation so the result is bitwise word-order invariant.
pub fn embed_text(text: &str, dim: usize) -> Vec<f64> {
    let mut words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    words.sort_unstable();
    let mut pooled = vec![0.0f64; dim];
    for word in &words {
        let mut rng = SplitMix64::new(fnv1a64(word.as_bytes()));
        let mut v: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        normalize_f64(&mut v);
        for (p, x) in pooled.iter_mut().zip(v) {
            *p += x;
        }
    }
    if !words.is_empty() {
        for p in pooled.iter_mut() {
            *p /= words.len() as f64;
        }
    }
    pooled
}

const FILLER_WORDS: &[&str] = &[
    "show", "me", "the", "near", "this", "wide", "area", "in", "scene", "image", "please",
    "find", "across", "from", "to", "at", "of", "city", "harbor", "north", "river", "view",
];

/// Sample a keyword-bearing phrase for one task class.
pub fn sample_phrase(lexicon: &Lexicon, kind: TaskKind, rng: &mut SplitMix64) -> String {
    let geo: Vec<&str> = lexicon.geometric_keywords().collect();
    let sem: Vec<&str> = lexicon.semantic_keywords().collect();
    let mut words: Vec<String> = Vec::new();
    let push_distinct = |pool: &[&str], n: usize, words: &mut Vec<String>, rng: &mut SplitMix64| {
        let mut picked: Vec<usize> = Vec::new();
        while picked.len() < n.min(pool.len()) {
            let i = rng.next_usize(pool.len());
            if !picked.contains(&i) {
                picked.push(i);
                words.push(pool[i].to_string());
            }
        }
    };
    match kind {
        TaskKind::Geometric => push_distinct(&geo, 2, &mut words, rng),
        TaskKind::Semantic => push_distinct(&sem, 2, &mut words, rng),
        TaskKind::Balanced => {
            push_distinct(&geo, 1, &mut words, rng);
            push_distinct(&sem, 1, &mut words, rng);
        }
    }
    for _ in 0..3 {
        words.push(FILLER_WORDS[rng.next_usize(FILLER_WORDS.len())].to_string());
    }
    // Fisher-Yates shuffle.
    for i in (1..words.len()).rev() {
        words.swap(i, rng.next_usize(i + 1));
    }
    words.join(" ")
}

/// Synthetic labeled corpus cycling through the three task classes. λ labels
/// come from the rule labeler (no provider scores), ρ targets from the
/// per-class table.
pub fn lexicon_corpus(
    lexicon: &Lexicon,
    count: usize,
    dim: usize,
    rho_targets: &RhoTargets,
    alpha: f64,
    rho_min: f64,
    seed: u64,
) -> Result<Vec<(InstructionRepr, LabelRecord)>> {
    let mut rng = SplitMix64::new(seed);
    let mut corpus = Vec::with_capacity(count);
    for index in 0..count {
        let kind = TaskKind::ALL[index % 3];
        let phrase = sample_phrase(lexicon, kind, &mut rng);
        let lambda_rule = rule_label(&phrase, lexicon);
        let rho_gt = match kind {
            TaskKind::Semantic => rho_targets.semantic,
            TaskKind::Balanced => rho_targets.balanced,
            TaskKind::Geometric => rho_targets.geometric,
        };
        let record = LabelRecord::new(None, lambda_rule, alpha, rho_gt, rho_min)?;
        let input = InstructionRepr::new(embed_text(&phrase, dim))?.with_text(phrase);
        corpus.push((input, record));
    }
    Ok(corpus)
}

//! Geometric stream: structural cost field, coverage anchors, and greedy
//! Chebyshev-decreasing path tracing between them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Coord, FeatureGrid};

/// Tracing and anchor-rule parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IgsrConfig {
    /// Text modulation strength β ≥ 0.
    pub beta: f64,
    /// Chebyshev neighborhood radius for path steps.
    pub neighborhood_radius: usize,
    /// Floor for the anchor-count rule `max(min_anchors, round(√n_geo))`.
    pub min_anchors: usize,
}

impl Default for IgsrConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            neighborhood_radius: 1,
            min_anchors: 2,
        }
    }
}

impl IgsrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("igsr beta {} must be >= 0", self.beta)));
        }
        if self.neighborhood_radius == 0 {
            return Err(Error::Config("igsr neighborhood_radius must be >= 1".into()));
        }
        if self.min_anchors == 0 {
            return Err(Error::Config("igsr min_anchors must be >= 1".into()));
        }
        Ok(())
    }
}

/// Anchors scale sublinearly with the geometric budget so most of it funds
/// connective path tokens.
pub fn default_anchor_count(n_geo: usize, min_anchors: usize) -> usize {
    if n_geo == 0 {
        return 0;
    }
    min_anchors.max((n_geo as f64).sqrt().round() as usize).min(n_geo)
}

/// Structural cost field over the grid.
///
/// `s_struct = normalize(s_geo) ⊙ (1 + β·normalize(s_text))` when a text
/// signal is present, and plain `normalize(s_geo)` otherwise; `normalize` is
/// min-max to [0,1] with constant fields mapping to all zeros, so a constant
/// text signal reduces the field to the purely geometric case bitwise.
#[derive(Clone, Debug)]
pub struct StructField {
    pub height: usize,
    pub width: usize,
    pub s_geo: Vec<f64>,
    pub s_text: Option<Vec<f64>>,
    pub s_struct: Vec<f64>,
    pub beta: f64,
}

impl StructField {
    pub fn cost(&self, coord: Coord) -> f64 {
        self.s_struct[coord.raster(self.width)]
    }
}

/// Squared distance of each cell's feature to the mean of its 3×3 window,
/// window entries outside the grid excluded (edge cells average fewer
/// neighbors rather than synthetic padding).
pub fn local_difference_saliency(grid: &FeatureGrid) -> Vec<f64> {
    let (h, w, d) = (grid.height(), grid.width(), grid.dim());
    (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (row, col) = (i / w, i % w);
            let r0 = row.saturating_sub(1);
            let r1 = (row + 1).min(h - 1);
            let c0 = col.saturating_sub(1);
            let c1 = (col + 1).min(w - 1);
            let count = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
            let mut acc = 0.0f64;
            let center = grid.feature(i);
            for dim in 0..d {
                let mut mean = 0.0f64;
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        mean += grid.feature(r * w + c)[dim] as f64;
                    }
                }
                mean /= count;
                let diff = center[dim] as f64 - mean;
                acc += diff * diff;
            }
            acc
        })
        .collect()
}

/// Per-cell cosine similarity between a text embedding and the cell features
/// (zero vectors compare as 0).
pub fn text_relevance(grid: &FeatureGrid, text_embedding: &[f32]) -> Result<Vec<f64>> {
    if text_embedding.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            what: "text embedding",
            expected: grid.dim(),
            got: text_embedding.len(),
        });
    }
    if let Some(index) = text_embedding.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "text embedding",
            index,
        });
    }
    let text_norm = text_embedding
        .iter()
        .map(|&v| v as f64 * v as f64)
        .sum::<f64>()
        .sqrt();
    Ok((0..grid.cells())
        .into_par_iter()
        .map(|i| {
            let feature = grid.feature(i);
            let mut dot = 0.0f64;
            let mut norm = 0.0f64;
            for (&t, &f) in text_embedding.iter().zip(feature) {
                dot += t as f64 * f as f64;
                norm += f as f64 * f as f64;
            }
            let norm = norm.sqrt();
            if text_norm == 0.0 || norm == 0.0 {
                0.0
            } else {
                dot / (text_norm * norm)
            }
        })
        .collect())
}

/// Min-max normalization to [0,1]; constant fields map to all zeros.
fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.0; values.len()];
    }
    let span = max - min;
    values.iter().map(|&v| (v - min) / span).collect()
}

pub fn build_struct_field(
    height: usize,
    width: usize,
    s_geo: Vec<f64>,
    s_text: Option<Vec<f64>>,
    beta: f64,
) -> Result<StructField> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::invalid("beta", format!("{beta} must be >= 0")));
    }
    if s_geo.len() != height * width {
        return Err(Error::DimensionMismatch {
            what: "s_geo",
            expected: height * width,
            got: s_geo.len(),
        });
    }
    if let Some(text) = &s_text {
        if text.len() != s_geo.len() {
            return Err(Error::DimensionMismatch {
                what: "s_text",
                expected: s_geo.len(),
                got: text.len(),
            });
        }
    }
    let geo_norm = min_max_normalize(&s_geo);
    let s_struct = match &s_text {
        Some(text) => {
            let text_norm = min_max_normalize(text);
            geo_norm
                .iter()
                .zip(&text_norm)
                .map(|(&g, &t)| g * (1.0 + beta * t))
                .collect()
        }
        None => geo_norm,
    };
    Ok(StructField {
        height,
        width,
        s_geo,
        s_text,
        s_struct,
        beta,
    })
}

/// Coverage anchors: at most one per subregion of a near-equal rectangular
/// partition, ordered by the greedy traversal chain.
#[derive(Clone, Debug)]
pub struct AnchorSet {
    pub anchors: Vec<Coord>,
    pub subregion_grid: (usize, usize),
}

/// Balanced partition dims: grow the axis with the larger cell extent until
/// the subregion count reaches `k_target` (ties split columns).
fn partition_dims(h: usize, w: usize, k_target: usize) -> (usize, usize) {
    let (mut gr, mut gc) = (1usize, 1usize);
    while gr * gc < k_target {
        let row_extent = h as f64 / gr as f64;
        let col_extent = w as f64 / gc as f64;
        if row_extent > col_extent && gr < h {
            gr += 1;
        } else if gc < w {
            gc += 1;
        } else {
            gr += 1;
        }
    }
    (gr, gc)
}

fn band(total: usize, parts: usize, index: usize) -> (usize, usize) {
    (total * index / parts, total * (index + 1) / parts)
}

/// Pick the argmax-cost cell per subregion (ties → raster order), trim to the
/// `k_target` highest-cost anchors, then order them with [`traversal_order`].
pub fn extract_anchors(field: &StructField, k_target: usize) -> AnchorSet {
    if k_target == 0 {
        return AnchorSet {
            anchors: Vec::new(),
            subregion_grid: (0, 0),
        };
    }
    let (h, w) = (field.height, field.width);
    assert!(k_target <= h * w, "k_target exceeds grid size");
    let (gr, gc) = partition_dims(h, w, k_target);
    let mut candidates: Vec<Coord> = Vec::with_capacity(gr * gc);
    for br in 0..gr {
        let (r0, r1) = band(h, gr, br);
        for bc in 0..gc {
            let (c0, c1) = band(w, gc, bc);
            let mut best: Option<(Coord, f64)> = None;
            for row in r0..r1 {
                for col in c0..c1 {
                    let coord = Coord::new(row, col);
                    let cost = field.cost(coord);
                    if best.map_or(true, |(_, b)| cost > b) {
                        best = Some((coord, cost));
                    }
                }
            }
            if let Some((coord, _)) = best {
                candidates.push(coord);
            }
        }
    }
    if candidates.len() > k_target {
        // Highest-cost anchors survive; ties keep raster order.
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            field
                .cost(candidates[b])
                .partial_cmp(&field.cost(candidates[a]))
                .expect("costs are finite")
                .then(candidates[a].cmp(&candidates[b]))
        });
        order.truncate(k_target);
        order.sort_unstable();
        candidates = order.into_iter().map(|i| candidates[i]).collect();
    }
    AnchorSet {
        anchors: traversal_order(&candidates),
        subregion_grid: (gr, gc),
    }
}

/// Greedy nearest-neighbor chain under Chebyshev distance, starting from the
/// raster-smallest anchor; ties prefer raster order.
pub fn traversal_order(anchors: &[Coord]) -> Vec<Coord> {
    if anchors.is_empty() {
        return Vec::new();
    }
    let mut remaining: Vec<Coord> = anchors.to_vec();
    remaining.sort_unstable();
    let mut chain = vec![remaining.remove(0)];
    while !remaining.is_empty() {
        let current = *chain.last().expect("chain is non-empty");
        let mut best = 0usize;
        for i in 1..remaining.len() {
            let (di, db) = (
                current.chebyshev(&remaining[i]),
                current.chebyshev(&remaining[best]),
            );
            if di < db || (di == db && remaining[i] < remaining[best]) {
                best = i;
            }
        }
        chain.push(remaining.remove(best));
    }
    chain
}

/// Greedy path from `from` to `to`: each step moves to the highest-cost
/// neighbor within Chebyshev radius `radius` that strictly decreases the
/// distance to the target (ties → smaller remaining distance, then raster
/// order). A candidate always exists, so the loop terminates in at most
/// `D_cheb(from, to)` steps.
pub fn trace_path(
    field: &StructField,
    from: Coord,
    to: Coord,
    radius: usize,
) -> Result<Vec<Coord>> {
    if from == to {
        return Err(Error::invalid("trace_path", "from equals to"));
    }
    assert!(radius >= 1);
    let (h, w) = (field.height, field.width);
    assert!(from.row < h && from.col < w && to.row < h && to.col < w);
    let mut path = vec![from];
    let mut current = from;
    while current != to {
        let dist = current.chebyshev(&to);
        let r0 = current.row.saturating_sub(radius);
        let r1 = (current.row + radius).min(h - 1);
        let c0 = current.col.saturating_sub(radius);
        let c1 = (current.col + radius).min(w - 1);
        let mut best: Option<(Coord, f64, usize)> = None;
        for row in r0..=r1 {
            for col in c0..=c1 {
                let cand = Coord::new(row, col);
                let cand_dist = cand.chebyshev(&to);
                if cand_dist >= dist {
                    continue;
                }
                let cost = field.cost(cand);
                let better = match best {
                    None => true,
                    Some((bc, bcost, bdist)) => {
                        cost > bcost
                            || (cost == bcost && cand_dist < bdist)
                            || (cost == bcost && cand_dist == bdist && cand < bc)
                    }
                };
                if better {
                    best = Some((cand, cost, cand_dist));
                }
            }
        }
        let (next, _, _) = best.expect("a step toward the target always qualifies");
        path.push(next);
        current = next;
    }
    Ok(path)
}

/// One emitted geometric token.
#[derive(Clone, Debug)]
pub struct GeoToken {
    pub vector: Vec<f32>,
    pub source: Coord,
    pub is_anchor: bool,
}

/// Traced paths between consecutive anchors plus the budgeted, trace-ordered
/// token list.
#[derive(Clone, Debug)]
pub struct TracedPaths {
    pub paths: Vec<Vec<Coord>>,
    pub geo_tokens: Vec<GeoToken>,
}

/// Trace all consecutive anchor pairs (in parallel), concatenate the cells in
/// trace order with first-occurrence deduplication, then enforce the budget:
/// surplus non-anchor cells are dropped in ascending structural cost (ties →
/// raster order); if even the anchors exceed `n_geo`, only the top-`n_geo`
/// anchors by cost survive, with no paths.
pub fn complete_topology(
    grid: &FeatureGrid,
    field: &StructField,
    anchors: &AnchorSet,
    n_geo: usize,
    radius: usize,
) -> TracedPaths {
    let anchor_list = &anchors.anchors;
    if n_geo == 0 || anchor_list.is_empty() {
        return TracedPaths {
            paths: Vec::new(),
            geo_tokens: Vec::new(),
        };
    }

    if n_geo < anchor_list.len() {
        let mut order: Vec<usize> = (0..anchor_list.len()).collect();
        order.sort_by(|&a, &b| {
            field
                .cost(anchor_list[b])
                .partial_cmp(&field.cost(anchor_list[a]))
                .expect("costs are finite")
                .then(anchor_list[a].cmp(&anchor_list[b]))
        });
        order.truncate(n_geo);
        order.sort_unstable(); // keep traversal order among survivors
        let geo_tokens = order
            .into_iter()
            .map(|i| GeoToken {
                vector: grid.feature_at(anchor_list[i]).to_vec(),
                source: anchor_list[i],
                is_anchor: true,
            })
            .collect();
        return TracedPaths {
            paths: Vec::new(),
            geo_tokens,
        };
    }

    let paths: Vec<Vec<Coord>> = anchor_list
        .par_windows(2)
        .map(|pair| trace_path(field, pair[0], pair[1], radius).expect("anchors are distinct"))
        .collect();

    let is_anchor_coord: std::collections::HashSet<Coord> = anchor_list.iter().copied().collect();
    let mut seen = vec![false; field.height * field.width];
    let mut ordered: Vec<(Coord, bool)> = Vec::new();
    let mut push = |coord: Coord, ordered: &mut Vec<(Coord, bool)>| {
        let idx = coord.raster(field.width);
        if !seen[idx] {
            seen[idx] = true;
            ordered.push((coord, is_anchor_coord.contains(&coord)));
        }
    };
    if paths.is_empty() {
        // Single anchor, no pairs to trace.
        push(anchor_list[0], &mut ordered);
    }
    for path in &paths {
        for &coord in path {
            push(coord, &mut ordered);
        }
    }

    if ordered.len() > n_geo {
        let mut surplus = ordered.len() - n_geo;
        // Non-anchor cells by ascending cost, ties raster.
        let mut droppable: Vec<usize> = ordered
            .iter()
            .enumerate()
            .filter(|(_, (_, anchor))| !anchor)
            .map(|(i, _)| i)
            .collect();
        droppable.sort_by(|&a, &b| {
            field
                .cost(ordered[a].0)
                .partial_cmp(&field.cost(ordered[b].0))
                .expect("costs are finite")
                .then(ordered[a].0.cmp(&ordered[b].0))
        });
        let mut drop = vec![false; ordered.len()];
        for &i in &droppable {
            if surplus == 0 {
                break;
            }
            drop[i] = true;
            surplus -= 1;
        }
        ordered = ordered
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !drop[*i])
            .map(|(_, entry)| entry)
            .collect();
    }

    let geo_tokens = ordered
        .into_iter()
        .map(|(coord, is_anchor)| GeoToken {
            vector: grid.feature_at(coord).to_vec(),
            source: coord,
            is_anchor,
        })
        .collect();
    TracedPaths { paths, geo_tokens }
}

//! End-to-end compression: budget allocation → SCSA → IGSR → fusion →
//! unrolling, with the variant switches the ablation matrix needs.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fusion::{self, CompressedSequence, UnrollMode};
use crate::grid::{Coord, FeatureGrid};
use crate::igsr::{self, AnchorSet, GeoToken, StructField};
use crate::router::{allocate_budget, TaskPolicy, TokenBudget};
use crate::scsa::{self, ClusterSet};

/// Budget override used by the single-stream ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamOverride {
    /// All of `n_keep` goes to the semantic stream.
    SemanticOnly,
    /// All of `n_keep` goes to the geometric stream.
    GeometricOnly,
}

/// Pipeline switches; defaults run the full method.
#[derive(Clone, Copy, Debug)]
pub struct PipelineOptions {
    pub budget_override: Option<StreamOverride>,
    /// Replace topology completion with plain top-`n_geo` cost selection.
    pub top_k_selection: bool,
    /// Use the grid's text-similarity signal to modulate the cost field.
    pub use_text_modulation: bool,
    pub unroll_mode: UnrollMode,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            budget_override: None,
            top_k_selection: false,
            use_text_modulation: true,
            unroll_mode: UnrollMode::Topological,
        }
    }
}

/// Everything a caller may want to inspect after a run.
#[derive(Debug)]
pub struct PipelineOutput {
    pub sequence: CompressedSequence,
    pub budget: TokenBudget,
    pub clusters: Option<ClusterSet>,
    pub field: Option<StructField>,
    pub anchors: Option<AnchorSet>,
}

/// Run the dual-stream pipeline on one grid with an explicit policy.
pub fn compress_grid(
    grid: &FeatureGrid,
    policy: &TaskPolicy,
    config: &RunConfig,
    options: &PipelineOptions,
) -> Result<PipelineOutput> {
    let n_max = grid.cells();
    let mut budget = allocate_budget(policy, n_max);
    match options.budget_override {
        Some(StreamOverride::SemanticOnly) => {
            budget.n_sem = budget.n_keep;
            budget.n_geo = 0;
        }
        Some(StreamOverride::GeometricOnly) => {
            budget.n_sem = 0;
            budget.n_geo = budget.n_keep;
        }
        None => {}
    }

    // Semantic stream.
    let scsa_cfg = config.scsa_config();
    let (clusters, sem_tokens) = if budget.n_sem > 0 {
        let attn = resolve_cls_attention(grid)?;
        let tau = scsa::tau_of_lambda(policy.lambda, &scsa_cfg);
        let mut clusters = scsa::cluster_grid(grid, tau)?;
        scsa::score_clusters(&mut clusters, &attn);
        let theta = scsa::theta_of_lambda(policy.lambda, &scsa_cfg);
        let tokens = scsa::represent_clusters(grid, &clusters, &attn, budget.n_sem, theta);
        (Some(clusters), tokens)
    } else {
        (None, Vec::new())
    };

    // Geometric stream.
    let igsr_cfg = config.igsr_config();
    let (field, anchors, geo_tokens) = if budget.n_geo > 0 {
        let s_geo = igsr::local_difference_saliency(grid);
        let s_text = if options.use_text_modulation {
            grid.text_sim().map(|sim| sim.iter().map(|&v| v as f64).collect())
        } else {
            None
        };
        let field =
            igsr::build_struct_field(grid.height(), grid.width(), s_geo, s_text, igsr_cfg.beta)?;
        if options.top_k_selection {
            let tokens = top_cost_tokens(grid, &field, budget.n_geo);
            (Some(field), None, tokens)
        } else {
            let k_target = igsr::default_anchor_count(budget.n_geo, igsr_cfg.min_anchors);
            let anchors = igsr::extract_anchors(&field, k_target);
            let traced = igsr::complete_topology(
                grid,
                &field,
                &anchors,
                budget.n_geo,
                igsr_cfg.neighborhood_radius,
            );
            (Some(field), Some(anchors), traced.geo_tokens)
        }
    } else {
        (None, None, Vec::new())
    };

    let fused = fusion::fuse(sem_tokens, geo_tokens, policy.lambda, policy.rho, n_max);
    let sequence = fusion::unroll(fused, options.unroll_mode);
    Ok(PipelineOutput {
        sequence,
        budget,
        clusters,
        field,
        anchors,
    })
}

/// The grid's attention map, deriving it from `(q_cls, keys)` when that is
/// the provided source.
pub fn resolve_cls_attention(grid: &FeatureGrid) -> Result<Vec<f32>> {
    if let Some(attn) = grid.cls_attn() {
        return Ok(attn.to_vec());
    }
    if let Some(query) = grid.cls_query() {
        return scsa::cls_attention(&query.q_cls, &query.keys, grid.dim());
    }
    Err(Error::invalid(
        "compression input",
        "semantic budget requires cls_attn or (q_cls, keys)",
    ))
}

/// Plain top-K structural selection, no path connection: the highest-cost
/// cells in descending cost order (ties → raster order).
fn top_cost_tokens(grid: &FeatureGrid, field: &StructField, n_geo: usize) -> Vec<GeoToken> {
    let mut order: Vec<usize> = (0..grid.cells()).collect();
    order.sort_by(|&a, &b| {
        field.s_struct[b]
            .partial_cmp(&field.s_struct[a])
            .expect("costs are finite")
            .then(a.cmp(&b))
    });
    order.truncate(n_geo);
    order
        .into_iter()
        .map(|i| GeoToken {
            vector: grid.feature(i).to_vec(),
            source: Coord::from_raster(i, grid.width()),
            is_anchor: false,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::Stream;
    use crate::grid::TokenSource;
    use crate::rng::SplitMix64;

    fn test_grid(seed: u64) -> FeatureGrid {
        let (h, w, d) = (8, 8, 6);
        let mut rng = SplitMix64::new(seed);
        let features: Vec<f32> = (0..h * w * d)
            .map(|_| rng.next_range(-1.0, 1.0) as f32)
            .collect();
        let raw: Vec<f64> = (0..h * w).map(|_| rng.next_f64() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let attn: Vec<f32> = raw.iter().map(|v| (v / total) as f32).collect();
        let sim: Vec<f32> = (0..h * w).map(|_| rng.next_range(-1.0, 1.0) as f32).collect();
        FeatureGrid::new(h, w, d, features)
            .unwrap()
            .with_cls_attn(attn)
            .unwrap()
            .with_text_sim(sim)
            .unwrap()
    }

    #[test]
    fn budget_is_respected_end_to_end() {
        let grid = test_grid(1);
        let config = RunConfig::default();
        for (lambda, rho) in [(0.1, 0.2), (0.5, 0.5), (0.9, 0.1), (0.5, 0.05)] {
            let policy = TaskPolicy { lambda, rho };
            let out = compress_grid(&grid, &policy, &config, &PipelineOptions::default()).unwrap();
            assert!(out.sequence.tokens.len() <= out.budget.n_keep);
            assert_eq!(out.budget.n_sem + out.budget.n_geo, out.budget.n_keep);
        }
    }

    #[test]
    fn no_coordinate_appears_twice() {
        let grid = test_grid(2);
        let config = RunConfig::default();
        let policy = TaskPolicy { lambda: 0.5, rho: 0.5 };
        let out = compress_grid(&grid, &policy, &config, &PipelineOptions::default()).unwrap();
        let mut coords: Vec<Coord> = out
            .sequence
            .tokens
            .iter()
            .filter_map(|t| match t.source {
                TokenSource::Cell(c) => Some(c),
                TokenSource::Cluster(_) => None,
            })
            .collect();
        let before = coords.len();
        coords.sort_unstable();
        coords.dedup();
        assert_eq!(coords.len(), before);
    }

    #[test]
    fn lambda_endpoints_disable_a_stream() {
        let grid = test_grid(3);
        let config = RunConfig::default();
        let sem_only = compress_grid(
            &grid,
            &TaskPolicy { lambda: 0.0, rho: 0.3 },
            &config,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(sem_only.sequence.geometric_count(), 0);
        let geo_only = compress_grid(
            &grid,
            &TaskPolicy { lambda: 1.0, rho: 0.3 },
            &config,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(geo_only.sequence.semantic_count(), 0);
    }

    #[test]
    fn missing_cls_source_is_an_error_only_when_needed() {
        let grid = FeatureGrid::new(4, 4, 3, vec![0.5; 48]).unwrap();
        let config = RunConfig::default();
        let policy = TaskPolicy { lambda: 0.5, rho: 0.5 };
        assert!(compress_grid(&grid, &policy, &config, &PipelineOptions::default()).is_err());
        // Pure geometric budget never touches the attention map.
        let policy = TaskPolicy { lambda: 1.0, rho: 0.5 };
        assert!(compress_grid(&grid, &policy, &config, &PipelineOptions::default()).is_ok());
    }

    #[test]
    fn top_k_variant_emits_descending_cost_cells() {
        let grid = test_grid(4);
        let config = RunConfig::default();
        let policy = TaskPolicy { lambda: 0.9, rho: 0.2 };
        let options = PipelineOptions {
            top_k_selection: true,
            ..Default::default()
        };
        let out = compress_grid(&grid, &policy, &config, &options).unwrap();
        let field = out.field.as_ref().unwrap();
        let costs: Vec<f64> = out
            .sequence
            .tokens
            .iter()
            .filter(|t| t.stream == Stream::Geometric)
            .map(|t| match t.source {
                TokenSource::Cell(c) => field.cost(c),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(costs.len(), out.budget.n_geo);
        for pair in costs.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
        assert!(out.anchors.is_none());
    }

    #[test]
    fn stream_overrides_route_the_whole_budget() {
        let grid = test_grid(5);
        let config = RunConfig::default();
        let policy = TaskPolicy { lambda: 0.5, rho: 0.25 };
        let sem = compress_grid(
            &grid,
            &policy,
            &config,
            &PipelineOptions {
                budget_override: Some(StreamOverride::SemanticOnly),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sem.budget.n_geo, 0);
        assert_eq!(sem.sequence.geometric_count(), 0);
        let geo = compress_grid(
            &grid,
            &policy,
            &config,
            &PipelineOptions {
                budget_override: Some(StreamOverride::GeometricOnly),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(geo.budget.n_sem, 0);
        assert_eq!(geo.sequence.semantic_count(), 0);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let grid = test_grid(6);
        let config = RunConfig::default();
        let policy = TaskPolicy { lambda: 0.7, rho: 0.15 };
        let run = || {
            let out = compress_grid(&grid, &policy, &config, &PipelineOptions::default()).unwrap();
            out.sequence
                .tokens
                .iter()
                .map(|t| (t.source, t.vector.clone()))
                .collect::<Vec<_>>()
        };
        let baseline = run();
        for threads in [1, 2, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let result = pool.install(run);
            assert_eq!(result, baseline, "differs at {threads} threads");
        }
    }
}

//! λ-weighted dual-stream fusion and sequence unrolling.
//!
//! The fused sequence is the semantic block followed by the geometric block.
//! Each token keeps its stream-content vector verbatim together with its
//! weight ((1−λ) for semantic, λ for geometric); the weighted view consumed
//! downstream is `weight · vector`, exposed by [`FusedToken::weighted_vector`]
//! and applied at serialization, so content always divides back exactly.

use std::collections::HashSet;
use std::str::FromStr;

use crate::error::Error;
use crate::grid::{Coord, TokenSource};
use crate::igsr::GeoToken;
use crate::scsa::SemanticToken;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Semantic,
    Geometric,
}

/// Geometric-block ordering for the emitted sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UnrollMode {
    /// Trace order: sequence adjacency mirrors spatial connectivity.
    #[default]
    Topological,
    /// Original raster-index order (the ablation variant).
    IndexReorder,
}

impl FromStr for UnrollMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "topological" => Ok(Self::Topological),
            "index_reorder" => Ok(Self::IndexReorder),
            other => Err(Error::Config(format!("unknown unroll mode {other:?}"))),
        }
    }
}

impl UnrollMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Topological => "topological",
            Self::IndexReorder => "index_reorder",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FusedToken {
    /// Stream-content vector, an exact copy from the producing stream.
    pub vector: Vec<f32>,
    /// (1−λ) for semantic tokens, λ for geometric tokens.
    pub weight: f64,
    pub stream: Stream,
    pub source: TokenSource,
    pub is_anchor: bool,
}

impl FusedToken {
    /// The λ-scaled view fed to the host model.
    pub fn weighted_vector(&self) -> Vec<f32> {
        self.vector
            .iter()
            .map(|&v| (v as f64 * self.weight) as f32)
            .collect()
    }
}

/// Final compressed sequence with its policy metadata.
#[derive(Clone, Debug)]
pub struct CompressedSequence {
    pub tokens: Vec<FusedToken>,
    pub lambda_used: f64,
    pub rho_used: f64,
    pub n_max: usize,
}

impl CompressedSequence {
    pub fn semantic_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| t.stream == Stream::Semantic)
            .count()
    }

    pub fn geometric_count(&self) -> usize {
        self.tokens.len() - self.semantic_count()
    }
}

/// Concatenate the streams as `[(1−λ)·T_sem…, λ·T_geo…]`. A cell selected by
/// both streams keeps the geometric instance (trace order stays intact) and
/// the freed semantic slot is not refilled.
pub fn fuse(
    sem: Vec<SemanticToken>,
    geo: Vec<GeoToken>,
    lambda: f64,
    rho: f64,
    n_max: usize,
) -> CompressedSequence {
    assert!((0.0..=1.0).contains(&lambda), "lambda outside [0,1]");
    assert!(
        sem.is_empty() || 1.0 - lambda > 0.0,
        "semantic tokens with zero weight (lambda = 1)"
    );
    assert!(
        geo.is_empty() || lambda > 0.0,
        "geometric tokens with zero weight (lambda = 0)"
    );

    let geo_cells: HashSet<Coord> = geo.iter().map(|t| t.source).collect();
    let mut tokens = Vec::with_capacity(sem.len() + geo.len());
    for token in sem {
        if let TokenSource::Cell(coord) = token.source {
            if geo_cells.contains(&coord) {
                continue;
            }
        }
        tokens.push(FusedToken {
            vector: token.vector,
            weight: 1.0 - lambda,
            stream: Stream::Semantic,
            source: token.source,
            is_anchor: false,
        });
    }
    for token in geo {
        tokens.push(FusedToken {
            vector: token.vector,
            weight: lambda,
            stream: Stream::Geometric,
            source: TokenSource::Cell(token.source),
            is_anchor: token.is_anchor,
        });
    }
    CompressedSequence {
        tokens,
        lambda_used: lambda,
        rho_used: rho,
        n_max,
    }
}

/// Reorder the geometric block. `Topological` keeps trace order (identity on
/// a fresh [`fuse`] output); `IndexReorder` sorts geometric tokens by their
/// original raster index. The semantic block and the token multiset are
/// unchanged either way.
pub fn unroll(mut seq: CompressedSequence, mode: UnrollMode) -> CompressedSequence {
    if mode == UnrollMode::IndexReorder {
        let split = seq
            .tokens
            .iter()
            .position(|t| t.stream == Stream::Geometric)
            .unwrap_or(seq.tokens.len());
        seq.tokens[split..].sort_by_key(|t| match t.source {
            TokenSource::Cell(c) => (c.row, c.col),
            TokenSource::Cluster(id) => (usize::MAX, id),
        });
    }
    seq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scsa::TokenKind;

    fn sem_token(vector: Vec<f32>, coord: Coord, importance: f64) -> SemanticToken {
        SemanticToken {
            vector,
            source: TokenSource::Cell(coord),
            kind: TokenKind::KeptOriginal,
            importance,
        }
    }

    fn geo_token(vector: Vec<f32>, coord: Coord) -> GeoToken {
        GeoToken {
            vector,
            source: coord,
            is_anchor: false,
        }
    }

    #[test]
    fn semantic_block_precedes_geometric() {
        let seq = fuse(
            vec![
                sem_token(vec![1.0], Coord::new(0, 0), 0.9),
                sem_token(vec![2.0], Coord::new(0, 1), 0.5),
                sem_token(vec![3.0], Coord::new(0, 2), 0.1),
            ],
            vec![
                geo_token(vec![4.0], Coord::new(1, 0)),
                geo_token(vec![5.0], Coord::new(1, 1)),
            ],
            0.5,
            0.5,
            16,
        );
        assert_eq!(seq.tokens.len(), 5);
        assert!(seq.tokens[..3].iter().all(|t| t.stream == Stream::Semantic));
        assert!(seq.tokens[3..].iter().all(|t| t.stream == Stream::Geometric));
        for token in &seq.tokens {
            assert_eq!(token.weight, 0.5);
            assert_eq!(token.weighted_vector()[0], token.vector[0] * 0.5);
        }
    }

    #[test]
    fn endpoint_weights_leave_vectors_unscaled() {
        let seq = fuse(
            vec![sem_token(vec![2.0], Coord::new(0, 0), 1.0)],
            vec![],
            0.0,
            0.3,
            4,
        );
        assert_eq!(seq.tokens[0].weighted_vector(), vec![2.0]);

        let seq = fuse(
            vec![],
            vec![geo_token(vec![7.0], Coord::new(0, 1))],
            1.0,
            0.3,
            4,
        );
        assert_eq!(seq.tokens[0].weighted_vector(), vec![7.0]);
    }

    #[test]
    fn duplicate_coordinate_keeps_geometric_instance() {
        let shared = Coord::new(1, 1);
        let seq = fuse(
            vec![
                sem_token(vec![1.0], shared, 0.9),
                sem_token(vec![2.0], Coord::new(0, 0), 0.4),
            ],
            vec![geo_token(vec![9.0], shared)],
            0.5,
            0.5,
            9,
        );
        assert_eq!(seq.tokens.len(), 2);
        let survivors: Vec<_> = seq
            .tokens
            .iter()
            .filter(|t| t.source == TokenSource::Cell(shared))
            .collect();
        assert_eq!(survivors.len(), 1);
        assert_eq!(survivors[0].stream, Stream::Geometric);
        assert_eq!(survivors[0].vector, vec![9.0]);
    }

    #[test]
    fn content_vectors_survive_fusion_exactly() {
        let sem_vec = vec![0.3f32, -0.7, 0.123];
        let geo_vec = vec![1.5f32, 2.5, -3.5];
        let seq = fuse(
            vec![sem_token(sem_vec.clone(), Coord::new(0, 0), 1.0)],
            vec![geo_token(geo_vec.clone(), Coord::new(2, 2))],
            0.37,
            0.5,
            16,
        );
        assert_eq!(seq.tokens[0].vector, sem_vec);
        assert_eq!(seq.tokens[1].vector, geo_vec);
    }

    #[test]
    #[should_panic(expected = "zero weight")]
    fn zero_weight_stream_is_a_bug() {
        fuse(
            vec![],
            vec![geo_token(vec![1.0], Coord::new(0, 0))],
            0.0,
            0.5,
            4,
        );
    }

    #[test]
    fn unroll_modes_permute_geometric_block() {
        let traced = vec![
            geo_token(vec![1.0], Coord::new(2, 2)),
            geo_token(vec![2.0], Coord::new(1, 1)),
            geo_token(vec![3.0], Coord::new(0, 0)),
        ];
        let seq = fuse(vec![], traced, 1.0, 0.5, 9);
        let topo = unroll(seq.clone(), UnrollMode::Topological);
        let coords = |s: &CompressedSequence| -> Vec<Coord> {
            s.tokens
                .iter()
                .map(|t| match t.source {
                    TokenSource::Cell(c) => c,
                    _ => unreachable!(),
                })
                .collect()
        };
        assert_eq!(
            coords(&topo),
            vec![Coord::new(2, 2), Coord::new(1, 1), Coord::new(0, 0)]
        );
        let reordered = unroll(seq, UnrollMode::IndexReorder);
        assert_eq!(
            coords(&reordered),
            vec![Coord::new(0, 0), Coord::new(1, 1), Coord::new(2, 2)]
        );
        let mut a = coords(&topo);
        let mut b = coords(&reordered);
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_unroll_mode_rejected() {
        assert!("topological".parse::<UnrollMode>().is_ok());
        assert!("index_reorder".parse::<UnrollMode>().is_ok());
        assert!("zigzag".parse::<UnrollMode>().is_err());
    }
}

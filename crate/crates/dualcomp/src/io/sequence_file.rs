//! Compressed-sequence file ("DCSQ").
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic    4 bytes  "DCSQ"
//! version  u16      currently 1
//! flags    u16      bit0: vectors are λ-weighted (the scaling toggle)
//! lambda   f64
//! rho      f64
//! n_max    u32
//! d        u32
//! count    u32
//! tokens   count × { kind u8 (0 cell, 1 cluster), a u32, b u32,
//!                    stream u8 (0 semantic, 1 geometric), anchor u8,
//!                    weight f64, vector d × f32 }
//! ```
//!
//! For cell-sourced tokens `(a, b)` is `(row, col)`; for cluster summaries it
//! is `(cluster_id, 0)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{CompressedSequence, Stream};
use crate::grid::{Coord, TokenSource};
use crate::io::{atomic_write, ByteReader};

pub const SEQUENCE_MAGIC: [u8; 4] = *b"DCSQ";
pub const SEQUENCE_VERSION: u16 = 1;

const FLAG_SCALED: u16 = 1 << 0;

/// One token as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceFileToken {
    pub source: TokenSource,
    pub stream: Stream,
    pub is_anchor: bool,
    pub weight: f64,
    pub vector: Vec<f32>,
}

/// A sequence file's contents (vectors as written, weighted or not).
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceFile {
    pub scaled: bool,
    pub lambda: f64,
    pub rho: f64,
    pub n_max: u32,
    pub dim: u32,
    pub tokens: Vec<SequenceFileToken>,
}

pub fn parse_sequence(data: &[u8]) -> Result<SequenceFile> {
    let mut reader = ByteReader::new(data, "sequence file");
    reader.magic(&SEQUENCE_MAGIC)?;
    let version = reader.u16()?;
    if version != SEQUENCE_VERSION {
        return Err(Error::BadVersion {
            got: version,
            supported: SEQUENCE_VERSION,
        });
    }
    let flags = reader.u16()?;
    if flags & !FLAG_SCALED != 0 {
        return Err(Error::FlagConflict("unknown sequence flag bits set"));
    }
    let lambda = reader.f64()?;
    let rho = reader.f64()?;
    if !(0.0..=1.0).contains(&lambda) || !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(
            "sequence file",
            format!("policy ({lambda}, {rho}) out of range"),
        ));
    }
    let n_max = reader.u32()?;
    let dim = reader.u32()? as u64;
    let count = reader.u32()? as u64;
    let token_bytes = dim
        .checked_mul(4)
        .and_then(|v| v.checked_add(1 + 4 + 4 + 1 + 1 + 8))
        .and_then(|v| v.checked_mul(count))
        .ok_or_else(|| Error::invalid("sequence file", "declared size overflows"))?;
    let header = 4 + 2 + 2 + 8 + 8 + 4 + 4 + 4u64;
    reader.require_total(header + token_bytes)?;

    let mut tokens = Vec::with_capacity(count as usize);
    for index in 0..count {
        let kind = reader.u8()?;
        let a = reader.u32()? as usize;
        let b = reader.u32()? as usize;
        let source = match kind {
            0 => TokenSource::Cell(Coord::new(a, b)),
            1 => TokenSource::Cluster(a),
            other => {
                return Err(Error::invalid(
                    "sequence file",
                    format!("token {index}: unknown source kind {other}"),
                ))
            }
        };
        let stream = match reader.u8()? {
            0 => Stream::Semantic,
            1 => Stream::Geometric,
            other => {
                return Err(Error::invalid(
                    "sequence file",
                    format!("token {index}: unknown stream {other}"),
                ))
            }
        };
        let is_anchor = match reader.u8()? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::invalid(
                    "sequence file",
                    format!("token {index}: bad anchor flag {other}"),
                ))
            }
        };
        let weight = reader.f64()?;
        if !weight.is_finite() {
            return Err(Error::NonFinite {
                what: "sequence weight",
                index: index as usize,
            });
        }
        let vector = reader.f32_vec(dim as usize)?;
        if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "sequence vector",
                index: i,
            });
        }
        tokens.push(SequenceFileToken {
            source,
            stream,
            is_anchor,
            weight,
            vector,
        });
    }
    reader.expect_end()?;
    Ok(SequenceFile {
        scaled: flags & FLAG_SCALED != 0,
        lambda,
        rho,
        n_max,
        dim: dim as u32,
        tokens,
    })
}

/// Encode a fused sequence; `scale` picks whether vectors go out λ-weighted.
pub fn encode_sequence(seq: &CompressedSequence, dim: usize, scale: bool) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&SEQUENCE_MAGIC);
    out.extend_from_slice(&SEQUENCE_VERSION.to_le_bytes());
    out.extend_from_slice(&(if scale { FLAG_SCALED } else { 0 }).to_le_bytes());
    out.extend_from_slice(&seq.lambda_used.to_le_bytes());
    out.extend_from_slice(&seq.rho_used.to_le_bytes());
    out.extend_from_slice(&(seq.n_max as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(seq.tokens.len() as u32).to_le_bytes());
    for token in &seq.tokens {
        let (kind, a, b) = match token.source {
            TokenSource::Cell(c) => (0u8, c.row as u32, c.col as u32),
            TokenSource::Cluster(id) => (1u8, id as u32, 0u32),
        };
        out.push(kind);
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
        out.push(match token.stream {
            Stream::Semantic => 0,
            Stream::Geometric => 1,
        });
        out.push(token.is_anchor as u8);
        out.extend_from_slice(&token.weight.to_le_bytes());
        let vector = if scale {
            token.weighted_vector()
        } else {
            token.vector.clone()
        };
        debug_assert_eq!(vector.len(), dim);
        for v in vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_sequence(path: &Path) -> Result<SequenceFile> {
    parse_sequence(&std::fs::read(path)?)
}

pub fn write_sequence(
    seq: &CompressedSequence,
    dim: usize,
    scale: bool,
    path: &Path,
) -> Result<()> {
    atomic_write(path, &encode_sequence(seq, dim, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusedToken;

    fn sample_sequence() -> CompressedSequence {
        CompressedSequence {
            tokens: vec![
                FusedToken {
                    vector: vec![1.0, 2.0],
                    weight: 0.7,
                    stream: Stream::Semantic,
                    source: TokenSource::Cluster(3),
                    is_anchor: false,
                },
                FusedToken {
                    vector: vec![-1.0, 0.5],
                    weight: 0.3,
                    stream: Stream::Geometric,
                    source: TokenSource::Cell(Coord::new(2, 5)),
                    is_anchor: true,
                },
            ],
            lambda_used: 0.3,
            rho_used: 0.25,
            n_max: 16,
        }
    }

    #[test]
    fn round_trip_preserves_tokens() {
        let seq = sample_sequence();
        for scale in [false, true] {
            let bytes = encode_sequence(&seq, 2, scale);
            let file = parse_sequence(&bytes).unwrap();
            assert_eq!(file.scaled, scale);
            assert_eq!(file.tokens.len(), 2);
            assert_eq!(file.tokens[1].source, TokenSource::Cell(Coord::new(2, 5)));
            assert!(file.tokens[1].is_anchor);
            if !scale {
                assert_eq!(file.tokens[0].vector, vec![1.0, 2.0]);
            } else {
                assert_eq!(file.tokens[0].vector, seq.tokens[0].weighted_vector());
            }
        }
    }

    #[test]
    fn malformed_sequence_rejected() {
        let bytes = encode_sequence(&sample_sequence(), 2, false);
        assert!(parse_sequence(&bytes[..bytes.len() - 2]).is_err());
        let mut bad_stream = bytes.clone();
        // First token's stream byte: header(36) + kind(1) + a(4) + b(4).
        bad_stream[36 + 9] = 9;
        assert!(parse_sequence(&bad_stream).is_err());
    }
}

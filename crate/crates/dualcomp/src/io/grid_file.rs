//! Feature-grid file ("FGRD").
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic    4 bytes  "FGRD"
//! version  u16      currently 1
//! flags    u16      bit0 cls_attn, bit1 text_sim, bit2 q_cls+keys
//! h, w, d  u32 each
//! features h·w·d f32, row-major
//! cls_attn h·w f32            (flag bit0)
//! text_sim h·w f32            (flag bit1)
//! q_cls    d f32              (flag bit2)
//! keys     h·w·d f32          (flag bit2)
//! ```
//!
//! Declared payload sizes must match the file length exactly; bit0 and bit2
//! are mutually exclusive attention sources.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{ClsQuery, FeatureGrid};
use crate::io::{atomic_write, ByteReader};

pub const GRID_MAGIC: [u8; 4] = *b"FGRD";
pub const GRID_VERSION: u16 = 1;

const FLAG_CLS_ATTN: u16 = 1 << 0;
const FLAG_TEXT_SIM: u16 = 1 << 1;
const FLAG_CLS_QUERY: u16 = 1 << 2;
const KNOWN_FLAGS: u16 = FLAG_CLS_ATTN | FLAG_TEXT_SIM | FLAG_CLS_QUERY;

/// Parse a grid from raw bytes. Safe on arbitrary input: sizes are validated
/// before any payload allocation.
pub fn parse_grid(data: &[u8]) -> Result<FeatureGrid> {
    let mut reader = ByteReader::new(data, "grid file");
    reader.magic(&GRID_MAGIC)?;
    let version = reader.u16()?;
    if version != GRID_VERSION {
        return Err(Error::BadVersion {
            got: version,
            supported: GRID_VERSION,
        });
    }
    let flags = reader.u16()?;
    if flags & !KNOWN_FLAGS != 0 {
        return Err(Error::FlagConflict("unknown grid flag bits set"));
    }
    if flags & FLAG_CLS_ATTN != 0 && flags & FLAG_CLS_QUERY != 0 {
        return Err(Error::FlagConflict(
            "cls_attn and cls_query flags are mutually exclusive",
        ));
    }
    let h = reader.u32()? as u64;
    let w = reader.u32()? as u64;
    let d = reader.u32()? as u64;

    let cells = h.checked_mul(w);
    let feature_count = cells.and_then(|c| c.checked_mul(d));
    let mut payload = feature_count;
    if flags & FLAG_CLS_ATTN != 0 {
        payload = payload.zip(cells).and_then(|(p, c)| p.checked_add(c));
    }
    if flags & FLAG_TEXT_SIM != 0 {
        payload = payload.zip(cells).and_then(|(p, c)| p.checked_add(c));
    }
    if flags & FLAG_CLS_QUERY != 0 {
        payload = payload
            .and_then(|p| p.checked_add(d))
            .zip(feature_count)
            .and_then(|(p, f)| p.checked_add(f));
    }
    let payload = payload
        .and_then(|p| p.checked_mul(4))
        .ok_or_else(|| Error::invalid("grid file", "declared payload size overflows"))?;
    let header = 4 + 2 + 2 + 12u64;
    reader.require_total(header + payload)?;

    let (h, w, d) = (h as usize, w as usize, d as usize);
    let features = reader.f32_vec(h * w * d)?;
    let mut grid = FeatureGrid::new(h, w, d, features)?;
    if flags & FLAG_CLS_ATTN != 0 {
        grid = grid.with_cls_attn(reader.f32_vec(h * w)?)?;
    }
    if flags & FLAG_TEXT_SIM != 0 {
        grid = grid.with_text_sim(reader.f32_vec(h * w)?)?;
    }
    if flags & FLAG_CLS_QUERY != 0 {
        let q_cls = reader.f32_vec(d)?;
        let keys = reader.f32_vec(h * w * d)?;
        grid = grid.with_cls_query(ClsQuery { q_cls, keys })?;
    }
    reader.expect_end()?;
    Ok(grid)
}

pub fn encode_grid(grid: &FeatureGrid) -> Vec<u8> {
    let mut flags = 0u16;
    if grid.cls_attn().is_some() {
        flags |= FLAG_CLS_ATTN;
    }
    if grid.text_sim().is_some() {
        flags |= FLAG_TEXT_SIM;
    }
    if grid.cls_query().is_some() {
        flags |= FLAG_CLS_QUERY;
    }
    let mut out = Vec::with_capacity(20 + grid.features().len() * 4);
    out.extend_from_slice(&GRID_MAGIC);
    out.extend_from_slice(&GRID_VERSION.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    let push = |out: &mut Vec<u8>, values: &[f32]| {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    push(&mut out, grid.features());
    if let Some(attn) = grid.cls_attn() {
        push(&mut out, attn);
    }
    if let Some(sim) = grid.text_sim() {
        push(&mut out, sim);
    }
    if let Some(query) = grid.cls_query() {
        push(&mut out, &query.q_cls);
        push(&mut out, &query.keys);
    }
    out
}

pub fn read_grid(path: &Path) -> Result<FeatureGrid> {
    parse_grid(&std::fs::read(path)?)
}

pub fn write_grid(grid: &FeatureGrid, path: &Path) -> Result<()> {
    atomic_write(path, &encode_grid(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_grid(seed: u64, with_attn: bool, with_text: bool, with_query: bool) -> FeatureGrid {
        let mut rng = SplitMix64::new(seed);
        let (h, w, d) = (3 + rng.next_usize(4), 3 + rng.next_usize(4), 2 + rng.next_usize(6));
        let features = (0..h * w * d)
            .map(|_| rng.next_range(-1.0, 1.0) as f32)
            .collect();
        let mut grid = FeatureGrid::new(h, w, d, features).unwrap();
        if with_attn {
            let raw: Vec<f64> = (0..h * w).map(|_| rng.next_f64() + 0.01).collect();
            let total: f64 = raw.iter().sum();
            grid = grid
                .with_cls_attn(raw.iter().map(|v| (v / total) as f32).collect())
                .unwrap();
        }
        if with_text {
            grid = grid
                .with_text_sim((0..h * w).map(|_| rng.next_range(-1.0, 1.0) as f32).collect())
                .unwrap();
        }
        if with_query && !with_attn {
            grid = grid
                .with_cls_query(ClsQuery {
                    q_cls: (0..d).map(|_| rng.next_range(-1.0, 1.0) as f32).collect(),
                    keys: (0..h * w * d).map(|_| rng.next_range(-1.0, 1.0) as f32).collect(),
                })
                .unwrap();
        }
        grid
    }

    #[test]
    fn round_trip_is_bitwise_identity() {
        for seed in 0..16 {
            let grid = random_grid(
                seed,
                seed % 3 == 0,
                seed % 2 == 0,
                seed % 3 == 1,
            );
            let bytes = encode_grid(&grid);
            let reread = parse_grid(&bytes).unwrap();
            assert_eq!(encode_grid(&reread), bytes);
            assert_eq!(reread, grid);
        }
    }

    #[test]
    fn truncation_names_expected_vs_actual() {
        let bytes = encode_grid(&random_grid(1, true, false, false));
        let err = parse_grid(&bytes[..bytes.len() - 3]).unwrap_err();
        match err {
            Error::SizeMismatch { expected, actual, .. } => {
                assert_eq!(expected, bytes.len() as u64);
                assert_eq!(actual, bytes.len() as u64 - 3);
            }
            other => panic!("expected SizeMismatch, got {other}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_grid(&random_grid(2, false, false, false));
        bytes.push(0);
        assert!(matches!(
            parse_grid(&bytes),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode_grid(&random_grid(3, false, false, false));
        bytes[0] = b'X';
        assert!(matches!(parse_grid(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn exclusive_flags_rejected() {
        let mut bytes = encode_grid(&random_grid(4, true, false, false));
        bytes[6] |= 0b100; // set cls_query alongside cls_attn
        assert!(matches!(parse_grid(&bytes), Err(Error::FlagConflict(_))));
    }

    #[test]
    fn unknown_flags_rejected() {
        let mut bytes = encode_grid(&random_grid(5, false, false, false));
        bytes[6] |= 0b1000;
        assert!(matches!(parse_grid(&bytes), Err(Error::FlagConflict(_))));
    }

    #[test]
    fn absurd_dims_fail_before_allocating() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&GRID_MAGIC);
        bytes.extend_from_slice(&GRID_VERSION.to_le_bytes());
        bytes.extend_from_slice(&0u16.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(parse_grid(&bytes).is_err());
    }
}

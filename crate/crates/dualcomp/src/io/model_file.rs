//! Router model file ("DCRT").
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic    4 bytes  "DCRT"
//! version  u16      currently 1
//! rho_min  f64
//! dims     3 × u32  input, hidden1, hidden2 (head width is fixed at 1)
//! layer1   hidden1·input f64 weights (out×in row-major), hidden1 f64 bias
//! layer2   hidden2·hidden1 f64 weights, hidden2 f64 bias
//! head_λ   hidden2 f64 weights, 1 f64 bias
//! head_ρ   hidden2 f64 weights, 1 f64 bias
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{atomic_write, ByteReader};
use crate::router::{DenseLayer, RouterDims, RouterModel};

pub const MODEL_MAGIC: [u8; 4] = *b"DCRT";
pub const MODEL_VERSION: u16 = 1;

pub fn parse_model(data: &[u8]) -> Result<RouterModel> {
    let mut reader = ByteReader::new(data, "model file");
    reader.magic(&MODEL_MAGIC)?;
    let version = reader.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::BadVersion {
            got: version,
            supported: MODEL_VERSION,
        });
    }
    let rho_min = reader.f64()?;
    if !(rho_min > 0.0 && rho_min < 1.0) {
        return Err(Error::invalid(
            "model file",
            format!("rho_min {rho_min} outside (0,1)"),
        ));
    }
    let input = reader.u32()? as u64;
    let hidden1 = reader.u32()? as u64;
    let hidden2 = reader.u32()? as u64;
    if input == 0 || hidden1 == 0 || hidden2 == 0 {
        return Err(Error::invalid("model file", "zero layer dimension"));
    }
    let params = input
        .checked_mul(hidden1)
        .and_then(|p| p.checked_add(hidden1))
        .and_then(|p| p.checked_add(hidden1.checked_mul(hidden2)?))
        .and_then(|p| p.checked_add(hidden2))
        .and_then(|p| p.checked_add(2 * hidden2 + 2))
        .ok_or_else(|| Error::invalid("model file", "declared size overflows"))?;
    let header = 4 + 2 + 8 + 12u64;
    let expected = header
        .checked_add(params.checked_mul(8).ok_or_else(|| {
            Error::invalid("model file", "declared size overflows")
        })?)
        .ok_or_else(|| Error::invalid("model file", "declared size overflows"))?;
    reader.require_total(expected)?;

    let dims = RouterDims {
        input: input as usize,
        hidden1: hidden1 as usize,
        hidden2: hidden2 as usize,
    };
    let mut layer = |in_dim: usize, out_dim: usize| -> Result<DenseLayer> {
        Ok(DenseLayer {
            weights: reader.f64_vec(in_dim * out_dim)?,
            bias: reader.f64_vec(out_dim)?,
            in_dim,
            out_dim,
        })
    };
    let layer1 = layer(dims.input, dims.hidden1)?;
    let layer2 = layer(dims.hidden1, dims.hidden2)?;
    let head_lambda = layer(dims.hidden2, 1)?;
    let head_rho = layer(dims.hidden2, 1)?;
    reader.expect_end()?;

    let model = RouterModel {
        dims,
        rho_min,
        layer1,
        layer2,
        head_lambda,
        head_rho,
    };
    for layer in [&model.layer1, &model.layer2, &model.head_lambda, &model.head_rho] {
        if let Some(index) = layer
            .weights
            .iter()
            .chain(&layer.bias)
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                what: "model weights",
                index,
            });
        }
    }
    Ok(model)
}

pub fn encode_model(model: &RouterModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(26 + model.param_count() * 8);
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&model.rho_min.to_le_bytes());
    out.extend_from_slice(&(model.dims.input as u32).to_le_bytes());
    out.extend_from_slice(&(model.dims.hidden1 as u32).to_le_bytes());
    out.extend_from_slice(&(model.dims.hidden2 as u32).to_le_bytes());
    for layer in [&model.layer1, &model.layer2, &model.head_lambda, &model.head_rho] {
        for v in layer.weights.iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_model(path: &Path) -> Result<RouterModel> {
    parse_model(&std::fs::read(path)?)
}

pub fn write_model(model: &RouterModel, path: &Path) -> Result<()> {
    atomic_write(path, &encode_model(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model(seed: u64) -> RouterModel {
        RouterModel::init(
            RouterDims {
                input: 6,
                hidden1: 5,
                hidden2: 4,
            },
            0.02,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise_identity() {
        let model = small_model(11);
        let bytes = encode_model(&model);
        let reread = parse_model(&bytes).unwrap();
        assert_eq!(reread, model);
        assert_eq!(encode_model(&reread), bytes);
    }

    #[test]
    fn truncated_model_rejected() {
        let bytes = encode_model(&small_model(3));
        assert!(matches!(
            parse_model(&bytes[..bytes.len() - 1]),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn bad_rho_min_rejected() {
        let model = small_model(5);
        let mut bytes = encode_model(&model);
        bytes[6..14].copy_from_slice(&2.0f64.to_le_bytes());
        assert!(parse_model(&bytes).is_err());
    }

    #[test]
    fn non_finite_weights_rejected() {
        let mut model = small_model(7);
        model.layer2.weights[3] = f64::NAN;
        let bytes = encode_model(&model);
        assert!(matches!(
            parse_model(&bytes),
            Err(Error::NonFinite { .. })
        ));
    }
}

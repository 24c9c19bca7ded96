//! Dense H×W patch-token grids — the unit of compression.

use crate::error::{Error, Result};

/// Grid cell coordinate, row-major raster order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn raster(&self, width: usize) -> usize {
        self.row * width + self.col
    }

    pub fn from_raster(index: usize, width: usize) -> Self {
        Self {
            row: index / width,
            col: index % width,
        }
    }

    /// Chebyshev distance: max of absolute row and column differences.
    pub fn chebyshev(&self, other: &Coord) -> usize {
        let dr = self.row.abs_diff(other.row);
        let dc = self.col.abs_diff(other.col);
        dr.max(dc)
    }
}

/// Where a retained token came from: a single grid cell or a whole cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenSource {
    Cell(Coord),
    Cluster(usize),
}

/// Raw attention inputs for deriving a CLS attention map on load.
#[derive(Clone, Debug, PartialEq)]
pub struct ClsQuery {
    /// Global query vector, length D.
    pub q_cls: Vec<f32>,
    /// Per-cell key vectors, H·W × D row-major.
    pub keys: Vec<f32>,
}

/// H×W grid of D-dimensional patch features with optional attention inputs.
///
/// Invariants enforced at construction: every value finite; `cls_attn`, when
/// present, is nonnegative and sums to 1 within 1e-5; `cls_attn` and
/// `cls_query` are mutually exclusive sources for the attention map.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    dim: usize,
    features: Vec<f32>,
    cls_attn: Option<Vec<f32>>,
    text_sim: Option<Vec<f32>>,
    cls_query: Option<ClsQuery>,
}

pub const CLS_ATTN_SUM_TOL: f64 = 1e-5;

fn check_finite(what: &'static str, values: &[f32]) -> Result<()> {
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what, index });
    }
    Ok(())
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, dim: usize, features: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(Error::invalid(
                "feature grid",
                format!("degenerate shape {height}x{width}x{dim}"),
            ));
        }
        let expected = height * width * dim;
        if features.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "features",
                expected,
                got: features.len(),
            });
        }
        check_finite("features", &features)?;
        Ok(Self {
            height,
            width,
            dim,
            features,
            cls_attn: None,
            text_sim: None,
            cls_query: None,
        })
    }

    pub fn with_cls_attn(mut self, cls_attn: Vec<f32>) -> Result<Self> {
        if self.cls_query.is_some() {
            return Err(Error::FlagConflict(
                "cls_attn and cls_query are mutually exclusive",
            ));
        }
        self.validate_cls_attn(&cls_attn)?;
        self.cls_attn = Some(cls_attn);
        Ok(self)
    }

    pub fn with_text_sim(mut self, text_sim: Vec<f32>) -> Result<Self> {
        if text_sim.len() != self.cells() {
            return Err(Error::DimensionMismatch {
                what: "text_sim",
                expected: self.cells(),
                got: text_sim.len(),
            });
        }
        check_finite("text_sim", &text_sim)?;
        self.text_sim = Some(text_sim);
        Ok(self)
    }

    pub fn with_cls_query(mut self, query: ClsQuery) -> Result<Self> {
        if self.cls_attn.is_some() {
            return Err(Error::FlagConflict(
                "cls_attn and cls_query are mutually exclusive",
            ));
        }
        if query.q_cls.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "q_cls",
                expected: self.dim,
                got: query.q_cls.len(),
            });
        }
        if query.keys.len() != self.cells() * self.dim {
            return Err(Error::DimensionMismatch {
                what: "keys",
                expected: self.cells() * self.dim,
                got: query.keys.len(),
            });
        }
        check_finite("q_cls", &query.q_cls)?;
        check_finite("keys", &query.keys)?;
        self.cls_query = Some(query);
        Ok(self)
    }

    fn validate_cls_attn(&self, cls_attn: &[f32]) -> Result<()> {
        if cls_attn.len() != self.cells() {
            return Err(Error::DimensionMismatch {
                what: "cls_attn",
                expected: self.cells(),
                got: cls_attn.len(),
            });
        }
        check_finite("cls_attn", cls_attn)?;
        if let Some(index) = cls_attn.iter().position(|&v| v < 0.0) {
            return Err(Error::invalid(
                "cls_attn",
                format!("negative attention at cell {index}"),
            ));
        }
        let sum: f64 = cls_attn.iter().map(|&v| v as f64).sum();
        if (sum - 1.0).abs() >= CLS_ATTN_SUM_TOL {
            return Err(Error::invalid(
                "cls_attn",
                format!("sums to {sum}, expected 1 within {CLS_ATTN_SUM_TOL}"),
            ));
        }
        Ok(())
    }

    /// Replace the attention map (e.g. after deriving it from `cls_query`).
    pub fn set_cls_attn(&mut self, cls_attn: Vec<f32>) -> Result<()> {
        self.validate_cls_attn(&cls_attn)?;
        self.cls_attn = Some(cls_attn);
        self.cls_query = None;
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    /// Feature vector of the cell at raster index `index`.
    pub fn feature(&self, index: usize) -> &[f32] {
        &self.features[index * self.dim..(index + 1) * self.dim]
    }

    pub fn feature_at(&self, coord: Coord) -> &[f32] {
        self.feature(coord.raster(self.width))
    }

    pub fn cls_attn(&self) -> Option<&[f32]> {
        self.cls_attn.as_deref()
    }

    pub fn text_sim(&self) -> Option<&[f32]> {
        self.text_sim.as_deref()
    }

    pub fn cls_query(&self) -> Option<&ClsQuery> {
        self.cls_query.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_mismatch() {
        assert!(FeatureGrid::new(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(FeatureGrid::new(0, 2, 3, vec![]).is_err());
    }

    #[test]
    fn rejects_non_finite_features() {
        let mut f = vec![0.0f32; 12];
        f[5] = f32::NAN;
        let err = FeatureGrid::new(2, 2, 3, f).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 5, .. }));
    }

    #[test]
    fn cls_attn_must_normalize() {
        let grid = FeatureGrid::new(2, 2, 1, vec![1.0; 4]).unwrap();
        assert!(grid.clone().with_cls_attn(vec![0.5; 4]).is_err());
        assert!(grid.clone().with_cls_attn(vec![0.25; 4]).is_ok());
        assert!(grid
            .with_cls_attn(vec![-0.25, 0.5, 0.5, 0.25])
            .is_err());
    }

    #[test]
    fn cls_sources_are_exclusive() {
        let grid = FeatureGrid::new(1, 2, 2, vec![1.0; 4])
            .unwrap()
            .with_cls_attn(vec![0.5, 0.5])
            .unwrap();
        let query = ClsQuery {
            q_cls: vec![1.0, 0.0],
            keys: vec![0.0; 4],
        };
        assert!(matches!(
            grid.with_cls_query(query),
            Err(Error::FlagConflict(_))
        ));
    }

    #[test]
    fn chebyshev_distance() {
        let a = Coord::new(1, 2);
        let b = Coord::new(4, 0);
        assert_eq!(a.chebyshev(&b), 3);
        assert_eq!(b.chebyshev(&a), 3);
        assert_eq!(a.chebyshev(&a), 0);
    }
}

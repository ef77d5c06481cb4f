//! Non-neural numerical core: depth containers, normalization, least-squares
//! scale/shift alignment, and barycentric completion over a Delaunay
//! triangulation.
//!
//! Depth lives in one of two spaces: `Metric` (meters, non-negative) or
//! `Normalized` (the autoencoder's `[-1, 1]` working range). Conversions go
//! through [`NormStats`], usually computed as robust percentiles of the
//! sparse measurements so train and test time agree on the mapping.

mod align;
mod delaunay;
mod interpolate;
mod normalize;

pub use align::{ls_align, shift_only_align, AffineAlignment};
pub use delaunay::{triangulate, Triangle, Triangulation};
pub use interpolate::barycentric_complete;
pub use normalize::{
    compute_norm_stats, condition_tensor, denormalize_depth, normalize_depth,
    normalize_sparse, NormStats, DEFAULT_FILL_VALUE, DEFAULT_Q_HI, DEFAULT_Q_LO,
};

use ndarray::Array2;
use thiserror::Error;

/// Errors from the geometry operations.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("need at least {needed} sparse points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("singular system: prediction has zero variance over the sparse locations")]
    SingularSystem,
    #[error("triangulation degenerate: all points collinear or fewer than 3")]
    TriangulationDegenerate,
    #[error("duplicate sparse coordinate ({0}, {1})")]
    DuplicateCoordinate(usize, usize),
    #[error("coordinate ({row}, {col}) out of bounds for {height}x{width}")]
    CoordinateOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid normalization range: lo={lo} must be < hi={hi}")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no valid pixels")]
    NoValidPixels,
}

/// Which space depth values live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DepthSpace {
    /// Meters, non-negative.
    Metric,
    /// The autoencoder's `[-1, 1]` range.
    Normalized,
}

/// Dense per-pixel depth with a validity mask.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
    pub space: DepthSpace,
}

impl DepthMap {
    /// Dense map where every pixel is valid.
    pub fn new_dense(values: Array2<f64>, space: DepthSpace) -> Self {
        let valid = Array2::from_elem(values.raw_dim(), true);
        Self {
            values,
            valid,
            space,
        }
    }

    pub fn new(values: Array2<f64>, valid: Array2<bool>, space: DepthSpace) -> Self {
        assert_eq!(values.dim(), valid.dim(), "values/valid shape mismatch");
        Self {
            values,
            valid,
            space,
        }
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    /// Number of valid pixels.
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Iterator over `(row, col, value)` of valid pixels, row-major.
    pub fn valid_values(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.valid
            .indexed_iter()
            .filter(|(_, v)| **v)
            .map(|((r, c), _)| (r, c, self.values[(r, c)]))
    }
}

/// Sparse depth condition: values at a set of unique pixel coordinates.
#[derive(Debug, Clone)]
pub struct SparseDepth {
    coords: Vec<(usize, usize)>,
    values: Vec<f64>,
    height: usize,
    width: usize,
    pub space: DepthSpace,
}

impl SparseDepth {
    /// Build a sparse depth set, validating bounds and uniqueness.
    pub fn new(
        coords: Vec<(usize, usize)>,
        values: Vec<f64>,
        height: usize,
        width: usize,
        space: DepthSpace,
    ) -> Result<Self, GeometryError> {
        assert_eq!(coords.len(), values.len(), "coords/values length mismatch");
        if coords.is_empty() {
            return Err(GeometryError::InsufficientPoints { needed: 1, got: 0 });
        }
        let mut seen = std::collections::HashSet::with_capacity(coords.len());
        for &(r, c) in &coords {
            if r >= height || c >= width {
                return Err(GeometryError::CoordinateOutOfBounds {
                    row: r,
                    col: c,
                    height,
                    width,
                });
            }
            if !seen.insert((r, c)) {
                return Err(GeometryError::DuplicateCoordinate(r, c));
            }
        }
        Ok(Self {
            coords,
            values,
            height,
            width,
            space,
        })
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Fraction of pixels carrying a measurement.
    pub fn density(&self) -> f64 {
        self.coords.len() as f64 / (self.height * self.width) as f64
    }

    /// Same coordinates, new values (used when mapping between spaces).
    pub fn with_values(&self, values: Vec<f64>, space: DepthSpace) -> Self {
        assert_eq!(values.len(), self.coords.len());
        Self {
            coords: self.coords.clone(),
            values,
            height: self.height,
            width: self.width,
            space,
        }
    }

    /// Extract the sparse values of `map` at this set's coordinates.
    pub fn sample_from(&self, map: &DepthMap) -> Vec<f64> {
        self.coords.iter().map(|&(r, c)| map.values[(r, c)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sparse_depth_rejects_duplicates_and_out_of_bounds() {
        let err = SparseDepth::new(
            vec![(0, 0), (0, 0)],
            vec![1.0, 2.0],
            4,
            4,
            DepthSpace::Metric,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::DuplicateCoordinate(0, 0)));

        let err = SparseDepth::new(vec![(4, 0)], vec![1.0], 4, 4, DepthSpace::Metric).unwrap_err();
        assert!(matches!(err, GeometryError::CoordinateOutOfBounds { .. }));

        let err =
            SparseDepth::new(vec![], vec![], 4, 4, DepthSpace::Metric).unwrap_err();
        assert!(matches!(err, GeometryError::InsufficientPoints { .. }));
    }

    #[test]
    fn density_counts_pixels() {
        let s = SparseDepth::new(
            vec![(0, 0), (1, 1)],
            vec![1.0, 2.0],
            4,
            4,
            DepthSpace::Metric,
        )
        .unwrap();
        assert!((s.density() - 2.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn depth_map_valid_iteration() {
        let values = array![[1.0, 2.0], [3.0, 4.0]];
        let valid = array![[true, false], [false, true]];
        let d = DepthMap::new(values, valid, DepthSpace::Metric);
        let got: Vec<_> = d.valid_values().collect();
        assert_eq!(got, vec![(0, 0, 1.0), (1, 1, 4.0)]);
        assert_eq!(d.valid_count(), 2);
    }
}

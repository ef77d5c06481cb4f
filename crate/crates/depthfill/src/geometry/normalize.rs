//! Depth normalization into the autoencoder's `[-1, 1]` range.
//!
//! Stats come from robust percentiles of the sparse measurements (2%/98% by
//! default), the same at train and test time, so the condition and the
//! target share one mapping per scene. Invalid pixels receive a fill value
//! (0.0, mid-range) when a dense tensor is materialized.

use ndarray::{Array2, Array3};

use super::{DepthMap, DepthSpace, GeometryError, SparseDepth};

/// Default lower percentile for normalization stats.
pub const DEFAULT_Q_LO: f64 = 2.0;
/// Default upper percentile for normalization stats.
pub const DEFAULT_Q_HI: f64 = 98.0;
/// Fill for invalid pixels in normalized tensors (mid-range).
pub const DEFAULT_FILL_VALUE: f64 = 0.0;

/// `[lo, hi]` depth range mapped onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub lo: f64,
    pub hi: f64,
}

impl NormStats {
    pub fn new(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        if !(hi > lo) {
            return Err(GeometryError::InvalidRange { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn forward(&self, v: f64) -> f64 {
        let c = v.clamp(self.lo, self.hi);
        2.0 * (c - self.lo) / (self.hi - self.lo) - 1.0
    }

    pub fn backward(&self, v: f64) -> f64 {
        (v + 1.0) * 0.5 * (self.hi - self.lo) + self.lo
    }
}

/// Linear-interpolated percentile of sorted data, position `q/100 * (n-1)`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Robust `(lo, hi)` stats from the sparse values.
///
/// Equal percentiles (constant input) are widened symmetrically by a small
/// epsilon so the range stays usable.
pub fn compute_norm_stats(
    sparse: &SparseDepth,
    q_lo: f64,
    q_hi: f64,
) -> Result<NormStats, GeometryError> {
    if sparse.len() < 2 {
        return Err(GeometryError::InsufficientPoints {
            needed: 2,
            got: sparse.len(),
        });
    }
    assert!(q_lo < q_hi, "percentile order");
    let mut v: Vec<f64> = sparse.values().to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = percentile(&v, q_lo);
    let hi = percentile(&v, q_hi);
    if hi > lo {
        Ok(NormStats { lo, hi })
    } else {
        let eps = 1e-6 * lo.abs().max(1.0);
        Ok(NormStats {
            lo: lo - eps,
            hi: hi + eps,
        })
    }
}

/// Normalize a dense map into `[-1, 1]`; invalid pixels get `fill`.
pub fn normalize_depth(depth: &DepthMap, stats: NormStats, fill: f64) -> DepthMap {
    let mut values = Array2::<f64>::from_elem(depth.values.raw_dim(), fill);
    for (r, c, v) in depth.valid_values() {
        values[(r, c)] = stats.forward(v);
    }
    DepthMap {
        values,
        valid: depth.valid.clone(),
        space: DepthSpace::Normalized,
    }
}

/// Map a normalized dense map back to meters (valid mask untouched).
pub fn denormalize_depth(depth: &DepthMap, stats: NormStats) -> DepthMap {
    DepthMap {
        values: depth.values.mapv(|v| stats.backward(v)),
        valid: depth.valid.clone(),
        space: DepthSpace::Metric,
    }
}

/// Normalize sparse values into `[-1, 1]`.
pub fn normalize_sparse(sparse: &SparseDepth, stats: NormStats) -> SparseDepth {
    let values = sparse.values().iter().map(|&v| stats.forward(v)).collect();
    sparse.with_values(values, DepthSpace::Normalized)
}

/// Densify a normalized sparse condition into a 3-channel tensor.
///
/// Sample pixels carry their value replicated across channels; everything
/// else is `fill`.
pub fn condition_tensor(sparse: &SparseDepth, fill: f64) -> Array3<f64> {
    debug_assert_eq!(sparse.space, DepthSpace::Normalized);
    let (h, w) = (sparse.height(), sparse.width());
    let mut t = Array3::<f64>::from_elem((3, h, w), fill);
    for (&(r, c), &v) in sparse.coords().iter().zip(sparse.values()) {
        for ch in 0..3 {
            t[(ch, r, c)] = v;
        }
    }
    t
}

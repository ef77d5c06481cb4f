//! Barycentric completion of sparse depth over a Delaunay triangulation.
//!
//! Inside the convex hull each pixel takes the barycentric combination of
//! its triangle's vertex depths; outside the hull the value is zero. The
//! zeros are deliberate: the baseline is evaluated exactly as it predicts,
//! so every pixel counts as a prediction and the valid mask is all-true.

use ndarray::Array2;

use super::delaunay::triangulate;
use super::{DepthMap, GeometryError, SparseDepth};

/// Dense completion of `sparse` by barycentric interpolation.
///
/// Requires at least 3 non-collinear points. Pixels at sample coordinates
/// carry exactly the sample value; pixels outside the hull are zero.
pub fn barycentric_complete(sparse: &SparseDepth) -> Result<DepthMap, GeometryError> {
    let tri = triangulate(sparse.coords())?;
    // Values reordered to the triangulation's sorted point order.
    let mut values = vec![0.0f64; sparse.len()];
    for (i, &v) in sparse.values().iter().enumerate() {
        values[tri.perm[i]] = v;
    }

    let h = sparse.height();
    let w = sparse.width();
    let mut out = Array2::<f64>::zeros((h, w));
    let mut assigned = Array2::<bool>::from_elem((h, w), false);

    for t in &tri.triangles {
        let [a, b, c] = tri.triangle_xy(t);
        let (za, zb, zc) = (values[t.0[0]], values[t.0[1]], values[t.0[2]]);
        let denom = orient(a, b, c);
        debug_assert!(denom > 0.0);

        let min_x = a.0.min(b.0).min(c.0).ceil().max(0.0) as usize;
        let max_x = a.0.max(b.0).max(c.0).floor().min((w - 1) as f64) as usize;
        let min_y = a.1.min(b.1).min(c.1).ceil().max(0.0) as usize;
        let max_y = a.1.max(b.1).max(c.1).floor().min((h - 1) as f64) as usize;
        for r in min_y..=max_y {
            for col in min_x..=max_x {
                if assigned[(r, col)] {
                    continue;
                }
                let p = (col as f64, r as f64);
                let l0 = orient(b, c, p);
                let l1 = orient(c, a, p);
                let l2 = orient(a, b, p);
                if l0 >= 0.0 && l1 >= 0.0 && l2 >= 0.0 {
                    out[(r, col)] = (l0 * za + l1 * zb + l2 * zc) / denom;
                    assigned[(r, col)] = true;
                }
            }
        }
    }

    // Sample pixels carry the measurement verbatim.
    for (&(r, c), &v) in sparse.coords().iter().zip(sparse.values()) {
        out[(r, c)] = v;
    }

    Ok(DepthMap::new_dense(out, sparse.space))
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

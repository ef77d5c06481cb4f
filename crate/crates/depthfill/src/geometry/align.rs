//! Closed-form least-squares scale/shift alignment.
//!
//! Solves `argmin_{a,b} sum_i (a * pred_i + b - target_i)^2` over the sparse
//! locations via the 2x2 normal equations. This is how a relative depth
//! prediction is lifted to metric scale from a few absolute measurements.

use super::{DepthMap, DepthSpace, GeometryError, SparseDepth};

/// Result of a scale/shift fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineAlignment {
    /// Scale.
    pub a: f64,
    /// Shift.
    pub b: f64,
    /// Sum of squared errors at the sparse locations.
    pub residual: f64,
}

impl AffineAlignment {
    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            residual: 0.0,
        }
    }

    /// Apply the map elementwise, preserving the validity mask.
    pub fn apply(&self, pred: &DepthMap) -> DepthMap {
        DepthMap {
            values: pred.values.mapv(|v| self.a * v + self.b),
            valid: pred.valid.clone(),
            space: DepthSpace::Metric,
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            a: 1.0 / self.a,
            b: -self.b / self.a,
            residual: 0.0,
        }
    }
}

fn solve(pred: &[f64], target: &[f64]) -> Result<AffineAlignment, GeometryError> {
    let n = pred.len();
    if n < 2 {
        return Err(GeometryError::InsufficientPoints { needed: 2, got: n });
    }
    let nf = n as f64;
    let sp: f64 = pred.iter().sum();
    let sc: f64 = target.iter().sum();
    let spp: f64 = pred.iter().map(|p| p * p).sum();
    let spc: f64 = pred.iter().zip(target).map(|(p, c)| p * c).sum();

    // n*var(pred); guards the normal-equation denominator
    let denom = nf * spp - sp * sp;
    let scale = nf * spp.max(1.0);
    if denom.abs() <= 1e-12 * scale {
        return Err(GeometryError::SingularSystem);
    }
    let a = (nf * spc - sp * sc) / denom;
    let b = (sc - a * sp) / nf;
    let residual: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, c)| {
            let e = a * p + b - c;
            e * e
        })
        .sum();
    Ok(AffineAlignment { a, b, residual })
}

/// Least-squares fit of `a * pred + b` to the metric targets over the sparse
/// locations.
///
/// Errors with [`GeometryError::InsufficientPoints`] for fewer than two
/// points and [`GeometryError::SingularSystem`] when the prediction is
/// constant over the locations; callers that want a fallback should use
/// [`shift_only_align`] explicitly.
pub fn ls_align(pred: &DepthMap, target: &SparseDepth) -> Result<AffineAlignment, GeometryError> {
    let p = target.sample_from(pred);
    solve(&p, target.values())
}

/// Fallback fit with `a = 1`: `b = mean(target) - mean(pred)`.
pub fn shift_only_align(
    pred: &DepthMap,
    target: &SparseDepth,
) -> Result<AffineAlignment, GeometryError> {
    let n = target.len();
    if n == 0 {
        return Err(GeometryError::InsufficientPoints { needed: 1, got: 0 });
    }
    let p = target.sample_from(pred);
    let b = target.values().iter().sum::<f64>() / n as f64 - p.iter().sum::<f64>() / n as f64;
    let residual = p
        .iter()
        .zip(target.values())
        .map(|(p, c)| {
            let e = p + b - c;
            e * e
        })
        .sum();
    Ok(AffineAlignment {
        a: 1.0,
        b,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DepthSpace;
    use ndarray::Array2;
    use rand::Rng;

    fn map_from(values: &[f64], width: usize) -> DepthMap {
        let height = values.len() / width;
        DepthMap::new_dense(
            Array2::from_shape_vec((height, width), values.to_vec()).unwrap(),
            DepthSpace::Normalized,
        )
    }

    fn sparse_from(coords: &[(usize, usize)], values: &[f64], h: usize, w: usize) -> SparseDepth {
        SparseDepth::new(coords.to_vec(), values.to_vec(), h, w, DepthSpace::Metric).unwrap()
    }

    /// Brute-force oracle: dense grid over (a, b), recentered and shrunk
    /// around the best cell for several rounds. The generous recenter window
    /// keeps the search from stalling in the tilted valley of the quadratic.
    /// Independent of the closed form above.
    pub(crate) fn grid_oracle(pred: &[f64], target: &[f64]) -> (f64, f64, f64) {
        let mut best = (0.0, 0.0, f64::INFINITY);
        let mut a_lo = -10.0;
        let mut a_hi = 10.0;
        let mut b_lo = -20.0;
        let mut b_hi = 20.0;
        let steps = 240;
        for _ in 0..8 {
            for i in 0..=steps {
                let a = a_lo + (a_hi - a_lo) * i as f64 / steps as f64;
                for j in 0..=steps {
                    let b = b_lo + (b_hi - b_lo) * j as f64 / steps as f64;
                    let sse: f64 = pred
                        .iter()
                        .zip(target)
                        .map(|(p, c)| {
                            let e = a * p + b - c;
                            e * e
                        })
                        .sum();
                    if sse < best.2 {
                        best = (a, b, sse);
                    }
                }
            }
            let da = (a_hi - a_lo) / steps as f64;
            let db = (b_hi - b_lo) / steps as f64;
            a_lo = best.0 - 20.0 * da;
            a_hi = best.0 + 20.0 * da;
            b_lo = best.1 - 20.0 * db;
            b_hi = best.1 + 20.0 * db;
        }
        best
    }

    #[test]
    fn exact_fit_recovers_identity() {
        let pred = map_from(&[1.0, 2.0, 3.0, 4.0], 2);
        let target = sparse_from(&[(0, 0), (0, 1), (1, 0)], &[1.0, 2.0, 3.0], 2, 2);
        let al = ls_align(&pred, &target).unwrap();
        assert!((al.a - 1.0).abs() < 1e-12);
        assert!(al.b.abs() < 1e-12);
        assert!(al.residual < 1e-18);
    }

    #[test]
    fn hand_case_one_two_three() {
        // pred [1,2,3] -> target [3,5,7]: a=2, b=1, residual 0
        let pred = map_from(&[1.0, 2.0, 3.0, 0.0], 2);
        let target = sparse_from(&[(0, 0), (0, 1), (1, 0)], &[3.0, 5.0, 7.0], 2, 2);
        let al = ls_align(&pred, &target).unwrap();
        assert!((al.a - 2.0).abs() < 1e-12);
        assert!((al.b - 1.0).abs() < 1e-12);
        assert!(al.residual < 1e-18);
    }

    #[test]
    fn constant_prediction_is_singular() {
        let pred = map_from(&[2.0, 2.0, 2.0, 2.0], 2);
        let target = sparse_from(&[(0, 0), (0, 1), (1, 1)], &[1.0, 2.0, 3.0], 2, 2);
        assert!(matches!(
            ls_align(&pred, &target),
            Err(GeometryError::SingularSystem)
        ));
        // explicit fallback still works
        let al = shift_only_align(&pred, &target).unwrap();
        assert!((al.a - 1.0).abs() < 1e-12);
        assert!((al.b - 0.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_is_insufficient() {
        let pred = map_from(&[1.0, 2.0, 3.0, 4.0], 2);
        let target = sparse_from(&[(0, 0)], &[3.0], 2, 2);
        assert!(matches!(
            ls_align(&pred, &target),
            Err(GeometryError::InsufficientPoints { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn matches_grid_oracle_on_random_instances() {
        let mut rng = crate::seeded_rng(11);
        for _ in 0..15 {
            let n = rng.gen_range(2..12);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // skip near-constant draws; those are the singular case
            let spread = pred.iter().cloned().fold(f64::MIN, f64::max)
                - pred.iter().cloned().fold(f64::MAX, f64::min);
            if spread < 0.2 {
                continue;
            }
            let a_true = rng.gen_range(-5.0..5.0);
            let b_true = rng.gen_range(-10.0..10.0);
            let target: Vec<f64> = pred
                .iter()
                .map(|p| a_true * p + b_true + rng.gen_range(-0.1..0.1))
                .collect();
            let coords: Vec<(usize, usize)> = (0..n).map(|i| (0, i)).collect();
            let m = map_from(&pred, n);
            let s = sparse_from(&coords, &target, 1, n);
            let al = ls_align(&m, &s).unwrap();
            let (oa, ob, osse) = grid_oracle(&pred, &target);
            assert!(
                (al.a - oa).abs() < 1e-4 && (al.b - ob).abs() < 1e-4,
                "closed form ({}, {}) vs oracle ({}, {})",
                al.a,
                al.b,
                oa,
                ob
            );
            assert!(al.residual <= osse + 1e-9);
        }
    }

    #[test]
    fn apply_and_inverse_compose_to_identity() {
        let pred = map_from(&[0.0, 0.5, 1.0, -0.5], 2);
        let al = AffineAlignment {
            a: 2.0,
            b: 1.0,
            residual: 0.0,
        };
        let mapped = al.apply(&pred);
        assert_eq!(mapped.values[(0, 0)], 1.0);
        assert_eq!(mapped.values[(0, 1)], 2.0);
        let back = al.inverse().apply(&mapped);
        for (x, y) in back.values.iter().zip(pred.values.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn validity_mask_is_preserved() {
        let mut pred = map_from(&[0.0, 0.5, 1.0, -0.5], 2);
        pred.valid[(1, 1)] = false;
        let al = AffineAlignment {
            a: 1.0,
            b: 0.0,
            residual: 0.0,
        };
        let out = al.apply(&pred);
        assert!(!out.valid[(1, 1)]);
        assert!(out.valid[(0, 0)]);
    }

    #[test]
    fn random_rng_smoke() {
        let mut rng = crate::seeded_rng(3);
        let _: f64 = rng.gen();
    }
}

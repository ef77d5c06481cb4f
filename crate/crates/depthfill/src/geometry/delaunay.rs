//! Incremental Bowyer-Watson Delaunay triangulation.
//!
//! Hull boundary is represented with ghost triangles (third vertex
//! [`GHOST`]), whose "circumdisk" is the open half-plane beyond the hull
//! edge plus the open edge segment itself. This avoids the classic
//! super-triangle construction, which silently breaks when a near-collinear
//! hull triple has a circumcircle reaching the super vertices.
//!
//! Inputs are pixel coordinates, so all predicate arithmetic is exact in
//! `f64` for grids up to ~4096: `orient2d` and `incircle` never leave the
//! 2^53 integer range. Cocircular ties therefore evaluate to exactly zero
//! and are resolved by the fixed lexicographic insertion order.

use super::GeometryError;

/// Sentinel vertex index for ghost (hull) triangles.
const GHOST: usize = usize::MAX;

/// Index triple into [`Triangulation::points`], counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle(pub [usize; 3]);

/// Delaunay triangulation of a point set.
#[derive(Debug, Clone)]
pub struct Triangulation {
    /// Points in lexicographic `(row, col)` order.
    pub points: Vec<(usize, usize)>,
    /// Indices into `points` of the original input order (`points[perm[i]]`
    /// is input point `i`).
    pub perm: Vec<usize>,
    /// Real (non-ghost) triangles, counter-clockwise in `(x=col, y=row)`
    /// coordinates.
    pub triangles: Vec<Triangle>,
}

fn orient2d(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// > 0 iff `d` is strictly inside the circumcircle of CCW triangle `(a,b,c)`.
fn incircle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> f64 {
    let adx = a.0 - d.0;
    let ady = a.1 - d.1;
    let bdx = b.0 - d.0;
    let bdy = b.1 - d.1;
    let cdx = c.0 - d.0;
    let cdy = c.1 - d.1;
    let ad2 = adx * adx + ady * ady;
    let bd2 = bdx * bdx + bdy * bdy;
    let cd2 = cdx * cdx + cdy * cdy;
    adx * (bdy * cd2 - cdy * bd2) - ady * (bdx * cd2 - cdx * bd2)
        + ad2 * (bdx * cdy - cdx * bdy)
}

fn xy(p: (usize, usize)) -> (f64, f64) {
    (p.1 as f64, p.0 as f64)
}

struct Builder {
    pts: Vec<(f64, f64)>,
    tris: Vec<[usize; 3]>,
}

impl Builder {
    /// Does triangle `t`'s circumdisk contain point `p` (strictly)?
    fn disk_contains(&self, t: [usize; 3], p: (f64, f64)) -> bool {
        if t[2] == GHOST {
            let a = self.pts[t[0]];
            let b = self.pts[t[1]];
            let o = orient2d(a, b, p);
            if o > 0.0 {
                return true;
            }
            if o == 0.0 {
                // On the hull edge's line: inside only strictly between the
                // endpoints (the limit disk of a triangle pushed to infinity).
                let dot = (p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1);
                let len2 = (b.0 - a.0) * (b.0 - a.0) + (b.1 - a.1) * (b.1 - a.1);
                return dot > 0.0 && dot < len2;
            }
            false
        } else {
            incircle(self.pts[t[0]], self.pts[t[1]], self.pts[t[2]], p) > 0.0
        }
    }

    fn insert(&mut self, pi: usize) {
        let p = self.pts[pi];
        let bad: Vec<usize> = (0..self.tris.len())
            .filter(|&i| self.disk_contains(self.tris[i], p))
            .collect();
        debug_assert!(!bad.is_empty(), "insertion point outside every circumdisk");

        let bad_edges: std::collections::HashSet<(usize, usize)> = bad
            .iter()
            .flat_map(|&i| {
                let t = self.tris[i];
                [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
            })
            .collect();

        // Cavity boundary: directed edges whose reverse is not in the cavity.
        let mut boundary = Vec::new();
        for &i in &bad {
            let t = self.tris[i];
            for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if !bad_edges.contains(&(v, u)) {
                    boundary.push((u, v));
                }
            }
        }

        let bad_set: std::collections::HashSet<usize> = bad.into_iter().collect();
        let mut keep: Vec<[usize; 3]> = self
            .tris
            .iter()
            .enumerate()
            .filter(|(i, _)| !bad_set.contains(i))
            .map(|(_, t)| *t)
            .collect();
        for (u, v) in boundary {
            // Rotate so a ghost vertex lands in slot 2.
            let t = if u == GHOST {
                [v, pi, GHOST]
            } else if v == GHOST {
                [pi, u, GHOST]
            } else {
                [u, v, pi]
            };
            keep.push(t);
        }
        self.tris = keep;
    }
}

/// Delaunay triangulation of unique pixel coordinates.
///
/// Errors with [`GeometryError::TriangulationDegenerate`] when fewer than 3
/// points are given or all points are collinear.
pub fn triangulate(coords: &[(usize, usize)]) -> Result<Triangulation, GeometryError> {
    if coords.len() < 3 {
        return Err(GeometryError::TriangulationDegenerate);
    }
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_by_key(|&i| coords[i]);
    let sorted: Vec<(usize, usize)> = order.iter().map(|&i| coords[i]).collect();
    let mut perm = vec![0usize; coords.len()];
    for (sorted_idx, &orig_idx) in order.iter().enumerate() {
        perm[orig_idx] = sorted_idx;
    }

    let pts: Vec<(f64, f64)> = sorted.iter().map(|&p| xy(p)).collect();

    // First triangle: the first two points plus the first non-collinear one.
    let mut third = None;
    for (i, &p) in pts.iter().enumerate().skip(2) {
        if orient2d(pts[0], pts[1], p) != 0.0 {
            third = Some(i);
            break;
        }
    }
    let Some(k) = third else {
        return Err(GeometryError::TriangulationDegenerate);
    };
    let first = if orient2d(pts[0], pts[1], pts[k]) > 0.0 {
        [0, 1, k]
    } else {
        [0, k, 1]
    };
    let mut b = Builder {
        pts,
        tris: vec![
            first,
            // One ghost per hull edge, directed opposite the real edge.
            [first[1], first[0], GHOST],
            [first[2], first[1], GHOST],
            [first[0], first[2], GHOST],
        ],
    };
    for i in (2..b.pts.len()).filter(|&i| i != k) {
        b.insert(i);
    }

    let triangles = b
        .tris
        .iter()
        .filter(|t| t[2] != GHOST)
        .map(|t| Triangle(*t))
        .collect();
    Ok(Triangulation {
        points: sorted,
        perm,
        triangles,
    })
}

impl Triangulation {
    /// Point coordinates of a triangle in `(x=col, y=row)` space.
    pub fn triangle_xy(&self, t: &Triangle) -> [(f64, f64); 3] {
        [
            xy(self.points[t.0[0]]),
            xy(self.points[t.0[1]]),
            xy(self.points[t.0[2]]),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn too_few_or_collinear_points_are_degenerate() {
        assert!(matches!(
            triangulate(&[(0, 0), (1, 1)]),
            Err(GeometryError::TriangulationDegenerate)
        ));
        assert!(matches!(
            triangulate(&[(0, 0), (1, 1), (2, 2), (3, 3)]),
            Err(GeometryError::TriangulationDegenerate)
        ));
    }

    #[test]
    fn single_triangle() {
        let t = triangulate(&[(0, 0), (0, 2), (2, 0)]).unwrap();
        assert_eq!(t.triangles.len(), 1);
    }

    #[test]
    fn square_gives_two_triangles() {
        let t = triangulate(&[(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        assert_eq!(t.triangles.len(), 2);
    }

    #[test]
    fn grid_row_with_apex_handles_collinear_hull_chain() {
        // Five collinear points plus one apex: every hull edge on the line
        // must survive as its own triangle edge.
        let pts = [(0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (3, 2)];
        let t = triangulate(&pts).unwrap();
        assert_eq!(t.triangles.len(), 4);
        assert_delaunay(&t);
    }

    #[test]
    fn near_collinear_flat_triple() {
        // Circumradius far larger than the point extent; the ghost-based
        // construction must not lose the hull triangle.
        let pts = [(0, 0), (1, 24), (0, 47), (5, 20)];
        let t = triangulate(&pts).unwrap();
        assert_delaunay(&t);
        let area: f64 = t
            .triangles
            .iter()
            .map(|tr| {
                let [a, b, c] = t.triangle_xy(tr);
                0.5 * super::orient2d(a, b, c)
            })
            .sum();
        assert!(area > 0.0);
    }

    fn assert_delaunay(t: &Triangulation) {
        // Empty circumcircle property against every input point.
        for tr in &t.triangles {
            let [a, b, c] = t.triangle_xy(tr);
            assert!(super::orient2d(a, b, c) > 0.0, "triangle not CCW");
            for (i, &p) in t.points.iter().enumerate() {
                if tr.0.contains(&i) {
                    continue;
                }
                let v = super::incircle(a, b, c, super::xy(p));
                assert!(
                    v <= 0.0,
                    "point {:?} strictly inside circumcircle of {:?}",
                    p,
                    tr
                );
            }
        }
    }

    fn hull_area(points: &[(usize, usize)]) -> f64 {
        // Monotone chain; points must be lexicographically sorted.
        let pts: Vec<(f64, f64)> = points.iter().map(|&p| super::xy(p)).collect();
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cross =
            |o: (f64, f64), a: (f64, f64), b: (f64, f64)| super::orient2d(o, a, b);
        let mut lower: Vec<(f64, f64)> = Vec::new();
        for &p in &sorted {
            while lower.len() >= 2
                && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0
            {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<(f64, f64)> = Vec::new();
        for &p in sorted.iter().rev() {
            while upper.len() >= 2
                && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0
            {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        let hull: Vec<(f64, f64)> = lower.into_iter().chain(upper).collect();
        let mut area = 0.0;
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            area += a.0 * b.1 - b.0 * a.1;
        }
        area.abs() * 0.5
    }

    #[test]
    fn random_sets_satisfy_delaunay_and_cover_the_hull() {
        let mut rng = crate::seeded_rng(1234);
        for round in 0..30 {
            let n = rng.gen_range(3..40);
            let mut set = std::collections::HashSet::new();
            while set.len() < n {
                set.insert((rng.gen_range(0..32usize), rng.gen_range(0..32usize)));
            }
            let mut pts: Vec<(usize, usize)> = set.into_iter().collect();
            pts.sort();
            let t = match triangulate(&pts) {
                Ok(t) => t,
                Err(GeometryError::TriangulationDegenerate) => continue,
                Err(e) => panic!("unexpected error: {e}"),
            };
            assert_delaunay(&t);
            let tri_area: f64 = t
                .triangles
                .iter()
                .map(|tr| {
                    let [a, b, c] = t.triangle_xy(tr);
                    0.5 * super::orient2d(a, b, c)
                })
                .sum();
            let ha = hull_area(&pts);
            assert!(
                (tri_area - ha).abs() < 1e-6,
                "round {round}: triangles cover {tri_area}, hull is {ha}"
            );
        }
    }

    #[test]
    fn triangulation_is_input_order_invariant() {
        let mut rng = crate::seeded_rng(99);
        let mut pts = vec![
            (0, 0),
            (0, 7),
            (3, 2),
            (5, 5),
            (7, 0),
            (7, 7),
            (2, 6),
            (6, 3),
        ];
        let base = triangulate(&pts).unwrap();
        for _ in 0..5 {
            pts.shuffle(&mut rng);
            let t = triangulate(&pts).unwrap();
            assert_eq!(t.points, base.points);
            let mut a: Vec<_> = t.triangles.iter().map(|t| t.0).collect();
            let mut b: Vec<_> = base.triangles.iter().map(|t| t.0).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }
}

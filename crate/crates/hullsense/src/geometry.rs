//! Planar convex hulls, barycenters, disagreement diameters and distances.
//!
//! The hull of an agent's own sample and its neighbors' samples is the
//! terminal set of the local plan; the distance from a point to the hull's
//! *relative* boundary (boundary within the hull's affine span) is the
//! interiority measure maximized by the lexicographic selection stage.
//! Degenerate hulls are first-class: a singleton has intrinsic dimension 0,
//! a segment dimension 1, a proper polygon dimension 2.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used to merge near-duplicate points and detect affine rank.
pub const HULL_TOL: f64 = 1e-9;

/// A point with finite coordinates. Hull operations require two dimensions;
/// barycenter, diameter and consensus distance accept any dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Point(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Product-norm distance to the agreement set (all points coincident).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusDistance(pub f64);

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("operation requires at least one point")]
    EmptyInput,
    #[error("points have mixed dimensions ({first} vs {other})")]
    MixedDimensions { first: usize, other: usize },
    #[error("hull operations require planar points, got dimension {dim}")]
    NotPlanar { dim: usize },
    #[error("coordinate is not finite")]
    NonFinite,
}

/// An inward halfplane `n·x >= offset` bounding a dimension-2 hull;
/// `n` is the unit inward normal, so `n·x - offset` is the signed distance
/// to the edge line.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfplane {
    pub normal: [f64; 2],
    pub offset: f64,
}

/// Ordered planar convex hull with explicit intrinsic dimension.
///
/// Vertices are counter-clockwise and pairwise distinct beyond [`HULL_TOL`].
/// `dim = 0` holds exactly one vertex, `dim = 1` exactly two (the segment
/// endpoints), `dim = 2` the CCW polygon with one [`Halfplane`] per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Hull2 {
    vertices: Vec<Point>,
    dim: usize,
    edges: Vec<Halfplane>,
}

impl Hull2 {
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Inward halfplanes; empty unless `dim == 2`.
    pub fn edges(&self) -> &[Halfplane] {
        &self.edges
    }

    /// Unit direction of a dimension-1 hull, from the first endpoint to the
    /// second.
    pub fn segment_direction(&self) -> Option<[f64; 2]> {
        if self.dim != 1 {
            return None;
        }
        let a = self.vertices[0].coords();
        let b = self.vertices[1].coords();
        let len = self.vertices[0].distance(&self.vertices[1]);
        Some([(b[0] - a[0]) / len, (b[1] - a[1]) / len])
    }
}

fn check_points(points: &[Point]) -> Result<usize, GeometryError> {
    let first = points.first().ok_or(GeometryError::EmptyInput)?.dim();
    for p in points {
        if p.dim() != first {
            return Err(GeometryError::MixedDimensions {
                first,
                other: p.dim(),
            });
        }
        if p.coords().iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
    }
    Ok(first)
}

fn cross(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull of planar points by monotone chain, with duplicate merging
/// and affine-rank detection at [`HULL_TOL`].
pub fn convex_hull(points: &[Point]) -> Result<Hull2, GeometryError> {
    let d = check_points(points)?;
    if d != 2 {
        return Err(GeometryError::NotPlanar { dim: d });
    }

    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p.0[0], p.0[1]]).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= HULL_TOL && (a[1] - b[1]).abs() <= HULL_TOL);

    // Affine rank: farthest point pair first, then maximum offset from that
    // line.
    let p0 = pts[0];
    let (far, far_dist) = pts
        .iter()
        .map(|p| (*p, ((p[0] - p0[0]).powi(2) + (p[1] - p0[1]).powi(2)).sqrt()))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    if far_dist <= HULL_TOL {
        return Ok(Hull2 {
            vertices: vec![Point::xy(p0[0], p0[1])],
            dim: 0,
            edges: vec![],
        });
    }
    let u = [(far[0] - p0[0]) / far_dist, (far[1] - p0[1]) / far_dist];
    let max_perp = pts
        .iter()
        .map(|p| ((p[0] - p0[0]) * (-u[1]) + (p[1] - p0[1]) * u[0]).abs())
        .fold(0.0f64, f64::max);
    if max_perp <= HULL_TOL {
        // Collinear: endpoints are the extreme projections along u.
        let proj = |p: &[f64; 2]| (p[0] - p0[0]) * u[0] + (p[1] - p0[1]) * u[1];
        let lo = pts
            .iter()
            .min_by(|a, b| proj(a).partial_cmp(&proj(b)).unwrap())
            .unwrap();
        let hi = pts
            .iter()
            .max_by(|a, b| proj(a).partial_cmp(&proj(b)).unwrap())
            .unwrap();
        return Ok(Hull2 {
            vertices: vec![Point::xy(lo[0], lo[1]), Point::xy(hi[0], hi[1])],
            dim: 1,
            edges: vec![],
        });
    }

    // Monotone chain with strict turns so collinear interior points drop out.
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2
            && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= HULL_TOL
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2
            && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= HULL_TOL
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        // Barely above the rank tolerance yet flattened by the chain: treat
        // as a segment between the extreme projections.
        let proj = |p: &[f64; 2]| (p[0] - p0[0]) * u[0] + (p[1] - p0[1]) * u[1];
        let lo = pts
            .iter()
            .min_by(|a, b| proj(a).partial_cmp(&proj(b)).unwrap())
            .unwrap();
        let hi = pts
            .iter()
            .max_by(|a, b| proj(a).partial_cmp(&proj(b)).unwrap())
            .unwrap();
        return Ok(Hull2 {
            vertices: vec![Point::xy(lo[0], lo[1]), Point::xy(hi[0], hi[1])],
            dim: 1,
            edges: vec![],
        });
    }
    let vertices: Vec<Point> = lower.into_iter().map(|p| Point::xy(p[0], p[1])).collect();

    let mut edges = Vec::with_capacity(vertices.len());
    for i in 0..vertices.len() {
        let a = vertices[i].coords();
        let b = vertices[(i + 1) % vertices.len()].coords();
        let ex = b[0] - a[0];
        let ey = b[1] - a[1];
        let len = (ex * ex + ey * ey).sqrt();
        // CCW polygon: inward normal is the edge vector rotated +90 degrees.
        let n = [-ey / len, ex / len];
        edges.push(Halfplane {
            normal: n,
            offset: n[0] * a[0] + n[1] * a[1],
        });
    }

    Ok(Hull2 {
        vertices,
        dim: 2,
        edges,
    })
}

/// Uniform average of the given points.
pub fn barycenter(points: &[Point]) -> Result<Point, GeometryError> {
    let d = check_points(points)?;
    let m = points.len() as f64;
    let mut acc = vec![0.0; d];
    for p in points {
        for (a, c) in acc.iter_mut().zip(p.coords()) {
            *a += c;
        }
    }
    Ok(Point(acc.into_iter().map(|a| a / m).collect()))
}

/// Maximum pairwise Euclidean distance (0 for a single point).
pub fn diameter(points: &[Point]) -> Result<f64, GeometryError> {
    check_points(points)?;
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.max(points[i].distance(&points[j]));
        }
    }
    Ok(best)
}

fn dist_point_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let abx = b[0] - a[0];
    let aby = b[1] - a[1];
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
    };
    let cx = a[0] + t * abx;
    let cy = a[1] + t * aby;
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

/// Euclidean distance from `p` to the hull as a set.
pub fn dist_to_hull(hull: &Hull2, p: &Point) -> f64 {
    let q = p.coords();
    match hull.dim {
        0 => p.distance(&hull.vertices[0]),
        1 => dist_point_segment(q, hull.vertices[0].coords(), hull.vertices[1].coords()),
        _ => {
            let inside = hull
                .edges
                .iter()
                .all(|e| e.normal[0] * q[0] + e.normal[1] * q[1] - e.offset >= -0.0);
            if inside {
                return 0.0;
            }
            let n = hull.vertices.len();
            (0..n)
                .map(|i| {
                    dist_point_segment(
                        q,
                        hull.vertices[i].coords(),
                        hull.vertices[(i + 1) % n].coords(),
                    )
                })
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// Set membership up to `tol`, for hulls of any intrinsic dimension.
pub fn contains(hull: &Hull2, p: &Point, tol: f64) -> bool {
    dist_to_hull(hull, p) <= tol
}

/// Distance within `aff(hull)` from an off-span point at which the point no
/// longer counts as lying in the affine span.
const AFF_TOL: f64 = 1e-7;

/// Distance from `p` to the hull's relative boundary, clamped at 0.
///
/// For a polygon this is the minimum inward halfplane slack; for a segment
/// the in-line distance to the nearer endpoint (0 if `p` is more than
/// `1e-7` off the segment's line); a singleton's relative boundary is empty
/// and the measure is 0 by convention.
pub fn dist_to_relative_boundary(hull: &Hull2, p: &Point) -> f64 {
    let q = p.coords();
    match hull.dim {
        0 => 0.0,
        1 => {
            let a = hull.vertices[0].coords();
            let b = hull.vertices[1].coords();
            let len = hull.vertices[0].distance(&hull.vertices[1]);
            let u = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
            let off_line = ((q[0] - a[0]) * (-u[1]) + (q[1] - a[1]) * u[0]).abs();
            if off_line > AFF_TOL {
                return 0.0;
            }
            let t = (q[0] - a[0]) * u[0] + (q[1] - a[1]) * u[1];
            t.min(len - t).max(0.0)
        }
        _ => hull
            .edges
            .iter()
            .map(|e| e.normal[0] * q[0] + e.normal[1] * q[1] - e.offset)
            .fold(f64::INFINITY, f64::min)
            .max(0.0),
    }
}

/// `(Σ_i ‖z_i − mean(z)‖²)^{1/2}`, the product-norm distance to the
/// agreement set.
pub fn consensus_distance(z: &[Point]) -> Result<ConsensusDistance, GeometryError> {
    let mean = barycenter(z)?;
    let sum: f64 = z.iter().map(|p| p.distance(&mean).powi(2)).sum();
    Ok(ConsensusDistance(sum.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> Vec<Point> {
        vec![
            Point::xy(0.0, 0.0),
            Point::xy(0.0, 1.0),
            Point::xy(1.0, 0.0),
            Point::xy(1.0, 1.0),
        ]
    }

    fn reference_positions() -> Vec<Point> {
        vec![
            Point::xy(-4.0, 2.0),
            Point::xy(3.5, 4.0),
            Point::xy(4.5, -3.5),
            Point::xy(-2.5, -4.0),
        ]
    }

    #[test]
    fn hull_of_unit_square_corners() {
        let h = convex_hull(&unit_square()).unwrap();
        assert_eq!(h.dim(), 2);
        assert_eq!(h.vertices().len(), 4);
        assert_eq!(h.edges().len(), 4);
        // CCW orientation: positive signed area.
        let v = h.vertices();
        let mut area = 0.0;
        for i in 0..v.len() {
            let a = v[i].coords();
            let b = v[(i + 1) % v.len()].coords();
            area += a[0] * b[1] - b[0] * a[1];
        }
        assert!(area > 0.0);
    }

    #[test]
    fn hull_of_repeated_point_is_singleton() {
        let pts = vec![Point::xy(3.0, 3.0); 4];
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.dim(), 0);
        assert_eq!(h.vertices(), &[Point::xy(3.0, 3.0)]);
    }

    #[test]
    fn hull_of_collinear_points_is_segment() {
        let pts = vec![
            Point::xy(0.0, 0.0),
            Point::xy(1.0, 1.0),
            Point::xy(2.0, 2.0),
        ];
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(h.vertices(), &[Point::xy(0.0, 0.0), Point::xy(2.0, 2.0)]);
    }

    #[test]
    fn hull_rejects_empty_and_mixed() {
        assert_eq!(convex_hull(&[]).unwrap_err(), GeometryError::EmptyInput);
        let mixed = vec![Point::xy(0.0, 0.0), Point::new(vec![1.0])];
        assert!(matches!(
            convex_hull(&mixed),
            Err(GeometryError::MixedDimensions { .. })
        ));
    }

    #[test]
    fn barycenter_examples() {
        let b = barycenter(&unit_square()).unwrap();
        assert_eq!(b, Point::xy(0.5, 0.5));
        assert_eq!(
            barycenter(&[Point::xy(3.0, 3.0)]).unwrap(),
            Point::xy(3.0, 3.0)
        );
        let b = barycenter(&reference_positions()).unwrap();
        assert!((b.0[0] - 0.375).abs() < 1e-15);
        assert!((b.0[1] + 0.375).abs() < 1e-15);
    }

    #[test]
    fn diameter_examples() {
        assert!((diameter(&unit_square()).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        // Brute force over all pairs as the reference.
        let pts = reference_positions();
        let mut brute = 0.0f64;
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                brute = brute.max(pts[i].distance(&pts[j]));
            }
        }
        let d = diameter(&pts).unwrap();
        assert_eq!(d, brute);
        assert!((d - 102.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(diameter(&vec![Point::xy(1.0, 1.0); 3]).unwrap(), 0.0);
    }

    #[test]
    fn contains_examples() {
        let sq = convex_hull(&unit_square()).unwrap();
        assert!(contains(&sq, &Point::xy(0.0, 0.5), 1e-9));
        assert!(!contains(&sq, &Point::xy(2.0, 0.0), 1e-9));
        let seg = convex_hull(&[Point::xy(0.0, 0.0), Point::xy(2.0, 2.0)]).unwrap();
        assert!(contains(&seg, &Point::xy(1.0, 1.0), 1e-9));
    }

    #[test]
    fn relative_boundary_distance_examples() {
        let sq = convex_hull(&unit_square()).unwrap();
        assert!((dist_to_relative_boundary(&sq, &Point::xy(0.5, 0.5)) - 0.5).abs() < 1e-12);
        assert_eq!(dist_to_relative_boundary(&sq, &Point::xy(0.0, 0.5)), 0.0);
        let seg = convex_hull(&[Point::xy(0.0, 0.0), Point::xy(2.0, 0.0)]).unwrap();
        assert!((dist_to_relative_boundary(&seg, &Point::xy(0.5, 0.0)) - 0.5).abs() < 1e-12);
        // Off the segment's line beyond tolerance: not in the relative
        // interior.
        assert_eq!(dist_to_relative_boundary(&seg, &Point::xy(0.5, 1e-3)), 0.0);
        let single = convex_hull(&[Point::xy(3.0, 3.0)]).unwrap();
        assert_eq!(
            dist_to_relative_boundary(&single, &Point::xy(3.0, 3.0)),
            0.0
        );
    }

    #[test]
    fn consensus_distance_examples() {
        assert_eq!(
            consensus_distance(&vec![Point::xy(1.0, 2.0); 5]).unwrap().0,
            0.0
        );
        let v = consensus_distance(&[Point::xy(1.0, 0.0), Point::xy(-1.0, 0.0)])
            .unwrap()
            .0;
        assert!((v - 2f64.sqrt()).abs() < 1e-12);
        let v = consensus_distance(&unit_square()).unwrap().0;
        assert!((v - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hull_is_idempotent_on_vertices() {
        let h = convex_hull(&reference_positions()).unwrap();
        let again = convex_hull(h.vertices()).unwrap();
        assert_eq!(h.vertices().len(), again.vertices().len());
        // Same cyclic vertex set.
        for v in h.vertices() {
            assert!(again.vertices().iter().any(|w| v.distance(w) < 1e-12));
        }
    }

    proptest! {
        #[test]
        fn diameter_sandwiched_by_consensus_distance(
            pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..9)
        ) {
            let pts: Vec<Point> = pts.into_iter().map(|(x, y)| Point::xy(x, y)).collect();
            let l = pts.len() as f64;
            let v = diameter(&pts).unwrap();
            let a = consensus_distance(&pts).unwrap().0;
            prop_assert!(a / l.sqrt() <= v + 1e-9);
            prop_assert!(v <= 2.0 * a + 1e-9);
        }

        #[test]
        fn barycenter_lies_in_hull_interior(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..8)
        ) {
            let pts: Vec<Point> = pts.into_iter().map(|(x, y)| Point::xy(x, y)).collect();
            let h = convex_hull(&pts).unwrap();
            let b = barycenter(&pts).unwrap();
            prop_assert!(contains(&h, &b, 1e-9));
            if h.dim() > 0 {
                prop_assert!(dist_to_relative_boundary(&h, &b) > 0.0);
            }
            // Every input point belongs to the hull it generated.
            for p in &pts {
                prop_assert!(contains(&h, p, 1e-9));
            }
        }

        #[test]
        fn positive_boundary_distance_implies_membership(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..8),
            probe in (-12.0f64..12.0, -12.0f64..12.0)
        ) {
            let pts: Vec<Point> = pts.into_iter().map(|(x, y)| Point::xy(x, y)).collect();
            let h = convex_hull(&pts).unwrap();
            let p = Point::xy(probe.0, probe.1);
            if dist_to_relative_boundary(&h, &p) > 0.0 {
                // Exact membership for polygons; lower-dimensional hulls
                // admit the off-span tolerance.
                let tol = if h.dim() == 2 { 0.0 } else { 1e-7 };
                prop_assert!(contains(&h, &p, tol));
            }
        }
    }
}

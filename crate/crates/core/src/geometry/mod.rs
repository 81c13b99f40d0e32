//! Boundary representation, domain queries, grids and distances.
//!
//! The domain is a simply connected region bounded by a closed polygon of
//! boundary samples ordered counterclockwise. A doubled sample (zero-length
//! segment) marks a corner: data attached to the two copies may differ, which
//! is how piecewise boundary data such as edge currents are represented.

pub mod distance;
pub mod geodesic;
pub mod grid;
pub mod presets;

use crate::error::{Error, Result};
use crate::linalg::fd_weights;
use serde::{Deserialize, Serialize};

pub use grid::{GridSpec, NodeField};

pub type Point = [f64; 2];

/// Values attached to the boundary samples, indexed like `BoundaryGeometry::points`.
pub type BoundaryField = Vec<f64>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryGeometry {
    pub points: Vec<Point>,
    /// Cumulative arclength at each sample, starting at 0.
    pub arclength: Vec<f64>,
    pub length: f64,
    pub tangents: Vec<Point>,
    /// Outward unit normals.
    pub normals: Vec<Point>,
    /// Signed curvature, positive where the domain is locally convex.
    pub curvature: Vec<f64>,
    /// True for the two copies of a doubled corner sample.
    pub corner: Vec<bool>,
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

const MIN_SAMPLES: usize = 16;

/// Validate a sampled closed curve and compute its differential data.
///
/// The input may repeat the first point at the end. Clockwise input is
/// reversed. Open curves, self-intersections, fewer than 16 distinct samples
/// and non-finite coordinates are rejected.
pub fn build_boundary(input: &[Point]) -> Result<BoundaryGeometry> {
    if input.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Geometry("non-finite boundary coordinate".into()));
    }
    if input.len() < 3 {
        return Err(Error::Geometry(format!("only {} boundary samples", input.len())));
    }
    let scale = bbox_diagonal(input).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut pts: Vec<Point> = input.to_vec();
    let max_seg = pts.windows(2).map(|w| dist(w[0], w[1])).fold(0.0, f64::max);
    let gap = dist(pts[0], *pts.last().unwrap());
    if gap <= tol {
        pts.pop();
    } else if gap > 2.5 * max_seg {
        return Err(Error::Geometry(format!("curve is open: gap {gap:.3e} between last and first sample")));
    }
    let n = pts.len();
    let distinct = (0..n).filter(|&k| dist(pts[k], pts[(k + 1) % n]) > tol).count();
    if distinct < MIN_SAMPLES {
        return Err(Error::Geometry(format!("{distinct} distinct boundary samples, need at least {MIN_SAMPLES}")));
    }
    for k in 0..n {
        let a = dist(pts[k], pts[(k + 1) % n]) <= tol;
        let b = dist(pts[(k + 1) % n], pts[(k + 2) % n]) <= tol;
        if a && b {
            return Err(Error::Geometry(format!("sample {k} repeated more than twice")));
        }
    }
    let area = signed_area(&pts);
    if area.abs() <= 1e-12 * scale * scale {
        return Err(Error::Geometry("degenerate boundary (zero area)".into()));
    }
    if area < 0.0 {
        pts.reverse();
    }
    // Snap exact duplicates so zero-length segments are exactly zero.
    for k in 0..n {
        let next = (k + 1) % n;
        if dist(pts[k], pts[next]) <= tol {
            pts[next] = pts[k];
        }
    }
    check_simple(&pts, tol)?;

    let mut arclength = vec![0.0; n];
    for k in 1..n {
        arclength[k] = arclength[k - 1] + dist(pts[k - 1], pts[k]);
    }
    let length = arclength[n - 1] + dist(pts[n - 1], pts[0]);
    let corner: Vec<bool> = (0..n)
        .map(|k| pts[k] == pts[(k + 1) % n] || pts[k] == pts[(k + n - 1) % n])
        .collect();

    let mut tangents = vec![[0.0; 2]; n];
    let mut normals = vec![[0.0; 2]; n];
    let mut curvature = vec![0.0; n];
    for k in 0..n {
        let (ss, xs, ys) = stencil(&pts, k, length);
        let w = fd_weights(0.0, &ss, 2);
        let dx: f64 = w[1].iter().zip(&xs).map(|(c, v)| c * v).sum();
        let dy: f64 = w[1].iter().zip(&ys).map(|(c, v)| c * v).sum();
        let ddx: f64 = w[2].iter().zip(&xs).map(|(c, v)| c * v).sum();
        let ddy: f64 = w[2].iter().zip(&ys).map(|(c, v)| c * v).sum();
        let sp = dx.hypot(dy);
        let t = [dx / sp, dy / sp];
        tangents[k] = t;
        normals[k] = [t[1], -t[0]];
        curvature[k] = (dx * ddy - dy * ddx) / (sp * sp * sp);
    }
    Ok(BoundaryGeometry { points: pts, arclength, length, tangents, normals, curvature, corner })
}

/// Five-point arclength stencil around sample `k`. Stencils never reach past a
/// doubled corner sample, so they become one-sided near corners.
fn stencil(pts: &[Point], k: usize, length: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = pts.len();
    let is_corner = |i: usize| pts[i] == pts[(i + 1) % n] || pts[i] == pts[(i + n - 1) % n];
    let walk = |dir: isize, count: usize| -> Vec<(f64, Point)> {
        let mut out = Vec::with_capacity(count);
        let mut idx = k as isize;
        let mut s = 0.0;
        let mut prev = pts[k];
        // Leaving a corner copy towards its twin is not allowed.
        let twin = (k as isize + dir).rem_euclid(n as isize) as usize;
        if pts[twin] == pts[k] {
            return out;
        }
        while out.len() < count {
            idx += dir;
            let i = idx.rem_euclid(n as isize) as usize;
            let p = pts[i];
            let d = dist(prev, p);
            if d == 0.0 {
                break;
            }
            s += dir as f64 * d;
            out.push((s, p));
            prev = p;
            if is_corner(i) || s.abs() > 0.5 * length {
                break;
            }
        }
        out
    };
    let mut back = walk(-1, 4);
    let mut fwd = walk(1, 4);
    let nb = back.len().min(2.max(4 - fwd.len().min(2)));
    let nf = (4 - nb).min(fwd.len());
    back.truncate(nb);
    fwd.truncate(nf);
    let mut nodes: Vec<(f64, Point)> = vec![(0.0, pts[k])];
    nodes.extend(back);
    nodes.extend(fwd);
    (
        nodes.iter().map(|v| v.0).collect(),
        nodes.iter().map(|v| v.1[0] - pts[k][0]).collect(),
        nodes.iter().map(|v| v.1[1] - pts[k][1]).collect(),
    )
}

fn bbox_diagonal(pts: &[Point]) -> f64 {
    let (lo, hi) = bbox(pts);
    dist(lo, hi)
}

pub(crate) fn bbox(pts: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

pub fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    0.5 * (0..n).map(|k| cross(pts[k], pts[(k + 1) % n])).sum::<f64>()
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point, tol: f64) -> bool {
    let lo = |u: f64, v: f64| u.min(v);
    let hi = |u: f64, v: f64| u.max(v);
    if lo(a[0], b[0]) > hi(c[0], d[0]) + tol
        || lo(c[0], d[0]) > hi(a[0], b[0]) + tol
        || lo(a[1], b[1]) > hi(c[1], d[1]) + tol
        || lo(c[1], d[1]) > hi(a[1], b[1]) + tol
    {
        return false;
    }
    let d1 = cross(sub(b, a), sub(c, a));
    let d2 = cross(sub(b, a), sub(d, a));
    let d3 = cross(sub(d, c), sub(a, c));
    let d4 = cross(sub(d, c), sub(b, c));
    let la = dist(a, b);
    let lc = dist(c, d);
    let ea = tol * la;
    let ec = tol * lc;
    if ((d1 > ea && d2 < -ea) || (d1 < -ea && d2 > ea)) && ((d3 > ec && d4 < -ec) || (d3 < -ec && d4 > ec)) {
        return true;
    }
    // Touching or collinear overlap: any endpoint within tolerance of the other segment.
    point_segment_distance(c, a, b) <= tol
        || point_segment_distance(d, a, b) <= tol
        || point_segment_distance(a, c, d) <= tol
        || point_segment_distance(b, c, d) <= tol
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (_, q) = project_on_segment(p, a, b);
    dist(p, q)
}

/// Closest point on segment `ab` to `p`, returned as (parameter in [0,1], point).
pub fn project_on_segment(p: Point, a: Point, b: Point) -> (f64, Point) {
    let ab = sub(b, a);
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    if l2 == 0.0 {
        return (0.0, a);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0);
    (t, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn check_simple(pts: &[Point], tol: f64) -> Result<()> {
    let n = pts.len();
    // Non-degenerate segments in boundary order.
    let segs: Vec<(Point, Point)> = (0..n)
        .map(|k| (pts[k], pts[(k + 1) % n]))
        .filter(|(a, b)| a != b)
        .collect();
    let m = segs.len();
    let mut order: Vec<usize> = (0..m).collect();
    let xmin = |i: usize| segs[i].0[0].min(segs[i].1[0]);
    let xmax = |i: usize| segs[i].0[0].max(segs[i].1[0]);
    order.sort_by(|&a, &b| xmin(a).partial_cmp(&xmin(b)).unwrap());
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            if xmin(j) > xmax(i) + tol {
                break;
            }
            let adjacent = (i + 1) % m == j || (j + 1) % m == i;
            if adjacent {
                continue;
            }
            let (a, b) = segs[i];
            let (c, d) = segs[j];
            if segments_intersect(a, b, c, d, tol) {
                return Err(Error::Geometry(format!(
                    "boundary self-intersects near ({:.6}, {:.6})",
                    a[0], a[1]
                )));
            }
        }
    }
    Ok(())
}

impl BoundaryGeometry {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Length of the segment from sample `k` to sample `k + 1`.
    pub fn segment_length(&self, k: usize) -> f64 {
        let n = self.len();
        dist(self.points[k], self.points[(k + 1) % n])
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.points)
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        bbox(&self.points)
    }

    /// Crossing-number point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.len();
        let mut inside = false;
        for k in 0..n {
            let a = self.points[k];
            let b = self.points[(k + 1) % n];
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Point-in-polygon classification of every node of `grid`, by scanlines.
    pub fn inside_mask(&self, grid: &GridSpec) -> Vec<bool> {
        let n = self.len();
        let mut mask = vec![false; grid.node_count()];
        let mut xs = Vec::new();
        for j in 0..grid.ny {
            let y = grid.origin[1] + j as f64 * grid.h;
            xs.clear();
            for k in 0..n {
                let a = self.points[k];
                let b = self.points[(k + 1) % n];
                if (a[1] > y) != (b[1] > y) {
                    xs.push(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                let lo = ((pair[0] - grid.origin[0]) / grid.h).floor() as i64 + 1;
                let hi = ((pair[1] - grid.origin[0]) / grid.h).ceil() as i64 - 1;
                for i in lo.max(0)..=hi.min(grid.nx as i64 - 1) {
                    let x = grid.origin[0] + i as f64 * grid.h;
                    if x > pair[0] && x < pair[1] {
                        mask[grid.index(i as usize, j)] = true;
                    }
                }
            }
        }
        mask
    }

    /// Distance from `p` to the boundary polygon (brute force).
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        let n = self.len();
        (0..n)
            .map(|k| point_segment_distance(p, self.points[k], self.points[(k + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation of a sampled boundary field at arclength `s` (periodic).
    pub fn interpolate(&self, field: &[f64], s: f64) -> f64 {
        let n = self.len();
        let s = s.rem_euclid(self.length);
        let k = match self.arclength.partition_point(|&v| v <= s) {
            0 => 0,
            i => i - 1,
        };
        let ds = self.segment_length(k);
        if ds == 0.0 {
            return field[k];
        }
        let t = ((s - self.arclength[k]) / ds).clamp(0.0, 1.0);
        (1.0 - t) * field[k] + t * field[(k + 1) % n]
    }

    pub fn is_convex(&self) -> bool {
        let n = self.len();
        let scale = bbox_diagonal(&self.points);
        (0..n).all(|k| {
            let prev = self.points[(k + n - 1) % n];
            let cur = self.points[k];
            let next = self.points[(k + 1) % n];
            cross(sub(cur, prev), sub(next, cur)) >= -1e-14 * scale * scale
        })
    }
}

/// Trapezoidal integral of a boundary field along the closed curve.
pub fn boundary_integral(geom: &BoundaryGeometry, field: &[f64]) -> f64 {
    let n = geom.len();
    (0..n)
        .map(|k| 0.5 * (field[k] + field[(k + 1) % n]) * geom.segment_length(k))
        .sum()
}

/// Cumulative trapezoidal integral from sample 0 to each sample.
pub fn cumulative_integral(geom: &BoundaryGeometry, field: &[f64]) -> Vec<f64> {
    let n = geom.len();
    let mut out = vec![0.0; n];
    for k in 1..n {
        out[k] = out[k - 1] + 0.5 * (field[k - 1] + field[k]) * geom.segment_length(k - 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;
    use proptest::prelude::*;

    fn circle_points(r: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [r * th.cos(), r * th.sin()]
            })
            .collect()
    }

    #[test]
    fn circle_curvature_and_normals() {
        let g = build_boundary(&circle_points(2.0, 128)).unwrap();
        for k in 0..g.len() {
            assert!((g.curvature[k] - 0.5).abs() < 1e-3, "kappa {}", g.curvature[k]);
            let p = g.points[k];
            let nrm = g.normals[k];
            assert!((nrm[0] - p[0] / 2.0).abs() < 1e-4 && (nrm[1] - p[1] / 2.0).abs() < 1e-4);
        }
    }

    #[test]
    fn circle_curvature_converges_second_order_or_better() {
        let err = |n: usize| {
            let g = build_boundary(&circle_points(1.0, n)).unwrap();
            g.curvature.iter().map(|k| (k - 1.0).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn clockwise_input_is_reversed() {
        let mut pts = circle_points(1.0, 40);
        pts.reverse();
        let g = build_boundary(&pts).unwrap();
        assert!(g.area() > 0.0);
        assert!(g.curvature[3] > 0.0);
    }

    #[test]
    fn closing_duplicate_is_dropped() {
        let mut pts = circle_points(1.0, 40);
        pts.push(pts[0]);
        let g = build_boundary(&pts).unwrap();
        assert_eq!(g.len(), 40);
        assert!((g.length - 2.0 * 40.0 * (std::f64::consts::PI / 40.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn rejects_open_curve() {
        let pts: Vec<Point> = circle_points(1.0, 64).into_iter().take(40).collect();
        assert!(matches!(build_boundary(&pts), Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_self_intersection() {
        // Figure eight.
        let pts: Vec<Point> = (0..64)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                [t.sin(), (2.0 * t).sin() * 0.5]
            })
            .collect();
        assert!(matches!(build_boundary(&pts), Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_too_few_samples() {
        assert!(build_boundary(&circle_points(1.0, 12)).is_err());
    }

    #[test]
    fn rejects_nan() {
        let mut pts = circle_points(1.0, 32);
        pts[5][0] = f64::NAN;
        assert!(build_boundary(&pts).is_err());
    }

    #[test]
    fn rectangle_corners_have_exact_normals() {
        let g = rectangle(1.0, 1.0, 64).unwrap();
        for k in 0..g.len() {
            let p = g.points[k];
            let nrm = g.normals[k];
            if p[0] == 1.0 && p[1] > 0.0 && p[1] < 1.0 {
                assert!((nrm[0] - 1.0).abs() < 1e-12 && nrm[1].abs() < 1e-12);
            }
            if g.corner[k] {
                assert!((nrm[0].abs() - 1.0).abs() < 1e-12 || (nrm[1].abs() - 1.0).abs() < 1e-12);
            }
        }
        assert!((g.length - 4.0).abs() < 1e-12);
        assert!((g.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn containment_and_distance() {
        let g = build_boundary(&circle_points(1.0, 256)).unwrap();
        assert!(g.contains([0.3, -0.2]));
        assert!(!g.contains([1.01, 0.0]));
        assert!((g.distance_to_boundary([0.5, 0.0]) - 0.5).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn integral_of_derivative_vanishes(c in -2.0f64..2.0, m in 1usize..5) {
            let g = build_boundary(&circle_points(1.0, 200)).unwrap();
            let f: Vec<f64> = (0..g.len()).map(|k| c * (m as f64 * 2.0 * std::f64::consts::PI * g.arclength[k] / g.length).cos()).collect();
            prop_assert!(boundary_integral(&g, &f).abs() < 1e-10);
        }

        #[test]
        fn ellipse_area_and_orientation(a in 0.5f64..2.0, b in 0.5f64..2.0) {
            let g = ellipse(a, b, 400).unwrap();
            prop_assert!(g.area() > 0.0);
            prop_assert!((g.area() - std::f64::consts::PI * a * b).abs() / (a * b) < 1e-3);
            for k in 0..g.len() {
                let nn = g.normals[k][0].hypot(g.normals[k][1]);
                prop_assert!((nn - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scanline_mask_agrees_with_point_tests() {
        let g = dumbbell(1.0, 1.6, 0.6, 0.3, 400).unwrap();
        let grid = GridSpec::covering(&g, 0.037, 2).unwrap();
        let mask = g.inside_mask(&grid);
        for k in 0..grid.node_count() {
            let (i, j) = grid.ij(k);
            assert_eq!(mask[k], g.contains(grid.node(i, j)), "node {i} {j}");
        }
    }
}

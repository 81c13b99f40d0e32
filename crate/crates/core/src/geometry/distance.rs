//! Distance to the boundary: bucketed exact closest-point queries and a
//! fast-marching distance field on node grids.

use super::{dist, BoundaryGeometry, GridSpec, Point};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Closest boundary point to a query.
#[derive(Clone, Copy, Debug)]
pub struct ClosestPoint {
    pub distance: f64,
    /// Arclength coordinate of the foot point.
    pub s: f64,
    pub foot: Point,
    pub segment: usize,
}

/// Arclength of the foot point, signed inward distance `t`, and the outward
/// unit normal at the foot.
#[derive(Clone, Copy, Debug)]
pub struct LocalCoordinates {
    pub s: f64,
    pub t: f64,
    pub foot: Point,
    pub normal: Point,
}

/// Uniform bucket grid over boundary segments for exact closest-point queries.
pub struct SegmentIndex<'a> {
    geom: &'a BoundaryGeometry,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> SegmentIndex<'a> {
    pub fn new(geom: &'a BoundaryGeometry) -> Self {
        let n = geom.len();
        let (lo, hi) = geom.bounding_box();
        let cell = (geom.length / n as f64 * 4.0).max(1e-12);
        let nx = ((hi[0] - lo[0]) / cell).ceil() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for k in 0..n {
            let a = geom.points[k];
            let b = geom.points[(k + 1) % n];
            let i0 = ((a[0].min(b[0]) - lo[0]) / cell).floor().max(0.0) as usize;
            let i1 = (((a[0].max(b[0]) - lo[0]) / cell).floor() as usize).min(nx - 1);
            let j0 = ((a[1].min(b[1]) - lo[1]) / cell).floor().max(0.0) as usize;
            let j1 = (((a[1].max(b[1]) - lo[1]) / cell).floor() as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(k);
                }
            }
        }
        Self { geom, origin: lo, cell, nx, ny, buckets }
    }

    pub fn closest(&self, p: Point) -> ClosestPoint {
        self.search(p, f64::INFINITY)
    }

    /// Closest point if the boundary is within `radius` of `p`.
    pub fn closest_within(&self, p: Point, radius: f64) -> Option<ClosestPoint> {
        let c = self.search(p, radius);
        (c.distance <= radius).then_some(c)
    }

    /// Boundary-fitted coordinates of `p` if it lies within `radius` of the
    /// boundary: the polygon foot is refined onto the C1 Hermite curve through
    /// the samples and their tangents, so `t` is smooth across vertices.
    pub fn local_coordinates(&self, p: Point, radius: f64) -> Option<LocalCoordinates> {
        let c = self.closest_within(p, radius)?;
        let n = self.geom.len();
        let mut best: Option<(f64, LocalCoordinates)> = None;
        for k in [(c.segment + n - 1) % n, c.segment, (c.segment + 1) % n] {
            let len = self.geom.segment_length(k);
            if len == 0.0 {
                continue;
            }
            let (d, lc) = self.hermite_foot(p, k, len);
            if best.as_ref().map_or(true, |b| d < b.0) {
                best = Some((d, lc));
            }
        }
        best.map(|b| b.1)
    }

    fn hermite_foot(&self, p: Point, k: usize, len: f64) -> (f64, LocalCoordinates) {
        let g = self.geom;
        let n = g.len();
        let (a, b) = (g.points[k], g.points[(k + 1) % n]);
        let (ta, tb) = (g.tangents[k], g.tangents[(k + 1) % n]);
        let curve = |u: f64| -> [Point; 3] {
            let (u2, u3) = (u * u, u * u * u);
            let h = [2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2];
            let d = [6.0 * u2 - 6.0 * u, 3.0 * u2 - 4.0 * u + 1.0, -6.0 * u2 + 6.0 * u, 3.0 * u2 - 2.0 * u];
            let dd = [12.0 * u - 6.0, 6.0 * u - 4.0, -12.0 * u + 6.0, 6.0 * u - 2.0];
            let comb = |w: [f64; 4], i: usize| w[0] * a[i] + w[1] * len * ta[i] + w[2] * b[i] + w[3] * len * tb[i];
            [[comb(h, 0), comb(h, 1)], [comb(d, 0), comb(d, 1)], [comb(dd, 0), comb(dd, 1)]]
        };
        let (mut u, _) = super::project_on_segment(p, a, b);
        for _ in 0..8 {
            let [c, d, dd] = curve(u);
            let r = [c[0] - p[0], c[1] - p[1]];
            let f = r[0] * d[0] + r[1] * d[1];
            let df = d[0] * d[0] + d[1] * d[1] + r[0] * dd[0] + r[1] * dd[1];
            if df <= 0.0 {
                break;
            }
            let next = (u - f / df).clamp(0.0, 1.0);
            let done = (next - u).abs() < 1e-14;
            u = next;
            if done {
                break;
            }
        }
        let [c, d, _] = curve(u);
        let dn = d[0].hypot(d[1]);
        let tangent = [d[0] / dn, d[1] / dn];
        let normal = [tangent[1], -tangent[0]];
        let t = -((p[0] - c[0]) * normal[0] + (p[1] - c[1]) * normal[1]);
        let lc = LocalCoordinates { s: g.arclength[k] + u * len, t, foot: c, normal };
        (dist(p, c), lc)
    }

    fn search(&self, p: Point, radius: f64) -> ClosestPoint {
        let n = self.geom.len();
        let ci = ((p[0] - self.origin[0]) / self.cell).floor() as i64;
        let cj = ((p[1] - self.origin[1]) / self.cell).floor() as i64;
        // Distance from p to the bucket box, so rings can start where buckets exist.
        let clamp_i = ci.clamp(0, self.nx as i64 - 1);
        let clamp_j = cj.clamp(0, self.ny as i64 - 1);
        let mut best = ClosestPoint { distance: f64::INFINITY, s: 0.0, foot: p, segment: 0 };
        let max_ring = self.nx.max(self.ny) as i64 + 1;
        let mut r = 0;
        while r <= max_ring {
            // Everything in rings >= r is at least (r - 1) cells away from p.
            let lower = (r - 1).max(0) as f64 * self.cell;
            if best.distance < lower || lower > radius {
                break;
            }
            for j in (clamp_j - r)..=(clamp_j + r) {
                for i in (clamp_i - r)..=(clamp_i + r) {
                    if (i - clamp_i).abs() != r && (j - clamp_j).abs() != r {
                        continue;
                    }
                    if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                        continue;
                    }
                    for &k in &self.buckets[j as usize * self.nx + i as usize] {
                        let a = self.geom.points[k];
                        let b = self.geom.points[(k + 1) % n];
                        let (t, q) = super::project_on_segment(p, a, b);
                        let d = dist(p, q);
                        if d < best.distance {
                            best = ClosestPoint { distance: d, s: self.geom.arclength[k] + t * self.geom.segment_length(k), foot: q, segment: k };
                        }
                    }
                }
            }
            r += 1;
        }
        best
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal)
    }
}

/// Unsigned distance to the boundary at every node of `grid`.
///
/// Nodes within `exact_band` of the boundary (and their neighbours used to
/// seed the march) get exact closest-point distances; the rest come from a
/// first-order fast-marching solve of |grad t| = 1.
pub fn distance_field(geom: &BoundaryGeometry, grid: &GridSpec, exact_band: f64) -> Vec<f64> {
    let index = SegmentIndex::new(geom);
    let n = grid.node_count();
    let h = grid.h;
    let mut t = vec![f64::INFINITY; n];
    let mut frozen = vec![false; n];
    let mut heap = BinaryHeap::new();
    // Seed with exact values on nodes close to the boundary.
    let n_b = geom.len();
    let seed_radius = 2.0 * h;
    let mut seeded = vec![false; n];
    for k in 0..n_b {
        let a = geom.points[k];
        let b = geom.points[(k + 1) % n_b];
        let lo = [a[0].min(b[0]) - seed_radius, a[1].min(b[1]) - seed_radius];
        let hi = [a[0].max(b[0]) + seed_radius, a[1].max(b[1]) + seed_radius];
        let i0 = (((lo[0] - grid.origin[0]) / h).floor().max(0.0)) as usize;
        let j0 = (((lo[1] - grid.origin[1]) / h).floor().max(0.0)) as usize;
        let i1 = (((hi[0] - grid.origin[0]) / h).ceil() as usize).min(grid.nx - 1);
        let j1 = (((hi[1] - grid.origin[1]) / h).ceil() as usize).min(grid.ny - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let m = grid.index(i, j);
                if !seeded[m] {
                    seeded[m] = true;
                    let d = index.closest(grid.node(i, j)).distance;
                    if d <= seed_radius {
                        t[m] = d;
                        frozen[m] = true;
                    }
                }
            }
        }
    }
    for m in 0..n {
        if frozen[m] {
            heap.push(Item(t[m], m));
        }
    }
    let mut accepted = frozen.clone();
    for a in accepted.iter_mut() {
        *a = false;
    }
    while let Some(Item(d, m)) = heap.pop() {
        if accepted[m] || d > t[m] {
            continue;
        }
        accepted[m] = true;
        let (i, j) = grid.ij(m);
        let nbrs = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
        for (a, b) in nbrs {
            if a >= grid.nx || b >= grid.ny {
                continue;
            }
            let q = grid.index(a, b);
            if accepted[q] || frozen[q] {
                continue;
            }
            let val = |x: usize, y: usize| -> f64 {
                if x < grid.nx && y < grid.ny {
                    let k = grid.index(x, y);
                    if accepted[k] {
                        return t[k];
                    }
                }
                f64::INFINITY
            };
            let tx = val(a.wrapping_sub(1), b).min(val(a + 1, b));
            let ty = val(a, b.wrapping_sub(1)).min(val(a, b + 1));
            let (lo, hi) = if tx < ty { (tx, ty) } else { (ty, tx) };
            let cand = if hi - lo >= h {
                lo + h
            } else {
                0.5 * (lo + hi + (2.0 * h * h - (hi - lo) * (hi - lo)).sqrt())
            };
            if cand < t[q] {
                t[q] = cand;
                heap.push(Item(cand, q));
            }
        }
    }
    for m in 0..n {
        if t[m] < exact_band && !frozen[m] {
            let (i, j) = grid.ij(m);
            t[m] = index.closest(grid.node(i, j)).distance;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::super::presets::{circle, dumbbell};
    use super::*;

    #[test]
    fn closest_point_matches_brute_force() {
        let g = dumbbell(1.0, 1.6, 0.6, 0.3, 500).unwrap();
        let idx = SegmentIndex::new(&g);
        for k in 0..200 {
            let p = [-2.5 + 5.0 * ((k * 37) % 200) as f64 / 200.0, -1.1 + 2.2 * ((k * 91) % 200) as f64 / 200.0];
            let cp = idx.closest(p);
            assert!((cp.distance - g.distance_to_boundary(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn fast_marching_on_disk() {
        let g = circle(1.0, 1024).unwrap();
        let grid = GridSpec::covering(&g, 0.02, 2).unwrap();
        let t = distance_field(&g, &grid, 0.2);
        let mut worst_band = 0.0f64;
        let mut worst = 0.0f64;
        for m in 0..grid.node_count() {
            let (i, j) = grid.ij(m);
            let p = grid.node(i, j);
            let exact = (1.0 - p[0].hypot(p[1])).abs();
            let e = (t[m] - exact).abs();
            if t[m] < 0.2 {
                worst_band = worst_band.max(e);
            } else if p[0].hypot(p[1]) < 1.0 {
                worst = worst.max(e);
            }
        }
        assert!(worst_band < 1e-4, "{worst_band}");
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn local_coordinates_on_disk_are_smooth() {
        let g = circle(1.0, 64).unwrap();
        let idx = SegmentIndex::new(&g);
        let mut worst = 0.0f64;
        for k in 0..500 {
            let a = 0.0123 * k as f64;
            let r = 0.97;
            let lc = idx.local_coordinates([r * a.cos(), r * a.sin()], 0.1).unwrap();
            worst = worst.max((lc.t - (1.0 - r)).abs());
        }
        // A polygon with 64 sides has sagitta 1.2e-3; the Hermite curve is far closer.
        assert!(worst < 2e-5, "{worst}");
        assert!(idx.local_coordinates([0.0, 0.0], 0.1).is_none());
    }
}

//! Shortest paths inside the closed domain between boundary points.
//!
//! In a polygon, shortest paths are polylines that bend only at reflex
//! vertices, so distances follow from visibility tests and a small graph over
//! those vertices. `grid_geodesic` is a crude 8-connected grid estimate kept as
//! an independent cross-check.

use super::{cross, dist, sub, BoundaryGeometry, Point};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Geodesic distance engine for one boundary polygon.
pub struct Geodesic<'a> {
    geom: &'a BoundaryGeometry,
    segs: Vec<(Point, Point)>,
    reflex: Vec<Point>,
    /// All-pairs distances between reflex vertices.
    reflex_dist: Vec<f64>,
    tol: f64,
    convex: bool,
}

impl<'a> Geodesic<'a> {
    pub fn new(geom: &'a BoundaryGeometry) -> Self {
        let n = geom.len();
        let segs: Vec<(Point, Point)> = (0..n)
            .map(|k| (geom.points[k], geom.points[(k + 1) % n]))
            .filter(|(a, b)| a != b)
            .collect();
        let (lo, hi) = geom.bounding_box();
        let scale = dist(lo, hi);
        let tol = 1e-10 * scale;
        let m = segs.len();
        let mut reflex = Vec::new();
        for k in 0..m {
            let (a, b) = segs[k];
            let (_, c) = segs[(k + 1) % m];
            if cross(sub(b, a), sub(c, b)) < -1e-12 * dist(a, b) * dist(b, c) {
                reflex.push(b);
            }
        }
        let convex = reflex.is_empty();
        let mut g = Self { geom, segs, reflex, reflex_dist: Vec::new(), tol, convex };
        let r = g.reflex.len();
        let mut d = vec![f64::INFINITY; r * r];
        for i in 0..r {
            d[i * r + i] = 0.0;
            for j in i + 1..r {
                if g.visible(g.reflex[i], g.reflex[j]) {
                    let v = dist(g.reflex[i], g.reflex[j]);
                    d[i * r + j] = v;
                    d[j * r + i] = v;
                }
            }
        }
        for k in 0..r {
            for i in 0..r {
                let dik = d[i * r + k];
                if dik.is_infinite() {
                    continue;
                }
                for j in 0..r {
                    let v = dik + d[k * r + j];
                    if v < d[i * r + j] {
                        d[i * r + j] = v;
                    }
                }
            }
        }
        g.reflex_dist = d;
        g
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// Whether the straight segment `ab` stays in the closed domain.
    pub fn visible(&self, a: Point, b: Point) -> bool {
        if self.convex {
            return true;
        }
        let len = dist(a, b);
        if len <= self.tol {
            return true;
        }
        let mut cuts = vec![0.0, 1.0];
        let ab = sub(b, a);
        for &(c, d) in &self.segs {
            // Quick reject on bounding boxes.
            if a[0].max(b[0]) < c[0].min(d[0]) - self.tol
                || a[0].min(b[0]) > c[0].max(d[0]) + self.tol
                || a[1].max(b[1]) < c[1].min(d[1]) - self.tol
                || a[1].min(b[1]) > c[1].max(d[1]) + self.tol
            {
                continue;
            }
            let cd = sub(d, c);
            let o1 = cross(ab, sub(c, a));
            let o2 = cross(ab, sub(d, a));
            let o3 = cross(cd, sub(a, c));
            let o4 = cross(cd, sub(b, c));
            let e1 = self.tol * len;
            let e2 = self.tol * dist(c, d);
            if ((o1 > e1 && o2 < -e1) || (o1 < -e1 && o2 > e1)) && ((o3 > e2 && o4 < -e2) || (o3 < -e2 && o4 > e2)) {
                return false;
            }
            // Record touch points of the segment endpoints on ab.
            for p in [c, d] {
                let (t, q) = super::project_on_segment(p, a, b);
                if dist(p, q) <= self.tol && t > 0.0 && t < 1.0 {
                    cuts.push(t);
                }
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.windows(2).all(|w| {
            if w[1] - w[0] < 1e-12 {
                return true;
            }
            let t = 0.5 * (w[0] + w[1]);
            let m = [a[0] + t * ab[0], a[1] + t * ab[1]];
            self.geom.contains(m) || self.on_boundary(m)
        })
    }

    fn on_boundary(&self, p: Point) -> bool {
        self.segs.iter().any(|&(c, d)| super::point_segment_distance(p, c, d) <= self.tol)
    }

    /// Distances from a source point to every reflex vertex through the domain.
    pub fn reflex_potential(&self, x: Point) -> Vec<f64> {
        let r = self.reflex.len();
        let direct: Vec<f64> = self
            .reflex
            .iter()
            .map(|&v| if self.visible(x, v) { dist(x, v) } else { f64::INFINITY })
            .collect();
        (0..r)
            .map(|j| (0..r).map(|i| direct[i] + self.reflex_dist[i * r + j]).fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Geodesic distance given the source potential from `reflex_potential`.
    pub fn distance_with(&self, x: Point, potential: &[f64], y: Point) -> f64 {
        if self.visible(x, y) {
            return dist(x, y);
        }
        self.reflex
            .iter()
            .zip(potential)
            .filter(|(_, p)| p.is_finite())
            .filter(|(&v, _)| self.visible(v, y))
            .map(|(&v, p)| p + dist(v, y))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn distance(&self, x: Point, y: Point) -> f64 {
        if self.convex || self.visible(x, y) {
            return dist(x, y);
        }
        let pot = self.reflex_potential(x);
        self.distance_with(x, &pot, y)
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

/// Geodesic estimate by Dijkstra on the 8-connected graph of grid nodes inside
/// the domain. Overestimates by at most about 8% plus O(h).
pub fn grid_geodesic(geom: &BoundaryGeometry, h: f64, x: Point, y: Point) -> f64 {
    let grid = super::GridSpec::covering(geom, h, 1).expect("positive spacing");
    let n = grid.node_count();
    let inside: Vec<bool> = (0..n).map(|k| { let (i, j) = grid.ij(k); geom.contains(grid.node(i, j)) }).collect();
    let nearest = |p: Point| {
        (0..n)
            .filter(|&k| inside[k])
            .map(|k| { let (i, j) = grid.ij(k); (dist(grid.node(i, j), p), k) })
            .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
    };
    let (dx, sx) = nearest(x);
    let (dy, sy) = nearest(y);
    let mut best = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    best[sx] = 0.0;
    heap.push(Item(0.0, sx));
    while let Some(Item(d, k)) = heap.pop() {
        if d > best[k] {
            continue;
        }
        if k == sy {
            break;
        }
        let (i, j) = grid.ij(k);
        for (di, dj) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
            let (a, b) = (i as i64 + di, j as i64 + dj);
            if a < 0 || b < 0 || a >= grid.nx as i64 || b >= grid.ny as i64 {
                continue;
            }
            let m = grid.index(a as usize, b as usize);
            if !inside[m] {
                continue;
            }
            let nd = d + h * ((di * di + dj * dj) as f64).sqrt();
            if nd < best[m] {
                best[m] = nd;
                heap.push(Item(nd, m));
            }
        }
    }
    best[sy] + dx + dy
}

#[cfg(test)]
mod tests {
    use super::super::presets::{circle, dumbbell};
    use super::*;

    #[test]
    fn convex_domain_uses_chords() {
        let g = circle(1.0, 128).unwrap();
        let geo = Geodesic::new(&g);
        assert!(geo.is_convex());
        assert!((geo.distance([1.0, 0.0], [-1.0, 0.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dumbbell_path_wraps_the_neck() {
        let g = dumbbell(1.0, 1.6, 0.6, 0.3, 800).unwrap();
        let geo = Geodesic::new(&g);
        // Top of the left lobe to top of the right lobe cannot go straight.
        let a = g.points.iter().copied().filter(|p| p[0] < -1.0).fold([0.0, -9.0], |m, p| if p[1] > m[1] { p } else { m });
        let b = g.points.iter().copied().filter(|p| p[0] > 1.0).fold([0.0, -9.0], |m, p| if p[1] > m[1] { p } else { m });
        let d = geo.distance(a, b);
        assert!(d > dist(a, b) + 0.1);
        let oracle = grid_geodesic(&g, 0.01, a, b);
        assert!(d <= oracle + 1e-9, "{d} {oracle}");
        assert!(oracle <= 1.09 * d + 0.05, "{d} {oracle}");
    }

    #[test]
    fn visibility_is_symmetric() {
        let g = dumbbell(1.0, 1.6, 0.6, 0.3, 400).unwrap();
        let geo = Geodesic::new(&g);
        for (i, j) in [(0, 100), (50, 250), (120, 330), (10, 200)] {
            let (a, b) = (g.points[i], g.points[j]);
            assert_eq!(geo.visible(a, b), geo.visible(b, a));
        }
    }
}

//! Finite-cell Q1 discretization of a polygonal domain on a Cartesian grid.
//!
//! Each grid cell is classified as outside, fully inside, or cut by the
//! boundary. Cut cells are integrated over the exact polygon-cell
//! intersection (clip, fan-triangulate, 6-point degree-4 triangle rule), so
//! volume integrals of Q1 quantities are exact up to the quadrature degree.
//! Boundary data are integrated along the polygon segments.

use crate::geometry::{cross, sub, BoundaryGeometry, GridSpec, Point};
use crate::linalg::gauss_legendre_unit;

/// Quadrature point in local cell coordinates with physical weight.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub xi: f64,
    pub eta: f64,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct Cell {
    /// Lower-left node indices.
    pub i: usize,
    pub j: usize,
    /// Area of the cell inside the domain.
    pub area: f64,
    /// `None` for fully inside cells, which share the tensor Gauss rule.
    pub quad: Option<Vec<QuadPoint>>,
}

/// Quadrature point on the boundary curve.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub cell: usize,
    pub xi: f64,
    pub eta: f64,
    /// Arclength weight.
    pub weight: f64,
    /// Boundary segment and position t in [0,1] along it.
    pub segment: usize,
    pub t: f64,
}

pub struct FiniteCellMesh {
    pub grid: GridSpec,
    pub cells: Vec<Cell>,
    pub full_rule: Vec<QuadPoint>,
    pub boundary: Vec<BoundaryPoint>,
    /// Node is in the support of some cell with positive inside area.
    pub active: Vec<bool>,
    /// Lumped mass: integral of each nodal basis function over the domain.
    pub mass: Vec<f64>,
    pub area: f64,
}

/// Local Q1 shape functions at (xi, eta) for nodes (i,j), (i+1,j), (i,j+1), (i+1,j+1).
pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), (1.0 - xi) * eta, xi * eta]
}

/// Shape-function gradients in local coordinates (divide by h for physical ones).
pub fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [[-(1.0 - eta), -(1.0 - xi)], [1.0 - eta, -xi], [-eta, 1.0 - xi], [eta, xi]]
}

impl Cell {
    pub fn nodes(&self, grid: &GridSpec) -> [usize; 4] {
        [grid.index(self.i, self.j), grid.index(self.i + 1, self.j), grid.index(self.i, self.j + 1), grid.index(self.i + 1, self.j + 1)]
    }
}

const TRI_A: [(f64, f64, f64); 2] = [
    (0.445_948_490_915_965, 0.108_103_018_168_070, 0.223_381_589_678_011),
    (0.091_576_213_509_771, 0.816_847_572_980_459, 0.109_951_743_655_322),
];

/// Degree-4 rule on the signed triangle (a, b, c); weights carry the sign of the area.
fn triangle_rule(a: Point, b: Point, c: Point, out: &mut Vec<(Point, f64)>) {
    let area = 0.5 * cross(sub(b, a), sub(c, a));
    if area == 0.0 {
        return;
    }
    for &(p, q, w) in &TRI_A {
        for bary in [[p, p, q], [p, q, p], [q, p, p]] {
            let x = bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0];
            let y = bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1];
            out.push(([x, y], w * area));
        }
    }
}

/// Sutherland-Hodgman clip of a polygon against an axis-aligned box.
fn clip_to_box(poly: &[Point], lo: Point, hi: Point) -> Vec<Point> {
    let mut out: Vec<Point> = poly.to_vec();
    for edge in 0..4 {
        if out.is_empty() {
            break;
        }
        let inside = |p: &Point| match edge {
            0 => p[0] >= lo[0],
            1 => p[0] <= hi[0],
            2 => p[1] >= lo[1],
            _ => p[1] <= hi[1],
        };
        let cut = |a: Point, b: Point| -> Point {
            let (axis, val) = match edge {
                0 => (0, lo[0]),
                1 => (0, hi[0]),
                2 => (1, lo[1]),
                _ => (1, hi[1]),
            };
            let t = (val - a[axis]) / (b[axis] - a[axis]);
            let mut p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            p[axis] = val;
            p
        };
        let input = std::mem::take(&mut out);
        let n = input.len();
        for k in 0..n {
            let cur = input[k];
            let prev = input[(k + n - 1) % n];
            match (inside(&prev), inside(&cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cut(prev, cur)),
                (false, true) => {
                    out.push(cut(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}

fn polygon_area(p: &[Point]) -> f64 {
    crate::geometry::signed_area(p)
}

impl FiniteCellMesh {
    pub fn new(geom: &BoundaryGeometry, grid: GridSpec) -> Self {
        let h = grid.h;
        let (ncx, ncy) = (grid.nx - 1, grid.ny - 1);
        let nb = geom.len();
        // Cells touched by the bounding box of some boundary segment.
        let mut candidate = vec![false; ncx * ncy];
        let cell_range = |v: f64, o: f64, n: usize| -> (usize, usize) {
            let f = (v - o) / h;
            let lo = (f.floor() as i64 - 1).clamp(0, n as i64 - 1) as usize;
            let hi = (f.floor() as i64 + 1).clamp(0, n as i64 - 1) as usize;
            (lo, hi)
        };
        for k in 0..nb {
            let a = geom.points[k];
            let b = geom.points[(k + 1) % nb];
            let (i0, _) = cell_range(a[0].min(b[0]), grid.origin[0], ncx);
            let (_, i1) = cell_range(a[0].max(b[0]), grid.origin[0], ncx);
            let (j0, _) = cell_range(a[1].min(b[1]), grid.origin[1], ncy);
            let (_, j1) = cell_range(a[1].max(b[1]), grid.origin[1], ncy);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    candidate[j * ncx + i] = true;
                }
            }
        }
        // Inside test for the remaining cells by scanline crossings at cell-centre rows.
        let mut cells = Vec::new();
        let mut cell_of = vec![usize::MAX; ncx * ncy];
        let g1 = [0.5 - 0.5 * (0.6f64).sqrt(), 0.5, 0.5 + 0.5 * (0.6f64).sqrt()];
        let w1 = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        let mut full_rule = Vec::with_capacity(9);
        for b in 0..3 {
            for a in 0..3 {
                full_rule.push(QuadPoint { xi: g1[a], eta: g1[b], weight: w1[a] * w1[b] * h * h });
            }
        }
        let clip_results: Vec<Option<(f64, Vec<QuadPoint>)>> = {
            use rayon::prelude::*;
            (0..ncx * ncy)
                .into_par_iter()
                .map(|c| {
                    if !candidate[c] {
                        return None;
                    }
                    let (i, j) = (c % ncx, c / ncx);
                    let lo = grid.node(i, j);
                    let hi = [lo[0] + h, lo[1] + h];
                    let poly = clip_to_box(&geom.points, lo, hi);
                    let area = if poly.len() >= 3 { polygon_area(&poly) } else { 0.0 };
                    let mut pts = Vec::new();
                    if poly.len() >= 3 {
                        for k in 1..poly.len() - 1 {
                            triangle_rule(poly[0], poly[k], poly[k + 1], &mut pts);
                        }
                    }
                    let quad = pts
                        .into_iter()
                        .map(|(p, w)| QuadPoint { xi: (p[0] - lo[0]) / h, eta: (p[1] - lo[1]) / h, weight: w })
                        .collect();
                    Some((area, quad))
                })
                .collect()
        };
        for j in 0..ncy {
            let yc = grid.origin[1] + (j as f64 + 0.5) * h;
            let mut xs: Vec<f64> = Vec::new();
            for k in 0..nb {
                let a = geom.points[k];
                let b = geom.points[(k + 1) % nb];
                if (a[1] > yc) != (b[1] > yc) {
                    xs.push(a[0] + (yc - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
                }
            }
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for i in 0..ncx {
                let c = j * ncx + i;
                if let Some((area, quad)) = &clip_results[c] {
                    let rel = area / (h * h);
                    if rel <= 1e-14 {
                        continue;
                    }
                    let quad = if (rel - 1.0).abs() <= 1e-12 { None } else { Some(quad.clone()) };
                    let area = if quad.is_none() { h * h } else { *area };
                    cell_of[c] = cells.len();
                    cells.push(Cell { i, j, area, quad });
                } else {
                    let xc = grid.origin[0] + (i as f64 + 0.5) * h;
                    let crossings = xs.iter().filter(|&&x| x > xc).count();
                    if crossings % 2 == 1 {
                        cell_of[c] = cells.len();
                        cells.push(Cell { i, j, area: h * h, quad: None });
                    }
                }
            }
        }

        let mut active = vec![false; grid.node_count()];
        let mut mass = vec![0.0; grid.node_count()];
        let mut area = 0.0;
        for cell in &cells {
            let nodes = cell.nodes(&grid);
            for &n in &nodes {
                active[n] = true;
            }
            area += cell.area;
            let rule = cell.quad.as_ref().unwrap_or(&full_rule);
            for q in rule {
                let s = shape(q.xi, q.eta);
                for a in 0..4 {
                    mass[nodes[a]] += q.weight * s[a];
                }
            }
        }

        // Boundary quadrature: split each segment at grid lines, 3-point Gauss per piece.
        let (gx, gw) = gauss_legendre_unit(3);
        let mut boundary = Vec::new();
        for k in 0..nb {
            let a = geom.points[k];
            let b = geom.points[(k + 1) % nb];
            let len = crate::geometry::dist(a, b);
            if len == 0.0 {
                continue;
            }
            let mut ts = vec![0.0, 1.0];
            for axis in 0..2 {
                let (fa, fb) = ((a[axis] - grid.origin[axis]) / h, (b[axis] - grid.origin[axis]) / h);
                if fa != fb {
                    let (lo, hi) = (fa.min(fb), fa.max(fb));
                    let mut m = lo.ceil();
                    while m <= hi {
                        let t = (m - fa) / (fb - fa);
                        if t > 0.0 && t < 1.0 {
                            ts.push(t);
                        }
                        m += 1.0;
                    }
                }
            }
            ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            ts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
            for w in ts.windows(2) {
                let (t0, t1) = (w[0], w[1]);
                if t1 - t0 <= 0.0 {
                    continue;
                }
                let tm = 0.5 * (t0 + t1);
                let pm = [a[0] + tm * (b[0] - a[0]), a[1] + tm * (b[1] - a[1])];
                let Some(c) = Self::pick_cell(&grid, &cell_of, &cells, pm) else { continue };
                let lo = grid.node(cells[c].i, cells[c].j);
                for (x, wq) in gx.iter().zip(&gw) {
                    let t = t0 + x * (t1 - t0);
                    let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                    boundary.push(BoundaryPoint {
                        cell: c,
                        xi: ((p[0] - lo[0]) / h).clamp(0.0, 1.0),
                        eta: ((p[1] - lo[1]) / h).clamp(0.0, 1.0),
                        weight: wq * (t1 - t0) * len,
                        segment: k,
                        t,
                    });
                }
            }
        }
        Self { grid, cells, full_rule, boundary, active, mass, area }
    }

    /// Cell containing `p`; on a grid line, the neighbour with more inside area.
    fn pick_cell(grid: &GridSpec, cell_of: &[usize], cells: &[Cell], p: Point) -> Option<usize> {
        let (ncx, ncy) = (grid.nx - 1, grid.ny - 1);
        let fx = (p[0] - grid.origin[0]) / grid.h;
        let fy = (p[1] - grid.origin[1]) / grid.h;
        let options = |f: f64, n: usize| -> Vec<usize> {
            let r = f.round();
            let mut v = Vec::new();
            if (f - r).abs() < 1e-10 {
                for c in [r as i64 - 1, r as i64] {
                    if c >= 0 && (c as usize) < n {
                        v.push(c as usize);
                    }
                }
            } else {
                let c = f.floor() as i64;
                if c >= 0 && (c as usize) < n {
                    v.push(c as usize);
                }
            }
            v
        };
        let mut best: Option<(f64, usize)> = None;
        for j in options(fy, ncy) {
            for i in options(fx, ncx) {
                let c = cell_of[j * ncx + i];
                if c != usize::MAX && best.is_none_or(|b| cells[c].area > b.0) {
                    best = Some((cells[c].area, c));
                }
            }
        }
        best.map(|b| b.1)
    }

    pub fn rule<'a>(&'a self, cell: &'a Cell) -> &'a [QuadPoint] {
        cell.quad.as_deref().unwrap_or(&self.full_rule)
    }

    /// Physical coordinates of a quadrature point.
    pub fn point(&self, cell: &Cell, xi: f64, eta: f64) -> Point {
        let lo = self.grid.node(cell.i, cell.j);
        [lo[0] + xi * self.grid.h, lo[1] + eta * self.grid.h]
    }

    /// Gradient of the Q1 function with nodal values `u` at a local point.
    pub fn gradient(&self, cell: &Cell, u: &[f64], xi: f64, eta: f64) -> [f64; 2] {
        let nodes = cell.nodes(&self.grid);
        let dn = shape_grad(xi, eta);
        let mut g = [0.0; 2];
        for a in 0..4 {
            g[0] += dn[a][0] * u[nodes[a]];
            g[1] += dn[a][1] * u[nodes[a]];
        }
        [g[0] / self.grid.h, g[1] / self.grid.h]
    }

    pub fn value(&self, cell: &Cell, u: &[f64], xi: f64, eta: f64) -> f64 {
        let nodes = cell.nodes(&self.grid);
        let s = shape(xi, eta);
        (0..4).map(|a| s[a] * u[nodes[a]]).sum()
    }

    /// Integral of a nodal Q1 function over the domain.
    pub fn integral(&self, u: &[f64]) -> f64 {
        self.mass.iter().zip(u).map(|(m, v)| m * v).sum()
    }

    /// Subtract the domain average from a nodal function (active nodes only).
    pub fn remove_mean(&self, u: &mut [f64]) {
        let mean = self.integral(u) / self.area;
        for (v, &a) in u.iter_mut().zip(&self.active) {
            if a {
                *v -= mean;
            } else {
                *v = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::presets::{circle, dumbbell, rectangle};

    #[test]
    fn disk_area_and_perimeter_are_exact_for_the_polygon() {
        let g = circle(1.0, 400).unwrap();
        let grid = GridSpec::covering(&g, 0.05, 2).unwrap();
        let mesh = FiniteCellMesh::new(&g, grid);
        assert!((mesh.area - g.area()).abs() < 1e-12, "{} {}", mesh.area, g.area());
        let per: f64 = mesh.boundary.iter().map(|b| b.weight).sum();
        assert!((per - g.length).abs() < 1e-12);
        let total_mass: f64 = mesh.mass.iter().sum();
        assert!((total_mass - g.area()).abs() < 1e-12);
    }

    #[test]
    fn quadrature_integrates_quartics_on_cut_cells() {
        let g = dumbbell(1.0, 1.6, 0.6, 0.3, 600).unwrap();
        let grid = GridSpec::covering(&g, 0.07, 2).unwrap();
        let mesh = FiniteCellMesh::new(&g, grid);
        // Divergence theorem: integral of div(x^3 y^2, 0) = integral over the
        // boundary of x^3 y^2 n_x, with the boundary taken as the exact polygon.
        let f = |p: Point| 3.0 * p[0] * p[0] * p[1] * p[1];
        let mut vol = 0.0;
        for c in &mesh.cells {
            for q in mesh.rule(c) {
                vol += q.weight * f(mesh.point(c, q.xi, q.eta));
            }
        }
        let n = g.len();
        let mut surf = 0.0;
        let (x, w) = gauss_legendre_unit(4);
        for k in 0..n {
            let a = g.points[k];
            let b = g.points[(k + 1) % n];
            for (t, wt) in x.iter().zip(&w) {
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                surf += wt * p[0].powi(3) * p[1] * p[1] * (b[1] - a[1]);
            }
        }
        assert!((vol - surf).abs() < 1e-11, "{vol} {surf}");
    }

    #[test]
    fn rectangle_on_grid_lines_has_no_cut_cells() {
        let g = rectangle(1.0, 1.0, 256).unwrap();
        let grid = GridSpec::covering(&g, 1.0 / 16.0, 2).unwrap();
        let mesh = FiniteCellMesh::new(&g, grid);
        assert_eq!(mesh.cells.len(), 256);
        assert!(mesh.cells.iter().all(|c| c.quad.is_none()));
        assert!((mesh.area - 1.0).abs() < 1e-13);
    }
}

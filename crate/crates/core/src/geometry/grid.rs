//! Uniform Cartesian node grids and nodal fields.

use super::{BoundaryGeometry, Point};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Coordinates of node (0, 0).
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    /// Boundary-layer width the grid is meant to resolve, if any.
    pub delta: Option<f64>,
}

impl GridSpec {
    /// Grid covering the bounding box of `geom` with `pad` extra cells on each
    /// side. Nodes sit on integer multiples of `h`, so grid-aligned boundaries
    /// coincide with grid lines.
    pub fn covering(geom: &BoundaryGeometry, h: f64, pad: usize) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Resolution(format!("grid spacing must be positive, got {h}")));
        }
        let (lo, hi) = geom.bounding_box();
        let i0 = (lo[0] / h + 1e-9).floor() as i64 - pad as i64;
        let j0 = (lo[1] / h + 1e-9).floor() as i64 - pad as i64;
        let i1 = (hi[0] / h - 1e-9).ceil() as i64 + pad as i64;
        let j1 = (hi[1] / h - 1e-9).ceil() as i64 + pad as i64;
        Ok(Self { origin: [i0 as f64 * h, j0 as f64 * h], h, nx: (i1 - i0 + 1) as usize, ny: (j1 - j0 + 1) as usize, delta: None })
    }

    /// Reject grids that do not resolve the layer width with at least
    /// `min_cells` cells.
    pub fn with_delta(mut self, delta: f64, min_cells: f64) -> Result<Self> {
        if delta < min_cells * self.h {
            return Err(Error::Resolution(format!(
                "layer width {delta:.4e} spans {:.2} cells, need at least {min_cells}",
                delta / self.h
            )));
        }
        self.delta = Some(delta);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    /// Cell containing `p` and local coordinates in [0,1]^2, clamped to the grid.
    pub fn locate(&self, p: Point) -> (usize, usize, f64, f64) {
        let fx = (p[0] - self.origin[0]) / self.h;
        let fy = (p[1] - self.origin[1]) / self.h;
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 2);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 2);
        (i, j, fx - i as f64, fy - j as f64)
    }
}

/// Scalar values at grid nodes with an activity mask.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl NodeField {
    pub fn new(grid: GridSpec, values: Vec<f64>, mask: Vec<bool>) -> Self {
        assert_eq!(values.len(), grid.node_count());
        assert_eq!(mask.len(), grid.node_count());
        Self { grid, values, mask }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Bilinear interpolation from the four surrounding nodes.
    pub fn bilinear(&self, p: Point) -> f64 {
        let (i, j, u, v) = self.grid.locate(p);
        let g = |a, b| self.get(a, b);
        (1.0 - u) * (1.0 - v) * g(i, j) + u * (1.0 - v) * g(i + 1, j) + (1.0 - u) * v * g(i, j + 1) + u * v * g(i + 1, j + 1)
    }

    /// Bicubic interpolation, or `None` if the stencil leaves the active set.
    pub fn bicubic_strict(&self, p: Point) -> Option<f64> {
        let (i, j, u, v) = self.grid.locate(p);
        if i == 0 || j == 0 || i + 2 >= self.grid.nx || j + 2 >= self.grid.ny {
            return None;
        }
        let (wx, wy) = (catmull_rom(u), catmull_rom(v));
        let mut acc = 0.0;
        for b in 0..4 {
            for a in 0..4 {
                let idx = self.grid.index(i + a - 1, j + b - 1);
                if !self.mask[idx] {
                    return None;
                }
                acc += wx[a] * wy[b] * self.values[idx];
            }
        }
        Some(acc)
    }

    /// Bicubic (Catmull-Rom) interpolation; falls back to bilinear where the
    /// 4x4 stencil leaves the active set.
    pub fn bicubic(&self, p: Point) -> f64 {
        let (i, j, u, v) = self.grid.locate(p);
        if i == 0 || j == 0 || i + 2 >= self.grid.nx || j + 2 >= self.grid.ny {
            return self.bilinear(p);
        }
        let (wx, wy) = (catmull_rom(u), catmull_rom(v));
        let mut acc = 0.0;
        for b in 0..4 {
            for a in 0..4 {
                let idx = self.grid.index(i + a - 1, j + b - 1);
                if !self.mask[idx] {
                    return self.bilinear(p);
                }
                acc += wx[a] * wy[b] * self.values[idx];
            }
        }
        acc
    }
}

fn catmull_rom(t: f64) -> [f64; 4] {
    [
        0.5 * (-t + 2.0 * t * t - t * t * t),
        0.5 * (2.0 - 5.0 * t * t + 3.0 * t * t * t),
        0.5 * (t + 4.0 * t * t - 3.0 * t * t * t),
        0.5 * (-t * t + t * t * t),
    ]
}

#[cfg(test)]
mod tests {
    use super::super::presets::rectangle;
    use super::*;

    #[test]
    fn covering_grid_aligns_with_rectangle() {
        let g = rectangle(1.0, 1.0, 64).unwrap();
        let grid = GridSpec::covering(&g, 1.0 / 32.0, 2).unwrap();
        assert_eq!(grid.nx, 37);
        let p = grid.node(2, 2);
        assert!(p[0].abs() < 1e-15 && p[1].abs() < 1e-15);
        let q = grid.node(34, 34);
        assert!((q[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn resolution_check() {
        let g = rectangle(1.0, 1.0, 64).unwrap();
        let grid = GridSpec::covering(&g, 0.01, 1).unwrap();
        assert!(grid.clone().with_delta(0.05, 8.0).is_err());
        assert!(grid.with_delta(0.09, 8.0).is_ok());
    }

    #[test]
    fn bicubic_reproduces_quadratics() {
        let g = rectangle(1.0, 1.0, 64).unwrap();
        let grid = GridSpec::covering(&g, 0.1, 2).unwrap();
        let n = grid.node_count();
        let f = |p: Point| 1.0 + p[0] - 2.0 * p[1] + p[0] * p[1] + 0.5 * p[0] * p[0];
        let vals: Vec<f64> = (0..n).map(|k| { let (i, j) = grid.ij(k); f(grid.node(i, j)) }).collect();
        let field = NodeField::new(grid, vals, vec![true; n]);
        let p = [0.437, 0.611];
        assert!((field.bicubic(p) - f(p)).abs() < 1e-12);
    }
}

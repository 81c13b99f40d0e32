//! Energy, gradient and Jacobian assembly for the outer problem.
//!
//! The discrete problem is the minimization of
//! E(u) = sum over quadrature of W(grad u) - load * (boundary integral of j u)
//! with W(p) = |p|^2/2 - |p|^4/4, whose gradient is the flux (1 - |p|^2) p and
//! whose Hessian is the ellipticity matrix. The Jacobian is stored as a
//! 9-point stencil per node.

use super::ellipticity::{ellipticity_matrix, energy_density, flux};
use super::mesh::{shape, shape_grad, FiniteCellMesh};
use rayon::prelude::*;

/// Offsets of the 9-point stencil, slot = (dj + 1) * 3 + (di + 1).
pub const STENCIL: [(i64, i64); 9] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

pub fn slot(di: i64, dj: i64) -> usize {
    ((dj + 1) * 3 + (di + 1)) as usize
}

/// Symmetric sparse operator with a 9-point stencil at every node.
#[derive(Clone)]
pub struct StencilMatrix {
    pub nx: usize,
    pub ny: usize,
    pub rows: Vec<[f64; 9]>,
}

impl StencilMatrix {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self { nx, ny, rows: vec![[0.0; 9]; nx * ny] }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nx = self.nx;
        let ny = self.ny;
        let offs: [isize; 9] = std::array::from_fn(|s| STENCIL[s].1 as isize * nx as isize + STENCIL[s].0 as isize);
        y.par_chunks_mut(nx).enumerate().for_each(|(j, yrow)| {
            for (i, yk) in yrow.iter_mut().enumerate() {
                let k = j * nx + i;
                let row = &self.rows[k];
                let mut acc = 0.0;
                if i > 0 && j > 0 && i + 1 < nx && j + 1 < ny {
                    for s in 0..9 {
                        acc += row[s] * x[(k as isize + offs[s]) as usize];
                    }
                } else {
                    for (s, &(di, dj)) in STENCIL.iter().enumerate() {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if row[s] != 0.0 && a >= 0 && b >= 0 && a < nx as i64 && b < ny as i64 {
                            acc += row[s] * x[(b as usize) * nx + a as usize];
                        }
                    }
                }
                *yk = acc;
            }
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[4]).collect()
    }
}

/// Boundary current at each boundary quadrature point (linear along segments).
pub fn boundary_current(mesh: &FiniteCellMesh, values: &[f64]) -> Vec<f64> {
    let n = values.len();
    mesh.boundary.iter().map(|b| (1.0 - b.t) * values[b.segment] + b.t * values[(b.segment + 1) % n]).collect()
}

pub struct Assembled {
    pub energy: f64,
    pub gradient: Vec<f64>,
    pub jacobian: Option<StencilMatrix>,
}

/// Assemble energy, its gradient and optionally its Hessian at nodal values `u`,
/// with boundary current `load * jb`.
pub fn assemble(mesh: &FiniteCellMesh, u: &[f64], jb: &[f64], load: f64, with_jacobian: bool) -> Assembled {
    let grid = &mesh.grid;
    let h = grid.h;
    let n = grid.node_count();
    type Local = (f64, [f64; 4], [[f64; 4]; 4]);
    let locals: Vec<Local> = mesh
        .cells
        .par_iter()
        .map(|cell| {
            let nodes = cell.nodes(grid);
            let mut e = 0.0;
            let mut g = [0.0; 4];
            let mut k = [[0.0; 4]; 4];
            for q in mesh.rule(cell) {
                let dn = shape_grad(q.xi, q.eta);
                let mut p = [0.0; 2];
                for a in 0..4 {
                    p[0] += dn[a][0] * u[nodes[a]];
                    p[1] += dn[a][1] * u[nodes[a]];
                }
                p = [p[0] / h, p[1] / h];
                e += q.weight * energy_density(p);
                let f = flux(p);
                for a in 0..4 {
                    g[a] += q.weight * (f[0] * dn[a][0] + f[1] * dn[a][1]) / h;
                }
                if with_jacobian {
                    let m = ellipticity_matrix(p);
                    for a in 0..4 {
                        let ma = [m[0] * dn[a][0] + m[1] * dn[a][1], m[1] * dn[a][0] + m[2] * dn[a][1]];
                        for b in 0..4 {
                            k[a][b] += q.weight * (ma[0] * dn[b][0] + ma[1] * dn[b][1]) / (h * h);
                        }
                    }
                }
            }
            (e, g, k)
        })
        .collect();
    let mut energy = 0.0;
    let mut gradient = vec![0.0; n];
    let mut jac = if with_jacobian { Some(StencilMatrix::zeros(grid.nx, grid.ny)) } else { None };
    for (cell, (e, g, k)) in mesh.cells.iter().zip(&locals) {
        energy += e;
        let nodes = cell.nodes(grid);
        let offs = [(0i64, 0i64), (1, 0), (0, 1), (1, 1)];
        for a in 0..4 {
            gradient[nodes[a]] += g[a];
            if let Some(m) = jac.as_mut() {
                for b in 0..4 {
                    let s = slot(offs[b].0 - offs[a].0, offs[b].1 - offs[a].1);
                    m.rows[nodes[a]][s] += k[a][b];
                }
            }
        }
    }
    for (bp, &jv) in mesh.boundary.iter().zip(jb) {
        let cell = &mesh.cells[bp.cell];
        let nodes = cell.nodes(grid);
        let s = shape(bp.xi, bp.eta);
        for a in 0..4 {
            let w = load * jv * bp.weight * s[a];
            gradient[nodes[a]] -= w;
            energy -= w * u[nodes[a]];
        }
    }
    Assembled { energy, gradient, jacobian: jac }
}

/// Load vector of the boundary term alone: integral of j N_i over the boundary.
pub fn boundary_load(mesh: &FiniteCellMesh, jb: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.grid.node_count()];
    for (bp, &jv) in mesh.boundary.iter().zip(jb) {
        let nodes = mesh.cells[bp.cell].nodes(&mesh.grid);
        let s = shape(bp.xi, bp.eta);
        for a in 0..4 {
            out[nodes[a]] += jv * bp.weight * s[a];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::presets::circle;
    use crate::geometry::GridSpec;

    #[test]
    fn gradient_and_jacobian_match_finite_differences() {
        let g = circle(1.0, 200).unwrap();
        let grid = GridSpec::covering(&g, 0.2, 1).unwrap();
        let mesh = FiniteCellMesh::new(&g, grid.clone());
        let n = grid.node_count();
        let u: Vec<f64> = (0..n)
            .map(|k| {
                let (i, j) = grid.ij(k);
                let p = grid.node(i, j);
                if mesh.active[k] { 0.3 * p[0] + 0.1 * p[1] * p[1] - 0.05 * p[0] * p[1] } else { 0.0 }
            })
            .collect();
        let jv: Vec<f64> = (0..g.len()).map(|k| 0.2 * g.normals[k][0]).collect();
        let jb = boundary_current(&mesh, &jv);
        let base = assemble(&mesh, &u, &jb, 1.0, true);
        let jac = base.jacobian.unwrap();
        let eps = 1e-6;
        let probe: Vec<usize> = (0..n).filter(|&k| mesh.active[k]).step_by(7).collect();
        for &k in &probe {
            let mut up = u.clone();
            up[k] += eps;
            let mut um = u.clone();
            um[k] -= eps;
            let ep = assemble(&mesh, &up, &jb, 1.0, false);
            let em = assemble(&mesh, &um, &jb, 1.0, false);
            let fd = (ep.energy - em.energy) / (2.0 * eps);
            assert!((fd - base.gradient[k]).abs() < 1e-8, "grad {k}: {fd} vs {}", base.gradient[k]);
            // Jacobian column k against the gradient difference.
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let mut col = vec![0.0; n];
            jac.apply(&e, &mut col);
            for m in 0..n {
                let fdj = (ep.gradient[m] - em.gradient[m]) / (2.0 * eps);
                assert!((fdj - col[m]).abs() < 1e-7, "jac {m},{k}: {fdj} vs {}", col[m]);
            }
        }
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let g = circle(1.0, 200).unwrap();
        let grid = GridSpec::covering(&g, 0.1, 1).unwrap();
        let mesh = FiniteCellMesh::new(&g, grid.clone());
        let u = vec![0.0; grid.node_count()];
        let jac = assemble(&mesh, &u, &vec![0.0; mesh.boundary.len()], 1.0, true).jacobian.unwrap();
        let ones = vec![1.0; grid.node_count()];
        let mut y = vec![0.0; grid.node_count()];
        jac.apply(&ones, &mut y);
        assert!(crate::linalg::norm_inf(&y) < 1e-13);
    }
}

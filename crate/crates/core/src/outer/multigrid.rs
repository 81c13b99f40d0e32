//! Geometric multigrid V-cycle for 9-point stencil operators, used as a CG
//! preconditioner. Coarse operators are Galerkin products with bilinear
//! prolongation, which keeps the 9-point structure on every level.

use super::assembly::{slot, StencilMatrix, STENCIL};

const COARSEST: usize = 6;
const COARSE_SWEEPS: usize = 30;

pub struct Multigrid {
    levels: Vec<StencilMatrix>,
}

/// Coarse parents of a fine index with their bilinear weights.
fn parents(i: usize) -> ([(usize, f64); 2], usize) {
    if i % 2 == 0 {
        ([(i / 2, 1.0), (0, 0.0)], 1)
    } else {
        ([((i - 1) / 2, 0.5), ((i + 1) / 2, 0.5)], 2)
    }
}

fn neighbour(nx: usize, ny: usize, k: usize, s: usize) -> Option<usize> {
    let (i, j) = ((k % nx) as i64 + STENCIL[s].0, (k / nx) as i64 + STENCIL[s].1);
    (i >= 0 && j >= 0 && i < nx as i64 && j < ny as i64).then(|| j as usize * nx + i as usize)
}

fn coarsen(a: &StencilMatrix) -> StencilMatrix {
    let (nx, ny) = (a.nx, a.ny);
    let (cx, cy) = (nx / 2 + 1, ny / 2 + 1);
    let mut c = StencilMatrix::zeros(cx, cy);
    for k in 0..nx * ny {
        let (pi, ni) = parents(k % nx);
        let (pj, nj) = parents(k / nx);
        for s in 0..9 {
            let v = a.rows[k][s];
            if v == 0.0 {
                continue;
            }
            let Some(m) = neighbour(nx, ny, k, s) else { continue };
            let (qi, mi) = parents(m % nx);
            let (qj, mj) = parents(m / nx);
            for &(ii, wi) in &pi[..ni] {
                for &(jj, wj) in &pj[..nj] {
                    let row = &mut c.rows[jj * cx + ii];
                    for &(iq, vi) in &qi[..mi] {
                        for &(jq, vj) in &qj[..mj] {
                            row[slot(iq as i64 - ii as i64, jq as i64 - jj as i64)] += wi * wj * v * vi * vj;
                        }
                    }
                }
            }
        }
    }
    c
}

/// One Gauss-Seidel sweep, forward or backward in natural ordering.
fn gauss_seidel(a: &StencilMatrix, b: &[f64], x: &mut [f64], forward: bool) {
    let (nx, ny) = (a.nx, a.ny);
    let n = nx * ny;
    let offs: [isize; 9] = std::array::from_fn(|s| STENCIL[s].1 as isize * nx as isize + STENCIL[s].0 as isize);
    let mut relax = |k: usize| {
        let row = &a.rows[k];
        if row[4] <= 0.0 {
            return;
        }
        let (i, j) = (k % nx, k / nx);
        let mut acc = b[k];
        if i > 0 && j > 0 && i + 1 < nx && j + 1 < ny {
            for s in [0, 1, 2, 3, 5, 6, 7, 8] {
                acc -= row[s] * x[(k as isize + offs[s]) as usize];
            }
        } else {
            for s in [0, 1, 2, 3, 5, 6, 7, 8] {
                if row[s] != 0.0 {
                    if let Some(m) = neighbour(nx, ny, k, s) {
                        acc -= row[s] * x[m];
                    }
                }
            }
        }
        x[k] = acc / row[4];
    };
    if forward {
        (0..n).for_each(&mut relax);
    } else {
        (0..n).rev().for_each(&mut relax);
    }
}

impl Multigrid {
    pub fn new(a: &StencilMatrix) -> Self {
        let mut levels = vec![a.clone()];
        loop {
            let last = levels.last().unwrap();
            if last.nx <= COARSEST || last.ny <= COARSEST {
                break;
            }
            let next = coarsen(last);
            levels.push(next);
        }
        Self { levels }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// z = M^-1 r for one symmetric V-cycle from a zero initial guess.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        self.cycle(0, r, z);
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        let a = &self.levels[l];
        if l + 1 == self.levels.len() {
            for _ in 0..COARSE_SWEEPS {
                gauss_seidel(a, b, x, true);
                gauss_seidel(a, b, x, false);
            }
            return;
        }
        gauss_seidel(a, b, x, true);
        let mut ax = vec![0.0; b.len()];
        a.apply(x, &mut ax);
        let c = &self.levels[l + 1];
        let mut rc = vec![0.0; c.nx * c.ny];
        for k in 0..b.len() {
            let res = b[k] - ax[k];
            if res == 0.0 {
                continue;
            }
            let (pi, ni) = parents(k % a.nx);
            let (pj, nj) = parents(k / a.nx);
            for &(ii, wi) in &pi[..ni] {
                for &(jj, wj) in &pj[..nj] {
                    rc[jj * c.nx + ii] += wi * wj * res;
                }
            }
        }
        let mut ec = vec![0.0; rc.len()];
        self.cycle(l + 1, &rc, &mut ec);
        for k in 0..b.len() {
            if a.rows[k][4] <= 0.0 {
                continue;
            }
            let (pi, ni) = parents(k % a.nx);
            let (pj, nj) = parents(k / a.nx);
            for &(ii, wi) in &pi[..ni] {
                for &(jj, wj) in &pj[..nj] {
                    x[k] += wi * wj * ec[jj * c.nx + ii];
                }
            }
        }
        gauss_seidel(a, b, x, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(nx: usize, ny: usize, shift: f64) -> StencilMatrix {
        // Bilinear stiffness on a full rectangle with natural boundary rows.
        let mut a = StencilMatrix::zeros(nx, ny);
        let local = [[4.0, -1.0, -2.0, -1.0], [-1.0, 4.0, -1.0, -2.0], [-2.0, -1.0, 4.0, -1.0], [-1.0, -2.0, -1.0, 4.0]];
        let corner = [(0i64, 0i64), (1, 0), (1, 1), (0, 1)];
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                for p in 0..4 {
                    let k = (j + corner[p].1 as usize) * nx + i + corner[p].0 as usize;
                    for q in 0..4 {
                        let s = slot(corner[q].0 - corner[p].0, corner[q].1 - corner[p].1);
                        a.rows[k][s] += local[p][q] / 6.0;
                    }
                }
            }
        }
        for r in a.rows.iter_mut() {
            r[4] += shift;
        }
        a
    }

    #[test]
    fn galerkin_coarse_operator_annihilates_constants() {
        let a = laplacian(17, 12, 0.0);
        let c = coarsen(&a);
        let ones = vec![1.0; c.nx * c.ny];
        let mut y = vec![0.0; ones.len()];
        c.apply(&ones, &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn v_cycle_preconditioner_is_symmetric() {
        let a = laplacian(23, 19, 0.01);
        let mg = Multigrid::new(&a);
        assert!(mg.depth() > 2);
        let n = 23 * 19;
        let u: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin()).collect();
        let v: Vec<f64> = (0..n).map(|k| (k as f64 * 0.11).cos()).collect();
        let (mut mu, mut mv) = (vec![0.0; n], vec![0.0; n]);
        mg.apply(&u, &mut mu);
        mg.apply(&v, &mut mv);
        let a1 = crate::linalg::dot(&v, &mu);
        let a2 = crate::linalg::dot(&u, &mv);
        assert!((a1 - a2).abs() < 1e-10 * a1.abs().max(1.0));
    }

    #[test]
    fn preconditioned_cg_converges_in_few_iterations() {
        let nx = 129;
        let a = laplacian(nx, nx, 1e-4);
        let mg = Multigrid::new(&a);
        let b: Vec<f64> = (0..nx * nx).map(|k| ((k % nx) as f64 * 0.1).sin() * ((k / nx) as f64 * 0.07).cos()).collect();
        let mut x = vec![0.0; b.len()];
        let rep = crate::linalg::pcg(|v, o| a.apply(v, o), |r, z| mg.apply(r, z), &b, &mut x, 1e-10, 200, |_: &mut [f64]| {});
        assert!(rep.converged && rep.iterations < 30, "{rep:?}");
    }
}

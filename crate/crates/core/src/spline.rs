//! Cubic splines on uniform grids: clamped and periodic second-derivative
//! solves, and a tensor-product spline on a periodic-by-bounded grid.

use crate::linalg::{fd_weights, solve_tridiagonal};

/// Nodal second derivatives of the clamped cubic spline through `y` with
/// end slopes `d0`, `d1`.
pub fn clamped_moments(y: &[f64], h: f64, d0: f64, d1: f64) -> Vec<f64> {
    let n = y.len();
    assert!(n >= 2);
    let mut lo = vec![h / 6.0; n];
    let mut di = vec![2.0 * h / 3.0; n];
    let mut up = vec![h / 6.0; n];
    let mut rhs = vec![0.0; n];
    di[0] = h / 3.0;
    di[n - 1] = h / 3.0;
    lo[0] = 0.0;
    up[n - 1] = 0.0;
    rhs[0] = (y[1] - y[0]) / h - d0;
    rhs[n - 1] = d1 - (y[n - 1] - y[n - 2]) / h;
    for i in 1..n - 1 {
        rhs[i] = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h;
    }
    solve_tridiagonal(&lo, &di, &up, &rhs)
}

/// Clamped moments with end slopes from fourth-order one-sided differences.
pub fn clamped_moments_fd(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    assert!(n >= 5);
    let w = fd_weights(0.0, &[0.0, h, 2.0 * h, 3.0 * h, 4.0 * h], 1);
    let d0: f64 = (0..5).map(|k| w[1][k] * y[k]).sum();
    let d1: f64 = -(0..5).map(|k| w[1][k] * y[n - 1 - k]).sum::<f64>();
    clamped_moments(y, h, d0, d1)
}

/// Nodal second derivatives of the periodic cubic spline through `y`
/// (period `n h`), by Sherman-Morrison on the cyclic system.
pub fn periodic_moments(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    assert!(n >= 3);
    let rhs: Vec<f64> = (0..n).map(|i| 6.0 * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n]) / (h * h)).collect();
    // Cyclic system with diag 4, off-diagonals 1 (after scaling by 6/h^2).
    let (a, c) = (1.0, 1.0);
    let gamma = -4.0;
    let mut di = vec![4.0; n];
    di[0] -= gamma;
    di[n - 1] -= a * c / gamma;
    let lo = vec![1.0; n];
    let up = vec![1.0; n];
    let x = solve_tridiagonal(&lo, &di, &up, &rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c;
    let z = solve_tridiagonal(&lo, &di, &up, &u);
    let fact = (x[0] + a * x[n - 1] / gamma) / (1.0 + z[0] + a * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(x, z)| x - fact * z).collect()
}

/// Weights (a, b, c, d) of y_i, y_{i+1}, m_i, m_{i+1} at fraction `u` of a cell of width `h`.
#[inline]
pub fn cell_weights(u: f64, h: f64) -> [f64; 4] {
    let b = u;
    let a = 1.0 - u;
    let h26 = h * h / 6.0;
    [a, b, (a * a * a - a) * h26, (b * b * b - b) * h26]
}

/// Cell index and fraction for `x` on a bounded uniform grid of `n` nodes.
#[inline]
fn bounded_cell(x: f64, h: f64, n: usize) -> (usize, f64) {
    let f = (x / h).max(0.0);
    let i = (f.floor() as usize).min(n - 2);
    (i, f - i as f64)
}

/// Tensor-product cubic spline on a grid periodic in the first variable
/// (period `ns hs`, starting at 0) and clamped in the second (nodes at
/// `k ht`, k = 0..nt). Data is indexed `[s][t]`.
#[derive(Clone, Debug)]
pub struct PeriodicTensorSpline {
    ns: usize,
    nt: usize,
    hs: f64,
    ht: f64,
    f: Vec<f64>,
    mt: Vec<f64>,
    ms: Vec<f64>,
    mst: Vec<f64>,
}

impl PeriodicTensorSpline {
    pub fn new(rows: &[Vec<f64>], hs: f64, ht: f64) -> Self {
        let ns = rows.len();
        let nt = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == nt));
        let mut f = Vec::with_capacity(ns * nt);
        let mut mt = Vec::with_capacity(ns * nt);
        for r in rows {
            f.extend_from_slice(r);
            mt.extend(clamped_moments_fd(r, ht));
        }
        let column_moments = |src: &[f64]| {
            let mut out = vec![0.0; ns * nt];
            for i in 0..nt {
                let col: Vec<f64> = (0..ns).map(|k| src[k * nt + i]).collect();
                for (k, m) in periodic_moments(&col, hs).into_iter().enumerate() {
                    out[k * nt + i] = m;
                }
            }
            out
        };
        let ms = column_moments(&f);
        let mst = column_moments(&mt);
        Self { ns, nt, hs, ht, f, mt, ms, mst }
    }

    pub fn t_max(&self) -> f64 {
        (self.nt - 1) as f64 * self.ht
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        let period = self.ns as f64 * self.hs;
        let fs = s.rem_euclid(period) / self.hs;
        let k = (fs.floor() as usize).min(self.ns - 1);
        let ws = cell_weights(fs - k as f64, self.hs);
        let k1 = (k + 1) % self.ns;
        let (i, ut) = bounded_cell(t, self.ht, self.nt);
        let wt = cell_weights(ut, self.ht);
        let along = |arr: &[f64], m: &[f64], row: usize| {
            let o = row * self.nt + i;
            wt[0] * arr[o] + wt[1] * arr[o + 1] + wt[2] * m[o] + wt[3] * m[o + 1]
        };
        ws[0] * along(&self.f, &self.mt, k)
            + ws[1] * along(&self.f, &self.mt, k1)
            + ws[2] * along(&self.ms, &self.mst, k)
            + ws[3] * along(&self.ms, &self.mst, k1)
    }
}

/// Periodic cubic spline of equally spaced samples on [0, period).
#[derive(Clone, Debug)]
pub struct PeriodicSpline {
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl PeriodicSpline {
    pub fn new(y: Vec<f64>, period: f64) -> Self {
        let h = period / y.len() as f64;
        let m = periodic_moments(&y, h);
        Self { h, y, m }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let n = self.y.len();
        let fs = s.rem_euclid(n as f64 * self.h) / self.h;
        let k = (fs.floor() as usize).min(n - 1);
        let w = cell_weights(fs - k as f64, self.h);
        let k1 = (k + 1) % n;
        w[0] * self.y[k] + w[1] * self.y[k1] + w[2] * self.m[k] + w[3] * self.m[k1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn clamped_spline_reproduces_cubics() {
        let h = 0.1;
        let f = |x: f64| 1.0 - x + 0.5 * x * x + 0.3 * x * x * x;
        let y: Vec<f64> = (0..11).map(|i| f(i as f64 * h)).collect();
        let m = clamped_moments_fd(&y, h);
        for (i, mi) in m.iter().enumerate() {
            assert!((mi - (1.0 + 1.8 * i as f64 * h)).abs() < 1e-10);
        }
        let w = cell_weights(0.37, h);
        let v = w[0] * y[4] + w[1] * y[5] + w[2] * m[4] + w[3] * m[5];
        assert!((v - f(0.437)).abs() < 1e-13);
    }

    #[test]
    fn periodic_spline_converges_at_fourth_order() {
        let err = |n: usize| {
            let y: Vec<f64> = (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).sin()).collect();
            let sp = PeriodicSpline::new(y, 2.0 * PI);
            (0..97).map(|k| {
                let s = 0.0713 * k as f64;
                (sp.eval(s) - s.sin()).abs()
            }).fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn tensor_spline_interpolates_smooth_data() {
        let (ns, nt) = (64, 41);
        let hs = 2.0 * PI / ns as f64;
        let ht = 0.05;
        let f = |s: f64, t: f64| (1.0 + 0.3 * s.cos()) * (-t).exp();
        let rows: Vec<Vec<f64>> = (0..ns).map(|k| (0..nt).map(|i| f(k as f64 * hs, i as f64 * ht)).collect()).collect();
        let sp = PeriodicTensorSpline::new(&rows, hs, ht);
        assert_eq!(sp.eval(3.0 * hs, 7.0 * ht), rows[3][7]);
        for (s, t) in [(0.31, 0.77), (6.2, 1.99), (-0.5, 0.013)] {
            assert!((sp.eval(s, t) - f(s, t)).abs() < 1e-6, "{s} {t}");
        }
    }
}

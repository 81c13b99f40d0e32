//! Leading-order boundary layer: the phase profile w minimizes the convex
//! functional k w(0) + int (L(w') + w^2/2) on the half-line, and the amplitude
//! follows algebraically from the slope.

use super::roots::{branch_amplitude, far_amplitude};
use crate::error::{Error, Result};
use crate::linalg::{gauss_legendre_unit, solve_tridiagonal};
use serde::{Deserialize, Serialize};

const QUADRATURE_POINTS: usize = 12;
const MAX_NEWTON: usize = 100;

/// The integrand data of the functional: V(t) and L(p) = int_0^p (p - t)/V(t) dt.
pub struct SlopePotential {
    pub jr: f64,
    pub mu_j: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    l_jr: f64,
    dl_jr: f64,
}

impl SlopePotential {
    /// Requires `jr <= 0`.
    pub fn new(jr: f64) -> Result<Self> {
        assert!(jr <= 0.0);
        let mu_j = far_amplitude(jr)?;
        let (nodes, weights) = gauss_legendre_unit(QUADRATURE_POINTS);
        let mut pot = Self { jr, mu_j, nodes, weights, l_jr: 0.0, dl_jr: 0.0 };
        let (l, dl) = pot.on_branch(jr);
        pot.l_jr = l;
        pot.dl_jr = dl;
        Ok(pot)
    }

    pub fn v(&self, t: f64) -> f64 {
        if t <= self.jr {
            1.0
        } else if t >= 0.0 {
            self.mu_j * self.mu_j
        } else {
            let m = branch_amplitude(t, self.jr);
            m * m
        }
    }

    /// (L(p), L'(p)) for p in [jr, 0], by Gauss quadrature over [p, 0].
    fn on_branch(&self, p: f64) -> (f64, f64) {
        let len = -p;
        if len == 0.0 {
            return (0.0, 0.0);
        }
        let (mut l, mut dl) = (0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let t = p + len * x;
            let inv = 1.0 / self.v(t);
            dl -= w * inv;
            l += w * (t - p) * inv;
        }
        (l * len, dl * len)
    }

    /// (L(p), L'(p)).
    pub fn eval(&self, p: f64) -> (f64, f64) {
        if p >= 0.0 {
            let v = self.mu_j * self.mu_j;
            (0.5 * p * p / v, p / v)
        } else if p <= self.jr {
            let d = p - self.jr;
            (self.l_jr + self.dl_jr * d + 0.5 * d * d, self.dl_jr + d)
        } else {
            self.on_branch(p)
        }
    }

    /// Boundary coefficient of the functional, chosen so that its natural
    /// boundary condition is w'(0) = jr.
    pub fn k(&self) -> f64 {
        self.dl_jr
    }
}

/// Leading-order profiles on a uniform half-line grid, in the frame with a
/// non-positive reduced current.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeadingProfiles {
    /// Reduced current of the original problem (either sign).
    pub jr: f64,
    /// True when the input current was positive and the problem was reflected.
    pub reflected: bool,
    pub eta: Vec<f64>,
    pub w: Vec<f64>,
    /// Nodal slope: jr at the wall, centred differences inside, 0 at the far end.
    pub dw: Vec<f64>,
    pub mu0: Vec<f64>,
    pub mu_j: f64,
    pub v: Vec<f64>,
    pub newton_iterations: usize,
}

impl LeadingProfiles {
    /// Reduced current in the solved (non-positive) frame.
    pub fn jr_solved(&self) -> f64 {
        -self.jr.abs()
    }

    pub fn spacing(&self) -> f64 {
        self.eta[1] - self.eta[0]
    }
}

/// Default truncation of the half-line, 40 decay lengths of the far field.
pub fn default_eta_max(jr: f64) -> Result<f64> {
    Ok(40.0 / far_amplitude(jr)?)
}

struct Functional<'a> {
    pot: &'a SlopePotential,
    h: f64,
    n: usize,
}

impl Functional<'_> {
    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.h
        } else {
            self.h
        }
    }

    fn value(&self, w: &[f64]) -> f64 {
        let mut e = self.pot.k() * w[0];
        for c in 0..self.n - 1 {
            e += self.h * self.pot.eval((w[c + 1] - w[c]) / self.h).0;
        }
        for (i, wi) in w.iter().enumerate() {
            e += 0.5 * self.weight(i) * wi * wi;
        }
        e
    }

    /// Gradient and tridiagonal Hessian (lower, diag, upper).
    fn derivatives(&self, w: &[f64]) -> (Vec<f64>, [Vec<f64>; 3]) {
        let n = self.n;
        let mut g: Vec<f64> = (0..n).map(|i| self.weight(i) * w[i]).collect();
        let mut diag: Vec<f64> = (0..n).map(|i| self.weight(i)).collect();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        g[0] += self.pot.k();
        for c in 0..n - 1 {
            let d = (w[c + 1] - w[c]) / self.h;
            let dl = self.pot.eval(d).1;
            g[c] -= dl;
            g[c + 1] += dl;
            let stiff = 1.0 / (self.pot.v(d) * self.h);
            diag[c] += stiff;
            diag[c + 1] += stiff;
            upper[c] = -stiff;
            lower[c + 1] = -stiff;
        }
        (g, [lower, diag, upper])
    }
}

/// Minimize the discrete functional on `n_points` nodes of [0, eta_max].
pub fn solve_leading(jr: f64, eta_max: f64, n_points: usize) -> Result<LeadingProfiles> {
    if n_points < 8 || !(eta_max > 0.0) {
        return Err(Error::Resolution(format!("half-line grid with {n_points} points on [0, {eta_max}]")));
    }
    let reflected = jr > 0.0;
    let jn = -jr.abs();
    let pot = SlopePotential::new(jn)?;
    let h = eta_max / (n_points - 1) as f64;
    let eta: Vec<f64> = (0..n_points).map(|i| i as f64 * h).collect();
    let f = Functional { pot: &pot, h, n: n_points };
    let mu_j = pot.mu_j;
    let mut w: Vec<f64> = eta.iter().map(|&x| -(jn / mu_j) * (-mu_j * x).exp()).collect();
    let mut energy = f.value(&w);
    let mut iterations = 0;
    loop {
        let (g, [lo, di, up]) = f.derivatives(&w);
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if iterations == MAX_NEWTON {
            return Err(Error::MinimizerFailure { iterations, gradient: gnorm });
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = solve_tridiagonal(&lo, &di, &up, &rhs);
        let size = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        iterations += 1;
        if size <= 1e-15 {
            break;
        }
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
            let e = f.value(&trial);
            if e <= energy + 1e-4 * alpha * slope || alpha * size <= 1e-13 {
                w = trial;
                energy = e;
                break;
            }
            alpha *= 0.5;
        }
        if alpha == 1.0 && size <= 1e-13 {
            break;
        }
    }
    let n = n_points;
    let mut dw = vec![0.0; n];
    dw[0] = jn;
    for i in 1..n - 1 {
        dw[i] = (w[i + 1] - w[i - 1]) / (2.0 * h);
    }
    let mu0: Vec<f64> = dw.iter().map(|&t| branch_amplitude(t, jn)).collect();
    let v: Vec<f64> = dw.iter().map(|&t| pot.v(t)).collect();
    Ok(LeadingProfiles { jr, reflected, eta, w, dw, mu0, mu_j, v, newton_iterations: iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_is_c2_across_branch_ends() {
        let pot = SlopePotential::new(-0.2).unwrap();
        for p in [-0.2, 0.0] {
            let (l0, d0) = pot.eval(p - 1e-9);
            let (l1, d1) = pot.eval(p + 1e-9);
            assert!((l0 - l1).abs() < 1e-9 && (d0 - d1).abs() < 1e-8);
            assert!((pot.v(p - 1e-9) - pot.v(p + 1e-9)).abs() < 1e-6);
        }
    }

    #[test]
    fn potential_derivatives_match_differences() {
        let pot = SlopePotential::new(-0.3).unwrap();
        for p in [-0.5, -0.25, -0.1, -0.01, 0.2] {
            let e = 1e-6;
            let fd = (pot.eval(p + e).0 - pot.eval(p - e).0) / (2.0 * e);
            assert!((fd - pot.eval(p).1).abs() < 1e-8, "p={p}");
            let fd2 = (pot.eval(p + e).1 - pot.eval(p - e).1) / (2.0 * e);
            assert!((fd2 - 1.0 / pot.v(p)).abs() < 1e-6, "p={p}");
        }
    }

    #[test]
    fn zero_current_gives_trivial_profile() {
        let lp = solve_leading(0.0, 40.0, 401).unwrap();
        assert!(lp.w.iter().all(|v| v.abs() < 1e-14));
        assert!(lp.mu0.iter().all(|m| (m - 1.0).abs() < 1e-14));
    }

    #[test]
    fn slope_and_amplitude_bounds() {
        let jr = -0.2;
        let lp = solve_leading(jr, default_eta_max(jr).unwrap(), 4001).unwrap();
        assert!(lp.w[0] < (1.5f64).sqrt() * 0.2);
        assert!(lp.w.iter().all(|&v| v >= -1e-15));
        assert!(lp.dw.iter().all(|&d| d >= jr - 1e-12 && d <= 1e-12));
        assert!(lp.mu0.iter().all(|&m| m >= lp.mu_j - 1e-12 && m * m > 2.0 / 3.0 && m <= 1.0));
        assert!((lp.mu0[0] - 1.0).abs() < 1e-14);
        assert!((lp.mu0[lp.mu0.len() - 1] - lp.mu_j).abs() < 1e-12);
    }

    #[test]
    fn discrete_euler_lagrange_equation_holds() {
        // Interior nodes: -(L'(d_i) - L'(d_{i-1}))/h + w_i = 0, and the wall
        // slope reproduces the boundary condition to first order in h.
        let jr = -0.25;
        let lp = solve_leading(jr, 30.0, 3001).unwrap();
        let pot = SlopePotential::new(jr).unwrap();
        let h = lp.spacing();
        let d = |c: usize| (lp.w[c + 1] - lp.w[c]) / h;
        for i in 1..lp.w.len() - 1 {
            let r = -(pot.eval(d(i)).1 - pot.eval(d(i - 1)).1) / h + lp.w[i];
            assert!(r.abs() < 1e-9, "i={i} r={r}");
        }
        assert!((d(0) - jr).abs() < 2.0 * h * lp.w[0]);
    }
}

//! Finite-sigma correction of the boundary layer: (mu, theta) = leading +
//! (mu1, theta1) with the correction obtained by the fixed-point iteration
//! U <- B^-1 F(U), where B is the linearization about the leading profile.
//!
//! On the grid the right-hand side is evaluated as F(U) = B U - R(U0 + U),
//! R being the full discrete residual. For an exact leading solution this is
//! algebraically the same map as mu0''/sigma + N1 and N2 (see [`n1`], [`n2`]);
//! on the grid it also absorbs the leading-order discretization defect, so the
//! fixed point solves the discrete corrected system exactly.

use super::leading::LeadingProfiles;
use crate::error::{Error, Result};
use crate::linalg::BandedMatrix;
use serde::{Deserialize, Serialize};

const MAX_ITER: usize = 500;
const TOLERANCE: f64 = 1e-10;

/// Quadratic remainder of the amplitude equation in the form used by the
/// fixed point, with `p = theta' - jr` the full slope and `dtheta1` its correction.
pub fn n1(mu0: f64, mu1: f64, dtheta1: f64, p: f64) -> f64 {
    let mu = mu0 + mu1;
    let m3 = mu0.powi(-3);
    let poly = mu * mu0 * mu0 + mu * mu * mu0 + mu.powi(3) - 3.0 * mu0.powi(3) - mu.powi(5) - mu.powi(4) * mu0 - mu.powi(3) * mu0 * mu0 - mu * mu * mu0.powi(3) - mu * mu0.powi(4)
        + 5.0 * mu0.powi(5);
    -dtheta1 * dtheta1 * m3 + (mu.powi(-3) - m3) * (mu.powi(4) - p * p - mu.powi(6)) + mu1 * m3 * poly
}

/// Quadratic remainder of the phase equation.
pub fn n2(mu0: f64, mu1: f64, theta0: f64, theta1: f64) -> f64 {
    -mu1 * mu1 * theta0 - (2.0 * mu0 + mu1) * mu1 * theta1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectedProfiles {
    pub sigma0: f64,
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
    /// L2 norms over the half-line of mu - mu0 and theta - theta0.
    pub mu_deviation: f64,
    pub theta_deviation: f64,
    /// Max-norm of successive updates.
    pub trace: Vec<f64>,
    /// Ratio of the last two update norms.
    pub contraction: f64,
}

impl CorrectedProfiles {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

struct System<'a> {
    lp: &'a LeadingProfiles,
    jr: f64,
    sigma0: f64,
    h: f64,
    n: usize,
}

impl System<'_> {
    /// Interleaved residual of the discrete corrected problem at (mu, theta).
    fn residual(&self, mu: &[f64], th: &[f64]) -> Vec<f64> {
        let (n, h, s) = (self.n, self.h, self.sigma0);
        let mut r = vec![0.0; 2 * n];
        r[0] = (-3.0 * mu[0] + 4.0 * mu[1] - mu[2]) / (2.0 * h);
        r[1] = (-3.0 * th[0] + 4.0 * th[1] - th[2]) / (2.0 * h) - self.jr;
        for i in 1..n - 1 {
            let p = (th[i + 1] - th[i - 1]) / (2.0 * h) - self.jr;
            let m = mu[i];
            let d2m = (mu[i - 1] - 2.0 * m + mu[i + 1]) / (h * h);
            let d2t = (th[i - 1] - 2.0 * th[i] + th[i + 1]) / (h * h);
            r[2 * i] = -d2m / s - (1.0 - p * p / m.powi(4) - m * m) * m;
            r[2 * i + 1] = -d2t + m * m * th[i];
        }
        let e = n - 1;
        r[2 * e] = (3.0 * mu[e] - 4.0 * mu[e - 1] + mu[e - 2]) / (2.0 * h);
        r[2 * e + 1] = (3.0 * th[e] - 4.0 * th[e - 1] + th[e - 2]) / (2.0 * h);
        r
    }

    /// The linear operator B, factored.
    fn operator(&self) -> Result<BandedMatrix> {
        let (n, h, s) = (self.n, self.h, self.sigma0);
        let mut b = BandedMatrix::new(2 * n, 4, 4);
        for (c, w) in [(0, -3.0), (1, 4.0), (2, -1.0)] {
            b.add(0, 2 * c, w / (2.0 * h));
            b.add(1, 2 * c + 1, w / (2.0 * h));
            let e = n - 1 - c;
            b.add(2 * (n - 1), 2 * e, -w / (2.0 * h));
            b.add(2 * (n - 1) + 1, 2 * e + 1, -w / (2.0 * h));
        }
        for i in 1..n - 1 {
            let m0 = self.lp.mu0[i];
            let (ru, rt) = (2 * i, 2 * i + 1);
            b.add(ru, 2 * (i - 1), -1.0 / (s * h * h));
            b.add(ru, 2 * i, 2.0 / (s * h * h) + 6.0 * m0 * m0 - 4.0);
            b.add(ru, 2 * (i + 1), -1.0 / (s * h * h));
            let c = 2.0 * (1.0 - m0 * m0).max(0.0).sqrt() / m0;
            b.add(ru, 2 * (i + 1) + 1, c / (2.0 * h));
            b.add(ru, 2 * (i - 1) + 1, -c / (2.0 * h));
            b.add(rt, 2 * (i - 1) + 1, -1.0 / (h * h));
            b.add(rt, 2 * i + 1, 2.0 / (h * h) + m0 * m0);
            b.add(rt, 2 * (i + 1) + 1, -1.0 / (h * h));
            b.add(rt, 2 * i, 2.0 * m0 * self.lp.w[i]);
        }
        if !b.factor() {
            return Err(Error::LinearSolve("singular linearized boundary-layer operator".into()));
        }
        Ok(b)
    }
}

fn half_line_norm(h: f64, v: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = v.collect();
    let n = vals.len();
    let s: f64 = vals.iter().enumerate().map(|(i, x)| if i == 0 || i + 1 == n { 0.5 } else { 1.0 } * x * x).sum();
    (s * h).sqrt()
}

/// Solve the corrected boundary-layer system for the given sigma.
pub fn solve_corrected(lp: &LeadingProfiles, sigma0: f64) -> Result<CorrectedProfiles> {
    if !(sigma0 > 0.0) {
        return Err(Error::Config(format!("sigma0 must be positive, got {sigma0}")));
    }
    let n = lp.eta.len();
    let sys = System { lp, jr: lp.jr_solved(), sigma0, h: lp.spacing(), n };
    let b = sys.operator()?;
    let mut mu = lp.mu0.clone();
    let mut th = lp.w.clone();
    let mut trace = Vec::new();
    let mut growth = 0;
    loop {
        let r = sys.residual(&mu, &th);
        let du = b.solve(&r);
        let norm = du.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !norm.is_finite() {
            return Err(Error::ContractionFailure { iterations: trace.len(), norm });
        }
        if let Some(&last) = trace.last() {
            growth = if norm > last { growth + 1 } else { 0 };
        }
        trace.push(norm);
        if growth >= 3 || trace.len() > MAX_ITER {
            return Err(Error::ContractionFailure { iterations: trace.len(), norm });
        }
        for i in 0..n {
            mu[i] -= du[2 * i];
            th[i] -= du[2 * i + 1];
        }
        if norm < TOLERANCE {
            break;
        }
    }
    let k = trace.len();
    let contraction = if k >= 2 && trace[k - 2] > 0.0 { trace[k - 1] / trace[k - 2] } else { 0.0 };
    let h = sys.h;
    Ok(CorrectedProfiles {
        sigma0,
        eta: lp.eta.clone(),
        mu_deviation: half_line_norm(h, mu.iter().zip(&lp.mu0).map(|(a, b)| a - b)),
        theta_deviation: half_line_norm(h, th.iter().zip(&lp.w).map(|(a, b)| a - b)),
        mu,
        theta: th,
        trace,
        contraction,
    })
}

#[cfg(test)]
mod tests {
    use super::super::leading::{default_eta_max, solve_leading};
    use super::*;
    use proptest::prelude::*;

    /// Exact remainder of the amplitude equation after removing its linear part.
    fn remainder(mu0: f64, mu1: f64, dtheta1: f64) -> f64 {
        let p0 = mu0 * mu0 * (1.0 - mu0 * mu0).sqrt();
        let p = p0 + dtheta1;
        let mu = mu0 + mu1;
        let c = 2.0 * (1.0 - mu0 * mu0).sqrt() / mu0;
        (6.0 * mu0 * mu0 - 4.0) * mu1 + c * dtheta1 + (1.0 - p * p / mu.powi(4) - mu * mu) * mu
    }

    proptest! {
        #[test]
        fn amplitude_remainder_matches_closed_form(mu0 in 0.83f64..1.0, mu1 in -0.05f64..0.05, dt in -0.05f64..0.05) {
            let p = mu0 * mu0 * (1.0 - mu0 * mu0).sqrt() + dt;
            let exact = remainder(mu0, mu1, dt);
            prop_assert!((n1(mu0, mu1, dt, p) - exact).abs() < 1e-12, "{} vs {}", n1(mu0, mu1, dt, p), exact);
        }

        #[test]
        fn phase_remainder_matches_expansion(mu0 in 0.83f64..1.0, mu1 in -0.1f64..0.1, t0 in 0.0f64..0.3, t1 in -0.1f64..0.1) {
            // -(theta'' ) cancels; the rest of mu^2 theta - mu0^2 theta0 - linear terms.
            let mu = mu0 + mu1;
            let exact = -(mu * mu * (t0 + t1) - mu0 * mu0 * t0 - mu0 * mu0 * t1 - 2.0 * mu0 * mu1 * t0);
            prop_assert!((n2(mu0, mu1, t0, t1) - exact).abs() < 1e-14);
        }

        #[test]
        fn remainders_are_quadratic(mu0 in 0.85f64..0.99, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let p0 = mu0 * mu0 * (1.0 - mu0 * mu0).sqrt();
            let small = n1(mu0, 1e-4 * a, 1e-4 * b, p0 + 1e-4 * b).abs();
            let half = n1(mu0, 5e-5 * a, 5e-5 * b, p0 + 5e-5 * b).abs();
            prop_assert!(small <= 5e-7 && half <= 0.3 * small + 1e-15);
        }
    }

    #[test]
    fn zero_current_has_trivial_fixed_point() {
        let lp = solve_leading(0.0, 40.0, 801).unwrap();
        let c = solve_corrected(&lp, 100.0).unwrap();
        assert!(c.mu.iter().all(|m| (m - 1.0).abs() < 1e-14));
        assert!(c.theta.iter().all(|t| t.abs() < 1e-14));
        assert!(c.mu_deviation < 1e-14);
    }

    #[test]
    fn corrected_profile_bounds_and_wall_conditions() {
        let jr = -0.2;
        let lp = solve_leading(jr, default_eta_max(jr).unwrap(), 8001).unwrap();
        let c = solve_corrected(&lp, 100.0).unwrap();
        let h = lp.spacing();
        let n = c.mu.len();
        let d0 = (-3.0 * c.theta[0] + 4.0 * c.theta[1] - c.theta[2]) / (2.0 * h);
        assert!((d0 - jr).abs() < 1e-8);
        let dm = (-3.0 * c.mu[0] + 4.0 * c.mu[1] - c.mu[2]) / (2.0 * h);
        assert!(dm.abs() < 1e-8);
        assert!(c.mu.iter().all(|&m| m >= lp.mu_j - 1e-10));
        for i in 1..n - 1 {
            let d = (c.theta[i + 1] - c.theta[i - 1]) / (2.0 * h);
            assert!(d > jr - 1e-9 && d < 1e-12, "i={i} d={d}");
        }
        assert!(c.theta.windows(2).take(n / 2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn deviation_decays_like_inverse_sigma() {
        let jr = -0.2;
        let lp = solve_leading(jr, default_eta_max(jr).unwrap(), 8001).unwrap();
        let d: Vec<f64> = [50.0, 100.0, 200.0].iter().map(|&s| solve_corrected(&lp, s).unwrap().mu_deviation).collect();
        for k in 0..2 {
            let r = d[k] / d[k + 1];
            assert!((1.6..=2.5).contains(&r), "ratios {d:?}");
        }
    }
}

//! Physical boundary-layer profiles in the stretched normal variable tau.

use super::corrected::CorrectedProfiles;
use super::leading::LeadingProfiles;
use super::roots::{boundary_amplitude, JR2_MAX};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Station data of the boundary-layer problem.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct InnerParams {
    /// Reduced current j / rho_r^3.
    pub jr: f64,
    /// Tangential amplitude factor sqrt(1 - zeta_s^2).
    pub rho_r: f64,
    pub sigma0: f64,
    /// Normal derivative of the outer potential along the inward normal.
    pub dzeta_dt0: f64,
}

impl InnerParams {
    /// Parameters at a boundary station with current `j` and outer tangential
    /// and outward normal derivatives `zeta_s`, `zeta_n`.
    pub fn at_station(j: f64, zeta_s: f64, zeta_n: f64, sigma0: f64) -> Result<Self> {
        let rho_r = (1.0 - zeta_s * zeta_s).max(0.0).sqrt();
        let p = Self { jr: j / rho_r.powi(3), rho_r, sigma0, dzeta_dt0: -zeta_n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jr * self.jr < JR2_MAX) {
            return Err(Error::InvalidReducedCurrent { jr: self.jr });
        }
        if !(self.rho_r > 0.0 && self.rho_r <= 1.0) {
            return Err(Error::Config(format!("rho_r = {} outside (0, 1]", self.rho_r)));
        }
        if !(self.sigma0 > 0.0) || !self.dzeta_dt0.is_finite() {
            return Err(Error::Config("sigma0 must be positive and the normal derivative finite".into()));
        }
        Ok(())
    }

    /// Physical normal current j = jr rho_r^3.
    pub fn current(&self) -> f64 {
        self.jr * self.rho_r.powi(3)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhysicalInnerProfiles {
    pub params: InnerParams,
    pub tau: Vec<f64>,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    /// Normal derivative of the phase correction.
    pub dupsilon: Vec<f64>,
    /// Phase correction itself, integrated from the far end where it vanishes.
    pub upsilon: Vec<f64>,
    pub rho_j: f64,
    /// Fitted exponential rate of |phi| in tau, if the tail is resolved.
    pub decay_rate: Option<f64>,
    /// Fitted exponential rate of |rho - rho_j| in tau.
    pub amplitude_decay_rate: Option<f64>,
    /// Residual of rho_r^2 - j^2/rho^4 - rho^2 at the far end.
    pub far_residual: f64,
}

/// Exponential decay rate of |f| fitted by least squares on ln|f| over the
/// decade where |f| lies between 1e-6 and 1e-5 of |f(x_0)|.
pub fn decay_rate(x: &[f64], f: &[f64]) -> Option<f64> {
    let f0 = f.first()?.abs();
    if f0 == 0.0 {
        return None;
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(f)
        .filter(|(_, v)| {
            let r = v.abs() / f0;
            (1e-6..=1e-5).contains(&r)
        })
        .map(|(&x, v)| (x, v.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Nodal first derivative: second-order one-sided at the ends, centred inside.
pub fn derivative(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d
}

/// -int_x^end f by the trapezoidal rule, at every node.
fn tail_integral(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for i in (0..n - 1).rev() {
        out[i] = out[i + 1] - 0.5 * (f[i] + f[i + 1]) * (x[i + 1] - x[i]);
    }
    out
}

impl PhysicalInnerProfiles {
    /// Copy restricted to the nodes with tau <= `tau_max`; scalar diagnostics
    /// keep their full-length values.
    pub fn truncated(&self, tau_max: f64) -> Self {
        let n = self.tau.partition_point(|&t| t <= tau_max).max(2).min(self.tau.len());
        let cut = |v: &Vec<f64>| v[..n].to_vec();
        Self {
            tau: cut(&self.tau),
            rho: cut(&self.rho),
            phi: cut(&self.phi),
            dupsilon: cut(&self.dupsilon),
            upsilon: cut(&self.upsilon),
            ..self.clone()
        }
    }
}

/// Map the corrected half-line solution back to physical variables, undoing
/// the reflection applied for positive currents.
pub fn unscale(lp: &LeadingProfiles, cp: &CorrectedProfiles, params: &InnerParams) -> Result<PhysicalInnerProfiles> {
    let (rr, s) = (params.rho_r, params.sigma0.sqrt());
    let sign = if lp.reflected { -1.0 } else { 1.0 };
    let jr = lp.jr_solved();
    let j = params.current();
    let dth = derivative(&cp.theta, lp.spacing());
    let tau: Vec<f64> = cp.eta.iter().map(|e| e * s / rr).collect();
    let rho: Vec<f64> = cp.mu.iter().map(|m| rr * m).collect();
    let phi: Vec<f64> = cp.theta.iter().map(|t| sign * rr * rr * t / s).collect();
    // sigma0 phi' - j = rho_r^3 (theta' - jr) in the solved frame.
    let dupsilon: Vec<f64> = dth.iter().zip(&cp.mu).map(|(d, m)| sign * rr * (d - jr) / (m * m) - params.dzeta_dt0).collect();
    let rho_j = boundary_amplitude(rr, j)?;
    let last = *rho.last().unwrap();
    let far_residual = rr * rr - j * j / last.powi(4) - last * last;
    let dev: Vec<f64> = rho.iter().map(|r| r - rho_j).collect();
    let upsilon = tail_integral(&tau, &dupsilon);
    Ok(PhysicalInnerProfiles {
        params: *params,
        decay_rate: decay_rate(&tau, &phi),
        amplitude_decay_rate: decay_rate(&tau, &dev),
        tau,
        rho,
        phi,
        dupsilon,
        upsilon,
        rho_j,
        far_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_fit_recovers_exponential_rate() {
        let x: Vec<f64> = (0..4000).map(|i| i as f64 * 0.01).collect();
        let f: Vec<f64> = x.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        assert!((decay_rate(&x, &f).unwrap() - 0.7).abs() < 1e-10);
        assert!(decay_rate(&x[..100], &f[..100]).is_none());
    }

    #[test]
    fn station_parameters_from_outer_derivatives() {
        let p = InnerParams::at_station(-0.1, 0.3, 0.12, 50.0).unwrap();
        assert!((p.rho_r - 0.91f64.sqrt()).abs() < 1e-15);
        assert!((p.current() + 0.1).abs() < 1e-15);
        assert_eq!(p.dzeta_dt0, -0.12);
        assert!(InnerParams::at_station(-0.5, 0.0, 0.0, 50.0).is_err());
    }

    #[test]
    fn tail_integral_of_exponential() {
        let x: Vec<f64> = (0..4001).map(|i| i as f64 * 0.01).collect();
        let f: Vec<f64> = x.iter().map(|x| (-x).exp()).collect();
        let u = tail_integral(&x, &f);
        assert!((u[0] + 1.0).abs() < 1e-4);
        assert_eq!(u[4000], 0.0);
    }
}

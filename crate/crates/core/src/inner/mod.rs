//! One-dimensional boundary-layer profiles normal to the boundary.
//!
//! Each boundary station is solved independently: the leading-order profile
//! from a convex minimization, its finite-sigma correction by a fixed-point
//! iteration, and the map back to physical variables.

pub mod corrected;
pub mod leading;
pub mod physical;
pub mod roots;

pub use corrected::{solve_corrected, CorrectedProfiles};
pub use leading::{default_eta_max, solve_leading, LeadingProfiles};
pub use physical::{decay_rate, unscale, InnerParams, PhysicalInnerProfiles};
pub use roots::{boundary_amplitude, branch_amplitude, far_amplitude};

use crate::error::Result;
use crate::outer::BoundaryTrace;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerOptions {
    /// Half-line length in eta; default 40 / mu_j.
    pub eta_max: Option<f64>,
    /// Grid spacing in eta; default min(0.005, 0.05 / sqrt(sigma0)), which
    /// keeps about 20 points across the amplitude sublayer.
    pub spacing: Option<f64>,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self { eta_max: None, spacing: None }
    }
}

impl InnerOptions {
    pub fn grid(&self, params: &InnerParams) -> Result<(f64, usize)> {
        let eta_max = match self.eta_max {
            Some(e) => e,
            None => default_eta_max(params.jr)?,
        };
        let h = self.spacing.unwrap_or_else(|| (0.05 / params.sigma0.sqrt()).min(0.005));
        // Round the length up to whole cells so the spacing is exactly h and
        // stations with different far fields share one grid.
        let cells = ((eta_max / h).ceil() as usize).max(7);
        Ok((cells as f64 * h, cells + 1))
    }
}

/// Solution at one boundary station.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StationSolution {
    /// Arclength of the station (0 for a standalone solve).
    pub s: f64,
    pub mu_j: f64,
    /// w(0) of the leading profile in the solved frame.
    pub w0: f64,
    pub leading_decay_rate: Option<f64>,
    pub newton_iterations: usize,
    pub fixed_point_iterations: usize,
    pub contraction: f64,
    pub mu_deviation: f64,
    pub theta_deviation: f64,
    pub profiles: PhysicalInnerProfiles,
}

/// Full solve at one station.
pub fn solve_station(params: &InnerParams, opts: &InnerOptions) -> Result<(LeadingProfiles, CorrectedProfiles, PhysicalInnerProfiles)> {
    params.validate()?;
    let (eta_max, n) = opts.grid(params)?;
    let lp = solve_leading(params.jr, eta_max, n)?;
    let cp = solve_corrected(&lp, params.sigma0)?;
    let pp = unscale(&lp, &cp, params)?;
    Ok((lp, cp, pp))
}

/// Solve and keep only the physical profiles and diagnostics.
pub fn solve_station_summary(s: f64, params: &InnerParams, opts: &InnerOptions) -> Result<StationSolution> {
    let (lp, cp, profiles) = solve_station(params, opts)?;
    Ok(StationSolution {
        s,
        mu_j: lp.mu_j,
        w0: lp.w[0],
        leading_decay_rate: decay_rate(&lp.eta, &lp.w),
        newton_iterations: lp.newton_iterations,
        fixed_point_iterations: cp.iterations(),
        contraction: cp.contraction,
        mu_deviation: cp.mu_deviation,
        theta_deviation: cp.theta_deviation,
        profiles,
    })
}

/// Solve every station of a boundary trace in parallel; results are returned
/// in boundary order and the first failure (in that order) is reported.
pub fn sweep(trace: &BoundaryTrace, sigma0: f64, opts: &InnerOptions) -> Result<Vec<StationSolution>> {
    (0..trace.s.len())
        .into_par_iter()
        .map(|k| {
            let p = InnerParams::at_station(trace.current[k], trace.zeta_s[k], trace.zeta_n[k], sigma0)?;
            solve_station_summary(trace.s[k], &p, opts)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

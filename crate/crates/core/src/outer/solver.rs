//! Newton solver with load continuation for the outer problem.

use super::assembly::{assemble, boundary_current, StencilMatrix};
use super::mesh::FiniteCellMesh;
use crate::error::{Error, Result};
use crate::feasibility::CurrentProfile;
use crate::geometry::distance::SegmentIndex;
use crate::geometry::{BoundaryGeometry, GridSpec, Point};
use crate::linalg::{dot, norm2, pcg};
use crate::CRITICAL_GRADIENT;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterOptions {
    /// Grid spacing.
    pub h: f64,
    /// Extra grid cells around the bounding box.
    pub pad: usize,
    /// Newton stops when the gradient 2-norm is below `newton_tol * h`.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub cg_tol: f64,
    pub initial_step: f64,
    pub step_growth: f64,
    pub min_step: f64,
    /// States with max |grad| >= 1/sqrt3 - margin are rejected.
    pub safeguard_margin: f64,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            h: 1.0 / 64.0,
            pad: 2,
            newton_tol: 1e-10,
            max_newton: 40,
            cg_tol: 1e-11,
            initial_step: 0.25,
            step_growth: 1.5,
            min_step: 1e-5,
            safeguard_margin: 0.0175,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub load: f64,
    pub step: f64,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub energy_predictor: f64,
    pub energy_converged: f64,
    pub max_gradient: f64,
    pub accepted: bool,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientMaximum {
    pub value: f64,
    pub location: Point,
    /// Largest |grad| over quadrature points within one cell diagonal of the boundary.
    pub band_value: f64,
    pub in_band: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OuterSolution {
    pub grid: GridSpec,
    /// Nodal values of the mean-free potential (zero at inactive nodes).
    pub zeta: Vec<f64>,
    pub active: Vec<bool>,
    /// Active nodes whose basis support overlaps the domain by at least a
    /// fifth of a cell area; only these enter derivative recovery.
    pub reliable: Vec<bool>,
    pub load: f64,
    pub energy: f64,
    pub max_gradient: GradientMaximum,
    /// Grid 2-norm of the lumped nodal residual over nodes whose support lies inside the domain.
    pub interior_residual: f64,
    /// Sum of |nodal residual| over nodes touching the boundary.
    pub flux_mismatch: f64,
    pub steps: Vec<ContinuationStep>,
}

#[derive(Debug)]
enum NewtonFailure {
    Indefinite,
    Stalled(f64),
    MaxIterations(f64),
}

struct NewtonResult {
    u: Vec<f64>,
    energy_start: f64,
    energy: f64,
    iterations: usize,
    linear_iterations: usize,
}

fn project_constants(active: &[bool]) -> impl Fn(&mut [f64]) + '_ {
    let count = active.iter().filter(|&&a| a).count() as f64;
    move |r: &mut [f64]| {
        let mean = r.iter().zip(active).filter(|(_, &a)| a).map(|(v, _)| *v).sum::<f64>() / count;
        for (v, &a) in r.iter_mut().zip(active) {
            if a {
                *v -= mean;
            } else {
                *v = 0.0;
            }
        }
    }
}

/// Solve J x = b on the active set, orthogonally to constants, then remove
/// the domain mean of x.
pub fn solve_linear(mesh: &FiniteCellMesh, jac: &StencilMatrix, b: &[f64], tol: f64) -> (Vec<f64>, crate::linalg::CgReport) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mg = super::multigrid::Multigrid::new(jac);
    let proj = project_constants(&mesh.active);
    let rep = pcg(|v, out| jac.apply(v, out), |r, z| mg.apply(r, z), b, &mut x, tol, 20 * n.max(100), &proj);
    mesh.remove_mean(&mut x);
    (x, rep)
}

fn newton(mesh: &FiniteCellMesh, jb: &[f64], load: f64, start: &[f64], opts: &OuterOptions) -> std::result::Result<NewtonResult, NewtonFailure> {
    let mut u = start.to_vec();
    let tol = opts.newton_tol * mesh.grid.h;
    let mut cur = assemble(mesh, &u, jb, load, true);
    let energy_start = cur.energy;
    let mut linear_iterations = 0;
    let mut previous = f64::INFINITY;
    for it in 0..=opts.max_newton {
        let gnorm = norm2(&cur.gradient);
        // Near the ellipticity limit the Jacobian is ill conditioned and the
        // residual stagnates at a rounding floor above `tol`; accept once
        // Newton stops making progress there.
        let floor = gnorm <= 1e3 * tol && gnorm > 0.5 * previous;
        previous = gnorm;
        if gnorm <= tol || floor {
            mesh.remove_mean(&mut u);
            return Ok(NewtonResult { u, energy_start, energy: cur.energy, iterations: it, linear_iterations });
        }
        if it == opts.max_newton {
            return Err(NewtonFailure::MaxIterations(gnorm));
        }
        let rhs: Vec<f64> = cur.gradient.iter().map(|g| -g).collect();
        let jac = cur.jacobian.as_ref().unwrap();
        let (step, rep) = solve_linear(mesh, jac, &rhs, opts.cg_tol);
        linear_iterations += rep.iterations;
        if rep.indefinite {
            return Err(NewtonFailure::Indefinite);
        }
        let slope = dot(&cur.gradient, &step);
        if slope >= 0.0 {
            return Err(NewtonFailure::Indefinite);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
            let next = assemble(mesh, &trial, jb, load, true);
            // Armijo test; near convergence the energy change is at rounding
            // level, so a gradient decrease is accepted as well.
            let armijo = next.energy <= cur.energy + 1e-4 * alpha * slope;
            let tiny = (next.energy - cur.energy).abs() <= 1e-13 * cur.energy.abs().max(1e-300) && norm2(&next.gradient) < gnorm;
            if armijo || tiny {
                accepted = Some((trial, next));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, next)) => {
                u = trial;
                cur = next;
            }
            None => return Err(NewtonFailure::Stalled(gnorm)),
        }
    }
    unreachable!()
}

/// Largest |grad u| over all quadrature points, and over those within one
/// cell diagonal of the boundary.
pub fn max_gradient(mesh: &FiniteCellMesh, geom: &BoundaryGeometry, u: &[f64]) -> GradientMaximum {
    let index = SegmentIndex::new(geom);
    let h = mesh.grid.h;
    let band = std::f64::consts::SQRT_2 * h * (1.0 + 1e-9);
    let per_cell: Vec<(f64, Point, f64)> = mesh
        .cells
        .par_iter()
        .map(|cell| {
            let centre = mesh.point(cell, 0.5, 0.5);
            let near = index.closest_within(centre, band + std::f64::consts::SQRT_2 * h).is_some();
            let mut best = (0.0, centre, 0.0);
            for q in mesh.rule(cell) {
                let g = mesh.gradient(cell, u, q.xi, q.eta);
                let v = g[0].hypot(g[1]);
                let p = mesh.point(cell, q.xi, q.eta);
                if v > best.0 {
                    best.0 = v;
                    best.1 = p;
                }
                if near && v > best.2 && index.closest(p).distance <= band {
                    best.2 = v;
                }
            }
            best
        })
        .collect();
    let mut value = 0.0;
    let mut location = [0.0; 2];
    let mut band_value = 0.0f64;
    for (v, p, b) in per_cell {
        if v > value {
            value = v;
            location = p;
        }
        band_value = band_value.max(b);
    }
    GradientMaximum { value, location, band_value, in_band: band_value >= value * (1.0 - 1e-9) }
}

/// Residual diagnostics of a converged state: interior grid 2-norm of the
/// lumped residual, and total boundary flux mismatch.
pub fn residual_norms(mesh: &FiniteCellMesh, u: &[f64], jb: &[f64], load: f64) -> (f64, f64) {
    let a = assemble(mesh, u, jb, load, false);
    let h = mesh.grid.h;
    let full = h * h * (1.0 - 1e-12);
    let mut interior = 0.0;
    let mut flux = 0.0;
    for k in 0..u.len() {
        if !mesh.active[k] {
            continue;
        }
        if mesh.mass[k] >= full {
            let r = a.gradient[k] / mesh.mass[k];
            interior += r * r * h * h;
        } else {
            flux += a.gradient[k].abs();
        }
    }
    (interior.sqrt(), flux)
}

/// Solve the outer problem for the boundary current `j` by continuation in
/// the load fraction from 0 to 1.
pub fn solve_outer(geom: &BoundaryGeometry, j: &CurrentProfile, opts: &OuterOptions) -> Result<OuterSolution> {
    let grid = GridSpec::covering(geom, opts.h, opts.pad.max(1))?;
    let mesh = FiniteCellMesh::new(geom, grid.clone());
    solve_on_mesh(&mesh, geom, j, opts)
}

pub fn solve_on_mesh(mesh: &FiniteCellMesh, geom: &BoundaryGeometry, j: &CurrentProfile, opts: &OuterOptions) -> Result<OuterSolution> {
    let jb = boundary_current(mesh, &j.values);
    let n = mesh.grid.node_count();
    let threshold = CRITICAL_GRADIENT - opts.safeguard_margin;
    let mut load = 0.0;
    let mut u = vec![0.0; n];
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut step = opts.initial_step.min(1.0);
    let mut steps = Vec::new();
    let mut last_energy = 0.0;
    let mut last_max = GradientMaximum { value: 0.0, location: [0.0; 2], band_value: 0.0, in_band: true };
    while load < 1.0 {
        let target = (load + step).min(1.0);
        let predictor: Vec<f64> = match &prev {
            Some((l0, u0)) if load > *l0 => {
                let r = (target - load) / (load - l0);
                u.iter().zip(u0).map(|(a, b)| a + r * (a - b)).collect()
            }
            _ => u.iter().map(|a| if load > 0.0 { a * target / load } else { *a }).collect(),
        };
        let outcome = newton(mesh, &jb, target, &predictor, opts);
        // `failure` is NaN for an ellipticity rejection, else the Newton residual.
        let (accepted, failure, record) = match outcome {
            Ok(res) => {
                let gm = max_gradient(mesh, geom, &res.u);
                let ok = gm.value < threshold;
                let note = if ok { "accepted".to_string() } else { format!("rejected: max |grad| {:.9} >= {:.9}", gm.value, threshold) };
                let rec = ContinuationStep {
                    load: target,
                    step,
                    newton_iterations: res.iterations,
                    linear_iterations: res.linear_iterations,
                    energy_predictor: res.energy_start,
                    energy_converged: res.energy,
                    max_gradient: gm.value,
                    accepted: ok,
                    note: note.clone(),
                };
                if ok {
                    prev = Some((load, std::mem::replace(&mut u, res.u)));
                    load = target;
                    last_energy = res.energy;
                    last_max = gm;
                }
                (ok, if ok { None } else { Some(f64::NAN) }, rec)
            }
            Err(f) => {
                let residual = match f {
                    NewtonFailure::Stalled(g) | NewtonFailure::MaxIterations(g) => g,
                    NewtonFailure::Indefinite => f64::INFINITY,
                };
                let rec = ContinuationStep {
                    load: target,
                    step,
                    newton_iterations: 0,
                    linear_iterations: 0,
                    energy_predictor: f64::NAN,
                    energy_converged: f64::NAN,
                    max_gradient: f64::NAN,
                    accepted: false,
                    note: format!("newton failure: {f:?}"),
                };
                (false, Some(residual), rec)
            }
        };
        steps.push(record);
        if accepted {
            step = (step * opts.step_growth).min(1.0);
        } else {
            step *= 0.5;
            if step < opts.min_step {
                let residual = failure.unwrap_or(f64::NAN);
                if residual.is_nan() || residual.is_infinite() {
                    return Err(Error::LossOfEllipticity { last_good_mu: load, last_good_max_grad: last_max.value });
                }
                return Err(Error::NewtonDivergence { mu: target, residual });
            }
        }
    }
    let (interior_residual, flux_mismatch) = residual_norms(mesh, &u, &jb, 1.0);
    Ok(OuterSolution {
        grid: mesh.grid.clone(),
        zeta: u,
        active: mesh.active.clone(),
        reliable: reliable_mask(mesh),
        load,
        energy: last_energy,
        max_gradient: last_max,
        interior_residual,
        flux_mismatch,
        steps,
    })
}

/// Nodes whose values are well determined by the discrete problem.
pub fn reliable_mask(mesh: &FiniteCellMesh) -> Vec<bool> {
    let h2 = mesh.grid.h * mesh.grid.h;
    mesh.active.iter().zip(&mesh.mass).map(|(&a, &m)| a && m >= 0.2 * h2).collect()
}

/// Enforce the discrete maximum principle for |grad zeta|: the maximum must be
/// attained within one cell diagonal of the boundary.
pub fn check_boundary_maximum(sol: &OuterSolution) -> Result<()> {
    let m = &sol.max_gradient;
    if m.in_band {
        Ok(())
    } else {
        Err(Error::InteriorMaximum { x: m.location[0], y: m.location[1], value: m.value })
    }
}

//! Nodal derived fields of the outer solution: recovered gradients, the
//! leading and corrected amplitudes, the outer residuals, and boundary traces.

use super::assembly::{assemble, boundary_current};
use super::mesh::{shape, shape_grad, FiniteCellMesh};
use super::solver::{solve_linear, OuterSolution};
use crate::error::{Error, Result};
use crate::feasibility::CurrentProfile;
use crate::geometry::{BoundaryGeometry, GridSpec, NodeField, Point};
use crate::linalg::fd_weights;
use serde::{Deserialize, Serialize};

/// First derivative along one axis at node (i, j): central where both
/// neighbours are active, otherwise second-order one-sided.
fn d1(grid: &GridSpec, mask: &[bool], u: &[f64], i: usize, j: usize, axis: usize) -> f64 {
    let h = grid.h;
    let at = |k: i64| -> Option<f64> {
        let (a, b) = if axis == 0 { (i as i64 + k, j as i64) } else { (i as i64, j as i64 + k) };
        if a < 0 || b < 0 || a >= grid.nx as i64 || b >= grid.ny as i64 {
            return None;
        }
        let idx = grid.index(a as usize, b as usize);
        mask[idx].then(|| u[idx])
    };
    let u0 = u[grid.index(i, j)];
    match (at(-1), at(1)) {
        (Some(m), Some(p)) => (p - m) / (2.0 * h),
        (None, Some(p)) => match at(2) {
            Some(p2) => (-3.0 * u0 + 4.0 * p - p2) / (2.0 * h),
            None => (p - u0) / h,
        },
        (Some(m), None) => match at(-2) {
            Some(m2) => (3.0 * u0 - 4.0 * m + m2) / (2.0 * h),
            None => (u0 - m) / h,
        },
        (None, None) => 0.0,
    }
}

/// Second derivative along one axis, with one-sided stencils at mask edges.
fn d2(grid: &GridSpec, mask: &[bool], u: &[f64], i: usize, j: usize, axis: usize) -> f64 {
    let h2 = grid.h * grid.h;
    let at = |k: i64| -> Option<f64> {
        let (a, b) = if axis == 0 { (i as i64 + k, j as i64) } else { (i as i64, j as i64 + k) };
        if a < 0 || b < 0 || a >= grid.nx as i64 || b >= grid.ny as i64 {
            return None;
        }
        let idx = grid.index(a as usize, b as usize);
        mask[idx].then(|| u[idx])
    };
    let u0 = u[grid.index(i, j)];
    match (at(-1), at(1)) {
        (Some(m), Some(p)) => (p - 2.0 * u0 + m) / h2,
        (None, Some(p)) => match (at(2), at(3)) {
            (Some(p2), Some(p3)) => (2.0 * u0 - 5.0 * p + 4.0 * p2 - p3) / h2,
            (Some(p2), None) => (u0 - 2.0 * p + p2) / h2,
            _ => 0.0,
        },
        (Some(m), None) => match (at(-2), at(-3)) {
            (Some(m2), Some(m3)) => (2.0 * u0 - 5.0 * m + 4.0 * m2 - m3) / h2,
            (Some(m2), None) => (u0 - 2.0 * m + m2) / h2,
            _ => 0.0,
        },
        (None, None) => 0.0,
    }
}

/// Recovered nodal gradient of a nodal function.
pub fn nodal_gradient(grid: &GridSpec, mask: &[bool], u: &[f64]) -> Vec<[f64; 2]> {
    (0..grid.node_count())
        .map(|k| {
            if !mask[k] {
                return [0.0; 2];
            }
            let (i, j) = grid.ij(k);
            [d1(grid, mask, u, i, j, 0), d1(grid, mask, u, i, j, 1)]
        })
        .collect()
}

/// Five-point Laplacian with one-sided second differences at mask edges.
pub fn nodal_laplacian(grid: &GridSpec, mask: &[bool], u: &[f64]) -> Vec<f64> {
    (0..grid.node_count())
        .map(|k| {
            if !mask[k] {
                return 0.0;
            }
            let (i, j) = grid.ij(k);
            d2(grid, mask, u, i, j, 0) + d2(grid, mask, u, i, j, 1)
        })
        .collect()
}

/// Nodal divergence of a vector field.
pub fn nodal_divergence(grid: &GridSpec, mask: &[bool], vx: &[f64], vy: &[f64]) -> Vec<f64> {
    (0..grid.node_count())
        .map(|k| {
            if !mask[k] {
                return 0.0;
            }
            let (i, j) = grid.ij(k);
            d1(grid, mask, vx, i, j, 0) + d1(grid, mask, vy, i, j, 1)
        })
        .collect()
}

/// Leading-order nodal fields from the potential alone.
#[derive(Clone, Debug)]
pub struct LeadingFields {
    pub grad: Vec<[f64; 2]>,
    pub rho0: Vec<f64>,
    pub lap_rho0: Vec<f64>,
}

pub fn leading_fields(sol: &OuterSolution) -> LeadingFields {
    let grid = &sol.grid;
    let grad = nodal_gradient(grid, &sol.reliable, &sol.zeta);
    let rho0: Vec<f64> = grad.iter().map(|g| (1.0 - g[0] * g[0] - g[1] * g[1]).max(0.0).sqrt()).collect();
    let lap_rho0 = nodal_laplacian(grid, &sol.reliable, &rho0);
    let grad = {
        let gx = extend(grid, &sol.reliable, &sol.active, &grad.iter().map(|g| g[0]).collect::<Vec<_>>());
        let gy = extend(grid, &sol.reliable, &sol.active, &grad.iter().map(|g| g[1]).collect::<Vec<_>>());
        gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect()
    };
    let rho0 = extend(grid, &sol.reliable, &sol.active, &rho0);
    let lap_rho0 = extend(grid, &sol.reliable, &sol.active, &lap_rho0);
    LeadingFields { grad, rho0, lap_rho0 }
}

/// Least-squares linear fit of reliable nodal values within `radius` of `p`.
fn linear_fit(grid: &GridSpec, reliable: &[bool], values: &[f64], p: Point, radius: f64) -> Option<f64> {
    let h = grid.h;
    let r = (radius / h).ceil() as i64;
    let (ci, cj, _, _) = grid.locate(p);
    // Normal equations for v = a + b dx + c dy, coordinates scaled by h.
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    let mut count = 0;
    for dj in -r..=r + 1 {
        for di in -r..=r + 1 {
            let (i, j) = (ci as i64 + di, cj as i64 + dj);
            if i < 0 || j < 0 || i >= grid.nx as i64 || j >= grid.ny as i64 {
                continue;
            }
            let k = grid.index(i as usize, j as usize);
            if !reliable[k] {
                continue;
            }
            let q = grid.node(i as usize, j as usize);
            let (dx, dy) = ((q[0] - p[0]) / h, (q[1] - p[1]) / h);
            if dx * dx + dy * dy > (radius / h) * (radius / h) {
                continue;
            }
            let phi = [1.0, dx, dy];
            for a in 0..3 {
                for b in 0..3 {
                    m[a][b] += phi[a] * phi[b];
                }
                rhs[a] += phi[a] * values[k];
            }
            count += 1;
        }
    }
    if count < 3 {
        return None;
    }
    solve3(m, rhs).map(|x| x[0])
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    let scale = m[0][0].abs().max(1.0);
    if d.abs() <= 1e-12 * scale * scale * scale {
        return None;
    }
    let mut x = [0.0; 3];
    for c in 0..3 {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        x[c] = det(mc) / d;
    }
    Some(x)
}

/// Replace values at active but unreliable nodes by local linear fits of
/// reliable neighbours.
pub fn extend(grid: &GridSpec, reliable: &[bool], active: &[bool], values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    for k in 0..grid.node_count() {
        if active[k] && !reliable[k] {
            let (i, j) = grid.ij(k);
            let p = grid.node(i, j);
            out[k] = linear_fit(grid, reliable, values, p, 2.5 * grid.h)
                .or_else(|| linear_fit(grid, reliable, values, p, 4.0 * grid.h))
                .unwrap_or(0.0);
        }
    }
    out
}

/// Solve for the first correction of the potential: the linearized operator
/// at zeta applied to zeta1 balances -div((lap rho0 / rho0) grad zeta), with
/// natural boundary conditions and zero mean.
pub fn solve_correction(mesh: &FiniteCellMesh, sol: &OuterSolution, j: &CurrentProfile) -> Result<Vec<f64>> {
    let lead = leading_fields(sol);
    let ratio: Vec<f64> = lead.rho0.iter().zip(&lead.lap_rho0).map(|(r, l)| if *r > 0.0 { l / r } else { 0.0 }).collect();
    let jb = boundary_current(mesh, &j.values);
    let a = assemble(mesh, &sol.zeta, &jb, 1.0, true);
    let rhs = correction_rhs(mesh, &sol.zeta, &ratio);
    let (x, rep) = solve_linear(mesh, a.jacobian.as_ref().unwrap(), &rhs, 1e-12);
    if !rep.converged {
        return Err(Error::NewtonDivergence { mu: 1.0, residual: rep.relative_residual });
    }
    Ok(x)
}

/// Nodal load -integral of f grad(zeta) . grad(N_i), with f interpolated bilinearly.
pub fn correction_rhs(mesh: &FiniteCellMesh, zeta: &[f64], f: &[f64]) -> Vec<f64> {
    let grid = &mesh.grid;
    let mut rhs = vec![0.0; grid.node_count()];
    for cell in &mesh.cells {
        let nodes = cell.nodes(grid);
        for q in mesh.rule(cell) {
            let g = mesh.gradient(cell, zeta, q.xi, q.eta);
            let s = shape(q.xi, q.eta);
            let fq: f64 = (0..4).map(|a| s[a] * f[nodes[a]]).sum();
            let dn = shape_grad(q.xi, q.eta);
            for a in 0..4 {
                rhs[nodes[a]] -= q.weight * fq * (g[0] * dn[a][0] + g[1] * dn[a][1]) / grid.h;
            }
        }
    }
    rhs
}

/// Outer amplitude fields and residuals for a given epsilon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OuterFields {
    pub grid: GridSpec,
    pub mask: Vec<bool>,
    pub epsilon: f64,
    pub rho0: Vec<f64>,
    pub rho1: Vec<f64>,
    /// rho0 + eps^2 rho1
    pub rho: Vec<f64>,
    /// Residual of the amplitude equation at nodes.
    pub g1: Vec<f64>,
    /// Lumped weak residual of the current equation at nodes.
    pub g2: Vec<f64>,
    /// Nodes used in the residual norms (active, inside, support mostly inside).
    pub interior: Vec<bool>,
}

impl OuterFields {
    pub fn g1_max(&self) -> f64 {
        self.g1.iter().zip(&self.interior).filter(|(_, &m)| m).fold(0.0, |a, (v, _)| a.max(v.abs()))
    }
    pub fn g2_max(&self) -> f64 {
        self.g2.iter().zip(&self.interior).filter(|(_, &m)| m).fold(0.0, |a, (v, _)| a.max(v.abs()))
    }
}

pub fn outer_fields(mesh: &FiniteCellMesh, geom: &BoundaryGeometry, sol: &OuterSolution, zeta1: &[f64], j: &CurrentProfile, eps: f64) -> OuterFields {
    let grid = &sol.grid;
    let mask = &sol.active;
    let n = grid.node_count();
    let lead = leading_fields(sol);
    let grad1 = {
        let g = nodal_gradient(grid, &sol.reliable, zeta1);
        let gx = extend(grid, &sol.reliable, mask, &g.iter().map(|v| v[0]).collect::<Vec<_>>());
        let gy = extend(grid, &sol.reliable, mask, &g.iter().map(|v| v[1]).collect::<Vec<_>>());
        gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect::<Vec<_>>()
    };
    let rho1: Vec<f64> = (0..n)
        .map(|k| {
            if !mask[k] || lead.rho0[k] <= 0.0 {
                return 0.0;
            }
            let r0 = lead.rho0[k];
            lead.lap_rho0[k] / (2.0 * r0 * r0) - (lead.grad[k][0] * grad1[k][0] + lead.grad[k][1] * grad1[k][1]) / r0
        })
        .collect();
    let e2 = eps * eps;
    let rho: Vec<f64> = (0..n).map(|k| lead.rho0[k] + e2 * rho1[k]).collect();
    let lap_rho = extend(grid, &sol.reliable, mask, &nodal_laplacian(grid, &sol.reliable, &rho));
    let g1: Vec<f64> = (0..n)
        .map(|k| {
            if !mask[k] {
                return 0.0;
            }
            let gx = lead.grad[k][0] + e2 * grad1[k][0];
            let gy = lead.grad[k][1] + e2 * grad1[k][1];
            -lap_rho[k] - rho[k] * (1.0 - rho[k] * rho[k] - gx * gx - gy * gy) / e2
        })
        .collect();

    // Weak residual of div(rho^2 grad chi) with chi = (zeta + eps^2 zeta1) / eps.
    let ratio: Vec<f64> = lead.rho0.iter().zip(&lead.lap_rho0).map(|(r, l)| if *r > 0.0 { l / r } else { 0.0 }).collect();
    let mut r2 = vec![0.0; n];
    for cell in &mesh.cells {
        let nodes = cell.nodes(grid);
        for q in mesh.rule(cell) {
            let g0 = mesh.gradient(cell, &sol.zeta, q.xi, q.eta);
            let g1q = mesh.gradient(cell, zeta1, q.xi, q.eta);
            let s = shape(q.xi, q.eta);
            let fq: f64 = (0..4).map(|a| s[a] * ratio[nodes[a]]).sum();
            let r0 = (1.0 - g0[0] * g0[0] - g0[1] * g0[1]).max(0.0).sqrt();
            let r1 = 0.5 * fq - (g0[0] * g1q[0] + g0[1] * g1q[1]) / r0;
            let ro = r0 + e2 * r1;
            let v = [ro * ro * (g0[0] + e2 * g1q[0]) / eps, ro * ro * (g0[1] + e2 * g1q[1]) / eps];
            let dn = shape_grad(q.xi, q.eta);
            for a in 0..4 {
                r2[nodes[a]] += q.weight * (v[0] * dn[a][0] + v[1] * dn[a][1]) / grid.h;
            }
        }
    }
    let jb = boundary_current(mesh, &j.values);
    let load = super::assembly::boundary_load(mesh, &jb);
    let h2 = grid.h * grid.h;
    let g2: Vec<f64> = (0..n).map(|k| if mesh.mass[k] > 0.25 * h2 { (r2[k] - load[k] / eps) / mesh.mass[k] } else { 0.0 }).collect();
    let interior: Vec<bool> = (0..n)
        .map(|k| {
            let (i, jj) = grid.ij(k);
            sol.reliable[k] && geom.contains(grid.node(i, jj))
        })
        .collect();
    OuterFields { grid: grid.clone(), mask: mask.clone(), epsilon: eps, rho0: lead.rho0, rho1, rho, g1, g2, interior }
}

/// Normal derivative magnitude from the boundary relation
/// (1 - zs^2 - zn^2) zn = j on the subcritical branch (|grad| < 1/sqrt3).
pub fn normal_derivative(zs: f64, j: f64) -> Option<f64> {
    let a = 1.0 - zs * zs;
    if a <= 0.0 {
        return None;
    }
    // f(z) = (a - z^2) z is increasing on [0, sqrt(a/3)]; solve for |j|.
    let top = (a / 3.0).sqrt();
    let fmax = (a - top * top) * top;
    let target = j.abs();
    if target > fmax {
        return None;
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (a - mid * mid) * mid < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Some(j.signum() * 0.5 * (lo + hi))
}

/// Outer data sampled along the boundary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryTrace {
    pub s: Vec<f64>,
    pub points: Vec<Point>,
    pub tangents: Vec<Point>,
    pub normals: Vec<Point>,
    pub curvature: Vec<f64>,
    pub current: Vec<f64>,
    /// Tangential derivative of the potential.
    pub zeta_s: Vec<f64>,
    /// Outward normal derivative from the boundary relation.
    pub zeta_n: Vec<f64>,
}

/// Interpolated outer gradient field (bicubic on recovered nodal gradients).
///
/// Where the bicubic stencil reaches unreliable nodes (near the boundary) the
/// value comes from a local least-squares linear fit of reliable nodes.
pub struct GradientField {
    gx: NodeField,
    gy: NodeField,
}

impl GradientField {
    pub fn new(sol: &OuterSolution, u: &[f64]) -> Self {
        let g = nodal_gradient(&sol.grid, &sol.reliable, u);
        let gx = NodeField::new(sol.grid.clone(), g.iter().map(|v| v[0]).collect(), sol.reliable.clone());
        let gy = NodeField::new(sol.grid.clone(), g.iter().map(|v| v[1]).collect(), sol.reliable.clone());
        Self { gx, gy }
    }

    pub fn at(&self, p: Point) -> [f64; 2] {
        match (self.gx.bicubic_strict(p), self.gy.bicubic_strict(p)) {
            (Some(a), Some(b)) => [a, b],
            _ => {
                let grid = &self.gx.grid;
                let fit = |f: &NodeField| {
                    linear_fit(grid, &f.mask, &f.values, p, 2.5 * grid.h)
                        .or_else(|| linear_fit(grid, &f.mask, &f.values, p, 4.0 * grid.h))
                        .unwrap_or(0.0)
                };
                [fit(&self.gx), fit(&self.gy)]
            }
        }
    }
}

/// Evaluate the outer boundary data at `m` equally spaced arclength stations.
pub fn boundary_trace(geom: &BoundaryGeometry, sol: &OuterSolution, j: &CurrentProfile, m: usize) -> Result<BoundaryTrace> {
    let grad = GradientField::new(sol, &sol.zeta);
    let l = geom.length;
    let mut tr = BoundaryTrace {
        s: Vec::with_capacity(m),
        points: Vec::with_capacity(m),
        tangents: Vec::with_capacity(m),
        normals: Vec::with_capacity(m),
        curvature: Vec::with_capacity(m),
        current: Vec::with_capacity(m),
        zeta_s: Vec::with_capacity(m),
        zeta_n: Vec::with_capacity(m),
    };
    let px: Vec<f64> = geom.points.iter().map(|p| p[0]).collect();
    let py: Vec<f64> = geom.points.iter().map(|p| p[1]).collect();
    let tx: Vec<f64> = geom.tangents.iter().map(|p| p[0]).collect();
    let ty: Vec<f64> = geom.tangents.iter().map(|p| p[1]).collect();
    for k in 0..m {
        let s = l * k as f64 / m as f64;
        let p = [geom.interpolate(&px, s), geom.interpolate(&py, s)];
        let t = [geom.interpolate(&tx, s), geom.interpolate(&ty, s)];
        let tn = t[0].hypot(t[1]);
        let t = [t[0] / tn, t[1] / tn];
        let nrm = [t[1], -t[0]];
        let jv = geom.interpolate(&j.values, s);
        let g = grad.at(p);
        let zs = g[0] * t[0] + g[1] * t[1];
        let zn = normal_derivative(zs, jv).ok_or_else(|| Error::LossOfEllipticity { last_good_mu: 1.0, last_good_max_grad: zs.abs() })?;
        tr.s.push(s);
        tr.points.push(p);
        tr.tangents.push(t);
        tr.normals.push(nrm);
        tr.curvature.push(geom.interpolate(&geom.curvature, s));
        tr.current.push(jv);
        tr.zeta_s.push(zs);
        tr.zeta_n.push(zn);
    }
    Ok(tr)
}

/// Periodic fourth-order derivative of station data in arclength.
pub fn periodic_derivative(values: &[f64], length: f64) -> Vec<f64> {
    let m = values.len();
    let ds = length / m as f64;
    let w = fd_weights(0.0, &[-2.0 * ds, -ds, 0.0, ds, 2.0 * ds], 1);
    (0..m)
        .map(|k| (0..5).map(|o| w[1][o] * values[(k + m + o - 2) % m]).sum())
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryIdentity {
    pub stations: usize,
    pub max_residual: f64,
    pub rms_residual: f64,
}

/// Residual of kappa j + d_s(rho^2 zeta_s) + d_t(rho^2 zeta_t) = 0 on the
/// boundary, where t is the inward distance. The t-derivative uses a
/// one-sided second-order difference with steps `3h`, `6h` into the domain.
pub fn boundary_identity(geom: &BoundaryGeometry, sol: &OuterSolution, j: &CurrentProfile) -> Result<BoundaryIdentity> {
    let h = sol.grid.h;
    let m = ((geom.length / (2.0 * h)).round() as usize).max(16);
    let tr = boundary_trace(geom, sol, j, m)?;
    let grad = GradientField::new(sol, &sol.zeta);
    let tangential: Vec<f64> = (0..m).map(|k| (1.0 - tr.zeta_s[k].powi(2) - tr.zeta_n[k].powi(2)) * tr.zeta_s[k]).collect();
    let ds_t = periodic_derivative(&tangential, geom.length);
    let step = 3.0 * h;
    let inward_flux = |k: usize, t: f64| -> f64 {
        let n = tr.normals[k];
        let p = [tr.points[k][0] - t * n[0], tr.points[k][1] - t * n[1]];
        let g = grad.at(p);
        let q = 1.0 - g[0] * g[0] - g[1] * g[1];
        -q * (g[0] * n[0] + g[1] * n[1])
    };
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    for k in 0..m {
        let f0 = -tr.current[k];
        let f1 = inward_flux(k, step);
        let f2 = inward_flux(k, 2.0 * step);
        let dt = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * step);
        let r = tr.curvature[k] * tr.current[k] + ds_t[k] + dt;
        max = max.max(r.abs());
        sum += r * r;
    }
    Ok(BoundaryIdentity { stations: m, max_residual: max, rms_residual: (sum / m as f64).sqrt() })
}

/// Residual of kappa zeta_s^2 + zeta_t zeta_tt + zeta_s zeta_st - (1/2) d_t |grad zeta|^2
/// on the boundary, a metric identity of boundary-fitted coordinates that any
/// smooth potential satisfies. Normal derivatives are one-sided differences
/// with steps `3h`, `6h` as in [`boundary_identity`].
pub fn gradient_identity(geom: &BoundaryGeometry, sol: &OuterSolution, j: &CurrentProfile) -> Result<BoundaryIdentity> {
    let h = sol.grid.h;
    let m = ((geom.length / (2.0 * h)).round() as usize).max(16);
    let tr = boundary_trace(geom, sol, j, m)?;
    let grad = GradientField::new(sol, &sol.zeta);
    let zeta_t: Vec<f64> = tr.zeta_n.iter().map(|v| -v).collect();
    let ds_zt = periodic_derivative(&zeta_t, geom.length);
    let step = 3.0 * h;
    let along = |k: usize, t: f64| -> [f64; 2] {
        let n = tr.normals[k];
        let g = grad.at([tr.points[k][0] - t * n[0], tr.points[k][1] - t * n[1]]);
        [-(g[0] * n[0] + g[1] * n[1]), g[0] * g[0] + g[1] * g[1]]
    };
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    for k in 0..m {
        let (zs, zt) = (tr.zeta_s[k], zeta_t[k]);
        let (f1, f2) = (along(k, step), along(k, 2.0 * step));
        let d = |a: f64, b: f64, c: f64| (-3.0 * a + 4.0 * b - c) / (2.0 * step);
        let ztt = d(zt, f1[0], f2[0]);
        let dt_sq = d(zs * zs + zt * zt, f1[1], f2[1]);
        let r = tr.curvature[k] * zs * zs + zt * ztt + zs * ds_zt[k] - 0.5 * dt_sq;
        max = max.max(r.abs());
        sum += r * r;
    }
    Ok(BoundaryIdentity { stations: m, max_residual: max, rms_residual: (sum / m as f64).sqrt() })
}

//! Uniform approximation: the outer fields blended with boundary-layer
//! profiles through a cutoff in the distance to the boundary, and the
//! residuals of the stationary system that the blend leaves behind.
//!
//! Fields live on a node grid fine enough to resolve the layer (at least 8
//! cells per epsilon). Outer data is interpolated from the outer grid; layer
//! profiles are interpolated in (arclength, stretched distance) by a
//! tensor-product spline over the boundary stations.
//!
//! Residuals are split as outer residual plus the change caused by the layer
//! terms. The outer residual is the one computed on the outer grid; the change
//! vanishes identically where the cutoff does and is evaluated with
//! fourth-order differences on the fine grid.

use crate::error::{Error, Result};
use crate::feasibility::CurrentProfile;
use crate::geometry::distance::SegmentIndex;
use crate::geometry::{BoundaryGeometry, GridSpec, NodeField, Point};
use crate::inner::StationSolution;
use crate::outer::fields::{extend, nodal_gradient, nodal_laplacian, BoundaryIdentity};
use crate::outer::{boundary_identity, gradient_identity, OuterFields, OuterSolution};
use crate::spline::{PeriodicSpline, PeriodicTensorSpline};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Width of each smoothed end of the cutoff's slope profile, as a fraction of
/// the transition interval. With 1/3 the plateau slope is exactly 3/2.
const RAMP: f64 = 1.0 / 3.0;
const PEAK_SLOPE: f64 = 1.5;

/// Integral of the slope profile over [0, y], y in [0, 1/2].
fn ramp_integral(y: f64) -> f64 {
    if y <= RAMP {
        let u = y / RAMP;
        PEAK_SLOPE * RAMP * (u * u * u - 0.5 * u * u * u * u)
    } else {
        0.5 * PEAK_SLOPE * RAMP + PEAK_SLOPE * (y - RAMP)
    }
}

/// Cutoff profile: 1 on (-inf, 1], 0 on [2, inf), C2, with |slope| <= 3/2.
/// The slope is a plateau of height 3/2 joined to zero by cubic smoothsteps.
pub fn cutoff(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let y = x - 1.0;
        if y <= 0.5 {
            1.0 - ramp_integral(y)
        } else {
            ramp_integral(1.0 - y)
        }
    }
}

pub fn cutoff_derivative(x: f64) -> f64 {
    if x <= 1.0 || x >= 2.0 {
        return 0.0;
    }
    let y = (x - 1.0).min(2.0 - x);
    if y >= RAMP {
        -PEAK_SLOPE
    } else {
        let u = y / RAMP;
        -PEAK_SLOPE * (3.0 * u * u - 2.0 * u * u * u)
    }
}

/// Cutoff exponent iota and the band width delta = eps^iota.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CutoffSpec {
    pub iota: f64,
    pub delta: f64,
}

impl CutoffSpec {
    pub fn new(epsilon: f64, iota: f64) -> Result<Self> {
        if !(iota > 0.0 && iota < 1.0) {
            return Err(Error::Config(format!("iota = {iota} outside (0, 1)")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon = {epsilon} outside (0, 1)")));
        }
        Ok(Self { iota, delta: epsilon.powf(iota) })
    }

    /// Cutoff as a function of the distance to the boundary.
    pub fn at(&self, t: f64) -> f64 {
        cutoff(t / self.delta)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositeOptions {
    pub iota: f64,
    /// Fine-grid cells per epsilon; at least 8.
    pub cells_per_epsilon: f64,
}

impl Default for CompositeOptions {
    fn default() -> Self {
        Self { iota: 0.9, cells_per_epsilon: 8.0 }
    }
}

/// Outer data the composite is built from, all at one epsilon.
pub struct OuterInput<'a> {
    pub geom: &'a BoundaryGeometry,
    pub sol: &'a OuterSolution,
    pub zeta1: &'a [f64],
    pub fields: &'a OuterFields,
}

/// Interpolants of outer quantities on the outer grid.
#[derive(Clone, Debug)]
struct OuterSampler {
    /// zeta + eps^2 zeta1
    chi: NodeField,
    gx: NodeField,
    gy: NodeField,
    lap: NodeField,
    rho: NodeField,
    rho_leading: NodeField,
    rx: NodeField,
    ry: NodeField,
    g1: NodeField,
    g2: NodeField,
    zx: NodeField,
    zy: NodeField,
    zeta: NodeField,
}

impl OuterSampler {
    fn new(input: &OuterInput) -> Self {
        let sol = input.sol;
        let f = input.fields;
        let grid = &sol.grid;
        let e2 = f.epsilon * f.epsilon;
        let active = &sol.active;
        let field = |v: Vec<f64>| NodeField::new(grid.clone(), v, active.clone());
        let chi: Vec<f64> = sol.zeta.iter().zip(input.zeta1).map(|(a, b)| a + e2 * b).collect();
        let split = |u: &[f64]| {
            let g = nodal_gradient(grid, &sol.reliable, u);
            let gx = extend(grid, &sol.reliable, active, &g.iter().map(|v| v[0]).collect::<Vec<_>>());
            let gy = extend(grid, &sol.reliable, active, &g.iter().map(|v| v[1]).collect::<Vec<_>>());
            (field(gx), field(gy))
        };
        let (gx, gy) = split(&chi);
        let (zx, zy) = split(&sol.zeta);
        let (rx, ry) = split(&f.rho);
        let lap = field(extend(grid, &sol.reliable, active, &nodal_laplacian(grid, &sol.reliable, &chi)));
        let g1 = field(extend(grid, &f.interior, active, &f.g1));
        // The lumped weak residual is minus the divergence of the current.
        let g2 = field(extend(grid, &f.interior, active, &f.g2.iter().map(|v| -v).collect::<Vec<_>>()));
        Self {
            chi: field(chi),
            gx,
            gy,
            lap,
            rho: field(f.rho.clone()),
            rho_leading: field(f.rho0.clone()),
            rx,
            ry,
            g1,
            g2,
            zx,
            zy,
            zeta: field(sol.zeta.clone()),
        }
    }
}

/// Taylor coefficients in t of the outer amplitude and potential at the
/// boundary stations: rho_a = rho[0] + t rho[1], zeta_a = zeta[0] + t zeta[1] + t^2 zeta[2] / 2.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryTaylor {
    pub s: Vec<f64>,
    pub rho: Vec<[f64; 2]>,
    pub zeta: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub epsilon: f64,
    pub iota: f64,
    pub delta: f64,
    pub sigma0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub stations: usize,
    pub outer_h: f64,
}

/// Layer contributions at a fine node, already multiplied by the cutoff.
#[derive(Clone, Copy, Debug, Default)]
struct Increment {
    /// rho change: cutoff (rho_i - rho_a)
    r: f64,
    /// change of the scaled phase eps chi: eps cutoff upsilon_i
    c: f64,
    /// scaled potential eps^2 phi: cutoff phi_i
    p: f64,
}

/// The composite fields on the fine grid.
pub struct CompositeSolution {
    pub grid: GridSpec,
    pub inside: Vec<bool>,
    pub rho0: NodeField,
    pub chi0: NodeField,
    pub phi0: NodeField,
    /// Distance to the boundary where below three band widths, else infinity.
    pub distance: Vec<f64>,
    pub taylor: BoundaryTaylor,
    pub provenance: Provenance,
    increments: Vec<Increment>,
    sampler: OuterSampler,
}

struct LayerSplines {
    rho: PeriodicTensorSpline,
    phi: PeriodicTensorSpline,
    upsilon: PeriodicTensorSpline,
    rho_r: PeriodicSpline,
    rho_a0: PeriodicSpline,
    rho_a1: PeriodicSpline,
    sqrt_sigma0: f64,
}

impl LayerSplines {
    /// (rho_i, phi_i, upsilon_i) at arclength `s` and stretched distance `tau`.
    fn eval(&self, s: f64, tau: f64) -> (f64, f64, f64) {
        let eta = tau * self.rho_r.eval(s) / self.sqrt_sigma0;
        (self.rho.eval(s, eta), self.phi.eval(s, eta), self.upsilon.eval(s, eta))
    }
}

fn station_frame(geom: &BoundaryGeometry, s: f64) -> (Point, Point) {
    let px: Vec<f64> = geom.points.iter().map(|p| p[0]).collect();
    let py: Vec<f64> = geom.points.iter().map(|p| p[1]).collect();
    let tx: Vec<f64> = geom.tangents.iter().map(|p| p[0]).collect();
    let ty: Vec<f64> = geom.tangents.iter().map(|p| p[1]).collect();
    let p = [geom.interpolate(&px, s), geom.interpolate(&py, s)];
    let t = [geom.interpolate(&tx, s), geom.interpolate(&ty, s)];
    let tn = t[0].hypot(t[1]);
    (p, [t[1] / tn, -t[0] / tn])
}

/// One-sided second-order derivative at 0 from samples at 0, d, 2d.
fn one_sided(f0: f64, f1: f64, f2: f64, d: f64) -> f64 {
    (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * d)
}

fn boundary_taylor(geom: &BoundaryGeometry, sampler: &OuterSampler, s: &[f64], step: f64) -> BoundaryTaylor {
    let mut out = BoundaryTaylor { s: s.to_vec(), rho: Vec::with_capacity(s.len()), zeta: Vec::with_capacity(s.len()) };
    for &sk in s {
        let (p, n) = station_frame(geom, sk);
        let at = |t: f64| [p[0] - t * n[0], p[1] - t * n[1]];
        let rho = |t: f64| sampler.rho_leading.bicubic(at(t));
        let zt = |t: f64| {
            let q = at(t);
            -(sampler.zx.bicubic(q) * n[0] + sampler.zy.bicubic(q) * n[1])
        };
        let (r0, r1, r2) = (rho(0.0), rho(step), rho(2.0 * step));
        let (z0, z1, z2) = (zt(0.0), zt(step), zt(2.0 * step));
        out.rho.push([r0, one_sided(r0, r1, r2, step)]);
        out.zeta.push([sampler.zeta.bicubic(p), z0, one_sided(z0, z1, z2, step)]);
    }
    out
}

fn layer_splines(geom: &BoundaryGeometry, stations: &[StationSolution], taylor: &BoundaryTaylor, sigma0: f64, tau_needed: f64) -> Result<LayerSplines> {
    let m = stations.len();
    let l = geom.length;
    if m < 8 {
        return Err(Error::Resolution(format!("{m} boundary stations; at least 8 are needed")));
    }
    for (k, st) in stations.iter().enumerate() {
        if (st.s - l * k as f64 / m as f64).abs() > 1e-9 * l {
            return Err(Error::Config(format!("station {k} at s = {} is not on the uniform arclength grid", st.s)));
        }
        if (st.profiles.params.sigma0 - sigma0).abs() > 1e-12 * sigma0 {
            return Err(Error::Config(format!("station {k} was solved with sigma0 = {}", st.profiles.params.sigma0)));
        }
    }
    let sq = sigma0.sqrt();
    let heta: Vec<f64> = stations.iter().map(|st| (st.profiles.tau[1] - st.profiles.tau[0]) * st.profiles.params.rho_r / sq).collect();
    let h = heta[0];
    if heta.iter().any(|v| (v - h).abs() > 1e-9 * h) {
        return Err(Error::Config("boundary stations use different layer grid spacings".into()));
    }
    let rho_r_max = stations.iter().map(|st| st.profiles.params.rho_r).fold(0.0, f64::max);
    let n = (tau_needed * rho_r_max / sq / h).ceil() as usize + 4;
    if let Some(st) = stations.iter().find(|st| st.profiles.tau.len() < n) {
        return Err(Error::Resolution(format!(
            "layer profile at s = {} stops at tau = {}, the band needs tau = {tau_needed}",
            st.s,
            st.profiles.tau.last().unwrap()
        )));
    }
    let rows = |f: &dyn Fn(&StationSolution) -> &Vec<f64>| -> Vec<Vec<f64>> { stations.iter().map(|st| f(st)[..n].to_vec()).collect() };
    let hs = l / m as f64;
    let periodic = |v: Vec<f64>| PeriodicSpline::new(v, l);
    Ok(LayerSplines {
        rho: PeriodicTensorSpline::new(&rows(&|st| &st.profiles.rho), hs, h),
        phi: PeriodicTensorSpline::new(&rows(&|st| &st.profiles.phi), hs, h),
        upsilon: PeriodicTensorSpline::new(&rows(&|st| &st.profiles.upsilon), hs, h),
        rho_r: periodic(stations.iter().map(|st| st.profiles.params.rho_r).collect()),
        rho_a0: periodic(taylor.rho.iter().map(|v| v[0]).collect()),
        rho_a1: periodic(taylor.rho.iter().map(|v| v[1]).collect()),
        sqrt_sigma0: sq,
    })
}

/// Assemble the composite approximation.
///
/// `stations` must sit on the uniform arclength grid s_k = L k / m with
/// spacing at most the band width, and their profiles must reach the end of
/// the cutoff support.
pub fn assemble_composite(input: &OuterInput, stations: &[StationSolution], sigma0: f64, opts: &CompositeOptions) -> Result<CompositeSolution> {
    let geom = input.geom;
    let eps = input.fields.epsilon;
    let spec = CutoffSpec::new(eps, opts.iota)?;
    let delta = spec.delta;
    if !(opts.cells_per_epsilon >= 8.0) {
        return Err(Error::Resolution(format!("{} cells per epsilon; at least 8 are required", opts.cells_per_epsilon)));
    }
    let m = stations.len();
    if m == 0 || geom.length / m as f64 > delta {
        return Err(Error::Resolution(format!(
            "station spacing {} exceeds the band width {delta}",
            geom.length / m.max(1) as f64
        )));
    }
    let h = eps / opts.cells_per_epsilon;
    let grid = GridSpec::covering(geom, h, 3)?.with_delta(delta, 8.0)?;
    let sampler = OuterSampler::new(input);
    let s_stations: Vec<f64> = stations.iter().map(|st| st.s).collect();
    let taylor = boundary_taylor(geom, &sampler, &s_stations, 3.0 * input.sol.grid.h);
    let support = 2.0 * delta + 3.0 * h;
    let layers = layer_splines(geom, stations, &taylor, sigma0, support / eps)?;
    let inside = geom.inside_mask(&grid);
    let index = SegmentIndex::new(geom);
    let nodes: Vec<(f64, Increment, f64, f64)> = (0..grid.node_count())
        .into_par_iter()
        .map(|k| {
            if !inside[k] {
                return (f64::INFINITY, Increment::default(), 0.0, 0.0);
            }
            let (i, j) = grid.ij(k);
            let p = grid.node(i, j);
            let rho_o = sampler.rho.bicubic(p);
            let chi_o = sampler.chi.bicubic(p) / eps;
            let Some(lc) = index.local_coordinates(p, 3.0 * delta) else {
                return (f64::INFINITY, Increment::default(), rho_o, chi_o);
            };
            let t = lc.t.max(0.0);
            let cut = spec.at(t);
            if cut == 0.0 {
                return (t, Increment::default(), rho_o, chi_o);
            }
            let (rho_i, phi_i, ups_i) = layers.eval(lc.s, t / eps);
            let rho_a = layers.rho_a0.eval(lc.s) + t * layers.rho_a1.eval(lc.s);
            let inc = Increment { r: cut * (rho_i - rho_a), c: eps * cut * ups_i, p: cut * phi_i };
            (t, inc, rho_o, chi_o)
        })
        .collect();
    let mut distance = Vec::with_capacity(nodes.len());
    let mut increments = Vec::with_capacity(nodes.len());
    let mut rho0 = Vec::with_capacity(nodes.len());
    let mut chi0 = Vec::with_capacity(nodes.len());
    let mut phi0 = Vec::with_capacity(nodes.len());
    for (k, (t, inc, rho_o, chi_o)) in nodes.into_iter().enumerate() {
        distance.push(t);
        increments.push(inc);
        if inside[k] {
            rho0.push(rho_o + inc.r);
            chi0.push(chi_o + inc.c / eps);
            phi0.push(inc.p / (eps * eps));
        } else {
            rho0.push(0.0);
            chi0.push(0.0);
            phi0.push(0.0);
        }
    }
    let provenance = Provenance {
        epsilon: eps,
        iota: opts.iota,
        delta,
        sigma0,
        h,
        nx: grid.nx,
        ny: grid.ny,
        stations: m,
        outer_h: input.sol.grid.h,
    };
    Ok(CompositeSolution {
        rho0: NodeField::new(grid.clone(), rho0, inside.clone()),
        chi0: NodeField::new(grid.clone(), chi0, inside.clone()),
        phi0: NodeField::new(grid.clone(), phi0, inside.clone()),
        grid,
        inside,
        distance,
        taylor,
        provenance,
        increments,
        sampler,
    })
}

/// L2 norms over the whole region and its split at distance delta.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct NormSplit {
    pub total: f64,
    /// Nodes closer than delta to the boundary.
    pub band: f64,
    /// Nodes at distance delta or more.
    pub interior: f64,
    pub max_abs: f64,
}

#[derive(Default)]
struct Accumulator {
    band: f64,
    interior: f64,
    max_abs: f64,
}

impl Accumulator {
    fn add(&mut self, v: f64, in_band: bool) {
        if in_band {
            self.band += v * v;
        } else {
            self.interior += v * v;
        }
        self.max_abs = self.max_abs.max(v.abs());
    }

    fn merge(mut self, o: Self) -> Self {
        self.band += o.band;
        self.interior += o.interior;
        self.max_abs = self.max_abs.max(o.max_abs);
        self
    }

    fn finish(&self, cell: f64) -> NormSplit {
        NormSplit {
            total: ((self.band + self.interior) * cell).sqrt(),
            band: (self.band * cell).sqrt(),
            interior: (self.interior * cell).sqrt(),
            max_abs: self.max_abs,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeReport {
    /// Integral of rho0^2 eps^2 phi0 over the domain.
    pub integral: f64,
    /// L2 norm of eps^2 phi0.
    pub phi_norm: f64,
    /// |integral| / (phi_norm sqrt(area)), at most 1 by Cauchy-Schwarz.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub provenance: Provenance,
    /// Nodes whose difference stencil lies inside the domain.
    pub nodes: usize,
    pub band_nodes: usize,
    pub h1: NormSplit,
    pub div_h2: NormSplit,
    pub h3: NormSplit,
    pub gauge: GaugeReport,
    /// Minimum and maximum of rho0 over the domain.
    pub rho_range: [f64; 2],
    /// Residual of the metric identity for the outer potential on the boundary.
    pub gradient_identity: BoundaryIdentity,
    /// Residual of the current identity for the outer potential on the boundary.
    pub current_identity: BoundaryIdentity,
}

const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

/// Residuals h1, div H2, h3 of the composite, with the boundary identities of
/// the outer potential.
pub fn residuals(comp: &CompositeSolution, input: &OuterInput, j: &CurrentProfile) -> Result<ResidualReport> {
    let pv = &comp.provenance;
    let (eps, sigma0, delta) = (pv.epsilon, pv.sigma0, pv.delta);
    let grid = &comp.grid;
    let h = grid.h;
    if h > eps / 8.0 * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!("grid spacing {h} leaves fewer than 8 cells per epsilon = {eps}")));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let e2 = eps * eps;
    let s = &comp.sampler;
    let inc = &comp.increments;
    let support = 2.0 * delta + 2.0 * h;
    type Acc = (Accumulator, Accumulator, Accumulator, usize, usize, f64, f64, f64, f64);
    let rows: Vec<Acc> = (2..ny.saturating_sub(2))
        .into_par_iter()
        .map(|jj| {
            let mut a1 = Accumulator::default();
            let mut a2 = Accumulator::default();
            let mut a3 = Accumulator::default();
            let (mut count, mut band_count) = (0usize, 0usize);
            let (mut gauge, mut phi_sq) = (0.0, 0.0);
            let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for ii in 2..nx - 2 {
                let k = grid.index(ii, jj);
                if !comp.inside[k] {
                    continue;
                }
                let rho = comp.rho0.values[k];
                rmin = rmin.min(rho);
                rmax = rmax.max(rho);
                gauge += rho * rho * inc[k].p;
                phi_sq += inc[k].p * inc[k].p;
                let t = comp.distance[k];
                let stencil_inside = (0..5).all(|o| comp.inside[grid.index(ii + o - 2, jj)] && comp.inside[grid.index(ii, jj + o - 2)]);
                if t < 2.0 * h || !stencil_inside {
                    continue;
                }
                let p = grid.node(ii, jj);
                let in_band = t < delta;
                count += 1;
                band_count += in_band as usize;
                let mut h1 = s.g1.bicubic(p);
                let mut h2 = s.g2.bicubic(p);
                let mut h3 = 0.0;
                if t < support {
                    let field = |f: fn(&Increment) -> f64| {
                        let mut d = [0.0; 2];
                        let mut lap = 0.0;
                        for o in 0..5 {
                            let vx = f(&inc[grid.index(ii + o - 2, jj)]);
                            let vy = f(&inc[grid.index(ii, jj + o - 2)]);
                            d[0] += D1[o] * vx;
                            d[1] += D1[o] * vy;
                            lap += D2[o] * (vx + vy);
                        }
                        ([d[0] / h, d[1] / h], lap / (h * h))
                    };
                    let (dr, lr) = field(|v| v.r);
                    let (dc, lc) = field(|v| v.c);
                    let (_, lp) = field(|v| v.p);
                    let r = inc[k].r;
                    let ph = inc[k].p;
                    let ro = s.rho.bicubic(p);
                    let g = [s.gx.bicubic(p), s.gy.bicubic(p)];
                    let lo = s.lap.bicubic(p);
                    let dro = [s.rx.bicubic(p), s.ry.bicubic(p)];
                    let gc = [g[0] + dc[0], g[1] + dc[1]];
                    let rc = ro + r;
                    let sq = |v: [f64; 2]| v[0] * v[0] + v[1] * v[1];
                    let dotp = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
                    h1 += -lr - ((1.0 - sq(gc) - rc * rc) * rc - (1.0 - sq(g) - ro * ro) * ro) / e2;
                    let flux_c = rc * rc * (lo + lc) + 2.0 * rc * dotp([dro[0] + dr[0], dro[1] + dr[1]], gc);
                    let flux_o = ro * ro * lo + 2.0 * ro * dotp(dro, g);
                    h2 += (flux_c - flux_o) / eps - sigma0 * lp;
                    h3 = sigma0 * lp - rc * rc * ph / e2;
                }
                a1.add(h1, in_band);
                a2.add(h2, in_band);
                a3.add(h3, in_band);
            }
            (a1, a2, a3, count, band_count, gauge, phi_sq, rmin, rmax)
        })
        .collect();
    let mut a1 = Accumulator::default();
    let mut a2 = Accumulator::default();
    let mut a3 = Accumulator::default();
    let (mut count, mut band_count, mut gauge, mut phi_sq) = (0, 0, 0.0, 0.0);
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        a1 = a1.merge(r.0);
        a2 = a2.merge(r.1);
        a3 = a3.merge(r.2);
        count += r.3;
        band_count += r.4;
        gauge += r.5;
        phi_sq += r.6;
        rmin = rmin.min(r.7);
        rmax = rmax.max(r.8);
    }
    let cell = h * h;
    let phi_norm = (phi_sq * cell).sqrt();
    let integral = gauge * cell;
    let area = input.geom.area();
    let ratio = if phi_norm > 0.0 { integral.abs() / (phi_norm * area.sqrt()) } else { 0.0 };
    Ok(ResidualReport {
        provenance: pv.clone(),
        nodes: count,
        band_nodes: band_count,
        h1: a1.finish(cell),
        div_h2: a2.finish(cell),
        h3: a3.finish(cell),
        gauge: GaugeReport { integral, phi_norm, ratio },
        rho_range: [rmin, rmax],
        gradient_identity: gradient_identity(input.geom, input.sol, j)?,
        current_identity: boundary_identity(input.geom, input.sol, j)?,
    })
}

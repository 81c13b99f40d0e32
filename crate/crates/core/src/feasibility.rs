//! Boundary current profiles and the two admissibility checks: the pointwise
//! bound |j| < 2/(3 sqrt 3) and the flux-per-distance ratio M < 1.

use crate::error::{Error, Result};
use crate::geometry::geodesic::Geodesic;
use crate::geometry::{boundary_integral, cumulative_integral, BoundaryField, BoundaryGeometry};
use crate::CRITICAL_CURRENT;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Built-in boundary current shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurrentPreset {
    Zero,
    /// amplitude * cos(2 pi s / L), s measured from the first sample.
    Dipole { amplitude: f64 },
    /// Smooth bumps of half-width `width` (arclength): outflow centred at the
    /// rightmost sample, inflow at the leftmost.
    BumpPair { amplitude: f64, width: f64 },
    /// +amplitude on edges with outward normal +x, -amplitude on edges with
    /// normal -x, zero elsewhere (rectangles).
    Edges { amplitude: f64 },
    /// Values read from a CSV file with one value per boundary sample.
    Csv { path: String },
}

/// Normal current density on the boundary samples, mean-free.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurrentProfile {
    pub values: BoundaryField,
}

fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

impl CurrentProfile {
    pub fn from_preset(geom: &BoundaryGeometry, preset: &CurrentPreset) -> Result<Self> {
        let n = geom.len();
        let l = geom.length;
        let values: Vec<f64> = match preset {
            CurrentPreset::Zero => vec![0.0; n],
            CurrentPreset::Dipole { amplitude } => {
                (0..n).map(|k| amplitude * (2.0 * std::f64::consts::PI * geom.arclength[k] / l).cos()).collect()
            }
            CurrentPreset::BumpPair { amplitude, width } => {
                if !(*width > 0.0 && *width < 0.25 * l) {
                    return Err(Error::Config(format!("bump width {width} must lie in (0, L/4)")));
                }
                let right = (0..n).max_by(|&a, &b| geom.points[a][0].total_cmp(&geom.points[b][0])).unwrap();
                let left = (0..n).min_by(|&a, &b| geom.points[a][0].total_cmp(&geom.points[b][0])).unwrap();
                let periodic = |s: f64, c: f64| {
                    let mut d = (s - c).rem_euclid(l);
                    if d > 0.5 * l {
                        d -= l;
                    }
                    d
                };
                (0..n)
                    .map(|k| {
                        let s = geom.arclength[k];
                        amplitude
                            * (bump(periodic(s, geom.arclength[right]) / width) - bump(periodic(s, geom.arclength[left]) / width))
                    })
                    .collect()
            }
            CurrentPreset::Edges { amplitude } => (0..n)
                .map(|k| {
                    let nx = geom.normals[k][0];
                    if (nx.abs() - 1.0).abs() < 1e-9 {
                        amplitude * nx.signum()
                    } else {
                        0.0
                    }
                })
                .collect(),
            CurrentPreset::Csv { path } => read_values(Path::new(path), n)?,
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite boundary current".into()));
        }
        Ok(Self::mean_free(geom, values))
    }

    /// Subtract the boundary average so the total current vanishes. Values that
    /// already integrate to zero to rounding are left untouched.
    pub fn mean_free(geom: &BoundaryGeometry, mut values: Vec<f64>) -> Self {
        let total = boundary_integral(geom, &values);
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * geom.length;
        if total.abs() > 1e-14 * scale {
            let mean = total / geom.length;
            for v in &mut values {
                *v -= mean;
            }
        }
        Self { values }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * factor).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn read_values(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let last = line.split(',').next_back().unwrap().trim();
        match last.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Config(format!("{}: bad value on line {}", path.display(), i + 1))),
        }
    }
    if out.len() != n {
        return Err(Error::Config(format!("{}: {} values for {} boundary samples", path.display(), out.len(), n)));
    }
    Ok(out)
}

/// max over t in [0, 1] of t - t^3, found by golden-section search (used as a
/// cross-check of the closed form).
pub fn max_t_minus_t_cubed() -> f64 {
    let f = |t: f64| t - t * t * t;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub max_abs_current: f64,
    pub critical: f64,
    /// critical - max |j|
    pub margin: f64,
    /// Arclength of the sample where |j| is largest.
    pub argmax_s: f64,
    pub feasible: bool,
}

/// Check |j| < 2/(3 sqrt 3) at every sample. Fails with `Infeasible` unless
/// `allow` is set, in which case the report is returned with `feasible = false`.
pub fn check_pointwise(geom: &BoundaryGeometry, j: &CurrentProfile, allow: bool) -> Result<PointwiseReport> {
    let (k, max) = j
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| (k, v.abs()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let report = PointwiseReport {
        max_abs_current: max,
        critical: CRITICAL_CURRENT,
        margin: CRITICAL_CURRENT - max,
        argmax_s: geom.arclength[k],
        feasible: max < CRITICAL_CURRENT,
    };
    if !report.feasible && !allow {
        return Err(Error::Infeasible(format!(
            "max |j| = {max:.9} at s = {:.6} reaches the critical value {CRITICAL_CURRENT:.9}",
            report.argmax_s
        )));
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FluxRatioReport {
    /// Supremum over sample pairs of |flux between them| / geodesic distance.
    pub sup_ratio: f64,
    pub argmax_s: [f64; 2],
    /// Number of boundary samples used for the pair search.
    pub samples: usize,
    pub feasible: bool,
    /// Set when the ratio is within 1% of 1.
    pub near_critical: bool,
}

/// Maximum flux-to-distance ratio over boundary sample pairs. At most
/// `max_samples` evenly strided samples take part in the pair search; the
/// geodesic distances always use the full polygon.
pub fn sup_flux_ratio(geom: &BoundaryGeometry, j: &CurrentProfile, max_samples: usize, allow: bool) -> Result<FluxRatioReport> {
    let n = geom.len();
    let cum = cumulative_integral(geom, &j.values);
    let stride = n.div_ceil(max_samples.max(2));
    let picks: Vec<usize> = (0..n).step_by(stride).collect();
    let geo = Geodesic::new(geom);
    let rows: Vec<(f64, usize, usize)> = {
        use rayon::prelude::*;
        picks
            .par_iter()
            .enumerate()
            .map(|(ia, &a)| {
                let x = geom.points[a];
                let pot = if geo.is_convex() { Vec::new() } else { geo.reflex_potential(x) };
                let mut best = (0.0, a, a);
                for &b in &picks[ia + 1..] {
                    let y = geom.points[b];
                    let d = if geo.is_convex() { crate::geometry::dist(x, y) } else { geo.distance_with(x, &pot, y) };
                    if d <= 1e-14 * geom.length {
                        continue;
                    }
                    let r = (cum[b] - cum[a]).abs() / d;
                    if r > best.0 {
                        best = (r, a, b);
                    }
                }
                best
            })
            .collect()
    };
    let (sup, a, b) = rows.into_iter().fold((0.0, 0, 0), |m, r| if r.0 > m.0 { r } else { m });
    let report = FluxRatioReport {
        sup_ratio: sup,
        argmax_s: [geom.arclength[a], geom.arclength[b]],
        samples: picks.len(),
        feasible: sup < 1.0,
        near_critical: (sup - 1.0).abs() < 0.01,
    };
    if !report.feasible && !allow {
        return Err(Error::Infeasible(format!(
            "flux-to-distance ratio {sup:.6} >= 1 between s = {:.6} and s = {:.6}",
            report.argmax_s[0], report.argmax_s[1]
        )));
    }
    Ok(report)
}

/// Flux-to-distance ratio for every pair of (strided) boundary samples, as
/// rows `(s_a, s_b, ratio)` with `s_a < s_b`.
pub fn flux_ratio_table(geom: &BoundaryGeometry, j: &CurrentProfile, max_samples: usize) -> Vec<[f64; 3]> {
    use rayon::prelude::*;
    let n = geom.len();
    let cum = cumulative_integral(geom, &j.values);
    let stride = n.div_ceil(max_samples.max(2));
    let picks: Vec<usize> = (0..n).step_by(stride).collect();
    let geo = Geodesic::new(geom);
    let rows: Vec<Vec<[f64; 3]>> = picks
        .par_iter()
        .enumerate()
        .map(|(ia, &a)| {
            let x = geom.points[a];
            let pot = if geo.is_convex() { Vec::new() } else { geo.reflex_potential(x) };
            picks[ia + 1..]
                .iter()
                .filter_map(|&b| {
                    let y = geom.points[b];
                    let d = if geo.is_convex() { crate::geometry::dist(x, y) } else { geo.distance_with(x, &pot, y) };
                    (d > 1e-14 * geom.length).then(|| [geom.arclength[a], geom.arclength[b], (cum[b] - cum[a]).abs() / d])
                })
                .collect()
        })
        .collect();
    rows.concat()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::presets::{circle, dumbbell, rectangle};

    #[test]
    fn pair_table_attains_the_supremum() {
        let geom = circle(1.0, 128).unwrap();
        let j = CurrentProfile::from_preset(&geom, &CurrentPreset::Dipole { amplitude: 0.3 }).unwrap();
        let table = flux_ratio_table(&geom, &j, 64);
        assert_eq!(table.len(), 64 * 63 / 2);
        let sup = table.iter().fold(0.0f64, |m, r| m.max(r[2]));
        assert_eq!(sup, sup_flux_ratio(&geom, &j, 64, true).unwrap().sup_ratio);
    }

    #[test]
    fn critical_constant_matches_numeric_maximum() {
        assert!((max_t_minus_t_cubed() - CRITICAL_CURRENT).abs() < 1e-15);
        assert!((CRITICAL_CURRENT - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-16);
    }

    #[test]
    fn pointwise_threshold() {
        let g = circle(1.0, 256).unwrap();
        let ok = CurrentProfile::from_preset(&g, &CurrentPreset::Dipole { amplitude: 0.38 }).unwrap();
        assert!(check_pointwise(&g, &ok, false).unwrap().feasible);
        let bad = CurrentProfile::from_preset(&g, &CurrentPreset::Dipole { amplitude: 0.39 }).unwrap();
        assert!(matches!(check_pointwise(&g, &bad, false), Err(Error::Infeasible(_))));
        assert!(!check_pointwise(&g, &bad, true).unwrap().feasible);
    }

    #[test]
    fn dipole_ratio_on_disk_equals_amplitude() {
        // For A cos(theta) on the unit disk the flux between angles a and b is
        // A (sin b - sin a) and the chord is 2 sin((b - a)/2), so the ratio is
        // A |cos((a + b)/2)| with supremum A.
        let g = circle(1.0, 256).unwrap();
        let j = CurrentProfile::from_preset(&g, &CurrentPreset::Dipole { amplitude: 0.3 }).unwrap();
        let r = sup_flux_ratio(&g, &j, 256, false).unwrap();
        assert!((r.sup_ratio - 0.3).abs() < 1e-3, "{}", r.sup_ratio);
    }

    #[test]
    fn edge_current_is_mean_free_exactly() {
        let g = rectangle(1.0, 1.0, 256).unwrap();
        let j = CurrentProfile::from_preset(&g, &CurrentPreset::Edges { amplitude: 0.3 }).unwrap();
        assert!(boundary_integral(&g, &j.values).abs() < 1e-15);
        let count = |a: f64| j.values.iter().filter(|v| **v == a).count();
        assert_eq!(count(0.3), count(-0.3), "{:?}", j.values);
        assert!(count(0.3) > 60, "{}", count(0.3));
    }

    #[test]
    fn narrow_neck_blocks_large_currents() {
        let g = dumbbell(1.0, 1.6, 0.3, 0.2, 800).unwrap();
        let j = CurrentProfile::from_preset(&g, &CurrentPreset::BumpPair { amplitude: 0.35, width: 1.0 }).unwrap();
        assert!(check_pointwise(&g, &j, false).is_ok());
        let r = sup_flux_ratio(&g, &j, 300, true).unwrap();
        assert!(!r.feasible, "{}", r.sup_ratio);
        assert!(matches!(sup_flux_ratio(&g, &j, 300, false), Err(Error::Infeasible(_))));
    }

    #[test]
    fn mean_is_removed() {
        let g = circle(1.0, 128).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|k| 0.1 + 0.05 * g.points[k][0]).collect();
        let j = CurrentProfile::mean_free(&g, vals);
        assert!(boundary_integral(&g, &j.values).abs() < 1e-14);
    }
}

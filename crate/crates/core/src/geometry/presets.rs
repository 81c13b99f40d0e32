//! Built-in domain shapes, sampled uniformly in arclength.

use super::{build_boundary, BoundaryGeometry, Point};
use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::path::Path;

#[derive(Clone, Copy, Debug)]
enum Piece {
    Line { from: Point, to: Point },
    /// Circular arc; negative sweep runs clockwise.
    Arc { center: Point, radius: f64, start: f64, sweep: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { from, to } => super::dist(from, to),
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn at(&self, s: f64) -> Point {
        match *self {
            Piece::Line { from, to } => {
                let t = s / self.length();
                [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])]
            }
            Piece::Arc { center, radius, start, sweep } => {
                let th = start + sweep.signum() * s / radius;
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
        }
    }
}

fn sample_path(pieces: &[Piece], n: usize) -> Vec<Point> {
    let lengths: Vec<f64> = pieces.iter().map(Piece::length).collect();
    let total: f64 = lengths.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut piece = 0;
    let mut offset = 0.0;
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while piece + 1 < pieces.len() && s >= offset + lengths[piece] {
            offset += lengths[piece];
            piece += 1;
        }
        out.push(pieces[piece].at((s - offset).min(lengths[piece])));
    }
    out
}

fn check_n(n: usize) -> Result<()> {
    if n < 16 {
        return Err(Error::Geometry(format!("{n} boundary samples requested, need at least 16")));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Disk of radius `r` centred at the origin, first sample at (r, 0).
pub fn circle(r: f64, n: usize) -> Result<BoundaryGeometry> {
    positive("radius", r)?;
    check_n(n)?;
    build_boundary(&sample_path(&[Piece::Arc { center: [0.0, 0.0], radius: r, start: 0.0, sweep: 2.0 * PI }], n))
}

/// Ellipse with semi-axes `a` (x) and `b` (y), sampled uniformly in arclength.
pub fn ellipse(a: f64, b: f64, n: usize) -> Result<BoundaryGeometry> {
    positive("semi-axis a", a)?;
    positive("semi-axis b", b)?;
    check_n(n)?;
    let fine = 64 * n;
    let speed = |t: f64| (a * t.sin()).hypot(b * t.cos());
    // Cumulative arclength on a fine parameter grid (Simpson per cell).
    let dt = 2.0 * PI / fine as f64;
    let mut cum = vec![0.0; fine + 1];
    for i in 0..fine {
        let t0 = i as f64 * dt;
        cum[i + 1] = cum[i] + dt / 6.0 * (speed(t0) + 4.0 * speed(t0 + 0.5 * dt) + speed(t0 + dt));
    }
    let total = cum[fine];
    let mut pts = Vec::with_capacity(n);
    for k in 0..n {
        let target = total * k as f64 / n as f64;
        let i = cum.partition_point(|&c| c <= target).saturating_sub(1).min(fine - 1);
        let mut t = i as f64 * dt + (target - cum[i]) / speed(i as f64 * dt).max(1e-300);
        // Newton on the exact arclength of the cell.
        for _ in 0..20 {
            let t0 = i as f64 * dt;
            let h = t - t0;
            let partial = h / 6.0 * (speed(t0) + 4.0 * speed(t0 + 0.5 * h) + speed(t));
            let f = cum[i] + partial - target;
            let step = f / speed(t);
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        pts.push([a * t.cos(), b * t.sin()]);
    }
    build_boundary(&pts)
}

/// Stadium: rectangle [-half_straight, half_straight] x [-r, r] capped by semicircles.
pub fn stadium(half_straight: f64, r: f64, n: usize) -> Result<BoundaryGeometry> {
    positive("half straight length", half_straight)?;
    positive("radius", r)?;
    check_n(n)?;
    let a = half_straight;
    let pieces = [
        Piece::Arc { center: [a, 0.0], radius: r, start: -0.5 * PI, sweep: PI },
        Piece::Line { from: [a, r], to: [-a, r] },
        Piece::Arc { center: [-a, 0.0], radius: r, start: 0.5 * PI, sweep: PI },
        Piece::Line { from: [-a, -r], to: [a, -r] },
    ];
    build_boundary(&sample_path(&pieces, n))
}

/// Two disks of radius `lobe_radius` centred at (+-`half_separation`, 0), joined
/// by a straight neck of width `neck_width` with circular fillets of radius
/// `fillet_radius` tangent to both the lobes and the neck.
pub fn dumbbell(lobe_radius: f64, half_separation: f64, neck_width: f64, fillet_radius: f64, n: usize) -> Result<BoundaryGeometry> {
    positive("lobe radius", lobe_radius)?;
    positive("half separation", half_separation)?;
    positive("neck width", neck_width)?;
    positive("fillet radius", fillet_radius)?;
    check_n(n)?;
    let (r, c, hw, rf) = (lobe_radius, half_separation, 0.5 * neck_width, fillet_radius);
    if hw >= r {
        return Err(Error::Geometry("neck must be narrower than the lobes".into()));
    }
    let yf = hw + rf;
    let xf = c - ((r + rf).powi(2) - yf * yf).sqrt();
    if xf <= 0.0 {
        return Err(Error::Geometry("lobes too close for the requested neck and fillets".into()));
    }
    let theta_t = yf.atan2(xf - c);
    let theta_l = yf.atan2(c - xf);
    let a_tr = (-yf).atan2(c - xf);
    let a_tl = (-yf).atan2(xf - c);
    let a_bl = yf.atan2(xf - c);
    let a_br = yf.atan2(c - xf);
    let pieces = [
        Piece::Arc { center: [c, 0.0], radius: r, start: -theta_t, sweep: 2.0 * theta_t },
        Piece::Arc { center: [xf, yf], radius: rf, start: a_tr, sweep: -0.5 * PI - a_tr },
        Piece::Line { from: [xf, hw], to: [-xf, hw] },
        Piece::Arc { center: [-xf, yf], radius: rf, start: -0.5 * PI, sweep: a_tl + 0.5 * PI },
        Piece::Arc { center: [-c, 0.0], radius: r, start: theta_l, sweep: 2.0 * PI - 2.0 * theta_l },
        Piece::Arc { center: [-xf, -yf], radius: rf, start: a_bl, sweep: 0.5 * PI - a_bl },
        Piece::Line { from: [-xf, -hw], to: [xf, -hw] },
        Piece::Arc { center: [xf, -yf], radius: rf, start: 0.5 * PI, sweep: a_br - 0.5 * PI },
    ];
    build_boundary(&sample_path(&pieces, n))
}

/// Axis-aligned rectangle [0, lx] x [0, ly] with doubled corner samples, so
/// data may jump at the corners. About `n` samples in total.
pub fn rectangle(lx: f64, ly: f64, n: usize) -> Result<BoundaryGeometry> {
    positive("width", lx)?;
    positive("height", ly)?;
    check_n(n)?;
    let per = |len: f64| ((n as f64 * len / (2.0 * (lx + ly))).round() as usize).max(2);
    let corners = [[0.0, 0.0], [lx, 0.0], [lx, ly], [0.0, ly]];
    let mut pts = Vec::new();
    for e in 0..4 {
        let a: Point = corners[e];
        let b: Point = corners[(e + 1) % 4];
        let len = super::dist(a, b);
        let m = per(len);
        for i in 0..=m {
            let t = i as f64 / m as f64;
            let p = if i == m { b } else { [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])] };
            pts.push(p);
        }
    }
    // Closing copy: dropped by `build_boundary`, leaving the corner doubled.
    pts.push(corners[0]);
    build_boundary(&pts)
}

/// Read a boundary from a CSV file of `x,y` rows (an optional header line is skipped).
pub fn from_csv(path: &Path) -> Result<BoundaryGeometry> {
    let text = std::fs::read_to_string(path)?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = cols.iter().take(2).map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 2 => pts.push([v[0], v[1]]),
            _ if i == 0 => continue,
            _ => return Err(Error::Geometry(format!("{}: bad row {}: {line}", path.display(), i + 1))),
        }
    }
    build_boundary(&pts)
}

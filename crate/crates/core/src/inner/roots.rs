//! Scalar roots shared by the boundary-layer profiles.

use crate::error::{Error, Result};

/// Largest admissible reduced current squared, 4/27.
pub const JR2_MAX: f64 = 4.0 / 27.0;

/// Root x in [2/3, 1] of x^2 (1 - x) = c, for c in [0, 4/27].
///
/// The left side is concave and decreasing on [2/3, 1], so Newton's method
/// started at x = 1 decreases monotonically onto the root.
fn upper_root(c: f64) -> f64 {
    let mut x = 1.0f64;
    for _ in 0..200 {
        let f = x * x * (1.0 - x) - c;
        let df = x * (2.0 - 3.0 * x);
        if f >= 0.0 || df >= 0.0 {
            break;
        }
        let next = (x - f / df).max(2.0 / 3.0);
        if next >= x {
            break;
        }
        x = next;
    }
    x
}

/// Far-field amplitude: the root of mu^4 (1 - mu^2) = jr^2 with mu^2 in [2/3, 1].
pub fn far_amplitude(jr: f64) -> Result<f64> {
    if !jr.is_finite() || jr * jr > JR2_MAX * (1.0 + 1e-14) {
        return Err(Error::InvalidReducedCurrent { jr });
    }
    Ok(upper_root(jr * jr).sqrt())
}

/// Leading-order amplitude as a function of the phase slope `t`:
/// mu^4 (1 - mu^2) = (t - jr)^2 on the upper branch. Slopes outside
/// [jr, 0] are clamped to that interval.
pub fn branch_amplitude(t: f64, jr: f64) -> f64 {
    let (a, b) = if jr <= 0.0 { (jr, 0.0) } else { (0.0, jr) };
    let t = t.clamp(a, b);
    let c = (t - jr) * (t - jr);
    upper_root(c.min(JR2_MAX)).sqrt()
}

/// Boundary amplitude: root of rho_r^2 - j^2 / rho^4 - rho^2 = 0 with
/// rho^2 in (2/3 rho_r^2, rho_r^2].
pub fn boundary_amplitude(rho_r: f64, j: f64) -> Result<f64> {
    let f = |r: f64| rho_r * rho_r - j * j / r.powi(4) - r * r;
    let (mut lo, mut hi) = ((2.0f64 / 3.0).sqrt() * rho_r, rho_r);
    if f(lo) < 0.0 {
        return Err(Error::InvalidReducedCurrent { jr: j / rho_r.powi(3) });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * rho_r {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_current_gives_unit_amplitude() {
        assert_eq!(far_amplitude(0.0).unwrap(), 1.0);
        assert!(far_amplitude(0.385).is_err());
        let critical = far_amplitude(-JR2_MAX.sqrt()).unwrap();
        assert!((critical * critical - 2.0 / 3.0).abs() < 1e-7);
        let mu = far_amplitude(-0.2).unwrap();
        assert!((mu.powi(4) * (1.0 - mu * mu) - 0.04).abs() < 1e-10);
        assert!(far_amplitude(f64::NAN).is_err());
    }

    #[test]
    fn branch_end_values() {
        let jr = -0.2;
        let mid = branch_amplitude(0.5 * jr, jr);
        assert!((mid.powi(4) * (1.0 - mid * mid) - 0.01).abs() < 1e-10);
        assert!((branch_amplitude(jr, jr) - 1.0).abs() < 1e-15);
        assert!((branch_amplitude(0.0, jr) - far_amplitude(jr).unwrap()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn far_amplitude_solves_its_equation(jr in -0.384f64..0.384) {
            let mu = far_amplitude(jr).unwrap();
            prop_assert!(mu * mu > 2.0 / 3.0 && mu <= 1.0);
            prop_assert!((mu.powi(4) * (1.0 - mu * mu) - jr * jr).abs() < 1e-14);
        }

        #[test]
        fn boundary_amplitude_solves_its_equation(rho_r in 0.85f64..1.0, frac in -0.99f64..0.99) {
            let j = frac * (4.0f64 / 27.0).sqrt() * rho_r.powi(3);
            let r = boundary_amplitude(rho_r, j).unwrap();
            prop_assert!((rho_r * rho_r - j * j / r.powi(4) - r * r).abs() < 1e-13);
            prop_assert!((r / rho_r - far_amplitude(j / rho_r.powi(3)).unwrap()).abs() < 1e-12);
        }
    }
}

//! Properties of the boundary-layer profiles at single stations.

use glsc::inner::physical::derivative;
use glsc::inner::*;

fn station(jr: f64, rho_r: f64, sigma0: f64) -> InnerParams {
    InnerParams { jr, rho_r, sigma0, dzeta_dt0: 0.1 }
}

#[test]
fn zero_current_is_the_flat_state() {
    let p = InnerParams { jr: 0.0, rho_r: 0.95, sigma0: 100.0, dzeta_dt0: 0.25 };
    let (_, _, pp) = solve_station(&p, &InnerOptions::default()).unwrap();
    assert!(pp.rho.iter().all(|r| (r - 0.95).abs() < 1e-13));
    assert!(pp.phi.iter().all(|f| f.abs() < 1e-14));
    assert!((pp.dupsilon[0] + 0.25).abs() < 1e-13);
}

#[test]
fn far_field_and_boundary_amplitude() {
    let p = station(-0.2, 0.9, 100.0);
    let (_, _, pp) = solve_station(&p, &InnerOptions::default()).unwrap();
    assert!(pp.far_residual.abs() < 1e-6);
    // rho_j^2 = rho_r^2 - (outward normal derivative)^2 with the normal
    // derivative solving the conormal relation.
    let j = p.current();
    let zn = j / (pp.rho_j * pp.rho_j);
    assert!((pp.rho_j * pp.rho_j - (p.rho_r * p.rho_r - zn * zn)).abs() < 1e-12);
    assert!((pp.rho.last().unwrap() - pp.rho_j).abs() < 1e-8);
}

#[test]
fn positive_current_is_the_reflection() {
    let opts = InnerOptions::default();
    let (_, _, neg) = solve_station(&station(-0.15, 0.92, 80.0), &opts).unwrap();
    let (_, _, pos) = solve_station(&station(0.15, 0.92, 80.0), &opts).unwrap();
    for i in 0..neg.rho.len() {
        assert_eq!(neg.rho[i], pos.rho[i]);
        assert_eq!(neg.phi[i], -pos.phi[i]);
    }
    // The phase correction carries the current, so its derivative flips with
    // j once the outer normal derivative (common here) is removed.
    let d0 = neg.dupsilon[0] + 0.1;
    let d1 = pos.dupsilon[0] + 0.1;
    assert!((d0 + d1).abs() < 1e-12);
}

#[test]
fn physical_equations_hold_on_the_grid() {
    let p = station(-0.25, 0.95, 100.0);
    let (_, _, pp) = solve_station(&p, &InnerOptions::default()).unwrap();
    let h = pp.tau[1] - pp.tau[0];
    let j = p.current();
    let dphi = derivative(&pp.phi, h);
    let n = pp.tau.len();
    let mut worst_phase = 0.0f64;
    let mut worst_amp = 0.0f64;
    for i in 1..n - 1 {
        let d2phi = (pp.phi[i - 1] - 2.0 * pp.phi[i] + pp.phi[i + 1]) / (h * h);
        let r = -p.sigma0 * d2phi + pp.rho[i] * pp.rho[i] * pp.phi[i];
        worst_phase = worst_phase.max(r.abs());
        let d2rho = (pp.rho[i - 1] - 2.0 * pp.rho[i] + pp.rho[i + 1]) / (h * h);
        let lhs = p.rho_r * p.rho_r - (p.sigma0 * dphi[i] - j).powi(2) / pp.rho[i].powi(4) - pp.rho[i] * pp.rho[i];
        worst_amp = worst_amp.max((lhs + d2rho / pp.rho[i]).abs());
    }
    assert!(worst_phase < 1e-8, "{worst_phase}");
    assert!(worst_amp < 1e-8, "{worst_amp}");
}

#[test]
fn leading_tail_decays_at_least_at_the_bound_rate() {
    let jr = -0.2;
    let lp = solve_leading(jr, default_eta_max(jr).unwrap(), 8001).unwrap();
    let rate = decay_rate(&lp.eta, &lp.w).unwrap();
    assert!(rate >= (2.0f64 / 3.0).sqrt(), "{rate}");
    for (e, w) in lp.eta.iter().zip(&lp.w).skip(1) {
        assert!(*w < (1.5f64).sqrt() * 0.2 * (-(2.0f64 / 3.0).sqrt() * e).exp());
    }
}

#[test]
fn truncation_length_is_immaterial() {
    let jr = -0.2;
    let e = default_eta_max(jr).unwrap();
    let a = solve_leading(jr, e, 8001).unwrap();
    let b = solve_leading(jr, 2.0 * e, 16001).unwrap();
    assert!((a.w[0] - b.w[0]).abs() < 1e-8);
}

#[test]
fn phase_tail_rate_scales_with_inverse_root_sigma() {
    let opts = InnerOptions { eta_max: None, spacing: Some(0.005) };
    let (_, _, a) = solve_station(&station(-0.2, 0.9, 50.0), &opts).unwrap();
    let (_, _, b) = solve_station(&station(-0.2, 0.9, 200.0), &opts).unwrap();
    let ratio = b.decay_rate.unwrap() / a.decay_rate.unwrap();
    assert!((0.4..=0.6).contains(&ratio), "{ratio}");
    assert!(a.amplitude_decay_rate.unwrap() > 0.0);
}

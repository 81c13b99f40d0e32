//! Time-dependent simulations against the closed-form growth rates.

use glsc::stability::*;

fn input(beta: f64, sigma: f64) -> StabilityInput {
    StabilityInput { beta, sigma, l: 1.0, eps: 0.05, modes: vec![1] }
}

#[test]
fn decay_rate_matches_the_lower_branch() {
    let e = evolve_1d(&input(0.5, 1.0), &EvolveOptions::default()).unwrap();
    let rel = (e.fitted_rate - e.predicted_rate).abs() / e.predicted_rate.abs();
    println!("fitted {} predicted {}", e.fitted_rate, e.predicted_rate);
    assert!(e.fitted_rate < 0.0 && rel < 0.1, "fitted {} predicted {}", e.fitted_rate, e.predicted_rate);
    assert!(e.gauge_max < 1e-12);
}

#[test]
fn growth_beyond_the_threshold() {
    let lo = evolve_1d(&input(0.55, 1.0), &EvolveOptions::default()).unwrap();
    let hi = evolve_1d(&input(0.65, 1.0), &EvolveOptions::default()).unwrap();
    println!("0.55: {} vs {}; 0.65: {} vs {}", lo.fitted_rate, lo.predicted_rate, hi.fitted_rate, hi.predicted_rate);
    assert!(lo.fitted_rate < 0.0 && hi.fitted_rate > 0.0);
    let rel = (hi.fitted_rate - hi.predicted_rate).abs() / hi.predicted_rate.abs();
    assert!(rel < 0.1);
}

#[test]
fn simulated_signs_match_the_verdict_on_a_grid() {
    for beta in [0.45, 0.52, 0.62] {
        for sigma in [0.5, 1.0, 4.0] {
            let inp = input(beta, sigma);
            let v = stability_verdict(&inp, 1).unwrap();
            let e = evolve_1d(&inp, &EvolveOptions { t_end: 40.0, ..Default::default() }).unwrap();
            println!("beta {beta} sigma {sigma}: fitted {} predicted {} min lambda {}", e.fitted_rate, e.predicted_rate, v.min_lambda_minus);
            assert_eq!(e.fitted_rate > 0.0, v.modes[0].lambda_minus < 0.0, "beta {beta} sigma {sigma}");
        }
    }
}

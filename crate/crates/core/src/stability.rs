//! Linear stability of the uniform current-carrying state on an interval.
//!
//! In stretched variables the state is V = rho_s with rho_s^2 = 1 - beta^2 in
//! the frame co-moving with the phase beta x. Perturbations
//! v = sin(gamma x) + i A cos(gamma x) evolve like exp(-lambda t) with two
//! real branches lambda_-(gamma) <= lambda_+(gamma). The state is stable iff
//! the gamma -> 0 limit of lambda_- is non-negative, which happens exactly for
//! beta <= 1/sqrt 3.

use crate::error::{Error, Result};
use crate::linalg::BandedMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityInput {
    pub beta: f64,
    /// Conductivity in stretched variables.
    pub sigma: f64,
    /// Interval length in physical variables.
    pub l: f64,
    pub eps: f64,
    /// Mode indices n, with gamma_n = eps n pi / l.
    pub modes: Vec<usize>,
}

impl StabilityInput {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta = {} outside [0, 1)", self.beta)));
        }
        if !(self.sigma > 0.0 && self.l > 0.0 && self.eps > 0.0) {
            return Err(Error::Config("sigma, l and eps must be positive".into()));
        }
        Ok(())
    }

    pub fn gamma(&self, n: usize) -> f64 {
        self.eps * n as f64 * std::f64::consts::PI / self.l
    }

    /// Length of the interval in stretched variables.
    pub fn stretched_length(&self) -> f64 {
        self.l / self.eps
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModeResult {
    pub n: usize,
    pub gamma: f64,
    /// Mixing constant of the lambda_- mode (None when it is a pure cosine).
    pub a_plus: Option<f64>,
    /// Mixing constant of the lambda_+ mode.
    pub a_minus: Option<f64>,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub discriminant: f64,
    /// Set for beta = 0 or gamma = 0, where the mixing constants degenerate.
    pub degenerate: bool,
}

fn discriminant(beta: f64, sigma: f64, gamma: f64) -> f64 {
    let b2 = 1.0 - beta * beta;
    let a = b2 * (1.0 - 0.5 / sigma);
    a * a + 4.0 * beta * beta * (gamma * gamma + b2 / sigma)
}

/// Product lambda_+ lambda_-, free of cancellation.
fn eigen_product(beta: f64, sigma: f64, gamma: f64) -> f64 {
    let b2 = 1.0 - beta * beta;
    let g2 = gamma * gamma;
    g2 * g2 + g2 * (2.0 * b2 * (1.0 + 0.5 / sigma) - 4.0 * beta * beta) + 2.0 * b2 * (1.0 - 3.0 * beta * beta) / sigma
}

/// Both eigenvalue branches and their mixing constants.
pub fn eigenvalues(beta: f64, sigma: f64, gamma: f64) -> ModeResult {
    let b2 = 1.0 - beta * beta;
    let disc = discriminant(beta, sigma, gamma);
    let root = disc.sqrt();
    let lambda_plus = gamma * gamma + b2 * (1.0 + 0.5 / sigma) + root;
    let lambda_minus = eigen_product(beta, sigma, gamma) / lambda_plus;
    let degenerate = beta == 0.0 || gamma == 0.0;
    // The sine coefficient of the ansatz gives lambda = gamma^2 + 2 rho_s^2 - 2 A gamma beta.
    let mix = |lambda: f64| -> Option<f64> {
        if degenerate {
            let r = gamma * gamma + 2.0 * b2 - lambda;
            (r.abs() <= 1e-12 * (1.0 + lambda.abs())).then_some(0.0)
        } else {
            Some((gamma * gamma + 2.0 * b2 - lambda) / (2.0 * gamma * beta))
        }
    };
    ModeResult { n: 0, gamma, a_plus: mix(lambda_minus), a_minus: mix(lambda_plus), lambda_plus, lambda_minus, discriminant: disc, degenerate }
}

/// Mixing constants in the closed form (A_+, A_-), for beta, gamma > 0.
pub fn mixing_closed_form(beta: f64, sigma: f64, gamma: f64) -> (f64, f64) {
    let b2 = 1.0 - beta * beta;
    let a = b2 * (1.0 - 0.5 / sigma);
    let root = discriminant(beta, sigma, gamma).sqrt();
    let d = 2.0 * beta * gamma;
    ((a + root) / d, (a - root) / d)
}

/// Long-wave limit of lambda_-.
pub fn lambda_minus_limit(beta: f64, sigma: f64) -> f64 {
    eigenvalues(beta, sigma, 0.0).lambda_minus
}

/// The same limit evaluated directly from the gamma -> 0 radical, for comparison.
pub fn lambda_minus_limit_direct(beta: f64, sigma: f64) -> f64 {
    let b2 = 1.0 - beta * beta;
    let c = b2 * (1.0 + 0.5 / sigma);
    c - (c * c - 2.0 * b2 * (1.0 - 3.0 * beta * beta) / sigma).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub stable: bool,
    pub lambda0_minus: f64,
    pub min_lambda_minus: f64,
    /// Mode attaining the minimum; None for the long-wave limit.
    pub argmin: Option<usize>,
    pub modes: Vec<ModeResult>,
}

/// Scan modes 1..=n_max and the long-wave limit.
pub fn stability_verdict(input: &StabilityInput, n_max: usize) -> Result<Verdict> {
    input.validate()?;
    let modes: Vec<ModeResult> = (1..=n_max)
        .into_par_iter()
        .map(|n| ModeResult { n, ..eigenvalues(input.beta, input.sigma, input.gamma(n)) })
        .collect();
    let lambda0 = lambda_minus_limit(input.beta, input.sigma);
    let (mut min, mut argmin) = (lambda0, None);
    for m in &modes {
        if m.lambda_minus < min {
            min = m.lambda_minus;
            argmin = Some(m.n);
        }
    }
    Ok(Verdict { stable: min >= 0.0, lambda0_minus: lambda0, min_lambda_minus: min, argmin, modes })
}

/// Zero of beta -> lambda_-^0(beta) on [0, 1) located by bisection.
pub fn threshold(sigma: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-12);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if lambda_minus_limit(mid, sigma) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Max-norm residual of the linearized system for the ansatz with (A, lambda),
/// using centred differences with spacing `h` on [0, length].
pub fn eigen_residual(beta: f64, sigma: f64, gamma: f64, a: f64, lambda: f64, length: f64, h: f64) -> f64 {
    let rs = (1.0 - beta * beta).sqrt();
    let n = (length / h).round() as usize;
    let h = length / n as f64;
    let vr = |x: f64| (gamma * x).sin();
    let vi = |x: f64| a * (gamma * x).cos();
    let phi = |x: f64| rs / sigma * (a - 2.0 * beta / gamma) * (gamma * x).cos();
    let mut worst = 0.0f64;
    for k in 1..n {
        let x = k as f64 * h;
        let d2 = |f: &dyn Fn(f64) -> f64| (f(x - h) - 2.0 * f(x) + f(x + h)) / (h * h);
        let d1 = |f: &dyn Fn(f64) -> f64| (f(x + h) - f(x - h)) / (2.0 * h);
        // P v = -v'' - 2 i beta v' + 2 rho_s^2 v_r + i rho_s phi.
        let re = -d2(&vr) + 2.0 * beta * d1(&vi) + 2.0 * rs * rs * vr(x) - lambda * vr(x);
        let im = -d2(&vi) - 2.0 * beta * d1(&vr) + rs * phi(x) - lambda * vi(x);
        let current = -sigma * d1(&phi) + 2.0 * beta * rs * vr(x) + rs * d1(&vi);
        worst = worst.max(re.abs()).max(im.abs()).max(current.abs());
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    /// Perturbed mode index.
    pub mode: usize,
    pub amplitude: f64,
    /// Spatial step in stretched variables.
    pub h: f64,
    /// Time step in stretched time.
    pub dt: f64,
    pub t_end: f64,
    /// Record the perturbation norm every this many steps.
    pub record_every: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { mode: 1, amplitude: 1e-4, h: 0.05, dt: 0.01, t_end: 60.0, record_every: 10 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// Largest |(|V|^2 phi)_Omega| seen after projection.
    pub gauge_max: f64,
    /// Log-linear slope of the norm history over its second half. The run
    /// stops early once the perturbation norm exceeds max(100 amplitude, 1e-2).
    pub fitted_rate: f64,
    /// -lambda_-(gamma_mode).
    pub predicted_rate: f64,
}

/// Least-squares slope of ln y against t.
pub fn log_linear_rate(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mt = t.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(&ly).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    sxy / sxx
}

struct Stepper {
    n: usize,
    h: f64,
    beta: f64,
    sigma: f64,
    rho_s: f64,
    current: f64,
    dt: f64,
    matrix: BandedMatrix,
}

impl Stepper {
    /// Implicit part: (1 - dt D) with D V = V'' + 2 i beta V' - beta^2 V,
    /// unknowns interleaved (Re, Im) per node. Re V is fixed at the ends and
    /// Im V has zero slope there (mirror ghost node).
    fn new(n: usize, h: f64, beta: f64, sigma: f64, dt: f64) -> Result<Self> {
        let mut m = BandedMatrix::new(2 * (n + 1), 5, 5);
        let (c2, c1) = (dt / (h * h), dt * beta / h);
        for i in 0..=n {
            let (r, im) = (2 * i, 2 * i + 1);
            if i == 0 || i == n {
                m.add(r, r, 1.0);
                // Im row: mirrored Laplacian and one-sided Re slope.
                let inner = if i == 0 { 1 } else { n - 1 };
                m.add(im, im, 1.0 + 2.0 * c2 + dt * beta * beta);
                m.add(im, 2 * inner + 1, -2.0 * c2);
                let s = if i == 0 { 1.0 } else { -1.0 };
                let (i1, i2) = if i == 0 { (1, 2) } else { (n - 1, n - 2) };
                // -dt * 2 beta Re' with Re' = s (-3 R_i + 4 R_i1 - R_i2) / 2h.
                m.add(im, r, -c1 * s * -3.0);
                m.add(im, 2 * i1, -c1 * s * 4.0);
                m.add(im, 2 * i2, -c1 * s * -1.0);
                continue;
            }
            m.add(r, r, 1.0 + 2.0 * c2 + dt * beta * beta);
            m.add(r, 2 * (i - 1), -c2);
            m.add(r, 2 * (i + 1), -c2);
            // Re of 2 i beta V' is -2 beta Im'.
            m.add(r, 2 * (i + 1) + 1, c1);
            m.add(r, 2 * (i - 1) + 1, -c1);
            m.add(im, im, 1.0 + 2.0 * c2 + dt * beta * beta);
            m.add(im, 2 * (i - 1) + 1, -c2);
            m.add(im, 2 * (i + 1) + 1, -c2);
            m.add(im, 2 * (i + 1), -c1);
            m.add(im, 2 * (i - 1), c1);
        }
        if !m.factor() {
            return Err(Error::LinearSolve("singular implicit diffusion matrix".into()));
        }
        let rho_s = (1.0 - beta * beta).sqrt();
        Ok(Self { n, h, beta, sigma, rho_s, current: beta * rho_s * rho_s, dt, matrix: m })
    }

    /// Electric potential from sigma phi' = j_s - I, normalized so that the
    /// |V|^2-weighted mean vanishes. Returns (phi, weighted mean after projection).
    fn potential(&self, re: &[f64], im: &[f64]) -> (Vec<f64>, f64) {
        let (n, h) = (self.n, self.h);
        let slope = |v: &[f64], i: usize| {
            if i == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else if i == n {
                (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * h)
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            }
        };
        let dphi: Vec<f64> = (0..=n)
            .map(|i| {
                let js = re[i] * slope(im, i) - im[i] * slope(re, i) + self.beta * (re[i] * re[i] + im[i] * im[i]);
                (js - self.current) / self.sigma
            })
            .collect();
        let mut phi = vec![0.0; n + 1];
        for i in 1..=n {
            phi[i] = phi[i - 1] + 0.5 * h * (dphi[i] + dphi[i - 1]);
        }
        let weight = |i: usize| if i == 0 || i == n { 0.5 * h } else { h };
        let dens: Vec<f64> = (0..=n).map(|i| re[i] * re[i] + im[i] * im[i]).collect();
        let mass: f64 = (0..=n).map(|i| weight(i) * dens[i]).sum();
        let c = (0..=n).map(|i| weight(i) * dens[i] * phi[i]).sum::<f64>() / mass;
        phi.iter_mut().for_each(|p| *p -= c);
        let residual = (0..=n).map(|i| weight(i) * dens[i] * phi[i]).sum::<f64>();
        (phi, residual)
    }

    /// One step: reaction and potential explicit, diffusion implicit.
    fn step(&self, re: &mut [f64], im: &mut [f64]) -> f64 {
        let n = self.n;
        let (phi, gauge) = self.potential(re, im);
        let mut rhs = vec![0.0; 2 * (n + 1)];
        for i in 0..=n {
            let m = 1.0 - re[i] * re[i] - im[i] * im[i];
            // -i phi V = phi Im V - i phi Re V.
            rhs[2 * i] = re[i] + self.dt * (re[i] * m + phi[i] * im[i]);
            rhs[2 * i + 1] = im[i] + self.dt * (im[i] * m - phi[i] * re[i]);
        }
        rhs[0] = self.rho_s;
        rhs[2 * n] = self.rho_s;
        let x = self.matrix.solve(&rhs);
        for i in 0..=n {
            re[i] = x[2 * i];
            im[i] = x[2 * i + 1];
        }
        gauge
    }

    /// L2 norm of the perturbation after removing the neutral global phase.
    fn perturbation(&self, re: &[f64], im: &[f64]) -> f64 {
        let n = self.n;
        let w = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 } * self.h;
        let (sr, si) = (0..=n).fold((0.0, 0.0), |(a, b), i| (a + w(i) * re[i], b + w(i) * im[i]));
        let theta = si.atan2(sr);
        let (c, s) = (theta.cos(), theta.sin());
        (0..=n)
            .map(|i| {
                let r = c * re[i] + s * im[i] - self.rho_s;
                let q = -s * re[i] + c * im[i];
                w(i) * (r * r + q * q)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Time-dependent simulation of the perturbed uniform state in stretched
/// variables (time in units of eps^2), seeded with the lambda_- eigenmode.
pub fn evolve_1d(input: &StabilityInput, opts: &EvolveOptions) -> Result<Evolution> {
    input.validate()?;
    if !(opts.dt > 0.0 && opts.h > 0.0 && opts.t_end > 0.0) || opts.mode == 0 || opts.record_every == 0 {
        return Err(Error::Config("evolve1d needs positive dt, h, t_end, mode and record_every".into()));
    }
    let length = input.stretched_length();
    let n = (length / opts.h).round().max(8.0) as usize;
    let h = length / n as f64;
    let beta = input.beta;
    let st = Stepper::new(n, h, beta, input.sigma, opts.dt)?;
    let gamma = opts.mode as f64 * std::f64::consts::PI / length;
    let mode = eigenvalues(beta, input.sigma, gamma);
    let a = mode.a_plus.unwrap_or(0.0);
    let mut re: Vec<f64> = (0..=n).map(|i| st.rho_s + opts.amplitude * (gamma * i as f64 * h).sin()).collect();
    let mut im: Vec<f64> = (0..=n).map(|i| opts.amplitude * a * (gamma * i as f64 * h).cos()).collect();
    let steps = (opts.t_end / opts.dt).round() as usize;
    let mut times = vec![0.0];
    let mut norms = vec![st.perturbation(&re, &im)];
    let mut gauge_max = 0.0f64;
    let mut growth_streak = 0;
    let mut last = norms[0];
    let saturation = (100.0 * opts.amplitude).max(1e-2);
    for k in 1..=steps {
        gauge_max = gauge_max.max(st.step(&mut re, &mut im).abs());
        let norm = st.perturbation(&re, &im);
        if !norm.is_finite() {
            return Err(Error::Resolution(format!("evolve1d blew up at t = {}; try dt = {}", k as f64 * opts.dt, opts.dt / 4.0)));
        }
        growth_streak = if norm > 10.0 * last && norm > 1e-8 { growth_streak + 1 } else { 0 };
        if growth_streak >= 3 {
            return Err(Error::Resolution(format!("evolve1d unstable time stepping at t = {}; try dt = {}", k as f64 * opts.dt, opts.dt / 4.0)));
        }
        last = norm;
        if k % opts.record_every == 0 {
            times.push(k as f64 * opts.dt);
            norms.push(norm);
        }
        // Growing perturbations leave the linear regime; stop there.
        if norm > saturation {
            break;
        }
    }
    let half = times.len() / 2;
    let fitted_rate = if norms[half..].iter().all(|v| *v > 0.0) { log_linear_rate(&times[half..], &norms[half..]) } else { 0.0 };
    Ok(Evolution { times, norms, gauge_max, fitted_rate, predicted_rate: -mode.lambda_minus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_phase_gradient_values() {
        let m = eigenvalues(0.0, 1.0, 0.0);
        assert!((m.lambda_minus - 1.0).abs() < 1e-15);
        assert!((m.lambda_plus - 2.0).abs() < 1e-15);
        assert!(m.degenerate);
        assert_eq!(m.a_minus, Some(0.0));
        assert_eq!(m.a_plus, None);
    }

    #[test]
    fn marginal_state_at_threshold() {
        let b = 1.0 / 3f64.sqrt();
        for s in [0.5, 1.0, 5.0, 50.0] {
            assert!(lambda_minus_limit(b, s).abs() < 1e-12);
            assert!((threshold(s, 1e-13) - b).abs() < 1e-10);
        }
    }

    #[test]
    fn verdict_on_both_sides() {
        let mut input = StabilityInput { beta: 0.5, sigma: 1.0, l: 1.0, eps: 0.05, modes: vec![] };
        assert!(stability_verdict(&input, 20).unwrap().stable);
        input.beta = 0.65;
        let v = stability_verdict(&input, 20).unwrap();
        assert!(!v.stable && v.lambda0_minus < 0.0);
        input.beta = 1.0 / 3f64.sqrt();
        assert!(stability_verdict(&input, 20).unwrap().min_lambda_minus.abs() < 1e-12);
    }

    #[test]
    fn limit_forms_agree() {
        for b in [0.1, 0.4, 0.55, 0.7, 0.9] {
            for s in [0.3, 1.0, 7.0] {
                let a = lambda_minus_limit(b, s);
                let d = lambda_minus_limit_direct(b, s);
                assert!((a - d).abs() < 1e-12, "b={b} s={s}");
                let small = eigenvalues(b, s, 1e-7).lambda_minus;
                assert!((small - a).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ansatz_satisfies_the_linearized_system() {
        for (b, s, g) in [(0.3, 1.0, 0.2), (0.6, 0.4, 0.05), (0.5, 3.0, 1.3)] {
            let m = eigenvalues(b, s, g);
            let (ap, am) = mixing_closed_form(b, s, g);
            assert!((m.a_plus.unwrap() - ap).abs() < 1e-9 * ap.abs().max(1.0));
            assert!((m.a_minus.unwrap() - am).abs() < 1e-9 * am.abs().max(1.0));
            assert!(ap != am);
            let len = 2.0 * std::f64::consts::PI / g;
            assert!(eigen_residual(b, s, g, ap, m.lambda_minus, len, 1e-3) < 1e-6);
            assert!(eigen_residual(b, s, g, am, m.lambda_plus, len, 1e-3) < 1e-6);
            // Mismatched pairs fail.
            assert!(eigen_residual(b, s, g, ap, m.lambda_plus, len, 1e-3) > 1e-3);
        }
    }

    #[test]
    fn steady_state_does_not_drift() {
        let input = StabilityInput { beta: 0.5, sigma: 1.0, l: 1.0, eps: 0.1, modes: vec![1] };
        let opts = EvolveOptions { amplitude: 0.0, t_end: 5.0, ..Default::default() };
        let e = evolve_1d(&input, &opts).unwrap();
        assert!(e.norms.iter().all(|v| *v < 1e-8));
        assert!(e.gauge_max < 1e-12);
    }

    proptest! {
        #[test]
        fn branches_are_real_and_ordered(b in 0.0f64..0.999, s in 0.05f64..100.0, g in 0.0f64..5.0) {
            let m = eigenvalues(b, s, g);
            prop_assert!(m.discriminant >= 0.0);
            prop_assert!(m.lambda_plus.is_finite() && m.lambda_minus.is_finite());
            prop_assert!(m.lambda_plus >= m.lambda_minus);
            let sum = 2.0 * (g * g + (1.0 - b * b) * (1.0 + 0.5 / s));
            prop_assert!((m.lambda_plus + m.lambda_minus - sum).abs() < 1e-9 * sum);
        }
    }
}

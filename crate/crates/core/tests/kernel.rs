// SPDX-License-Identifier: Apache-2.0

use fbdicke::FeedbackKernel;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

/// Generalised exponential integral `E_p(x)` from its power series, valid
/// for small `|x|` on the principal branch.
fn exp_integral(p: f64, x: Complex64) -> Complex64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    let n = p.round();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0); // (-x)^k / k!
    let integer = (p - n).abs() < 1e-12;
    for k in 0..60 {
        let kf = k as f64;
        if !(integer && k as f64 == n - 1.0) {
            sum += term / (1.0 - p + kf);
        }
        term *= -x / (kf + 1.0);
    }
    if integer {
        let m = n as i32 - 1;
        let harmonic: f64 = (1..=m).map(|k| 1.0 / k as f64).sum();
        let fact: f64 = (1..=m).map(|k| k as f64).product();
        (-x).powi(m) / fact * (-x.ln() - EULER + harmonic) - sum
    } else {
        (x.ln() * (p - 1.0)).exp() * gamma(1.0 - p) - sum
    }
}

fn series_transform(s: f64, t0: f64, h0: f64, omega: f64) -> Complex64 {
    let z = Complex64::new(0.0, omega * t0);
    h0 * t0 * z.exp() * exp_integral(s + 1.0, z)
}

#[test]
fn transform_matches_exponential_integral_series() {
    for s in [0.3, 0.5, 1.0, 2.0, 2.5] {
        let k = FeedbackKernel::power_law(s, 1.3, 0.7).unwrap();
        for w in [0.01, 0.05, 0.1, 0.2, 0.4] {
            let got = k.transform(w);
            let want = series_transform(s, 1.3, 0.7, w);
            let rel = (got - want).norm() / want.norm();
            assert!(rel < 1e-9, "s = {s}, omega = {w}: {got} vs {want}");
        }
    }
}

#[test]
fn exponential_integral_oracle_is_sane() {
    // E_1(x) at x = 0.1 and E_2 from the recurrence n E_{n+1} = e^-x - x E_n.
    let x = Complex64::new(0.1, 0.0);
    let e1 = exp_integral(1.0, x);
    assert!((e1.re - 1.822_923_958_419_39).abs() < 1e-12);
    let e2 = exp_integral(2.0, x);
    assert!((e2 - ((-x).exp() - x * e1)).norm() < 1e-12);
}

#[test]
fn conjugate_symmetry_on_random_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let kernels = [
        FeedbackKernel::power_law(0.5, 1.0, 0.5).unwrap(),
        FeedbackKernel::power_law(5.0, 0.7, 2.0).unwrap(),
        FeedbackKernel::exponential(1.5, 0.3).unwrap(),
        FeedbackKernel::delay_train(1.0, 1.0, 4, 0.01).unwrap(),
    ];
    for k in kernels {
        for _ in 0..100 {
            let w: f64 = rng.gen_range(-10.0..10.0);
            let d = (k.transform(-w) - k.transform(w).conj()).norm();
            assert!(d < 1e-9, "{k:?} at {w}: {d}");
        }
    }
}

#[test]
fn zero_frequency_closed_form() {
    for s in [0.3, 0.5, 1.0, 2.0, 5.0] {
        let k = FeedbackKernel::power_law(s, 0.8, 1.7).unwrap();
        let want = 1.7 * 0.8 / s;
        assert!((k.transform(0.0).re - want).abs() < 1e-8 * want);
        assert!((k.zero_frequency() - want).abs() < 1e-14 * want);
        let n = FeedbackKernel::normalized_power_law(s, 2.5).unwrap();
        assert!((n.transform(0.0).re - 2.5).abs() < 1e-8 * 2.5);
    }
}

#[test]
fn sub_ohmic_imaginary_part_scales_like_omega_to_the_s() {
    // Close to s = 1 the analytic omega^1 term takes over inside this window
    // (s = 0.8 gives a slope near 0.72 at t0 = 1), so only deep sub-Ohmic
    // exponents are checked.
    for s in [0.3, 0.5] {
        let k = FeedbackKernel::power_law(s, 1.0, s).unwrap();
        let n = 21;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let w = 10f64.powf(-4.0 + 2.0 * i as f64 / (n - 1) as f64);
                (w.ln(), (-k.transform(w).im).ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((slope - s).abs() < 0.05, "s = {s}: slope {slope}");
    }
}

#[test]
fn evaluation_examples() {
    let k = FeedbackKernel::power_law(1.0, 1.0, 1.0).unwrap();
    assert_eq!(k.eval(0.0), 1.0);
    assert_eq!(k.eval(-0.5), 0.0);
    assert!((k.eval(1.0) - 0.25).abs() < 1e-15);
}

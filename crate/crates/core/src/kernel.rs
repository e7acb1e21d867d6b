// SPDX-License-Identifier: Apache-2.0

//! Causal feedback kernels `h(t)` and their Fourier transforms
//! `H(omega) = int_0^inf h(t) exp(-i omega t) dt`.
//!
//! The power-law kernel `h0 (t0 / (t + t0))^(s + 1)` has no elementary
//! transform, so it is evaluated by adaptive quadrature on `[0, T]` followed
//! by the integration-by-parts expansion of the oscillatory tail on
//! `[T, inf)`. `T` is chosen so that `|omega| (T + t0)` is large enough for
//! that expansion to converge below `1e-12 H(0)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad::{integrate_breaks, QuadOptions};

/// Default integration step of the trajectory engine, `1e-3 * 2 pi / omega_r`.
pub const DEFAULT_DT: f64 = 2.0 * std::f64::consts::PI * 1e-3;

fn default_t0() -> f64 {
    1.0
}

fn default_width() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeedbackKernel {
    /// `h0 (t0 / (t + t0))^(s + 1)`.
    PowerLaw {
        s: f64,
        #[serde(default = "default_t0")]
        t0: f64,
        h0: f64,
    },
    /// `amplitude exp(-rate t)`.
    Exponential { rate: f64, amplitude: f64 },
    /// `weight delta(t)`, with the whole delta counted inside `t >= 0`.
    Instantaneous { weight: f64 },
    /// `sum_{n=1}^{n_terms} n^-(s+1) delta_w(t - n period)` where `delta_w`
    /// is a unit-area Gaussian of standard deviation `width`.
    DelayTrain {
        period: f64,
        s: f64,
        n_terms: u32,
        #[serde(default = "default_width")]
        width: f64,
    },
}

impl FeedbackKernel {
    pub fn power_law(s: f64, t0: f64, h0: f64) -> Result<Self> {
        let k = Self::PowerLaw { s, t0, h0 };
        k.validate()?;
        Ok(k)
    }

    /// Power law with `h(0) = s`, which makes `H(0) = t0` independent of `s`.
    pub fn normalized_power_law(s: f64, t0: f64) -> Result<Self> {
        Self::power_law(s, t0, s)
    }

    pub fn exponential(rate: f64, amplitude: f64) -> Result<Self> {
        let k = Self::Exponential { rate, amplitude };
        k.validate()?;
        Ok(k)
    }

    pub fn instantaneous(weight: f64) -> Result<Self> {
        let k = Self::Instantaneous { weight };
        k.validate()?;
        Ok(k)
    }

    pub fn delay_train(period: f64, s: f64, n_terms: u32, width: f64) -> Result<Self> {
        let k = Self::DelayTrain {
            period,
            s,
            n_terms,
            width,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidKernel(msg));
        match *self {
            Self::PowerLaw { s, t0, h0 } => {
                if !(s > 0.0 && s.is_finite()) {
                    return bad(format!("power-law exponent must be positive, got s = {s}"));
                }
                if !(t0 > 0.0 && t0.is_finite()) {
                    return bad(format!("power-law timescale must be positive, got t0 = {t0}"));
                }
                if !h0.is_finite() {
                    return bad(format!("amplitude must be finite, got h0 = {h0}"));
                }
            }
            Self::Exponential { rate, amplitude } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
                if !amplitude.is_finite() {
                    return bad(format!("amplitude must be finite, got {amplitude}"));
                }
            }
            Self::Instantaneous { weight } => {
                if !weight.is_finite() {
                    return bad(format!("weight must be finite, got {weight}"));
                }
            }
            Self::DelayTrain {
                period,
                s,
                n_terms,
                width,
            } => {
                if !(period > 0.0 && period.is_finite()) {
                    return bad(format!("delay period must be positive, got {period}"));
                }
                if !(s > 0.0 && s.is_finite()) {
                    return bad(format!("delay-train exponent must be positive, got {s}"));
                }
                if n_terms == 0 {
                    return bad("delay train needs at least one pulse".into());
                }
                if !(width > 0.0 && width < 0.2 * period) {
                    return bad(format!(
                        "pulse width must be positive and well below the period, got {width}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// `h(t)`; zero for `t < 0`. The instantaneous kernel has no regular
    /// part, so this returns 0 for it. Its weight is [`Self::delta_weight`].
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            Self::PowerLaw { s, t0, h0 } => h0 * (t0 / (t + t0)).powf(s + 1.0),
            Self::Exponential { rate, amplitude } => amplitude * (-rate * t).exp(),
            Self::Instantaneous { .. } => 0.0,
            Self::DelayTrain {
                period,
                s,
                n_terms,
                width,
            } => {
                let norm = 1.0 / (width * (2.0 * std::f64::consts::PI).sqrt());
                (1..=n_terms)
                    .map(|n| {
                        let n = n as f64;
                        let z = (t - n * period) / width;
                        n.powf(-(s + 1.0)) * norm * (-0.5 * z * z).exp()
                    })
                    .sum()
            }
        }
    }

    pub fn delta_weight(&self) -> f64 {
        match *self {
            Self::Instantaneous { weight } => weight,
            _ => 0.0,
        }
    }

    /// `H(0) = int_0^inf h(t) dt`.
    pub fn zero_frequency(&self) -> f64 {
        match *self {
            Self::PowerLaw { s, t0, h0 } => h0 * t0 / s,
            Self::Exponential { rate, amplitude } => amplitude / rate,
            Self::Instantaneous { weight } => weight,
            Self::DelayTrain { s, n_terms, .. } => {
                (1..=n_terms).map(|n| (n as f64).powf(-(s + 1.0))).sum()
            }
        }
    }

    /// `int_a^b h(t) dt` for `0 <= a <= b` (infinite `b` allowed).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if b <= a {
            return 0.0;
        }
        match *self {
            Self::PowerLaw { s, t0, h0 } => {
                let upper = if b.is_infinite() {
                    0.0
                } else {
                    (t0 / (b + t0)).powf(s)
                };
                h0 * t0 / s * ((t0 / (a + t0)).powf(s) - upper)
            }
            Self::Exponential { rate, amplitude } => {
                let upper = if b.is_infinite() { 0.0 } else { (-rate * b).exp() };
                amplitude / rate * ((-rate * a).exp() - upper)
            }
            Self::Instantaneous { weight } => {
                if a == 0.0 {
                    weight
                } else {
                    0.0
                }
            }
            Self::DelayTrain {
                period,
                s,
                n_terms,
                width,
            } => {
                let scale = width * std::f64::consts::SQRT_2;
                (1..=n_terms)
                    .map(|n| {
                        let n = n as f64;
                        let c = n * period;
                        let hi = if b.is_infinite() { 1.0 } else { erf((b - c) / scale) };
                        let lo = erf((a - c) / scale);
                        n.powf(-(s + 1.0)) * 0.5 * (hi - lo)
                    })
                    .sum()
            }
        }
    }

    /// `int_T^inf h(t) dt`.
    pub fn tail_integral(&self, t: f64) -> f64 {
        self.integral(t, f64::INFINITY)
    }

    /// Smallest `T` with `int_T^inf |h| <= rel |H(0)|`.
    pub fn memory_window(&self, rel: f64) -> f64 {
        match *self {
            Self::PowerLaw { s, t0, .. } => t0 * (rel.powf(-1.0 / s) - 1.0),
            Self::Exponential { rate, .. } => (1.0 / rel).ln() / rate,
            Self::Instantaneous { .. } => 0.0,
            Self::DelayTrain {
                period,
                s,
                n_terms,
                width,
            } => {
                let total = self.zero_frequency();
                let mut remaining = total;
                for n in 1..=n_terms {
                    remaining -= (n as f64).powf(-(s + 1.0));
                    if remaining <= rel * total {
                        return n as f64 * period + 6.0 * width;
                    }
                }
                n_terms as f64 * period + 6.0 * width
            }
        }
    }

    /// Cell-averaged kernel on a grid of step `dt`:
    /// `w_m = (1/dt) int_{m dt}^{(m+1) dt} h(t) dt` for `m < n`.
    ///
    /// `sum_m w_m dt` reproduces `int_0^{n dt} h` exactly. The instantaneous
    /// kernel puts its whole weight in the first cell.
    pub fn cell_weights(&self, dt: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|m| {
                let a = m as f64 * dt;
                self.integral(a, a + dt) / dt
            })
            .collect()
    }

    /// `H(omega)`.
    pub fn transform(&self, omega: f64) -> Complex64 {
        match *self {
            Self::PowerLaw { s, t0, h0 } => power_law_transform(s, t0, h0, omega),
            Self::Exponential { rate, amplitude } => {
                Complex64::new(amplitude, 0.0) / Complex64::new(rate, omega)
            }
            Self::Instantaneous { weight } => Complex64::new(weight, 0.0),
            Self::DelayTrain {
                period,
                s,
                n_terms,
                width,
            } => {
                let envelope = (-0.5 * omega * omega * width * width).exp();
                (1..=n_terms)
                    .map(|n| {
                        let n = n as f64;
                        Complex64::from_polar(n.powf(-(s + 1.0)) * envelope, -omega * n * period)
                    })
                    .sum()
            }
        }
    }

    /// Approximate the kernel by `sum_j w_j exp(-r_j t)` on `[0, horizon]`,
    /// returned as `(w_j, r_j)` pairs.
    ///
    /// Power laws are written as a Laplace integral over rates,
    /// `(t0/(t+t0))^(s+1) = 1/Gamma(s+1) int u^s e^-u e^(-u t/t0) du`, and the
    /// integral is discretised with the trapezoid rule in `ln u`. Returns
    /// `None` for shapes without such a representation.
    pub fn exponential_sum(&self, horizon: f64) -> Option<Vec<(f64, f64)>> {
        match *self {
            Self::PowerLaw { s, t0, h0 } => {
                let step = (0.8 / (s + 1.0).sqrt()).min(0.35);
                let p = s + 1.0;
                // The integrand u^p e^-u in x = ln u peaks at u = p.
                let log_peak = p * p.ln() - p;
                let mut x_max = p.ln();
                while p * x_max - x_max.exp() > log_peak - 42.0 {
                    x_max += step;
                }
                // Late times are carried by u ~ p t0 / t, and the integrand
                // falls off only like u^p below that.
                let u_min = p * t0 / horizon.max(t0) * 1e-9f64.powf(1.0 / p);
                let x_min = u_min.ln().min(p.ln() - 3.0);
                let pref = h0 / gamma(p) * step;
                let mut terms = Vec::new();
                let mut x = x_max;
                while x >= x_min {
                    let u = x.exp();
                    terms.push((pref * (p * x - u).exp(), u / t0));
                    x -= step;
                }
                Some(terms)
            }
            Self::Exponential { rate, amplitude } => Some(vec![(amplitude, rate)]),
            Self::Instantaneous { .. } | Self::DelayTrain { .. } => None,
        }
    }

    /// Kernel exponent `s`, when the shape has one.
    pub fn exponent(&self) -> Option<f64> {
        match *self {
            Self::PowerLaw { s, .. } | Self::DelayTrain { s, .. } => Some(s),
            _ => None,
        }
    }
}

fn power_law_transform(s: f64, t0: f64, h0: f64, omega: f64) -> Complex64 {
    let h_zero = h0 * t0 / s;
    if omega == 0.0 {
        return Complex64::new(h_zero, 0.0);
    }
    let p = s + 1.0;
    let w = omega.abs();
    // Tail expansion terms shrink like (p + k) / (|omega| (T + t0)).
    let reach = 30.0 + 2.0 * p;
    let cut = (reach / w - t0).max(0.0);

    let mut breaks = vec![0.0];
    let max_panel = std::f64::consts::PI / w;
    let mut edge = 0.0;
    let mut octave = t0;
    while edge < cut {
        let next = (edge + octave).min(cut);
        let pieces = ((next - edge) / max_panel).ceil().max(1.0) as usize;
        for i in 1..=pieces {
            breaks.push(edge + (next - edge) * i as f64 / pieces as f64);
        }
        edge = next;
        octave *= 2.0;
    }
    let opts = QuadOptions {
        abs_tol: 1e-14 * h_zero.abs(),
        rel_tol: 1e-13,
        max_intervals: 4000,
    };
    let body = if cut > 0.0 {
        integrate_breaks(
            |t: f64| Complex64::from_polar(h0 * (t0 / (t + t0)).powf(p), -omega * t),
            &breaks,
            &opts,
        )
        .value
    } else {
        Complex64::new(0.0, 0.0)
    };

    // int_T^inf f e^{-i w t} dt = e^{-i w T} sum_k f^(k)(T) / (i w)^(k+1)
    let x = cut + t0;
    let iw = Complex64::new(0.0, omega);
    let mut term = h0 * (t0 / x).powf(p) / iw;
    let mut sum = term;
    let floor = 1e-17 * h_zero.abs();
    for k in 0..400 {
        let next = term * (-(p + k as f64) / x) / iw;
        if next.norm() > term.norm() || next.norm() < floor {
            if next.norm() <= term.norm() {
                sum += next;
            }
            break;
        }
        sum += next;
        term = next;
    }
    body + Complex64::from_polar(1.0, -omega * cut) * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pl(s: f64, t0: f64, h0: f64) -> FeedbackKernel {
        FeedbackKernel::power_law(s, t0, h0).unwrap()
    }

    #[test]
    fn power_law_values() {
        let k = pl(1.0, 1.0, 1.0);
        assert_eq!(k.eval(0.0), 1.0);
        assert_relative_eq!(k.eval(1.0), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn causal_for_every_shape() {
        let shapes = [
            pl(1.0, 1.0, 1.0),
            FeedbackKernel::exponential(2.0, 1.0).unwrap(),
            FeedbackKernel::instantaneous(1.0).unwrap(),
            FeedbackKernel::delay_train(1.0, 1.0, 3, 0.01).unwrap(),
        ];
        for k in shapes {
            assert_eq!(k.eval(-0.5), 0.0);
        }
    }

    #[test]
    fn construction_rejects_divergent_shapes() {
        assert!(FeedbackKernel::power_law(0.0, 1.0, 1.0).is_err());
        assert!(FeedbackKernel::power_law(-1.0, 1.0, 1.0).is_err());
        assert!(FeedbackKernel::power_law(1.0, 0.0, 1.0).is_err());
        assert!(FeedbackKernel::exponential(0.0, 1.0).is_err());
        assert!(FeedbackKernel::delay_train(1.0, 1.0, 0, 0.01).is_err());
        assert!(FeedbackKernel::delay_train(1.0, 1.0, 2, 0.5).is_err());
    }

    #[test]
    fn zero_frequency_examples() {
        assert_relative_eq!(pl(1.0, 1.0, 1.0).transform(0.0).re, 1.0);
        assert_relative_eq!(pl(2.0, 1.0, 2.0).transform(0.0).re, 1.0);
    }

    #[test]
    fn transform_tends_to_zero_frequency_value() {
        for s in [1.0, 2.0, 5.0] {
            let k = pl(s, 1.0, 1.0);
            let near = k.transform(1e-9);
            assert_relative_eq!(near.re, 1.0 / s, max_relative = 1e-6);
        }
        // Below s = 1 the approach is only like omega^s.
        let k = pl(0.5, 1.0, 1.0);
        let gap = (k.transform(1e-8) - k.transform(0.0)).norm();
        assert!(gap < 1e-3 && gap > 1e-5, "{gap}");
    }

    #[test]
    fn exponential_matches_closed_form_through_quadrature_path() {
        // A power law with huge s and t0 = s/rate approaches rate exp(-rate t).
        let k = pl(400.0, 400.0, 1.0);
        let e = FeedbackKernel::exponential(1.0, 1.0).unwrap();
        for w in [0.0, 0.3, 1.0, 4.0] {
            let a = k.transform(w);
            let b = e.transform(w);
            assert!((a - b).norm() < 5e-3, "{w}: {a} vs {b}");
        }
    }

    #[test]
    fn integrals_and_windows() {
        let k = pl(0.5, 1.0, 0.5);
        assert_relative_eq!(k.integral(0.0, f64::INFINITY), 1.0, max_relative = 1e-14);
        let t = k.memory_window(1e-3);
        assert_relative_eq!(k.tail_integral(t), 1e-3, max_relative = 1e-9);
        let e = FeedbackKernel::exponential(2.0, 3.0).unwrap();
        assert_relative_eq!(e.tail_integral(e.memory_window(1e-3)), 1.5e-3, max_relative = 1e-9);
        let d = FeedbackKernel::delay_train(1.0, 1.0, 4, 0.01).unwrap();
        assert_relative_eq!(
            d.integral(0.0, f64::INFINITY),
            d.zero_frequency(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn cell_weights_sum_to_integral() {
        let k = pl(5.0, 1.0, 5.0);
        let dt = 0.01;
        let w = k.cell_weights(dt, 500);
        let sum: f64 = w.iter().sum::<f64>() * dt;
        assert_relative_eq!(sum, k.integral(0.0, 5.0), max_relative = 1e-12);
        let i = FeedbackKernel::instantaneous(2.0).unwrap().cell_weights(dt, 3);
        assert_eq!(i, vec![200.0, 0.0, 0.0]);
    }

    #[test]
    fn exponential_sum_reproduces_power_law() {
        for s in [0.3, 1.0, 5.0, 20.0] {
            let k = pl(s, 1.0, s);
            let terms = k.exponential_sum(1e4).unwrap();
            for t in [0.0, 0.01, 0.3, 1.0, 10.0, 100.0, 1000.0] {
                let approx: f64 = terms.iter().map(|(w, r)| w * (-r * t).exp()).sum();
                let exact = k.eval(t);
                assert_relative_eq!(approx, exact, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn delay_train_transform_at_zero() {
        let d = FeedbackKernel::delay_train(2.0, 1.0, 3, 0.01).unwrap();
        assert_relative_eq!(d.transform(0.0).re, 1.0 + 0.25 + 1.0 / 9.0, max_relative = 1e-14);
    }

    #[test]
    fn serde_round_trip() {
        let k = pl(0.5, 1.0, 0.5);
        let text = serde_json::to_string(&k).unwrap();
        assert!(text.contains("\"shape\":\"power-law\""));
        let back: FeedbackKernel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, k);
    }
}

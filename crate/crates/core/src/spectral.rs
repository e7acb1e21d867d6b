// SPDX-License-Identifier: Apache-2.0

//! Fourier-domain solution of the linearised quadrature equations.
//!
//! The spin quadrature obeys `X(omega) = [Mx f_x + My f_y] / D(omega)`. This
//! module evaluates the response `D`, the noise transfer functions `Mx`,
//! `My`, the noise spectral density `S` (exact and with the cavity
//! adiabatically eliminated), the stationary variance
//! `<X^2> = (1 / 4 pi^2) int S / |D|^2 d omega` and the two threshold
//! formulas.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::FeedbackKernel;
use crate::params::ModelParams;
use crate::quad::{integrate, integrate_breaks, QuadOptions};

const PI: f64 = std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `delta^2 + (kappa + i omega)^2`, the cavity denominator.
fn cavity_denominator(p: &ModelParams, omega: f64) -> Result<Complex64> {
    let z = c(p.kappa, omega);
    let q = z * z + p.delta * p.delta;
    let scale = p.delta * p.delta + p.kappa * p.kappa + omega * omega;
    if q.norm() <= 1e-14 * scale.max(1e-300) {
        return Err(Error::Pole { omega });
    }
    Ok(q)
}

/// Everything the linear model needs at one frequency, sharing one kernel
/// evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ResponsePoint {
    pub omega: f64,
    pub kernel: Complex64,
    pub d: Complex64,
    pub mx: Complex64,
    pub my: Complex64,
    pub s: f64,
}

impl ResponsePoint {
    pub fn new(p: &ModelParams, k: &FeedbackKernel, omega: f64) -> Result<Self> {
        Self::with_kernel(p, k.transform(omega), omega)
    }

    /// Same as [`Self::new`] with a precomputed `H(omega)`.
    pub fn with_kernel(p: &ModelParams, h: Complex64, omega: f64) -> Result<Self> {
        let q = cavity_denominator(p, omega)?;
        let wr = p.omega_r;
        let z = c(p.kappa, omega);
        let gh = h * p.gain;
        let (sin, cos) = p.theta.sin_cos();
        let bracket = (gh * (z * sin + p.delta * cos) * (2.0 * p.kappa) + 2.0 * p.g * p.delta) / q;
        let d = c(wr * wr - omega * omega, 0.0) - bracket * (2.0 * p.g * wr);
        let mx = gh * (wr * cos)
            + (z * (-2.0 * p.g) + gh * (2.0 * p.kappa) * (p.delta * sin - z * cos)) / q * wr;
        let my = gh * (wr * sin) - bracket * wr;
        let s = spectral_density_from(p, h, q, omega);
        Ok(Self {
            omega,
            kernel: h,
            d,
            mx,
            my,
            s,
        })
    }

    /// `S / |D|^2 / (4 pi^2)`, the integrand of the stationary variance.
    pub fn variance_density(&self) -> f64 {
        self.s / self.d.norm_sqr() / (4.0 * PI * PI)
    }
}

fn spectral_density_from(p: &ModelParams, h: Complex64, q: Complex64, omega: f64) -> f64 {
    let detuned = c(p.kappa, omega - p.delta);
    let drive = detuned * (2.0 * p.g) / q;
    let feedback =
        h * p.gain * Complex64::from_polar(1.0, -p.theta) * (detuned * (2.0 * p.kappa) / q - 1.0);
    PI * p.kappa * p.omega_r * p.omega_r * (drive + feedback).norm_sqr()
}

/// Deterministic response `D(omega)`.
pub fn response_d(p: &ModelParams, k: &FeedbackKernel, omega: f64) -> Result<Complex64> {
    Ok(ResponsePoint::new(p, k, omega)?.d)
}

/// Noise transfer functions `(Mx, My)`.
pub fn noise_transfer(
    p: &ModelParams,
    k: &FeedbackKernel,
    omega: f64,
) -> Result<(Complex64, Complex64)> {
    let r = ResponsePoint::new(p, k, omega)?;
    Ok((r.mx, r.my))
}

/// Noise spectral density `S(omega)` in its explicit form.
pub fn spectral_density(p: &ModelParams, k: &FeedbackKernel, omega: f64) -> Result<f64> {
    let q = cavity_denominator(p, omega)?;
    Ok(spectral_density_from(p, k.transform(omega), q, omega))
}

/// Spectral density with the cavity adiabatically eliminated.
pub fn spectral_density_adiabatic(p: &ModelParams, k: &FeedbackKernel, omega: f64) -> f64 {
    let h = k.transform(omega);
    let inner = c(2.0 * p.g, 0.0)
        + c(p.kappa, -p.delta) * Complex64::from_polar(p.gain, -p.theta) * h;
    PI * p.omega_r * p.omega_r * p.kappa / (p.kappa * p.kappa + p.delta * p.delta)
        * inner.norm_sqr()
}

/// Critical spin–cavity coupling without feedback.
pub fn critical_coupling(p: &ModelParams) -> Result<f64> {
    if p.delta <= 0.0 {
        return Err(Error::CouplingDiverges { delta: p.delta });
    }
    Ok((p.omega_r * (p.kappa * p.kappa + p.delta * p.delta) / (4.0 * p.delta)).sqrt())
}

/// Gain at which `D(0)` vanishes. Negative when the transition happens
/// without feedback.
pub fn critical_gain(p: &ModelParams, k: &FeedbackKernel) -> Result<f64> {
    critical_gain_for(p, k.zero_frequency())
}

/// [`critical_gain`] for a given `H(0)`.
pub fn critical_gain_for(p: &ModelParams, h_zero: f64) -> Result<f64> {
    let c_theta = p.c_theta();
    let denom = 4.0 * p.g * p.kappa * c_theta * h_zero;
    let c_zero = c_theta.abs() <= 1e-12 * (p.delta.abs() + p.kappa);
    if c_zero || denom == 0.0 || !denom.is_finite() {
        return Err(Error::NoThreshold(format!(
            "4 g kappa C_theta H(0) = {denom} (g = {}, kappa = {}, C_theta = {c_theta}, H(0) = {h_zero})",
            p.g, p.kappa
        )));
    }
    let num = p.omega_r * (p.kappa * p.kappa + p.delta * p.delta) - 4.0 * p.g * p.g * p.delta;
    Ok(num / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceOptions {
    pub rel_tol: f64,
    /// Integration is carried out on `[-max_omega, max_omega]`, with the
    /// power-law tail beyond it added analytically.
    pub max_omega: f64,
    /// Size of the coarse scan used to locate resonances.
    pub scan_points: usize,
    pub max_intervals: usize,
}

impl Default for VarianceOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_omega: 20.0,
            scan_points: 4096,
            max_intervals: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variance {
    pub value: f64,
    /// Quadrature error estimate plus the uncertainty of the tail model.
    pub error: f64,
    pub tail: f64,
    pub resonances: usize,
}

/// Stationary `<X^2>` below threshold.
pub fn variance_x2(p: &ModelParams, k: &FeedbackKernel, opts: &VarianceOptions) -> Result<Variance> {
    let d0 = ResponsePoint::new(p, k, 0.0)?.d.re;
    if d0 <= 0.0 {
        let critical = critical_gain(p, k).unwrap_or(f64::NAN);
        return Err(Error::Unstable {
            gain: p.gain,
            critical,
        });
    }
    let density = |w: f64| -> f64 {
        ResponsePoint::new(p, k, w)
            .map(|r| r.variance_density())
            .unwrap_or(f64::INFINITY)
    };

    let w_max = opts.max_omega;
    let n = opts.scan_points.max(16);
    let grid: Vec<f64> = (0..n)
        .map(|i| -w_max + 2.0 * w_max * i as f64 / (n - 1) as f64)
        .collect();
    let mags: Vec<f64> = grid
        .iter()
        .map(|&w| ResponsePoint::new(p, k, w).map(|r| r.d.norm()).unwrap_or(0.0))
        .collect();
    let mut breaks = vec![-w_max, w_max, 0.0];
    let mut resonances = 0;
    for i in 1..n - 1 {
        if mags[i] <= mags[i - 1] && mags[i] < mags[i + 1] {
            breaks.push(grid[i]);
            resonances += 1;
        }
    }
    // The kernel transform has a cusp at zero frequency (omega^s for s < 1);
    // a geometric ladder lets bisection reach it quickly.
    for e in 1..=12 {
        let x = 10f64.powi(-e) * w_max;
        breaks.push(x);
        breaks.push(-x);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let qopts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: opts.rel_tol,
        max_intervals: opts.max_intervals,
    };
    let body = integrate_breaks(density, &breaks, &qopts);
    if !body.converged || !body.value.is_finite() {
        return Err(Error::NonConvergence {
            value: body.value,
            error: body.error,
        });
    }

    let (tail, tail_err) = tail_estimate(&density, w_max)?;
    let value = body.value + tail;
    let error = body.error + tail_err;
    if tail_err > opts.rel_tol.max(1e-12) * value.abs() {
        return Err(Error::NonConvergence { value, error });
    }
    Ok(Variance {
        value,
        error,
        tail,
        resonances,
    })
}

/// Tail of `int |omega| > W` assuming `f ~ C / |omega|^n`, with `n` read off
/// from two sample ratios. Returns (tail, uncertainty).
fn tail_estimate(f: &impl Fn(f64) -> f64, w: f64) -> Result<(f64, f64)> {
    let mut tail = 0.0;
    let mut err = 0.0;
    for sign in [1.0, -1.0] {
        let f1 = f(sign * w);
        if f1 == 0.0 {
            continue;
        }
        let f2 = f(sign * w / 2.0);
        let f4 = f(sign * w / 4.0);
        let n_far = (f2 / f1).ln() / 2f64.ln();
        let n_near = (f4 / f2).ln() / 2f64.ln();
        if !(n_far > 1.5 && n_near > 1.0) {
            return Err(Error::NonConvergence {
                value: f64::NAN,
                error: f64::INFINITY,
            });
        }
        let t_far = f1 * w / (n_far - 1.0);
        let t_near = f1 * w / (n_near - 1.0);
        tail += t_far;
        err += (t_far - t_near).abs();
    }
    Ok((tail, err))
}

/// Memory kernel of the time-domain equation
/// `X'' + omega_r^2 X - 4 omega_r g int_0^t E(t - z) X(z) dz = F(t)`.
pub fn time_kernel_e(p: &ModelParams, k: &FeedbackKernel, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let cavity = p.g * (-p.kappa * t).exp() * (p.delta * t).sin();
    if p.gain == 0.0 {
        return cavity;
    }
    let response = |z: f64| (-p.kappa * z).exp() * (p.delta * z + p.theta).sin();
    let mut conv = k.delta_weight() * response(t);
    if !matches!(k, FeedbackKernel::Instantaneous { .. }) {
        let mut breaks = vec![0.0, t];
        let scale = match *k {
            FeedbackKernel::PowerLaw { s, t0, .. } => t0 / (s + 1.0),
            FeedbackKernel::Exponential { rate, .. } => 1.0 / rate,
            _ => t,
        };
        // h(t - z) is sharpest where t - z is small.
        let mut lag = scale / 8.0;
        while lag < t {
            breaks.push(t - lag);
            lag *= 2.0;
        }
        if let FeedbackKernel::DelayTrain {
            period,
            n_terms,
            width,
            ..
        } = *k
        {
            for n in 1..=n_terms {
                let centre = t - n as f64 * period;
                for off in [-6.0, 0.0, 6.0] {
                    breaks.push(centre + off * width);
                }
            }
        }
        let period = 2.0 * PI / p.delta.abs().max(1e-12);
        let pieces = (t / (0.25 * period)).ceil() as usize;
        for i in 1..pieces {
            breaks.push(t * i as f64 / pieces as f64);
        }
        breaks.retain(|&b| (0.0..=t).contains(&b));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let opts = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-13,
            max_intervals: 10_000,
        };
        conv += integrate_breaks(|z: f64| k.eval(t - z) * response(z), &breaks, &opts).value;
    }
    cavity + p.gain * p.kappa * conv
}

/// `omega_r^2 - omega^2 - D(omega)`, the part of the response that comes from
/// the memory kernel. Equals `4 omega_r g` times the transform of
/// [`time_kernel_e`].
pub fn memory_bracket(p: &ModelParams, k: &FeedbackKernel, omega: f64) -> Result<Complex64> {
    let d = response_d(p, k, omega)?;
    Ok(c(p.omega_r * p.omega_r - omega * omega, 0.0) - d)
}

/// Fourier transform `int_0^horizon E(t) exp(-i omega t) dt`, by quadrature
/// of the time-domain kernel itself.
pub fn time_kernel_transform(
    p: &ModelParams,
    k: &FeedbackKernel,
    omega: f64,
    horizon: f64,
) -> Complex64 {
    let panel = (PI / (omega.abs() + p.delta.abs() + 1.0)).min(0.5);
    let pieces = (horizon / panel).ceil() as usize;
    let breaks: Vec<f64> = (0..=pieces)
        .map(|i| horizon * i as f64 / pieces as f64)
        .collect();
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_intervals: 20 * pieces + 100,
    };
    integrate_breaks(
        |t: f64| Complex64::from_polar(time_kernel_e(p, k, t), -omega * t),
        &breaks,
        &opts,
    )
    .value
}

/// What a [`SpectrumSeries`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesLabel {
    D,
    Mx,
    My,
    S,
    SAdiabatic,
    VarianceIntegrand,
}

impl SeriesLabel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::D => "D",
            Self::Mx => "Mx",
            Self::My => "My",
            Self::S => "S",
            Self::SAdiabatic => "S_adiabatic",
            Self::VarianceIntegrand => "variance_integrand",
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Self::D | Self::Mx | Self::My)
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            Self::D,
            Self::Mx,
            Self::My,
            Self::S,
            Self::SAdiabatic,
            Self::VarianceIntegrand,
        ]
        .into_iter()
        .find(|l| l.name().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeriesValues {
    Complex(Vec<Complex64>),
    Real(Vec<f64>),
}

impl SeriesValues {
    pub fn len(&self) -> usize {
        match self {
            Self::Complex(v) => v.len(),
            Self::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A function of frequency sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSeries {
    pub omega: Vec<f64>,
    pub values: SeriesValues,
    pub label: SeriesLabel,
}

impl SpectrumSeries {
    pub fn new(omega: Vec<f64>, values: SeriesValues, label: SeriesLabel) -> Result<Self> {
        if omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "frequency grid must be strictly increasing".into(),
            ));
        }
        if omega.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "grid has {} points but {} values",
                omega.len(),
                values.len()
            )));
        }
        if label.is_complex() != matches!(values, SeriesValues::Complex(_)) {
            return Err(Error::InvalidParameter(format!(
                "series {} has the wrong value type",
                label.name()
            )));
        }
        if let SeriesValues::Real(v) = &values {
            if v.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "series {} must be non-negative",
                    label.name()
                )));
            }
        }
        Ok(Self {
            omega,
            values,
            label,
        })
    }

    /// Evaluate `label` on `grid`.
    pub fn sample(
        p: &ModelParams,
        k: &FeedbackKernel,
        grid: &[f64],
        label: SeriesLabel,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let values = if label == SeriesLabel::SAdiabatic {
            SeriesValues::Real(
                grid.par_iter()
                    .map(|&w| spectral_density_adiabatic(p, k, w))
                    .collect(),
            )
        } else {
            let points: Vec<ResponsePoint> = grid
                .par_iter()
                .map(|&w| ResponsePoint::new(p, k, w))
                .collect::<Result<_>>()?;
            match label {
                SeriesLabel::D => SeriesValues::Complex(points.iter().map(|r| r.d).collect()),
                SeriesLabel::Mx => SeriesValues::Complex(points.iter().map(|r| r.mx).collect()),
                SeriesLabel::My => SeriesValues::Complex(points.iter().map(|r| r.my).collect()),
                SeriesLabel::S => SeriesValues::Real(points.iter().map(|r| r.s).collect()),
                SeriesLabel::VarianceIntegrand => {
                    SeriesValues::Real(points.iter().map(|r| r.variance_density()).collect())
                }
                SeriesLabel::SAdiabatic => unreachable!(),
            }
        };
        Self::new(grid.to_vec(), values, label)
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Frequency of the largest real sample on `omega > 0`.
    pub fn peak_frequency(&self) -> Option<f64> {
        let SeriesValues::Real(v) = &self.values else {
            return None;
        };
        self.omega
            .iter()
            .zip(v)
            .filter(|(w, _)| **w > 0.0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(w, _)| *w)
    }

    /// CSV with `#`-prefixed `key = value` metadata lines, then
    /// `omega,re,im` or `omega,value`.
    pub fn to_csv(&self, meta: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out.push_str(&format!("# series = {}\n", self.label.name()));
        match &self.values {
            SeriesValues::Complex(v) => {
                out.push_str("omega,re,im\n");
                for (w, z) in self.omega.iter().zip(v) {
                    out.push_str(&format!("{w},{},{}\n", z.re, z.im));
                }
            }
            SeriesValues::Real(v) => {
                out.push_str("omega,value\n");
                for (w, x) in self.omega.iter().zip(v) {
                    out.push_str(&format!("{w},{x}\n"));
                }
            }
        }
        out
    }
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Peak of `S / |D|^2` over `omega in (0, max_omega]`, refined by golden
/// section around the best grid point.
pub fn variance_peak(
    p: &ModelParams,
    k: &FeedbackKernel,
    max_omega: f64,
    n: usize,
) -> Result<(f64, f64)> {
    let grid = linear_grid(max_omega / n as f64, max_omega, n);
    let f = |w: f64| ResponsePoint::new(p, k, w).map(|r| r.variance_density());
    let mut best = (grid[0], f(grid[0])?);
    for &w in &grid[1..] {
        let v = f(w)?;
        if v > best.1 {
            best = (w, v);
        }
    }
    let step = grid[1] - grid[0];
    let (mut a, mut b) = ((best.0 - step).max(1e-12), best.0 + step);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = b - ratio * (b - a);
        let x2 = a + ratio * (b - a);
        if f(x1)? > f(x2)? {
            b = x2;
        } else {
            a = x1;
        }
    }
    let w = 0.5 * (a + b);
    Ok((w, f(w)?))
}

/// Area under the exact spectral density, used as a scale when comparing
/// spectra.
pub fn spectral_weight(p: &ModelParams, k: &FeedbackKernel, lo: f64, hi: f64) -> f64 {
    integrate(
        |w: f64| spectral_density(p, k, w).unwrap_or(0.0),
        lo,
        hi,
        &QuadOptions::rel(1e-8),
    )
    .value
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn params(delta: f64, kappa: f64, g: f64) -> ModelParams {
        ModelParams::new(delta, kappa, g).unwrap()
    }

    fn pl(s: f64) -> FeedbackKernel {
        FeedbackKernel::normalized_power_law(s, 1.0).unwrap()
    }

    #[test]
    fn decoupled_oscillator() {
        let p = params(2.0, 1.0, 0.0);
        for w in [0.0, 0.7, 3.0] {
            let d = response_d(&p, &pl(1.0), w).unwrap();
            assert!((d - c(1.0 - w * w, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn response_vanishes_at_critical_gain() {
        let p = params(2.0, 1.0, 0.3);
        let k = pl(0.5);
        let gc = critical_gain(&p, &k).unwrap();
        let d0 = response_d(&p.with_gain(gc), &k, 0.0).unwrap();
        assert!(d0.norm() < 1e-10, "{d0}");
    }

    #[test]
    fn noise_transfer_without_feedback() {
        let p = params(2.0, 1.0, 0.3).with_theta(0.0);
        let k = pl(1.0);
        let w = 0.8;
        let (mx, my) = noise_transfer(&p, &k, w).unwrap();
        let z = c(1.0, w);
        let q = z * z + 4.0;
        assert!((mx - z * (-0.6) / q).norm() < 1e-15);
        assert!((my - c(-0.6 * 2.0, 0.0) / q).norm() < 1e-15);
        let (mx, my) = noise_transfer(&params(2.0, 1.0, 0.0), &k, w).unwrap();
        assert_eq!((mx.norm(), my.norm()), (0.0, 0.0));
    }

    #[test]
    fn pole_reported_for_lossless_cavity_on_resonance() {
        let p = params(2.0, 0.0, 0.3);
        assert!(matches!(
            response_d(&p, &pl(1.0), 2.0),
            Err(Error::Pole { .. })
        ));
        assert!(matches!(
            noise_transfer(&p, &pl(1.0), -2.0),
            Err(Error::Pole { .. })
        ));
    }

    #[test]
    fn spectral_density_at_zero_frequency() {
        let p = params(2.0, 1.0, 0.1);
        let s = spectral_density(&p, &pl(1.0), 0.0).unwrap();
        assert_relative_eq!(s, 0.008 * PI, max_relative = 1e-13);
        let none = params(2.0, 1.0, 0.0);
        assert_eq!(spectral_density(&none, &pl(1.0), 1.3).unwrap(), 0.0);
    }

    #[test]
    fn adiabatic_density_without_feedback_is_flat() {
        let p = params(2.0, 1.0, 0.1);
        let expected = 4.0 * PI * 1.0 * 0.01 / 5.0;
        for w in [-3.0, 0.0, 0.4, 10.0] {
            assert_relative_eq!(
                spectral_density_adiabatic(&p, &pl(1.0), w),
                expected,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn adiabatic_expansion_at_zero_frequency() {
        let p = params(2.0, 1.5, 0.2).with_theta(0.0).with_gain(0.7);
        let k = pl(2.0);
        let h0 = k.zero_frequency();
        let expected = PI * p.kappa / (p.kappa.powi(2) + 4.0)
            * ((2.0 * p.g + p.gain * p.kappa * h0).powi(2) + (p.gain * 2.0 * h0).powi(2));
        assert_relative_eq!(
            spectral_density_adiabatic(&p, &k, 0.0),
            expected,
            max_relative = 1e-13
        );
    }

    #[test]
    fn critical_coupling_examples() {
        assert_relative_eq!(
            critical_coupling(&params(2.0, 1.0, 0.1)).unwrap(),
            (5.0f64 / 8.0).sqrt(),
            max_relative = 1e-15
        );
        assert_relative_eq!(critical_coupling(&params(1.0, 0.0, 0.1)).unwrap(), 0.5);
        assert!(critical_coupling(&params(0.0, 1.0, 0.1)).is_err());
        assert!(critical_coupling(&params(-1.0, 1.0, 0.1)).is_err());
    }

    #[test]
    fn critical_gain_examples() {
        let p = params(1.0, 10.0, 1.0).with_theta(FRAC_PI_2);
        let k = FeedbackKernel::normalized_power_law(1.0, 1.0).unwrap();
        assert_relative_eq!(critical_gain(&p, &k).unwrap(), 0.2425, max_relative = 1e-14);
        let root = params(1.0, 3f64.sqrt(), 1.0);
        assert!(critical_gain(&root, &k).unwrap().abs() < 1e-14);
        // theta = 0 grows linearly in kappa.
        let x = |kappa: f64| critical_gain(&params(1.0, kappa, 1.0).with_theta(0.0), &k).unwrap();
        assert_relative_eq!(x(200.0) / x(100.0), 2.0, max_relative = 1e-3);
    }

    #[test]
    fn critical_gain_needs_threshold() {
        let k = pl(1.0);
        let p = params(1.0, 1.0, 1.0).with_theta(-std::f64::consts::FRAC_PI_4);
        assert!(matches!(critical_gain(&p, &k), Err(Error::NoThreshold(_))));
        assert!(critical_gain(&params(1.0, 1.0, 0.0), &k).is_err());
    }

    #[test]
    fn time_kernel_limits() {
        let p = params(2.0, 1.0, 0.3);
        let k = pl(1.0);
        for t in [0.1f64, 1.0, 4.0] {
            let want = 0.3 * (-t).exp() * (2.0 * t).sin();
            assert_relative_eq!(time_kernel_e(&p, &k, t), want, max_relative = 1e-14);
        }
        assert_eq!(time_kernel_e(&p.with_gain(1.0), &k, 0.0), 0.0);
        assert_eq!(time_kernel_e(&p.with_gain(1.0), &k, -1.0), 0.0);
    }

    #[test]
    fn series_validation() {
        assert!(SpectrumSeries::new(
            vec![0.0, 0.0],
            SeriesValues::Real(vec![1.0, 1.0]),
            SeriesLabel::S
        )
        .is_err());
        assert!(SpectrumSeries::new(
            vec![0.0, 1.0],
            SeriesValues::Real(vec![1.0, -1.0]),
            SeriesLabel::S
        )
        .is_err());
        assert!(SpectrumSeries::new(
            vec![0.0, 1.0],
            SeriesValues::Real(vec![1.0, 1.0]),
            SeriesLabel::D
        )
        .is_err());
    }

    #[test]
    fn csv_layout() {
        let p = params(2.0, 1.0, 0.1);
        let s = SpectrumSeries::sample(&p, &pl(1.0), &[0.0, 1.0], SeriesLabel::D).unwrap();
        let text = s.to_csv(&[("kappa".into(), "1".into())]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# kappa = 1");
        assert_eq!(lines[2], "omega,re,im");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn variance_rejects_unstable_gain() {
        let p = params(2.0, 1.0, 0.5);
        let k = pl(1.0);
        let gc = critical_gain(&p, &k).unwrap();
        assert!(matches!(
            variance_x2(&p.with_gain(1.01 * gc), &k, &VarianceOptions::default()),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn variance_is_positive_and_grows_toward_threshold() {
        let p = params(2.0, 1.0, 0.5);
        let k = pl(1.0);
        let gc = critical_gain(&p, &k).unwrap();
        let opts = VarianceOptions::default();
        let a = variance_x2(&p.with_gain(0.9 * gc), &k, &opts).unwrap().value;
        let b = variance_x2(&p.with_gain(0.99 * gc), &k, &opts).unwrap().value;
        assert!(a > 0.0 && b > a, "{a} {b}");
    }
}

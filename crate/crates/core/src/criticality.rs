// SPDX-License-Identifier: Apache-2.0

//! Gain sweeps toward threshold and the fit
//! `<X^2> = A / |1 - G/G_crit|^alpha + B`.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::FeedbackKernel;
use crate::params::ModelParams;
use crate::spectral::{critical_gain, variance_x2, VarianceOptions};

/// `n` ratios `G/G_crit` with `1 - ratio` geometric on `[eps_min, eps_max]`,
/// sorted increasing.
pub fn geometric_ratios(eps_min: f64, eps_max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0 - eps_max];
    }
    let (lo, hi) = (eps_min.ln(), eps_max.ln());
    (0..n)
        .map(|i| 1.0 - (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// The default sweep: 30 points with `1 - G/G_crit` in `[5e-3, 0.5]`.
pub fn default_ratios() -> Vec<f64> {
    geometric_ratios(5e-3, 0.5, 30)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub ratio: f64,
    pub gain: f64,
    pub variance: Result<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub critical_gain: f64,
    pub points: Vec<SweepPoint>,
    /// False when the variance fails to increase somewhere in the half of the
    /// grid nearest threshold.
    pub monotone: bool,
}

impl Sweep {
    /// Points whose variance was computed.
    pub fn data(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|pt| pt.variance.as_ref().ok().map(|v| (pt.ratio, *v)))
            .collect()
    }
}

/// `<X^2>` at each `G = ratio * G_crit`. Failed points are kept and flagged.
pub fn sweep_variance(
    p: &ModelParams,
    k: &FeedbackKernel,
    ratios: &[f64],
    opts: &VarianceOptions,
) -> Result<Sweep> {
    if ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
        return Err(Error::InvalidParameter(
            "sweep ratios must lie in (0, 1)".into(),
        ));
    }
    if ratios.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("sweep ratios must be sorted".into()));
    }
    let gc = critical_gain(p, k)?;
    let points: Vec<SweepPoint> = ratios
        .par_iter()
        .map(|&ratio| {
            let gain = ratio * gc;
            let variance = variance_x2(&p.with_gain(gain), k, opts).map(|v| v.value);
            SweepPoint {
                ratio,
                gain,
                variance,
            }
        })
        .collect();
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|pt| pt.variance.as_ref().ok().map(|v| (pt.ratio, *v)))
        .collect();
    let half = data.len() / 2;
    let monotone = data[half.min(data.len())..]
        .windows(2)
        .all(|w| w[1].1 > w[0].1);
    if !monotone {
        log::warn!("variance is not monotone approaching threshold (G_crit = {gc})");
    }
    Ok(Sweep {
        critical_gain: gc,
        points,
        monotone,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub alpha_starts: Vec<f64>,
    pub max_iters: u64,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            alpha_starts: vec![0.2, 0.5, 0.8, 1.1, 1.5],
            max_iters: 4000,
            tolerance: 1e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    /// RMS of the log-space residuals.
    pub residual: f64,
    pub g_points: Vec<f64>,
    pub converged: bool,
}

impl ExponentFit {
    pub fn predict(&self, ratio: f64) -> f64 {
        self.a / (1.0 - ratio).abs().powf(self.alpha) + self.b
    }
}

struct LogCost<'a> {
    data: &'a [(f64, f64)],
}

/// Packed as `(ln A, ln alpha, sqrt B)` so the simplex never leaves the
/// admissible region.
fn unpack(x: &[f64]) -> (f64, f64, f64) {
    (x[0].exp(), x[1].exp(), x[2] * x[2])
}

impl CostFunction for LogCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let (a, alpha, b) = unpack(x);
        let mut sum = 0.0;
        for &(r, v) in self.data {
            let model = a / (1.0 - r).abs().powf(alpha) + b;
            let d = model.ln() - v.ln();
            sum += d * d;
        }
        Ok(if sum.is_finite() { sum } else { f64::MAX })
    }
}

/// Non-negative linear least squares for `(A, B)` at fixed `alpha`.
fn linear_start(data: &[(f64, f64)], alpha: f64) -> (f64, f64) {
    let n = data.len() as f64;
    let xs: Vec<f64> = data.iter().map(|(r, _)| (1.0 - r).abs().powf(-alpha)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(data).map(|(x, d)| (x - mx) * (d.1 - my)).sum();
    let mut a = if sxx > 0.0 { sxy / sxx } else { my / mx };
    let mut b = my - a * mx;
    if a <= 0.0 {
        a = my / mx;
        b = 0.0;
    }
    if b < 0.0 {
        a = xs.iter().zip(data).map(|(x, d)| x * d.1).sum::<f64>()
            / xs.iter().map(|x| x * x).sum::<f64>();
        b = 0.0;
    }
    (a.max(f64::MIN_POSITIVE), b)
}

fn simplex_around(x: &[f64], scale_b: f64) -> Vec<Vec<f64>> {
    let steps = [0.3, 0.2, 0.3 * scale_b];
    let mut simplex = vec![x.to_vec()];
    for (i, s) in steps.iter().enumerate() {
        let mut v = x.to_vec();
        v[i] += s;
        simplex.push(v);
    }
    simplex
}

fn run_simplex(
    cost: LogCost<'_>,
    simplex: Vec<Vec<f64>>,
    opts: &FitOptions,
) -> Result<(Vec<f64>, f64, bool)> {
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(opts.tolerance)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(|e| {
            log::debug!("simplex failed: {e}");
            Error::NonConvergence {
                value: f64::NAN,
                error: f64::NAN,
            }
        })?;
    let state = res.state();
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    let best = state.get_best_param().cloned().unwrap_or_default();
    Ok((best, state.get_best_cost(), converged))
}

/// Least-squares fit of `log(A / |1 - r|^alpha + B)` to `log(variance)`.
pub fn fit_exponent(data: &[(f64, f64)], opts: &FitOptions) -> Result<ExponentFit> {
    if data.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "exponent fit needs at least 8 points, got {}",
            data.len()
        )));
    }
    if data
        .iter()
        .any(|&(r, v)| !(r > 0.0 && r < 1.0) || !(v > 0.0 && v.is_finite()))
    {
        return Err(Error::InvalidParameter(
            "fit data need ratios in (0, 1) and positive finite variances".into(),
        ));
    }
    let scale_b = (data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min)).sqrt();
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for &alpha0 in &opts.alpha_starts {
        let (a0, b0) = linear_start(data, alpha0);
        let x0 = vec![a0.ln(), alpha0.ln(), b0.sqrt()];
        let mut run = run_simplex(LogCost { data }, simplex_around(&x0, scale_b), opts)?;
        // A restart around the first optimum guards against simplex collapse.
        let again = run_simplex(LogCost { data }, simplex_around(&run.0, scale_b * 0.1), opts)?;
        if again.1 <= run.1 {
            run = (again.0, again.1, run.2 && again.2);
        }
        if best.as_ref().map_or(true, |b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (x, cost, converged) = best.expect("at least one start");
    let (a, alpha, b) = unpack(&x);
    Ok(ExponentFit {
        alpha,
        a,
        b,
        residual: (cost / data.len() as f64).sqrt(),
        g_points: data.iter().map(|d| d.0).collect(),
        converged: converged && alpha > 0.0 && alpha < 3.0,
    })
}

/// Exponents obtained when only the points with `1 - r <= eps_max` enter the
/// fit, for each window that keeps at least 8 points.
pub fn window_sensitivity(
    data: &[(f64, f64)],
    windows: &[f64],
    opts: &FitOptions,
) -> Vec<(f64, f64)> {
    windows
        .iter()
        .filter_map(|&w| {
            let sub: Vec<(f64, f64)> = data.iter().copied().filter(|d| 1.0 - d.0 <= w).collect();
            fit_exponent(&sub, opts).ok().map(|f| (w, f.alpha))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaOptions {
    pub ratios: Vec<f64>,
    pub t0: f64,
    pub variance: VarianceOptions,
    pub fit: FitOptions,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        Self {
            ratios: default_ratios(),
            t0: 1.0,
            variance: VarianceOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPoint {
    pub s: f64,
    pub sweep: Result<Sweep>,
    pub fit: Result<ExponentFit>,
}

/// Exponent for each power-law exponent `s` with `h0 = s`.
pub fn alpha_vs_s(p: &ModelParams, s_grid: &[f64], opts: &AlphaOptions) -> Vec<AlphaPoint> {
    let table: Vec<AlphaPoint> = s_grid
        .iter()
        .map(|&s| {
            let sweep = FeedbackKernel::normalized_power_law(s, opts.t0)
                .and_then(|k| sweep_variance(p, &k, &opts.ratios, &opts.variance));
            let fit = match &sweep {
                Ok(sw) => fit_exponent(&sw.data(), &opts.fit),
                Err(e) => Err(e.clone()),
            };
            AlphaPoint { s, sweep, fit }
        })
        .collect();
    let alphas: Vec<f64> = table
        .iter()
        .filter_map(|pt| pt.fit.as_ref().ok().map(|f| f.alpha))
        .collect();
    if alphas.windows(2).any(|w| w[1] < w[0]) {
        log::warn!("fitted exponent is not monotone in s: {alphas:?}");
    }
    table
}

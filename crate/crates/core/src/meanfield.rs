// SPDX-License-Identifier: Apache-2.0

//! Noise-free expectation-value dynamics of the nonlinear model.
//!
//! Averages of the Heisenberg–Langevin equations are factorised and the
//! vacuum noise dropped. The feedback signal `I = 2 kappa int h(t - z) x_theta(z) dz`
//! is carried by auxiliary decaying states, one per term of an
//! exponential-sum fit of the kernel, so the memory costs a fixed number of
//! extra ODE components instead of a growing history.

use nalgebra::DVector;
use ode_solvers::{Dopri5, OutputType, System};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::FeedbackKernel;
use crate::params::ModelParams;

const CORE: usize = 5;

/// Mean-field variables. `memory` holds the auxiliary kernel states.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub a_re: f64,
    pub a_im: f64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub t: f64,
    pub memory: Vec<f64>,
}

impl MeanFieldState {
    /// Normal phase with `sx` tilted by `seed`; the spin length is kept
    /// exactly `N/2`.
    pub fn seeded(n_spins: u32, seed: f64, memory_len: usize) -> Self {
        let j = 0.5 * n_spins as f64;
        Self {
            a_re: 0.0,
            a_im: 0.0,
            sx: seed,
            sy: 0.0,
            sz: -(j * j - seed * seed).sqrt(),
            t: 0.0,
            memory: vec![0.0; memory_len],
        }
    }

    pub fn spin_length(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }

    pub fn photons(&self) -> f64 {
        self.a_re * self.a_re + self.a_im * self.a_im
    }

    fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(CORE + self.memory.len());
        v[0] = self.a_re;
        v[1] = self.a_im;
        v[2] = self.sx;
        v[3] = self.sy;
        v[4] = self.sz;
        for (i, m) in self.memory.iter().enumerate() {
            v[CORE + i] = *m;
        }
        v
    }

    fn from_slice(t: f64, v: &[f64]) -> Self {
        Self {
            a_re: v[0],
            a_im: v[1],
            sx: v[2],
            sy: v[3],
            sz: v[4],
            t,
            memory: v[CORE..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Memory {
    Off,
    Instant(f64),
    Sum(Vec<(f64, f64)>),
}

/// Right-hand side of the mean-field equations for fixed parameters and
/// kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldModel {
    pub params: ModelParams,
    memory: Memory,
}

impl MeanFieldModel {
    /// `horizon` is the longest time the kernel memory has to be resolved.
    pub fn new(p: &ModelParams, k: &FeedbackKernel, horizon: f64) -> Result<Self> {
        p.validate()?;
        k.validate()?;
        let memory = match k {
            _ if p.gain == 0.0 => Memory::Off,
            FeedbackKernel::Instantaneous { weight } => Memory::Instant(*weight),
            FeedbackKernel::DelayTrain { .. } => {
                return Err(Error::UnsupportedKernel(
                    "delay-train kernels have no exponential-sum form for the mean-field solver"
                        .into(),
                ))
            }
            _ => Memory::Sum(k.exponential_sum(horizon).ok_or_else(|| {
                Error::UnsupportedKernel("kernel has no exponential-sum form".into())
            })?),
        };
        Ok(Self {
            params: *p,
            memory,
        })
    }

    pub fn memory_len(&self) -> usize {
        match &self.memory {
            Memory::Sum(t) => t.len(),
            _ => 0,
        }
    }

    fn x_theta(&self, v: &[f64]) -> f64 {
        let (s, c) = self.params.theta.sin_cos();
        v[0] * c + v[1] * s
    }

    fn signal(&self, v: &[f64]) -> f64 {
        let two_kappa = 2.0 * self.params.kappa;
        match &self.memory {
            Memory::Off => 0.0,
            Memory::Instant(w) => two_kappa * w * self.x_theta(v),
            Memory::Sum(terms) => {
                two_kappa
                    * terms
                        .iter()
                        .zip(&v[CORE..])
                        .map(|((w, _), y)| w * y)
                        .sum::<f64>()
            }
        }
    }

    /// Feedback signal `I(t)` carried by a state.
    pub fn feedback(&self, state: &MeanFieldState) -> f64 {
        self.signal(state.to_vector().as_slice())
    }

    fn eval(&self, v: &[f64], d: &mut [f64]) {
        let p = &self.params;
        let scale = 2.0 / (p.n_spins as f64).sqrt();
        let (a_re, a_im, sx, sy, sz) = (v[0], v[1], v[2], v[3], v[4]);
        let drive = scale * (2.0 * p.g * a_re + p.gain * self.signal(v));
        d[0] = p.delta * a_im - p.kappa * a_re;
        d[1] = -p.delta * a_re - scale * p.g * sx - p.kappa * a_im;
        d[2] = -p.omega_r * sy;
        d[3] = p.omega_r * sx - drive * sz;
        d[4] = drive * sy;
        if let Memory::Sum(terms) = &self.memory {
            let x = self.x_theta(v);
            for (i, (_, r)) in terms.iter().enumerate() {
                d[CORE + i] = -r * v[CORE + i] + x;
            }
        }
    }
}

/// Time derivatives at `state`, in the same layout (`t` holds 1).
pub fn meanfield_rhs(state: &MeanFieldState, model: &MeanFieldModel) -> MeanFieldState {
    let v = state.to_vector();
    let mut d = vec![0.0; v.len()];
    model.eval(v.as_slice(), &mut d);
    MeanFieldState::from_slice(1.0, &d)
}

impl System<f64, DVector<f64>> for &MeanFieldModel {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        self.eval(y.as_slice(), dy.as_mut_slice());
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Spacing of the stored samples.
    pub sample_dt: f64,
    pub max_steps: u32,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-13,
            sample_dt: 0.5,
            max_steps: 5_000_000,
        }
    }
}

/// Sampled solution. Each sample is `(a_re, a_im, sx, sy, sz)` plus the
/// feedback signal.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldRun {
    pub times: Vec<f64>,
    pub core: Vec<[f64; CORE]>,
    pub feedback: Vec<f64>,
    pub last: MeanFieldState,
}

impl MeanFieldRun {
    /// Samples with `t >= t_end * (1 - fraction)`.
    pub fn tail(&self, fraction: f64) -> impl Iterator<Item = &[f64; CORE]> {
        let t_end = *self.times.last().unwrap_or(&0.0);
        let start = t_end * (1.0 - fraction);
        self.times
            .iter()
            .zip(&self.core)
            .filter(move |(t, _)| **t >= start)
            .map(|(_, c)| c)
    }
}

/// Integrate from `init` to `t_end` with the Dormand–Prince 5(4) pair.
pub fn integrate(
    model: &MeanFieldModel,
    init: &MeanFieldState,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<MeanFieldRun> {
    if init.memory.len() != model.memory_len() {
        return Err(Error::InvalidParameter(format!(
            "state carries {} memory terms, model needs {}",
            init.memory.len(),
            model.memory_len()
        )));
    }
    if !(t_end > init.t) {
        return Err(Error::InvalidParameter("t_end must exceed the start time".into()));
    }
    let mut solver = Dopri5::from_param(
        model,
        init.t,
        t_end,
        opts.sample_dt,
        init.to_vector(),
        opts.rel_tol,
        opts.abs_tol,
        0.9,
        0.04,
        0.2,
        10.0,
        t_end - init.t,
        0.0,
        opts.max_steps,
        u32::MAX,
        OutputType::Dense,
    );
    solver.integrate().map_err(|e| Error::StepSize {
        t: init.t,
        reason: e.to_string(),
    })?;
    let times = solver.x_out().clone();
    let ys = solver.y_out();
    let core = ys
        .iter()
        .map(|y| [y[0], y[1], y[2], y[3], y[4]])
        .collect();
    let feedback = ys.iter().map(|y| model.signal(y.as_slice())).collect();
    let last_y = ys.last().expect("at least the initial sample");
    let last = MeanFieldState::from_slice(*times.last().unwrap(), last_y.as_slice());
    Ok(MeanFieldRun {
        times,
        core,
        feedback,
        last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub gain_lo: f64,
    pub gain_hi: f64,
    pub t_end: f64,
    /// Seed tilt of `sx` in units of `N/2`.
    pub seed: f64,
    /// `|sx| / (N/2)` above which the normal phase counts as left.
    pub threshold: f64,
    /// Bisection stops once the bracket is narrower than this fraction of
    /// its midpoint.
    pub rel_width: f64,
    /// Fraction of the run treated as the steady-state window.
    pub tail: f64,
    pub integrate: IntegrateOptions,
}

impl ScanOptions {
    pub fn bracket(gain_lo: f64, gain_hi: f64) -> Self {
        Self {
            gain_lo,
            gain_hi,
            t_end: 3000.0,
            seed: 1e-6,
            threshold: 1e-3,
            rel_width: 2e-3,
            tail: 0.1,
            integrate: IntegrateOptions {
                rel_tol: 1e-8,
                abs_tol: 1e-14,
                sample_dt: 1.0,
                ..IntegrateOptions::default()
            },
        }
    }
}

/// Run the seeded normal phase at one gain.
pub fn run_seeded(
    p: &ModelParams,
    k: &FeedbackKernel,
    gain: f64,
    seed_sign: f64,
    opts: &ScanOptions,
) -> Result<MeanFieldRun> {
    let q = p.with_gain(gain);
    let model = MeanFieldModel::new(&q, k, opts.t_end)?;
    let j = 0.5 * p.n_spins as f64;
    let init = MeanFieldState::seeded(p.n_spins, seed_sign * opts.seed * j, model.memory_len());
    integrate(&model, &init, opts.t_end, &opts.integrate)
}

fn departs(p: &ModelParams, k: &FeedbackKernel, gain: f64, opts: &ScanOptions) -> Result<bool> {
    let run = run_seeded(p, k, gain, 1.0, opts)?;
    let j = 0.5 * p.n_spins as f64;
    let peak = run.tail(opts.tail).map(|c| c[2].abs()).fold(0.0, f64::max);
    if peak > opts.threshold * j {
        return Ok(true);
    }
    // Close to threshold the growth is too slow to reach the level within
    // the run; an envelope that still grows over the second half counts as
    // departing.
    let t_end = run.last.t;
    let (a, b) = (t_end * (0.5 - opts.tail), t_end * 0.5);
    let earlier = run
        .times
        .iter()
        .zip(&run.core)
        .filter(|(t, _)| **t >= a && **t <= b)
        .map(|(_, c)| c[2].abs())
        .fold(0.0, f64::max);
    Ok(peak > earlier)
}

/// Gain at which the seeded normal phase stops relaxing, by bisection on
/// `[gain_lo, gain_hi]`.
pub fn meanfield_threshold(p: &ModelParams, k: &FeedbackKernel, opts: &ScanOptions) -> Result<f64> {
    let (mut lo, mut hi) = (opts.gain_lo, opts.gain_hi);
    if !(hi > lo) {
        return Err(Error::NoBracket(format!("empty gain range [{lo}, {hi}]")));
    }
    if departs(p, k, lo, opts)? {
        return Err(Error::NoBracket(format!(
            "normal phase already unstable at the lower gain {lo}"
        )));
    }
    if !departs(p, k, hi, opts)? {
        return Err(Error::NoBracket(format!(
            "normal phase still stable at the upper gain {hi}"
        )));
    }
    while hi - lo > opts.rel_width * 0.5 * (hi + lo).abs() {
        let mid = 0.5 * (lo + hi);
        if departs(p, k, mid, opts)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationPoint {
    pub gain: f64,
    /// Tail-window average of `sx` (signed).
    pub sx: f64,
    /// Tail-window average of `|sx|`.
    pub sx_abs: f64,
    /// Tail-window average of `|a|^2`.
    pub photons: f64,
    /// False when `|sx|` still varies by more than 5% over the tail window.
    pub settled: bool,
    pub spin_length_drift: f64,
}

/// Steady `|sx|` and `|a|^2` for each gain.
pub fn bifurcation_table(
    p: &ModelParams,
    k: &FeedbackKernel,
    gains: &[f64],
    opts: &ScanOptions,
) -> Vec<Result<BifurcationPoint>> {
    let j = 0.5 * p.n_spins as f64;
    gains
        .par_iter()
        .map(|&gain| {
            let run = run_seeded(p, k, gain, 1.0, opts)?;
            let tail: Vec<&[f64; CORE]> = run.tail(opts.tail).collect();
            let n = tail.len() as f64;
            let sx = tail.iter().map(|c| c[2]).sum::<f64>() / n;
            let sx_abs = tail.iter().map(|c| c[2].abs()).sum::<f64>() / n;
            let photons = tail.iter().map(|c| c[0] * c[0] + c[1] * c[1]).sum::<f64>() / n;
            let hi = tail.iter().map(|c| c[2].abs()).fold(0.0, f64::max);
            let lo = tail.iter().map(|c| c[2].abs()).fold(f64::INFINITY, f64::min);
            let settled = hi < opts.threshold * j || (hi - lo) <= 0.05 * sx_abs;
            let spin_length_drift = run
                .core
                .iter()
                .map(|c| ((c[2] * c[2] + c[3] * c[3] + c[4] * c[4]).sqrt() - j).abs())
                .fold(0.0, f64::max);
            Ok(BifurcationPoint {
                gain,
                sx,
                sx_abs,
                photons,
                settled,
                spin_length_drift,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(gain: f64, k: &FeedbackKernel) -> MeanFieldModel {
        let p = ModelParams::new(2.0, 1.0, 0.1).unwrap().with_gain(gain);
        MeanFieldModel::new(&p, k, 100.0).unwrap()
    }

    #[test]
    fn normal_phase_is_a_fixed_point() {
        let k = FeedbackKernel::normalized_power_law(1.0, 1.0).unwrap();
        let m = model(5.0, &k);
        let s = MeanFieldState::seeded(1, 0.0, m.memory_len());
        let d = meanfield_rhs(&s, &m);
        assert_eq!([d.a_re, d.a_im, d.sx, d.sy, d.sz], [0.0; 5]);
        assert!(d.memory.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn decoupled_motion() {
        let p = ModelParams::new(2.0, 0.7, 0.0).unwrap();
        let k = FeedbackKernel::instantaneous(1.0).unwrap();
        let m = MeanFieldModel::new(&p, &k, 10.0).unwrap();
        let s = MeanFieldState {
            a_re: 1.0,
            a_im: 0.0,
            sx: 0.3,
            sy: 0.1,
            sz: -0.2,
            t: 0.0,
            memory: vec![],
        };
        let d = meanfield_rhs(&s, &m);
        assert_eq!((d.a_re, d.a_im), (-0.7, -2.0));
        assert_eq!((d.sx, d.sy, d.sz), (-0.1, 0.3, 0.0));
    }

    #[test]
    fn delay_train_is_rejected() {
        let k = FeedbackKernel::delay_train(5.0, 1.0, 3, 0.01).unwrap();
        let p = ModelParams::new(2.0, 1.0, 0.1).unwrap().with_gain(1.0);
        assert!(matches!(
            MeanFieldModel::new(&p, &k, 10.0),
            Err(Error::UnsupportedKernel(_))
        ));
    }

    #[test]
    fn exponential_memory_tracks_the_convolution() {
        // x_theta held fixed: y(t) = x (1 - e^{-r t}) / r.
        let k = FeedbackKernel::exponential(0.5, 2.0).unwrap();
        let m = model(1.0, &k);
        assert_eq!(m.memory_len(), 1);
        let s = MeanFieldState {
            memory: vec![0.6],
            ..MeanFieldState::seeded(1, 0.0, 1)
        };
        assert!((m.feedback(&s) - 2.0 * 2.0 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn spin_precession_conserves_length() {
        let k = FeedbackKernel::normalized_power_law(1.0, 1.0).unwrap();
        let m = model(5.0, &k);
        let init = MeanFieldState::seeded(1, 0.2, m.memory_len());
        let run = integrate(&m, &init, 50.0, &IntegrateOptions::default()).unwrap();
        assert!((run.last.spin_length() - 0.5).abs() < 1e-6);
        assert!((run.last.t - 50.0).abs() < 1e-12);
    }
}

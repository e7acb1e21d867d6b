// SPDX-License-Identifier: Apache-2.0

//! Stochastic master equation for homodyne detection of the cavity with
//! classical memory-kernel feedback onto the matter.
//!
//! One step factorises into the free evolution (diagonal in the product
//! basis, applied as two half-step phases), the matter–cavity coupling
//! (exact exponential in the eigenbasis of `V ⊗ (g (a + a^dag) + u)`, where
//! `u = G I_c` for the spin), and the measurement update
//! `M = 1 - c^dag c dt / 2 + c dy + c^2 (dy^2 - dt) / 2` with
//! `c = sqrt(2 kappa) e^{-i theta} a` and `dy = <c + c^dag> dt + dW`.
//!
//! For the linearised boson model the feedback force multiplies `b + b^dag`
//! by a c-number, which is a pure displacement. The state is then kept as
//! `D(alpha, beta) rho D^dag` with a classical frame `(alpha, beta)` that
//! absorbs both the feedback and the mean field, and a small `rho` that only
//! carries the fluctuations.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::space::{build_space, HilbertSpace, MatterKind};
use super::state::{sandwich, Density, LocalOp, Record};
use crate::error::{Error, Result};
use crate::kernel::{FeedbackKernel, DEFAULT_DT};
use crate::params::ModelParams;

fn default_dt() -> f64 {
    DEFAULT_DT
}
fn twenty() -> usize {
    20
}
fn ten() -> usize {
    10
}
fn hundred() -> usize {
    100
}
fn memory_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `N` spins, `H_fb = (2 / sqrt N) G S_x I_c`.
    #[default]
    Spin,
    /// Holstein–Primakoff boson, `H_fb = G (b + b^dag) I_c`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Positivity-preserving measurement operator.
    #[default]
    Kraus,
    /// `rho + D[c] rho dt + H[c] rho dW`, renormalised.
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// Spin fully down (or boson vacuum) and cavity vacuum.
    #[default]
    Ground,
    /// Spin along `+x`; spin model only.
    SpinX,
    /// Boson coherent state `|beta>`; linear model only.
    Coherent { re: f64, im: f64 },
}

/// Everything a single trajectory needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    #[serde(default)]
    pub model: ModelKind,
    pub params: ModelParams,
    pub kernel: FeedbackKernel,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "twenty")]
    pub cavity_dim: usize,
    /// Boson cutoff of the linear model.
    #[serde(default = "twenty")]
    pub boson_dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "ten")]
    pub sample_every: usize,
    /// Relative kernel tail dropped from the feedback memory.
    #[serde(default = "memory_tol")]
    pub memory_tol: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub initial: InitialState,
    /// Steps between eigenvalue checks.
    #[serde(default = "hundred")]
    pub check_every: usize,
}

impl TrajectoryConfig {
    pub fn new(model: ModelKind, params: ModelParams, kernel: FeedbackKernel, t_end: f64) -> Self {
        Self {
            model,
            params,
            kernel,
            dt: DEFAULT_DT,
            t_end,
            cavity_dim: 20,
            boson_dim: 20,
            seed: 0,
            sample_every: 10,
            memory_tol: 1e-3,
            scheme: Scheme::Kraus,
            initial: InitialState::Ground,
            check_every: 100,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.kernel.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.sample_every == 0 || self.check_every == 0 {
            return Err(Error::InvalidParameter(
                "sample_every and check_every must be at least 1".into(),
            ));
        }
        if !(self.memory_tol > 0.0 && self.memory_tol < 1.0) {
            return Err(Error::InvalidParameter("memory_tol must lie in (0, 1)".into()));
        }
        match (self.model, self.initial) {
            (ModelKind::Linear, InitialState::SpinX) => Err(Error::InvalidParameter(
                "spin-x initial state needs the spin model".into(),
            )),
            (ModelKind::Spin, InitialState::Coherent { .. }) => Err(Error::InvalidParameter(
                "coherent initial state needs the linear model".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Classical displacement frame of the linear model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Frame {
    pub alpha: Complex64,
    pub beta: Complex64,
}

/// Conditioned state after `step` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedState {
    pub rho: Density,
    pub t: f64,
    pub step: u64,
    pub record: Record,
    /// Present for the linear model.
    pub frame: Option<Frame>,
    /// Index of the random stream feeding this trajectory.
    pub stream: u64,
}

/// What one step reports back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub feedback: f64,
    pub dxi: f64,
    /// Deviation of the trace from its analytic value before renormalising.
    pub trace_residual: f64,
    pub hermiticity: f64,
}

/// Precomputed operators for one configuration.
#[derive(Debug, Clone)]
pub struct Sme {
    pub space: HilbertSpace,
    pub params: ModelParams,
    pub model: ModelKind,
    pub scheme: Scheme,
    pub dt: f64,
    free_half: Vec<Complex64>,
    to_eigen: [LocalOp; 2],
    from_eigen: [LocalOp; 2],
    /// Eigenvalues of the matter coupling operator and of `a + a^dag`.
    v_m: Vec<f64>,
    mu_c: Vec<f64>,
    /// Coupling phases when `u` is fixed at zero.
    static_phase: Option<Vec<Complex64>>,
    c: DMatrix<Complex64>,
    c_dag_c: DMatrix<Complex64>,
    c_sq: DMatrix<Complex64>,
    x_sq: DMatrix<f64>,
    weights: Vec<f64>,
    frame_step: Option<([[f64; 4]; 4], [f64; 4])>,
    sqrt_two_kappa: f64,
}

impl Sme {
    pub fn new(config: &TrajectoryConfig) -> Result<Self> {
        config.validate()?;
        let p = config.params;
        let matter = match config.model {
            ModelKind::Spin => MatterKind::Spin { n: p.n_spins },
            ModelKind::Linear => MatterKind::TruncatedBoson {
                cutoff: config.boson_dim,
            },
        };
        let space = build_space(matter, config.cavity_dim)?;
        let dt = config.dt;
        let nc = space.cavity_dim;

        let free_half: Vec<Complex64> = (0..space.dim())
            .map(|i| {
                let e = p.omega_r * space.matter_levels[i / nc] + p.delta * (i % nc) as f64;
                Complex64::from_polar(1.0, -0.5 * e * dt)
            })
            .collect();

        let coupling = match config.model {
            ModelKind::Spin => &space.coupling / (p.n_spins as f64).sqrt(),
            ModelKind::Linear => space.coupling.clone(),
        };
        let (v_m, w_m) = HilbertSpace::eigen(&coupling);
        let (mu_c, w_c) = HilbertSpace::eigen(&space.a_sum);
        let to_eigen = [
            LocalOp::matter(&w_m.transpose()),
            LocalOp::cavity(&w_c.transpose()),
        ];
        let from_eigen = [LocalOp::matter(&w_m), LocalOp::cavity(&w_c)];

        let mut sme = Self {
            params: p,
            model: config.model,
            scheme: config.scheme,
            dt,
            free_half,
            to_eigen,
            from_eigen,
            v_m,
            mu_c,
            static_phase: None,
            c: DMatrix::zeros(nc, nc),
            c_dag_c: DMatrix::zeros(nc, nc),
            c_sq: DMatrix::zeros(nc, nc),
            x_sq: &space.x_op * &space.x_op,
            weights: Vec::new(),
            frame_step: None,
            sqrt_two_kappa: (2.0 * p.kappa).sqrt(),
            space,
        };
        let amp = Complex64::from_polar(sme.sqrt_two_kappa, -p.theta);
        sme.c = sme.space.a.map(|x| amp * x);
        sme.c_dag_c = sme.c.adjoint() * &sme.c;
        sme.c_sq = &sme.c * &sme.c;

        let horizon = config.steps().max(1);
        let window = config.kernel.memory_window(config.memory_tol);
        let n_mem = ((window / dt).ceil() as usize).clamp(1, horizon);
        sme.weights = config.kernel.cell_weights(dt, n_mem);

        if config.model == ModelKind::Linear {
            sme.static_phase = Some(sme.coupling_phase(0.0));
            sme.frame_step = Some(frame_propagator(&p, dt));
        }
        Ok(sme)
    }

    pub fn memory_len(&self) -> usize {
        self.weights.len()
    }

    /// Cell-averaged kernel weights used by the feedback convolution.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn coupling_phase(&self, u: f64) -> Vec<Complex64> {
        let g = self.params.g;
        let nc = self.space.cavity_dim;
        (0..self.space.dim())
            .map(|i| {
                let lam = self.v_m[i / nc] * (g * self.mu_c[i % nc] + u);
                Complex64::from_polar(1.0, -lam * self.dt)
            })
            .collect()
    }

    /// Initial conditioned state on stream `stream`.
    pub fn initial_state(&self, initial: InitialState, stream: u64) -> ConditionedState {
        let space = &self.space;
        let rho = match initial {
            InitialState::SpinX => {
                let (vals, vecs) = HilbertSpace::eigen(&space.x_op);
                let top = (0..vals.len())
                    .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))
                    .expect("non-empty spin");
                let mut psi = vec![Complex64::new(0.0, 0.0); space.dim()];
                for m in 0..space.matter_dim {
                    psi[m * space.cavity_dim] = Complex64::new(vecs[(m, top)], 0.0);
                }
                Density::pure(space, &psi)
            }
            _ => Density::basis(space, 0, 0),
        };
        let frame = match (self.model, initial) {
            (ModelKind::Linear, InitialState::Coherent { re, im }) => Some(Frame {
                alpha: Complex64::new(0.0, 0.0),
                beta: Complex64::new(re, im),
            }),
            (ModelKind::Linear, _) => Some(Frame::default()),
            _ => None,
        };
        ConditionedState {
            rho,
            t: 0.0,
            step: 0,
            record: Record::new(self.weights.len()),
            frame,
            stream,
        }
    }

    /// `I_c(t_n) = sqrt(2 kappa) sum_m w_m dxi_{n-1-m}`.
    pub fn feedback_signal(&self, state: &ConditionedState) -> f64 {
        self.sqrt_two_kappa * state.record.convolve(&self.weights)
    }

    /// `<a>` including the frame displacement.
    pub fn cavity_mean(&self, state: &ConditionedState) -> Complex64 {
        let local = state.rho.expect_cavity(&self.space.a);
        local + state.frame.map_or(Complex64::new(0.0, 0.0), |f| f.alpha)
    }

    /// `(<S_x>, <S_x^2>)` for spins, `(<X>, <X^2>)` for the boson.
    pub fn matter_moments(&self, state: &ConditionedState) -> (f64, f64) {
        let x = state.rho.expect_matter(&self.space.x_op).re;
        let x2 = state.rho.expect_matter(&self.x_sq).re;
        match state.frame {
            Some(f) => {
                let s = f.beta.re;
                (x + s, x2 + 2.0 * s * x + s * s)
            }
            None => (x, x2),
        }
    }

    pub fn photons(&self, state: &ConditionedState) -> f64 {
        let a = state.rho.expect_cavity(&self.space.a);
        let n = state.rho.expect_cavity(&(self.space.a.transpose() * &self.space.a)).re;
        match state.frame {
            Some(f) => n + 2.0 * (f.alpha.conj() * a).re + f.alpha.norm_sqr(),
            None => n,
        }
    }

    fn measurement_operator(&self, dy: f64) -> DMatrix<Complex64> {
        let nc = self.space.cavity_dim;
        let dt = self.dt;
        let r = |x: f64| Complex64::new(x, 0.0);
        DMatrix::<Complex64>::identity(nc, nc) - &self.c_dag_c * r(0.5 * dt)
            + &self.c * r(dy)
            + &self.c_sq * r(0.5 * (dy * dy - dt))
    }

    /// Advance by one step with Wiener increment `dw`.
    pub fn step(
        &self,
        state: &mut ConditionedState,
        dw: f64,
        scratch: &mut Density,
    ) -> Result<StepInfo> {
        let p = &self.params;
        let dt = self.dt;
        let feedback = self.feedback_signal(state);
        let x_theta = (Complex64::from_polar(1.0, -p.theta) * self.cavity_mean(state)).re;
        let dxi = self.sqrt_two_kappa * x_theta * dt + 0.5 * dw;
        // Innovation of the local state; the frame part cancels in H[c].
        let c_mean = state.rho.expect_cavity(&self.c);
        let dy = 2.0 * c_mean.re * dt + dw;

        let rho = &mut state.rho;
        rho.phase(&self.free_half);
        let [tm, tc] = &self.to_eigen;
        let [fm, fc] = &self.from_eigen;
        sandwich(&[tm, tc], rho, scratch);
        match &self.static_phase {
            Some(ph) => rho.phase(ph),
            None => rho.phase(&self.coupling_phase(p.gain * feedback)),
        }
        sandwich(&[fm, fc], rho, scratch);
        rho.phase(&self.free_half);
        let unitary_residual = (rho.trace().re - 1.0).abs();

        let trace_residual = match self.scheme {
            Scheme::Kraus => {
                let m = self.measurement_operator(dy);
                let predicted = rho.expect_cavity(&(m.adjoint() * &m)).re;
                sandwich(&[&LocalOp::cavity(&m)], rho, scratch);
                let tr = rho.trace().re;
                if !(predicted > 0.0 && tr > 0.0 && tr.is_finite()) {
                    return Err(Error::StepSize {
                        t: state.t,
                        reason: format!("measurement operator lost positivity (trace {tr})"),
                    });
                }
                rho.scale(1.0 / tr);
                unitary_residual + (tr - predicted).abs() / predicted
            }
            Scheme::EulerMaruyama => {
                let c = LocalOp::cavity(&self.c);
                let cdc = LocalOp::cavity(&self.c_dag_c);
                // c rho, then (c rho)^dag = rho c^dag, then c rho c^dag.
                let mut c_rho = rho.clone();
                c.apply(rho, &mut c_rho);
                let mut rho_cd = c_rho.clone();
                rho_cd.adjoint();
                let mut c_rho_cd = rho.clone();
                c.apply(&rho_cd, &mut c_rho_cd);
                let mut cdc_rho = rho.clone();
                cdc.apply(rho, &mut cdc_rho);
                let mean = 2.0 * c_mean.re;
                let d = rho.dim;
                for i in 0..d {
                    for j in 0..d {
                        let k = i * d + j;
                        let rho_cdc = cdc_rho.data[j * d + i].conj();
                        let lind = c_rho_cd.data[k] - 0.5 * (cdc_rho.data[k] + rho_cdc);
                        let meas = c_rho.data[k] + rho_cd.data[k] - rho.data[k] * mean;
                        rho.data[k] += lind * dt + meas * dw;
                    }
                }
                let tr = rho.trace().re;
                if !(tr > 0.0 && tr.is_finite()) {
                    return Err(Error::StepSize {
                        t: state.t,
                        reason: format!("trace collapsed to {tr}"),
                    });
                }
                rho.scale(1.0 / tr);
                unitary_residual + (tr - 1.0).abs()
            }
        };
        if trace_residual > 1e-3 {
            return Err(Error::StepSize {
                t: state.t,
                reason: format!("trace drift {trace_residual:e} in one step"),
            });
        }
        let hermiticity = rho.hermitize();

        if let (Some(frame), Some((phi, psi))) = (state.frame.as_mut(), &self.frame_step) {
            let v = [frame.alpha.re, frame.alpha.im, frame.beta.re, frame.beta.im];
            let force = p.gain * feedback;
            let mut out = [0.0; 4];
            for r in 0..4 {
                out[r] = (0..4).map(|c| phi[r][c] * v[c]).sum::<f64>() + psi[r] * force;
            }
            frame.alpha = Complex64::new(out[0], out[1]);
            frame.beta = Complex64::new(out[2], out[3]);
            self.recenter(rho, frame, scratch);
        }

        state.record.push(dxi);
        state.step += 1;
        state.t = state.step as f64 * dt;
        Ok(StepInfo {
            feedback,
            dxi,
            trace_residual,
            hermiticity,
        })
    }
}

impl Sme {
    /// Move the local means `<a>` and `<b>` into the frame, so that the
    /// measurement kicks never carry the local state up the Fock ladder.
    fn recenter(&self, rho: &mut Density, frame: &mut Frame, scratch: &mut Density) {
        let b = self.space.x_op.map(|x| Complex64::new(x, 0.0))
            + self.space.iy_op.map(|x| Complex64::new(x, 0.0));
        let a = self.space.a.map(|x| Complex64::new(x, 0.0));
        let mu_a = rho.expect_cavity(&a);
        let mu_b = rho.expect_matter(&b);
        // D(-mu) = exp(mu^* op - mu op^dag).
        let shift = |op: &DMatrix<Complex64>, mu: Complex64| {
            (op * mu.conj() - op.adjoint() * mu).exp()
        };
        let ops = [
            LocalOp::matter(&shift(&b, mu_b)),
            LocalOp::cavity(&shift(&a, mu_a)),
        ];
        sandwich(&[&ops[0], &ops[1]], rho, scratch);
        frame.alpha += mu_a;
        frame.beta += mu_b;
    }
}

/// Exact one-step propagator of the frame `(Re alpha, Im alpha, Re beta,
/// Im beta)` with the feedback force held constant over the step. Returns
/// `e^{A dt}` and the response to a unit force.
fn frame_propagator(p: &ModelParams, dt: f64) -> ([[f64; 4]; 4], [f64; 4]) {
    let mut aug = DMatrix::<f64>::zeros(5, 5);
    let (d, k, g, w) = (p.delta, p.kappa, p.g, p.omega_r);
    aug[(0, 0)] = -k;
    aug[(0, 1)] = d;
    aug[(1, 0)] = -d;
    aug[(1, 1)] = -k;
    aug[(1, 2)] = -2.0 * g;
    aug[(2, 3)] = w;
    aug[(3, 2)] = -w;
    aug[(3, 0)] = -2.0 * g;
    aug[(3, 4)] = -1.0;
    let e = (aug * dt).exp();
    let mut phi = [[0.0; 4]; 4];
    let mut psi = [0.0; 4];
    for r in 0..4 {
        for c in 0..4 {
            phi[r][c] = e[(r, c)];
        }
        psi[r] = e[(r, 4)];
    }
    (phi, psi)
}

/// Advance `state` by one step; see [`Sme::step`].
pub fn sme_step(
    sme: &Sme,
    state: &mut ConditionedState,
    dw: f64,
    scratch: &mut Density,
) -> Result<StepInfo> {
    sme.step(state, dw, scratch)
}

/// Sampled conditional expectation values of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryOutput {
    pub seed: u64,
    pub stream: u64,
    pub times: Vec<f64>,
    /// `<S_x>_c` or `<X>_c`.
    pub x: Vec<f64>,
    /// `<S_x^2>_c` or `<X^2>_c`.
    pub x2: Vec<f64>,
    pub photons: Vec<f64>,
    pub purity: Vec<f64>,
    pub feedback: Vec<f64>,
    pub max_trace_residual: f64,
    pub max_hermiticity: f64,
    pub min_eigenvalue: f64,
    /// Largest population seen on the top matter and cavity levels.
    pub top_population: f64,
    /// False when the truncation was visibly populated.
    pub truncation_valid: bool,
    /// Set when a step failed; the series stop there.
    pub error: Option<String>,
}

impl TrajectoryOutput {
    /// Time average of `x` over the last `fraction` of the samples.
    pub fn tail_mean(&self, fraction: f64) -> f64 {
        tail(&self.x, fraction)
    }

    pub fn tail_mean_sq(&self, fraction: f64) -> f64 {
        tail(&self.x2, fraction)
    }
}

fn tail(v: &[f64], fraction: f64) -> f64 {
    let start = ((1.0 - fraction) * v.len() as f64).floor() as usize;
    let s = &v[start.min(v.len().saturating_sub(1))..];
    s.iter().sum::<f64>() / s.len() as f64
}

/// Truncation counts as valid while the top levels hold less than this.
pub const TRUNCATION_LIMIT: f64 = 1e-6;

/// Negative eigenvalues beyond this abort the run.
pub const EIGENVALUE_FLOOR: f64 = -1e-7;

/// Integrate one trajectory on random stream `stream` of `config.seed`.
pub fn run_stream(config: &TrajectoryConfig, stream: u64) -> Result<TrajectoryOutput> {
    let sme = Sme::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let sqrt_dt = config.dt.sqrt();
    let mut state = sme.initial_state(config.initial, stream);
    let mut scratch = state.rho.clone();
    let mut out = TrajectoryOutput {
        seed: config.seed,
        stream,
        times: Vec::new(),
        x: Vec::new(),
        x2: Vec::new(),
        photons: Vec::new(),
        purity: Vec::new(),
        feedback: Vec::new(),
        max_trace_residual: 0.0,
        max_hermiticity: 0.0,
        min_eigenvalue: state.rho.min_eigenvalue(),
        top_population: 0.0,
        truncation_valid: true,
        error: None,
    };
    let record = |out: &mut TrajectoryOutput, state: &ConditionedState, fb: f64| {
        let (x, x2) = sme.matter_moments(state);
        out.times.push(state.t);
        out.x.push(x);
        out.x2.push(x2);
        out.photons.push(sme.photons(state));
        out.purity.push(state.rho.purity());
        out.feedback.push(fb);
        let (tm, tc) = state.rho.top_populations();
        // The top spin level is physical; only truncated modes count.
        let top = if sme.space.is_spin() { tc } else { tm.max(tc) };
        out.top_population = out.top_population.max(top);
    };
    record(&mut out, &state, 0.0);
    for n in 1..=config.steps() {
        let z: f64 = StandardNormal.sample(&mut rng);
        let dw = sqrt_dt * z;
        let info = match sme.step(&mut state, dw, &mut scratch) {
            Ok(i) => i,
            Err(e) => {
                out.error = Some(e.to_string());
                break;
            }
        };
        out.max_trace_residual = out.max_trace_residual.max(info.trace_residual);
        out.max_hermiticity = out.max_hermiticity.max(info.hermiticity);
        if n % config.check_every == 0 {
            let ev = state.rho.min_eigenvalue();
            out.min_eigenvalue = out.min_eigenvalue.min(ev);
            if ev < EIGENVALUE_FLOOR {
                out.error = Some(
                    Error::StepSize {
                        t: state.t,
                        reason: format!("negative eigenvalue {ev:e}"),
                    }
                    .to_string(),
                );
                record(&mut out, &state, info.feedback);
                break;
            }
        }
        if n % config.sample_every == 0 {
            record(&mut out, &state, info.feedback);
        }
    }
    out.truncation_valid = out.top_population < TRUNCATION_LIMIT;
    Ok(out)
}

/// [`run_stream`] on stream 0.
pub fn run_trajectory(config: &TrajectoryConfig) -> Result<TrajectoryOutput> {
    run_stream(config, 0)
}

/// Mean and standard error over trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub sem: f64,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            sem: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleOutput {
    pub times: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub std_x: Vec<f64>,
    pub mean_abs_x: Vec<f64>,
    pub mean_x2: Vec<f64>,
    pub mean_photons: Vec<f64>,
    /// Tail-window time averages, one value per trajectory, then combined.
    pub steady_x: Estimate,
    pub steady_abs_x: Estimate,
    pub steady_x2: Estimate,
    pub tail_fraction: f64,
    pub n_traj: usize,
    pub n_failed: usize,
    pub all_truncations_valid: bool,
    pub trajectories: Vec<TrajectoryOutput>,
}

/// `n_traj` independent trajectories on streams `0..n_traj`, reduced in
/// stream order.
pub fn run_ensemble(
    config: &TrajectoryConfig,
    n_traj: usize,
    tail_fraction: f64,
) -> Result<EnsembleOutput> {
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParameter("tail fraction must lie in (0, 1]".into()));
    }
    config.validate()?;
    let runs: Vec<TrajectoryOutput> = (0..n_traj as u64)
        .into_par_iter()
        .map(|s| run_stream(config, s))
        .collect::<Result<_>>()?;
    let complete: Vec<&TrajectoryOutput> = runs.iter().filter(|r| r.error.is_none()).collect();
    if complete.is_empty() {
        return Err(Error::InsufficientData("every trajectory failed".into()));
    }
    let len = complete.iter().map(|r| r.times.len()).min().unwrap_or(0);
    let n = complete.len() as f64;
    let mut mean_x = vec![0.0; len];
    let mut std_x = vec![0.0; len];
    let mut mean_abs_x = vec![0.0; len];
    let mut mean_x2 = vec![0.0; len];
    let mut mean_photons = vec![0.0; len];
    for r in &complete {
        for i in 0..len {
            mean_x[i] += r.x[i] / n;
            mean_abs_x[i] += r.x[i].abs() / n;
            mean_x2[i] += r.x2[i] / n;
            mean_photons[i] += r.photons[i] / n;
        }
    }
    for r in &complete {
        for i in 0..len {
            std_x[i] += (r.x[i] - mean_x[i]).powi(2) / n;
        }
    }
    std_x.iter_mut().for_each(|v| *v = v.sqrt());
    let steady: Vec<f64> = complete.iter().map(|r| r.tail_mean(tail_fraction)).collect();
    let steady_abs: Vec<f64> = steady.iter().map(|v| v.abs()).collect();
    let steady_sq: Vec<f64> = complete.iter().map(|r| r.tail_mean_sq(tail_fraction)).collect();
    Ok(EnsembleOutput {
        times: complete[0].times[..len].to_vec(),
        mean_x,
        std_x,
        mean_abs_x,
        mean_x2,
        mean_photons,
        steady_x: Estimate::of(&steady),
        steady_abs_x: Estimate::of(&steady_abs),
        steady_x2: Estimate::of(&steady_sq),
        tail_fraction,
        n_traj,
        n_failed: runs.len() - complete.len(),
        all_truncations_valid: complete.iter().all(|r| r.truncation_valid),
        trajectories: runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spin_config(gain: f64, kappa: f64) -> TrajectoryConfig {
        let p = ModelParams::new(2.0, kappa, 0.5).unwrap().with_gain(gain);
        let k = FeedbackKernel::normalized_power_law(1.0, 1.0).unwrap();
        let mut c = TrajectoryConfig::new(ModelKind::Spin, p, k, 1.0);
        c.cavity_dim = 5;
        c
    }

    #[test]
    fn feedback_of_empty_record_is_zero() {
        let c = spin_config(1.0, 1.0);
        let sme = Sme::new(&c).unwrap();
        let s = sme.initial_state(InitialState::Ground, 0);
        assert_eq!(sme.feedback_signal(&s), 0.0);
    }

    #[test]
    fn instantaneous_feedback_sifts_the_last_increment() {
        let mut c = spin_config(1.0, 0.5);
        c.kernel = FeedbackKernel::instantaneous(3.0).unwrap();
        let sme = Sme::new(&c).unwrap();
        let mut s = sme.initial_state(InitialState::Ground, 0);
        s.record.push(0.02);
        let want = (2.0f64 * 0.5).sqrt() * 3.0 * 0.02 / c.dt;
        assert!((sme.feedback_signal(&s) - want).abs() < 1e-12);
    }

    #[test]
    fn constant_record_reproduces_zero_frequency_weight() {
        let mut c = spin_config(1.0, 1.0);
        c.kernel = FeedbackKernel::exponential(2.0, 3.0).unwrap();
        c.memory_tol = 1e-9;
        c.t_end = 30.0;
        let sme = Sme::new(&c).unwrap();
        let mut s = sme.initial_state(InitialState::Ground, 0);
        let rate = 0.7;
        for _ in 0..sme.memory_len() {
            s.record.push(rate * c.dt);
        }
        let want = 2f64.sqrt() * rate * 1.5;
        assert!((sme.feedback_signal(&s) - want).abs() < 1e-8 * want);
    }

    #[test]
    fn unitary_limit_keeps_purity() {
        let mut c = spin_config(0.0, 0.0);
        c.initial = InitialState::SpinX;
        let sme = Sme::new(&c).unwrap();
        let mut s = sme.initial_state(c.initial, 0);
        let mut scratch = s.rho.clone();
        for _ in 0..1000 {
            sme.step(&mut s, 0.0, &mut scratch).unwrap();
        }
        assert!((s.rho.purity() - 1.0).abs() < 1e-8);
        assert!((s.rho.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_output() {
        let mut c = spin_config(0.5, 1.0);
        c.seed = 7;
        let a = run_trajectory(&c).unwrap();
        let b = run_trajectory(&c).unwrap();
        assert_eq!(a, b);
        let other = run_stream(&c, 1).unwrap();
        assert_ne!(a.x, other.x);
    }

    #[test]
    fn rejects_mismatched_initial_state() {
        let mut c = spin_config(0.5, 1.0);
        c.initial = InitialState::Coherent { re: 1.0, im: 0.0 };
        assert!(Sme::new(&c).is_err());
    }
}

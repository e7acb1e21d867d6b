// SPDX-License-Identifier: Apache-2.0

use fbdicke::trajectory::{
    run_ensemble, run_stream, run_trajectory, sme_step, InitialState, ModelKind, Scheme, Sme,
    TrajectoryConfig,
};
use fbdicke::{FeedbackKernel, ModelParams};
use nalgebra::DMatrix;
use num_complex::Complex64;

type M = DMatrix<Complex64>;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn destroy(n: usize) -> M {
    M::from_fn(n, n, |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { c(0.0) })
}

/// Spin one half with the cavity, operators built from Pauli matrices.
struct Dense {
    h: M,
    l: M,
    sx: M,
    photons: M,
}

fn dense_spin_half(p: &ModelParams, nc: usize) -> Dense {
    let sx2 = M::from_row_slice(2, 2, &[c(0.0), c(0.5), c(0.5), c(0.0)]);
    let sz2 = M::from_row_slice(2, 2, &[c(-0.5), c(0.0), c(0.0), c(0.5)]);
    let a = destroy(nc);
    let ic = M::identity(nc, nc);
    let is = M::identity(2, 2);
    let a_full = is.kronecker(&a);
    let sx = sx2.kronecker(&ic);
    let sz = sz2.kronecker(&ic);
    let ad = a_full.adjoint();
    let h = &sz * c(p.omega_r)
        + &ad * &a_full * c(p.delta)
        + &sx * (&a_full + &ad) * c(2.0 * p.g);
    let l = &a_full * Complex64::from_polar((2.0 * p.kappa).sqrt(), -p.theta);
    Dense {
        h,
        l,
        photons: &ad * &a_full,
        sx,
    }
}

fn lindblad(d: &Dense, rho: &M) -> M {
    let i = Complex64::new(0.0, 1.0);
    let ld = d.l.adjoint();
    let ldl = &ld * &d.l;
    (&d.h * rho - rho * &d.h) * (-i) + &d.l * rho * &ld - (&ldl * rho + rho * &ldl) * c(0.5)
}

fn rk4(d: &Dense, rho: &M, dt: f64) -> M {
    let k1 = lindblad(d, rho);
    let k2 = lindblad(d, &(rho + &k1 * c(0.5 * dt)));
    let k3 = lindblad(d, &(rho + &k2 * c(0.5 * dt)));
    let k4 = lindblad(d, &(rho + &k3 * c(dt)));
    rho + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(dt / 6.0)
}

fn spin_x_state(nc: usize) -> M {
    let n = 2 * nc;
    let mut psi = vec![c(0.0); n];
    psi[0] = c(std::f64::consts::FRAC_1_SQRT_2);
    psi[nc] = c(std::f64::consts::FRAC_1_SQRT_2);
    M::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
}

fn expect(op: &M, rho: &M) -> f64 {
    (op * rho).trace().re
}

fn base_config(nc: usize, t_end: f64) -> TrajectoryConfig {
    let p = ModelParams::new(2.0, 1.0, 0.5).unwrap();
    let k = FeedbackKernel::normalized_power_law(1.0, 1.0).unwrap();
    let mut cfg = TrajectoryConfig::new(ModelKind::Spin, p, k, t_end);
    cfg.cavity_dim = nc;
    cfg.initial = InitialState::SpinX;
    cfg.sample_every = 50;
    cfg
}

#[test]
fn noiseless_euler_step_follows_the_lindblad_equation() {
    let nc = 6;
    let mut cfg = base_config(nc, 3.0);
    cfg.scheme = Scheme::EulerMaruyama;
    cfg.dt = 2e-4;
    let sme = Sme::new(&cfg).unwrap();
    let mut st = sme.initial_state(cfg.initial, 0);
    let mut scratch = st.rho.clone();
    let d = dense_spin_half(&cfg.params, nc);
    let mut rho = spin_x_state(nc);
    assert!((st.rho.to_matrix() - &rho).norm() < 1e-12);
    for _ in 0..cfg.steps() {
        sme_step(&sme, &mut st, 0.0, &mut scratch).unwrap();
        rho = rk4(&d, &rho, cfg.dt);
    }
    let (x, _) = sme.matter_moments(&st);
    let err = (st.rho.to_matrix() - &rho).norm();
    assert!(err < 5e-3, "state error {err}");
    assert!((x - expect(&d.sx, &rho)).abs() < 2e-3);
    assert!((sme.photons(&st) - expect(&d.photons, &rho)).abs() < 2e-3);
}

#[test]
fn ensemble_average_matches_the_lindblad_solution() {
    let nc = 6;
    let cfg = base_config(nc, 4.0);
    let n_traj = 400;
    let ens = run_ensemble(&cfg, n_traj, 0.5).unwrap();
    assert_eq!(ens.n_failed, 0);
    let d = dense_spin_half(&cfg.params, nc);
    let mut rho = spin_x_state(nc);
    let mut t = 0.0;
    let mut worst: f64 = 0.0;
    for (i, &ts) in ens.times.iter().enumerate() {
        while t < ts - 1e-12 {
            rho = rk4(&d, &rho, cfg.dt);
            t += cfg.dt;
        }
        let sem = ens.std_x[i] / (n_traj as f64).sqrt();
        let diff = (ens.mean_x[i] - expect(&d.sx, &rho)).abs();
        if sem > 1e-12 {
            worst = worst.max(diff / sem);
        } else {
            assert!(diff < 1e-9);
        }
    }
    // Many times are compared, so allow a little more than 3 sigma.
    assert!(worst < 4.0, "worst deviation {worst} sigma");
}

#[test]
fn conditioned_invariants_hold_at_default_step() {
    let mut cfg = base_config(8, 5.0);
    cfg.params = cfg.params.with_gain(0.5);
    let out = run_trajectory(&cfg).unwrap();
    assert!(out.error.is_none());
    let steps = cfg.steps() as f64;
    assert!(out.max_trace_residual < 1e-4 * cfg.dt * steps);
    assert!(out.max_hermiticity < 1e-9);
    assert!(out.min_eigenvalue > -1e-7);
    let n = out.times.len();
    for v in [&out.x, &out.x2, &out.photons, &out.purity, &out.feedback] {
        assert_eq!(v.len(), n);
    }
    assert!(out.x.iter().all(|x| x.abs() <= 0.5 + 1e-9));
}

#[test]
fn single_trajectory_ensemble_reduces_to_the_run() {
    let cfg = base_config(5, 1.0);
    let ens = run_ensemble(&cfg, 1, 0.5).unwrap();
    let one = run_stream(&cfg, 0).unwrap();
    assert_eq!(ens.mean_x, one.x);
    assert_eq!(ens.steady_x.mean, one.tail_mean(0.5));
    assert!(ens.std_x.iter().all(|&s| s == 0.0));
}

#[test]
fn linear_frame_tracks_a_free_coherent_state() {
    // Without cavity coupling a coherent boson only rotates, and the frame
    // should carry it with the fluctuation state left in the vacuum.
    let p = ModelParams::new(2.0, 1.0, 0.0).unwrap();
    let k = FeedbackKernel::normalized_power_law(1.0, 1.0).unwrap();
    let mut cfg = TrajectoryConfig::new(ModelKind::Linear, p, k, 2.0);
    cfg.boson_dim = 4;
    cfg.cavity_dim = 4;
    cfg.initial = InitialState::Coherent { re: 1.5, im: 0.0 };
    cfg.sample_every = 1;
    let out = run_trajectory(&cfg).unwrap();
    for (t, x) in out.times.iter().zip(&out.x) {
        assert!((x - 1.5 * t.cos()).abs() < 1e-9, "t = {t}: {x}");
    }
    assert!(out.truncation_valid);
}

#[test]
fn linear_feedback_is_pure_displacement() {
    // With a gain the fluctuation state must not care: a run with and
    // without feedback agrees on the quadrature variance.
    let p = ModelParams::new(2.0, 1.0, 0.3).unwrap();
    let k = FeedbackKernel::exponential(1.0, 1.0).unwrap();
    let mut cfg = TrajectoryConfig::new(ModelKind::Linear, p, k, 3.0);
    cfg.boson_dim = 6;
    cfg.cavity_dim = 5;
    cfg.seed = 11;
    let a = run_trajectory(&cfg).unwrap();
    cfg.params = cfg.params.with_gain(0.2);
    let b = run_trajectory(&cfg).unwrap();
    let var = |o: &fbdicke::trajectory::TrajectoryOutput| -> Vec<f64> {
        o.x.iter().zip(&o.x2).map(|(x, x2)| x2 - x * x).collect()
    };
    for (va, vb) in var(&a).iter().zip(var(&b)) {
        assert!((va - vb).abs() < 1e-9);
    }
    assert_ne!(a.x, b.x);
}

// SPDX-License-Identifier: Apache-2.0

//! Turns a validated config into result tables.

use fbdicke::criticality::{default_ratios, fit_exponent, sweep_variance, window_sensitivity};
use fbdicke::meanfield::{bifurcation_table, meanfield_threshold, ScanOptions};
use fbdicke::spectral::{
    critical_coupling, critical_gain, SeriesLabel, SeriesValues, SpectrumSeries,
};
use fbdicke::trajectory::{run_ensemble, run_stream, TrajectoryConfig};
use fbdicke::{FeedbackKernel, ModelParams};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Kind};
use crate::table::{Cell, Table};

/// Seed of the `index`-th grid point.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointStatus {
    pub index: usize,
    pub label: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub points: Vec<PointStatus>,
}

impl Outcome {
    pub fn failed(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// One combination of the parameter axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub index: usize,
    /// `(axis, value)` for every axis present in the grid.
    pub coords: Vec<(&'static str, f64)>,
    pub params: ModelParams,
    pub kernel: FeedbackKernel,
    pub gain_ratio: Option<f64>,
}

impl Point {
    pub fn label(&self) -> String {
        self.coords
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parameters with the gain resolved against the threshold.
    fn resolved(&self) -> Result<ModelParams, String> {
        match self.gain_ratio {
            None => Ok(self.params),
            Some(r) => critical_gain(&self.params, &self.kernel)
                .map(|gc| self.params.with_gain(r * gc))
                .map_err(|e| e.to_string()),
        }
    }

    fn meta(&self, seed: Option<u64>) -> Vec<(String, String)> {
        let mut m = vec![("point".to_string(), self.index.to_string())];
        for (k, v) in &self.coords {
            m.push((k.to_string(), v.to_string()));
        }
        if let Some(s) = seed {
            m.push(("seed".into(), s.to_string()));
        }
        m
    }
}

/// Cartesian product of the parameter axes in a fixed order:
/// s, kappa, theta, g_ratio, then gain_ratio when `with_gain`.
pub fn expand(cfg: &ExperimentConfig, with_gain: bool) -> Result<Vec<Point>, String> {
    let g = &cfg.grid;
    let mut axes: Vec<(&'static str, Vec<f64>)> = Vec::new();
    for (name, axis) in [("s", &g.s), ("kappa", &g.kappa), ("theta", &g.theta), ("g_ratio", &g.g_ratio)] {
        if let Some(a) = axis {
            axes.push((name, a.values()));
        }
    }
    if with_gain {
        if let Some(a) = &g.gain_ratio {
            axes.push(("gain_ratio", a.values()));
        }
    }
    let total: usize = axes.iter().map(|a| a.1.len()).product();
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut coords = Vec::with_capacity(axes.len());
        for (name, vals) in axes.iter().rev() {
            coords.push((*name, vals[rem % vals.len()]));
            rem /= vals.len();
        }
        coords.reverse();
        let mut params = cfg.params;
        let mut kernel = cfg.kernel;
        let mut gain_ratio = None;
        for &(name, v) in &coords {
            match name {
                "s" => {
                    if let FeedbackKernel::PowerLaw { t0, .. } = kernel {
                        kernel = FeedbackKernel::normalized_power_law(v, t0).map_err(|e| e.to_string())?;
                    }
                }
                "kappa" => params = params.with_kappa(v),
                "theta" => params = params.with_theta(v),
                "g_ratio" => {
                    let gc = critical_coupling(&params).map_err(|e| e.to_string())?;
                    params = params.with_g(v * gc);
                }
                "gain_ratio" => gain_ratio = Some(v),
                _ => unreachable!(),
            }
        }
        params.validate().map_err(|e| e.to_string())?;
        points.push(Point {
            index,
            coords,
            params,
            kernel,
            gain_ratio,
        });
    }
    Ok(points)
}

fn header(cfg: &ExperimentConfig, seed: u64) -> Vec<(String, String)> {
    let mut m = vec![
        ("tool".to_string(), format!("fbdicke {}", env!("CARGO_PKG_VERSION"))),
        ("kind".to_string(), cfg.kind.name().to_string()),
    ];
    if !cfg.name.is_empty() {
        m.push(("name".into(), cfg.name.clone()));
    }
    m.push(("seed".into(), seed.to_string()));
    m.push(("params".into(), serde_json::to_string(&cfg.params).unwrap()));
    m.push(("kernel".into(), serde_json::to_string(&cfg.kernel).unwrap()));
    m
}

fn coord_columns(points: &[Point]) -> Vec<&'static str> {
    points.first().map(|p| p.coords.iter().map(|c| c.0).collect()).unwrap_or_default()
}

fn coord_cells(p: &Point) -> Vec<Cell> {
    p.coords.iter().map(|c| c.1.into()).collect()
}

fn columns<'a>(lead: &[&'a str], coords: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    lead.iter().chain(coords).chain(tail).copied().collect()
}

fn opt(x: Option<f64>) -> Cell {
    x.map(Cell::Num).unwrap_or_else(|| Cell::Text(String::new()))
}

fn status(err: &Option<String>) -> Cell {
    match err {
        None => "ok".into(),
        Some(e) => format!("error: {e}").into(),
    }
}

/// Run the experiment. `seed` overrides the config seed.
pub fn run(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, String> {
    match cfg.kind {
        Kind::GcritScan => gcrit_scan(cfg, seed),
        Kind::Spectrum => spectrum(cfg, seed),
        Kind::VarianceSweep => variance_sweep(cfg, seed),
        Kind::Exponent => exponent(cfg, seed),
        Kind::Trajectory => trajectory(cfg, seed),
        Kind::Ensemble => ensemble(cfg, seed),
        Kind::MeanfieldScan => meanfield_scan(cfg, seed),
    }
}

fn gcrit_scan(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, String> {
    let points = expand(cfg, false)?;
    let coords = coord_columns(&points);
    let cols = columns(&["point"], &coords, &["g", "h_zero", "g_crit", "gain_crit", "status", "curve"]);
    let x = cols.iter().position(|c| *c == "kappa").unwrap_or(0);
    let y = cols.iter().position(|c| *c == "gain_crit").unwrap();
    let curve = cols.len() - 1;
    let mut table = Table::new("gcrit", &cols)
        .meta(&header(cfg, seed))
        .with_plot(x, &[y], coords.contains(&"kappa"), false)
        .grouped_by(curve);
    let mut statuses = Vec::new();
    for p in &points {
        let gc = critical_gain(&p.params, &p.kernel);
        let err = gc.as_ref().err().map(|e| e.to_string());
        let others: Vec<String> = p
            .coords
            .iter()
            .filter(|c| c.0 != "kappa")
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let mut row: Vec<Cell> = vec![p.index.into()];
        row.extend(coord_cells(p));
        row.extend([
            p.params.g.into(),
            p.kernel.zero_frequency().into(),
            opt(critical_coupling(&p.params).ok()),
            opt(gc.ok()),
            status(&err),
            others.join(" ").into(),
        ]);
        table.push(row);
        statuses.push(PointStatus {
            index: p.index,
            label: p.label(),
            error: err,
        });
    }
    Ok(Outcome {
        tables: vec![table],
        points: statuses,
    })
}

fn spectrum(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, String> {
    let points = expand(cfg, true)?;
    let grid = cfg.grid.omega.as_ref().expect("validated").values();
    let labels: Vec<SeriesLabel> = match &cfg.grid.series {
        Some(v) => v.iter().map(|n| SeriesLabel::parse(n).expect("validated")).collect(),
        None => vec![SeriesLabel::VarianceIntegrand],
    };
    let coords = coord_columns(&points);
    let cols = columns(&["point"], &coords, &["g", "gain", "series", "peak_omega", "status"]);
    let mut peaks = Table::new("peaks", &cols).meta(&header(cfg, seed));
    let mut tables = Vec::new();
    let mut statuses = Vec::new();
    for p in &points {
        let mut err = None;
        let params = p.resolved();
        for &label in &labels {
            let series = params
                .clone()
                .and_then(|q| SpectrumSeries::sample(&q, &p.kernel, &grid, label).map_err(|e| e.to_string()));
            let peak = series.as_ref().ok().and_then(|s| s.peak_frequency());
            match &series {
                Ok(s) => {
                    let mut meta = header(cfg, seed);
                    meta.extend(p.meta(None));
                    meta.push(("series".into(), label.name().into()));
                    meta.push(("gain".into(), params.as_ref().unwrap().gain.to_string()));
                    let name = format!("spectrum_{}_{}", label.name(), p.index);
                    let t = match &s.values {
                        SeriesValues::Real(v) => {
                            let mut t = Table::new(name, &["omega", "value"])
                                .meta(&meta)
                                .with_plot(0, &[1], false, false);
                            for (w, x) in s.omega.iter().zip(v) {
                                t.push(vec![(*w).into(), (*x).into()]);
                            }
                            t
                        }
                        SeriesValues::Complex(v) => {
                            let mut t = Table::new(name, &["omega", "re", "im"])
                                .meta(&meta)
                                .with_plot(0, &[1, 2], false, false);
                            for (w, z) in s.omega.iter().zip(v) {
                                t.push(vec![(*w).into(), z.re.into(), z.im.into()]);
                            }
                            t
                        }
                    };
                    tables.push(t);
                }
                Err(e) => err = Some(e.clone()),
            }
            let mut row: Vec<Cell> = vec![p.index.into()];
            row.extend(coord_cells(p));
            row.extend([
                p.params.g.into(),
                opt(params.as_ref().ok().map(|q| q.gain)),
                label.name().into(),
                opt(peak),
                status(&series.as_ref().err().cloned()),
            ]);
            peaks.push(row);
        }
        statuses.push(PointStatus {
            index: p.index,
            label: p.label(),
            error: err,
        });
    }
    tables.insert(0, peaks);
    Ok(Outcome {
        tables,
        points: statuses,
    })
}

fn sweep_ratios(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut r: Vec<f64> = match (&cfg.grid.gain_ratio, &cfg.grid.epsilon) {
        (Some(a), _) => a.values(),
        (None, Some(e)) => e.values().iter().map(|x| 1.0 - x).collect(),
        (None, None) => default_ratios(),
    };
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

fn sweep_table(cfg: &ExperimentConfig, seed: u64, coords: &[&'static str]) -> Table {
    let cols = columns(&["point"], coords, &["ratio", "epsilon", "gain", "variance", "status", "curve"]);
    let n = cols.len();
    Table::new("sweep", &cols)
        .meta(&header(cfg, seed))
        .with_plot(n - 5, &[n - 3], true, true)
        .grouped_by(n - 1)
}

fn variance_sweep(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, String> {
    let points = expand(cfg, false)?;
    let ratios = sweep_ratios(cfg);
    let opts = cfg.numerics.variance.options();
    let mut table = sweep_table(cfg, seed, &coord_columns(&points));
    let mut statuses = Vec::new();
    for p in &points {
        let err = push_sweep(&mut table, p, &ratios, &opts).err();
        statuses.push(PointStatus {
            index: p.index,
            label: p.label(),
            error: err,
        });
    }
    Ok(Outcome {
        tables: vec![table],
        points: statuses,
    })
}

/// Append one sweep; returns the finite `(ratio, variance)` data.
fn push_sweep(
    table: &mut Table,
    p: &Point,
    ratios: &[f64],
    opts: &fbdicke::spectral::VarianceOptions,
) -> Result<Vec<(f64, f64)>, String> {
    let sweep = sweep_variance(&p.params, &p.kernel, ratios, opts).map_err(|e| e.to_string())?;
    let mut failures = 0;
    for pt in &sweep.points {
        let err = pt.variance.as_ref().err().map(|e| e.to_string());
        failures += err.is_some() as usize;
        let mut row: Vec<Cell> = vec![p.index.into()];
        row.extend(coord_cells(p));
        row.extend([
            pt.ratio.into(),
            (1.0 - pt.ratio).into(),
            pt.gain.into(),
            opt(pt.variance.as_ref().ok().copied()),
            status(&err),
            p.label().into(),
        ]);
        table.push(row);
    }
    if failures > 0 {
        return Err(format!("{failures} of {} sweep points failed", sweep.points.len()));
    }
    Ok(sweep.data())
}

fn exponent(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, String> {
    let points = expand(cfg, false)?;
    let ratios = sweep_ratios(cfg);
    let vopts = cfg.numerics.variance.options();
    let fopts = cfg.numerics.fit.options();
    let coords = coord_columns(&points);
    let mut sweeps = sweep_table(cfg, seed, &coords);
    let cols = columns(
        &["point"],
        &coords,
        &["gain_crit", "alpha", "a", "b", "residual", "converged", "n_points", "status"],
    );
    let x = cols.iter().position(|c| *c == "s").unwrap_or(0);
    let mut alpha = Table::new("alpha", &cols)
        .meta(&header(cfg, seed))
        .with_plot(x, &[cols.len() - 7], false, false);
    let wcols = columns(&["point"], &coords, &["window", "alpha"]);
    let mut windows = Table::new("alpha_windows", &wcols).meta(&header(cfg, seed));
    let mut statuses = Vec::new();
    for p in &points {
        let data = push_sweep(&mut sweeps, p, &ratios, &vopts);
        // A fit over the surviving points is still reported when some fail.
        let usable: Vec<(f64, f64)> = match &data {
            Ok(d) => d.clone(),
            Err(_) => sweeps
                .rows
                .iter()
                .filter(|r| r[0] == Cell::Int(p.index as i64))
                .filter_map(|r| {
                    let n = r.len();
                    Some((r[n - 6].as_f64()?, r[n - 3].as_f64()?))
                })
                .collect(),
        };
        let fit = fit_exponent(&usable, &fopts).map_err(|e| e.to_string());
        let mut err = data.err();
        if let (None, Err(e)) = (&err, &fit) {
            err = Some(e.clone());
        }
        if let (None, Ok(f)) = (&err, &fit) {
            if !f.converged {
                err = Some(format!("fit did not converge (alpha = {})", f.alpha));
            }
        }
        let gc = critical_gain(&p.params, &p.kernel).ok();
        let f = fit.as_ref().ok();
        let mut row: Vec<Cell> = vec![p.index.into()];
        row.extend(coord_cells(p));
        row.extend([
            opt(gc),
            opt(f.map(|f| f.alpha)),
            opt(f.map(|f| f.a)),
            opt(f.map(|f| f.b)),
            opt(f.map(|f| f.residual)),
            f.map(|f| f.converged).unwrap_or(false).into(),
            usable.len().into(),
            status(&err),
        ]);
        alpha.push(row);
        if let Some(ws) = &cfg.numerics.fit.windows {
            for (w, a) in window_sensitivity(&usable, ws, &fopts) {
                let mut row: Vec<Cell> = vec![p.index.into()];
                row.extend(coord_cells(p));
                row.extend([w.into(), a.into()]);
                windows.push(row);
            }
        }
        statuses.push(PointStatus {
            index: p.index,
            label: p.label(),
            error: err,
        });
    }
    let mut tables = vec![alpha, sweeps];
    if cfg.numerics.fit.windows.is_some() {
        tables.push(windows);
    }
    Ok(Outcome {
        tables,
        points: statuses,
    })
}

fn trajectory_config(cfg: &ExperimentConfig, params: ModelParams, kernel: FeedbackKernel, seed: u64) -> TrajectoryConfig {
    let n = &cfg.numerics.trajectory;
    let mut t = TrajectoryConfig::new(n.model, params, kernel, n.t_end.expect("validated"));
    t.seed = seed;
    t.scheme = n.scheme;
    t.initial = n.initial.unwrap_or_default();
    macro_rules! take {
        ($($f:ident),*) => {$(if let Some(v) = n.$f { t.$f = v; })*};
    }
    take!(dt, cavity_dim, boson_dim, sample_every, memory_tol, check_every);
    t
}

fn per_point<T: Send>(
    points: &[Point],
    f: impl Fn(&Point) -> T + Sync + Send,
) -> Vec<T> {
    points.par_iter().map(f).collect()
}

fn trajectory(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, String> {
    let points = expand(cfg, true)?;
    let tail = cfg.numerics.trajectory.tail.unwrap_or(0.5);
    let runs = per_point(&points, |p| {
        let s = point_seed(seed, p.index);
        let params = p.resolved()?;
        let tc = trajectory_config(cfg, params, p.kernel, s);
        tc.validate().map_err(|e| e.to_string())?;
        run_stream(&tc, 0).map(|o| (s, params, o)).map_err(|e| e.to_string())
    });
    let coords = coord_columns(&points);
    let cols = columns(
        &["point"],
        &coords,
        &[
            "seed", "gain", "tail_mean_x", "tail_mean_abs_x", "max_trace_residual", "max_hermiticity",
            "min_eigenvalue", "top_population", "truncation_valid", "status",
        ],
    );
    let mut summary = Table::new("summary", &cols).meta(&header(cfg, seed));
    let mut tables = Vec::new();
    let mut statuses = Vec::new();
    for (p, run) in points.iter().zip(runs) {
        let mut row: Vec<Cell> = vec![p.index.into()];
        row.extend(coord_cells(p));
        let err = match run {
            Ok((s, params, o)) => {
                let mut meta = header(cfg, seed);
                meta.extend(p.meta(Some(s)));
                meta.push(("gain".into(), params.gain.to_string()));
                let mut t = Table::new(
                    format!("trajectory_{}", p.index),
                    &["t", "x", "x2", "photons", "purity", "feedback"],
                )
                .meta(&meta)
                .with_plot(0, &[1], false, false);
                for i in 0..o.times.len() {
                    t.push(vec![
                        o.times[i].into(),
                        o.x[i].into(),
                        o.x2[i].into(),
                        o.photons[i].into(),
                        o.purity[i].into(),
                        o.feedback[i].into(),
                    ]);
                }
                tables.push(t);
                let n0 = ((1.0 - tail) * o.x.len() as f64).floor() as usize;
                let tail_abs = o.x[n0..].iter().map(|x| x.abs()).sum::<f64>() / (o.x.len() - n0).max(1) as f64;
                row.extend([
                    s.into(),
                    params.gain.into(),
                    o.tail_mean(tail).into(),
                    tail_abs.into(),
                    o.max_trace_residual.into(),
                    o.max_hermiticity.into(),
                    o.min_eigenvalue.into(),
                    o.top_population.into(),
                    o.truncation_valid.into(),
                    status(&o.error),
                ]);
                o.error
            }
            Err(e) => {
                row.extend((0..9).map(|_| Cell::Text(String::new())));
                row.push(status(&Some(e.clone())));
                Some(e)
            }
        };
        summary.push(row);
        statuses.push(PointStatus {
            index: p.index,
            label: p.label(),
            error: err,
        });
    }
    tables.insert(0, summary);
    Ok(Outcome {
        tables,
        points: statuses,
    })
}

fn ensemble(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, String> {
    let points = expand(cfg, true)?;
    let n_traj = cfg.numerics.trajectory.n_traj.unwrap_or(100);
    let tail = cfg.numerics.trajectory.tail.unwrap_or(0.5);
    let coords = coord_columns(&points);
    let cols = columns(
        &["point"],
        &coords,
        &[
            "seed", "gain", "n_traj", "n_failed", "steady_x", "steady_x_sem", "steady_abs_x",
            "steady_abs_x_sem", "steady_x2", "steady_x2_sem", "truncation_valid", "status",
        ],
    );
    let x = cols.iter().position(|c| *c == "gain_ratio").unwrap_or(0);
    let abs_col = cols.iter().position(|c| *c == "steady_abs_x").unwrap();
    let mut summary = Table::new("summary", &cols)
        .meta(&header(cfg, seed))
        .with_plot(x, &[abs_col], false, false);
    let tcols = columns(&["point"], &coords, &["stream", "tail_mean_x", "error"]);
    let mut tails = Table::new("tails", &tcols).meta(&header(cfg, seed));
    let mut tables = Vec::new();
    let mut statuses = Vec::new();
    // Trajectories run in parallel inside each ensemble.
    for p in &points {
        let s = point_seed(seed, p.index);
        let run = p.resolved().and_then(|params| {
            let tc = trajectory_config(cfg, params, p.kernel, s);
            tc.validate().map_err(|e| e.to_string())?;
            run_ensemble(&tc, n_traj, tail).map(|e| (params, e)).map_err(|e| e.to_string())
        });
        let mut row: Vec<Cell> = vec![p.index.into()];
        row.extend(coord_cells(p));
        let err = match run {
            Ok((params, e)) => {
                let mut meta = header(cfg, seed);
                meta.extend(p.meta(Some(s)));
                meta.push(("gain".into(), params.gain.to_string()));
                let mut t = Table::new(
                    format!("ensemble_{}", p.index),
                    &["t", "mean_x", "std_x", "mean_abs_x", "mean_x2", "mean_photons"],
                )
                .meta(&meta)
                .with_plot(0, &[1, 3], false, false);
                for i in 0..e.times.len() {
                    t.push(vec![
                        e.times[i].into(),
                        e.mean_x[i].into(),
                        e.std_x[i].into(),
                        e.mean_abs_x[i].into(),
                        e.mean_x2[i].into(),
                        e.mean_photons[i].into(),
                    ]);
                }
                tables.push(t);
                for o in &e.trajectories {
                    let mut r: Vec<Cell> = vec![p.index.into()];
                    r.extend(coord_cells(p));
                    r.extend([
                        o.stream.into(),
                        if o.error.is_none() { o.tail_mean(tail).into() } else { Cell::Text(String::new()) },
                        o.error.clone().unwrap_or_default().into(),
                    ]);
                    tails.push(r);
                }
                let err = (e.n_failed > 0).then(|| format!("{} of {} trajectories failed", e.n_failed, e.n_traj));
                row.extend([
                    s.into(),
                    params.gain.into(),
                    e.n_traj.into(),
                    e.n_failed.into(),
                    e.steady_x.mean.into(),
                    e.steady_x.sem.into(),
                    e.steady_abs_x.mean.into(),
                    e.steady_abs_x.sem.into(),
                    e.steady_x2.mean.into(),
                    e.steady_x2.sem.into(),
                    e.all_truncations_valid.into(),
                    status(&err),
                ]);
                err
            }
            Err(e) => {
                row.extend((0..11).map(|_| Cell::Text(String::new())));
                row.push(status(&Some(e.clone())));
                Some(e)
            }
        };
        summary.push(row);
        statuses.push(PointStatus {
            index: p.index,
            label: p.label(),
            error: err,
        });
    }
    tables.insert(0, tails);
    tables.insert(0, summary);
    Ok(Outcome {
        tables,
        points: statuses,
    })
}

fn scan_options(cfg: &ExperimentConfig, lo: f64, hi: f64) -> ScanOptions {
    let n = &cfg.numerics.meanfield;
    let mut o = ScanOptions::bracket(lo, hi);
    macro_rules! take {
        ($($f:ident),*) => {$(if let Some(v) = n.$f { o.$f = v; })*};
    }
    take!(t_end, threshold, rel_width, tail);
    if let Some(v) = n.tilt {
        o.seed = v;
    }
    if let Some(v) = n.rel_tol {
        o.integrate.rel_tol = v;
    }
    if let Some(v) = n.abs_tol {
        o.integrate.abs_tol = v;
    }
    if let Some(v) = n.sample_dt {
        o.integrate.sample_dt = v;
    }
    o
}

fn meanfield_scan(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, String> {
    let points = expand(cfg, false)?;
    let ratios = cfg.grid.gain_ratio.as_ref().expect("validated").values();
    let coords = coord_columns(&points);
    let cols = columns(
        &["point"],
        &coords,
        &["gain_ratio", "gain", "sx", "sx_abs", "photons", "settled", "spin_length_drift", "status", "curve"],
    );
    let n = cols.len();
    let mut table = Table::new("bifurcation", &cols)
        .meta(&header(cfg, seed))
        .with_plot(n - 9, &[n - 6], false, false)
        .grouped_by(n - 1);
    let hcols = columns(&["point"], &coords, &["gain_crit", "gain_scan", "rel_diff", "status"]);
    let mut thresholds = Table::new("threshold", &hcols).meta(&header(cfg, seed));
    let mut statuses = Vec::new();
    for p in &points {
        let mut err = None;
        match critical_gain(&p.params, &p.kernel) {
            Err(e) => err = Some(e.to_string()),
            Ok(gc) => {
                let gains: Vec<f64> = ratios.iter().map(|r| r * gc).collect();
                let opts = scan_options(cfg, 0.0, 1.0);
                let rows = bifurcation_table(&p.params, &p.kernel, &gains, &opts);
                for (r, res) in ratios.iter().zip(rows) {
                    let e = res.as_ref().err().map(|e| e.to_string());
                    let b = res.as_ref().ok();
                    let mut row: Vec<Cell> = vec![p.index.into()];
                    row.extend(coord_cells(p));
                    row.extend([
                        (*r).into(),
                        (r * gc).into(),
                        opt(b.map(|b| b.sx)),
                        opt(b.map(|b| b.sx_abs)),
                        opt(b.map(|b| b.photons)),
                        b.map(|b| b.settled).unwrap_or(false).into(),
                        opt(b.map(|b| b.spin_length_drift)),
                        status(&e),
                        p.label().into(),
                    ]);
                    table.push(row);
                    if err.is_none() {
                        err = e;
                    }
                }
                if let Some([lo, hi]) = cfg.numerics.meanfield.bracket {
                    let opts = scan_options(cfg, lo * gc, hi * gc);
                    let found = meanfield_threshold(&p.params, &p.kernel, &opts).map_err(|e| e.to_string());
                    let mut row: Vec<Cell> = vec![p.index.into()];
                    row.extend(coord_cells(p));
                    row.extend([
                        gc.into(),
                        opt(found.as_ref().ok().copied()),
                        opt(found.as_ref().ok().map(|f| f / gc - 1.0)),
                        status(&found.as_ref().err().cloned()),
                    ]);
                    thresholds.push(row);
                    if err.is_none() {
                        err = found.err();
                    }
                }
            }
        }
        statuses.push(PointStatus {
            index: p.index,
            label: p.label(),
            error: err,
        });
    }
    let mut tables = vec![table];
    if cfg.numerics.meanfield.bracket.is_some() {
        tables.push(thresholds);
    }
    Ok(Outcome {
        tables,
        points: statuses,
    })
}

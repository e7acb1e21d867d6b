// SPDX-License-Identifier: Apache-2.0

//! Experiment files: one TOML document per run, strictly typed.

use std::path::PathBuf;

use fbdicke::criticality::FitOptions;
use fbdicke::spectral::{SeriesLabel, VarianceOptions};
use fbdicke::trajectory::{InitialState, ModelKind, Scheme};
use fbdicke::{FeedbackKernel, ModelParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Spectrum,
    VarianceSweep,
    Exponent,
    GcritScan,
    Trajectory,
    Ensemble,
    MeanfieldScan,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::VarianceSweep => "variance-sweep",
            Self::Exponent => "exponent",
            Self::GcritScan => "gcrit-scan",
            Self::Trajectory => "trajectory",
            Self::Ensemble => "ensemble",
            Self::MeanfieldScan => "meanfield-scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// A grid axis: either explicit values or `n` points between `lo` and `hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range(Range),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Values(v) => v.clone(),
            Self::Range(r) => {
                if r.n == 1 {
                    return vec![r.lo];
                }
                let last = (r.n - 1) as f64;
                (0..r.n)
                    .map(|i| {
                        let f = i as f64 / last;
                        match r.spacing {
                            Spacing::Linear => r.lo + (r.hi - r.lo) * f,
                            Spacing::Log => (r.lo.ln() + (r.hi.ln() - r.lo.ln()) * f).exp(),
                        }
                    })
                    .collect()
            }
        }
    }

    fn check(&self, name: &str) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Schema(format!("grid.{name}: {m}")));
        match self {
            Self::Values(v) => {
                if v.is_empty() {
                    return bad("needs at least one value".into());
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return bad("values must be finite".into());
                }
            }
            Self::Range(r) => {
                if r.n == 0 {
                    return bad("n must be positive".into());
                }
                if !(r.lo.is_finite() && r.hi.is_finite()) {
                    return bad("bounds must be finite".into());
                }
                if r.spacing == Spacing::Log && !(r.lo > 0.0 && r.hi > 0.0) {
                    return bad("log spacing needs positive bounds".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Axis>,
    /// `1 - G / G_crit` values of a threshold sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Axis>,
    /// Power-law exponents; each replaces `s` with `h0 = s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Axis>,
    /// `G / G_crit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_ratio: Option<Axis>,
    /// `g / g_crit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_ratio: Option<Axis>,
    /// Spectrum series names (`D`, `Mx`, `My`, `S`, `S_adiabatic`,
    /// `variance_integrand`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceNumerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_intervals: Option<usize>,
}

impl VarianceNumerics {
    pub fn options(&self) -> VarianceOptions {
        let d = VarianceOptions::default();
        VarianceOptions {
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            max_omega: self.max_omega.unwrap_or(d.max_omega),
            scan_points: self.scan_points.unwrap_or(d.scan_points),
            max_intervals: self.max_intervals.unwrap_or(d.max_intervals),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitNumerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_starts: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Refit using only points with `1 - G/G_crit <= w`, for each `w`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<f64>>,
}

impl FitNumerics {
    pub fn options(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            alpha_starts: self.alpha_starts.clone().unwrap_or(d.alpha_starts),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryNumerics {
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boson_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_tol: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    /// Fraction of the run averaged as the steady state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldNumerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Symmetry-breaking tilt of `sx`, in units of `N/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    /// Also bisect for the threshold between these `G / G_crit` values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default, skip_serializing_if = "is_default")]
    pub variance: VarianceNumerics,
    #[serde(default, skip_serializing_if = "is_default")]
    pub fit: FitNumerics,
    #[serde(default, skip_serializing_if = "is_default")]
    pub trajectory: TrajectoryNumerics,
    #[serde(default, skip_serializing_if = "is_default")]
    pub meanfield: MeanfieldNumerics,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Acceptance criterion the run is meant to reproduce.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub criterion: String,
    /// Rough wall time on one core.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub runtime: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub params: ModelParams,
    pub kernel: FeedbackKernel,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub numerics: Numerics,
}

impl ExperimentConfig {
    /// Parse and validate.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let schema = |e: fbdicke::Error| CliError::Schema(e.to_string());
        self.params.validate().map_err(schema)?;
        self.kernel.validate().map_err(schema)?;

        let g = &self.grid;
        let axes: [(&str, &Option<Axis>); 7] = [
            ("omega", &g.omega),
            ("epsilon", &g.epsilon),
            ("s", &g.s),
            ("kappa", &g.kappa),
            ("theta", &g.theta),
            ("gain_ratio", &g.gain_ratio),
            ("g_ratio", &g.g_ratio),
        ];
        let allowed: &[&str] = match self.kind {
            Kind::Spectrum => &["omega", "s", "kappa", "theta", "gain_ratio", "g_ratio", "series"],
            Kind::VarianceSweep => &["epsilon", "gain_ratio", "s", "kappa", "theta", "g_ratio"],
            Kind::Exponent => &["epsilon", "s", "kappa", "theta", "g_ratio"],
            Kind::GcritScan => &["s", "kappa", "theta", "g_ratio"],
            Kind::Trajectory | Kind::Ensemble | Kind::MeanfieldScan => {
                &["s", "kappa", "theta", "gain_ratio", "g_ratio"]
            }
        };
        for (name, axis) in axes {
            if let Some(a) = axis {
                if !allowed.contains(&name) {
                    return Err(CliError::Schema(format!(
                        "grid.{name} is not used by kind {}",
                        self.kind.name()
                    )));
                }
                a.check(name)?;
            }
        }
        if g.series.is_some() && self.kind != Kind::Spectrum {
            return Err(CliError::Schema("grid.series only applies to spectra".into()));
        }
        if let Some(names) = &g.series {
            for n in names {
                if SeriesLabel::parse(n).is_none() {
                    return Err(CliError::Schema(format!("unknown spectrum series {n:?}")));
                }
            }
        }
        if g.s.is_some() && !matches!(self.kernel, FeedbackKernel::PowerLaw { .. }) {
            return Err(CliError::Schema("grid.s needs a power-law kernel".into()));
        }
        if let Some(s) = &g.s {
            if s.values().iter().any(|x| *x <= 0.0) {
                return Err(CliError::Schema("grid.s values must be positive".into()));
            }
        }
        for (name, axis) in [("epsilon", &g.epsilon), ("gain_ratio", &g.gain_ratio)] {
            let sweep = matches!(self.kind, Kind::VarianceSweep | Kind::Exponent);
            if let (true, Some(a)) = (sweep, axis) {
                let v = a.values();
                if v.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
                    return Err(CliError::Schema(format!("grid.{name} must lie in (0, 1)")));
                }
            }
        }
        match self.kind {
            Kind::Spectrum if g.omega.is_none() => {
                return Err(CliError::Schema("spectrum needs grid.omega".into()))
            }
            Kind::VarianceSweep if g.epsilon.is_some() == g.gain_ratio.is_some() => {
                return Err(CliError::Schema(
                    "variance-sweep needs exactly one of grid.epsilon and grid.gain_ratio".into(),
                ))
            }
            Kind::MeanfieldScan if g.gain_ratio.is_none() => {
                return Err(CliError::Schema("meanfield-scan needs grid.gain_ratio".into()))
            }
            Kind::Trajectory | Kind::Ensemble if self.numerics.trajectory.t_end.is_none() => {
                return Err(CliError::Schema("numerics.trajectory.t_end is required".into()))
            }
            _ => {}
        }
        let t = &self.numerics.trajectory;
        if let Some(tail) = t.tail {
            if !(tail > 0.0 && tail <= 1.0) {
                return Err(CliError::Schema("numerics.trajectory.tail must be in (0, 1]".into()));
            }
        }
        if t.n_traj == Some(0) {
            return Err(CliError::Schema("numerics.trajectory.n_traj must be positive".into()));
        }
        Ok(())
    }
}

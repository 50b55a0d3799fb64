//! Command-line harness: configuration, the verify and sweep drivers, and output files.
//!
//! A config file is TOML. Every section is optional and falls back to the defaults of
//! the chosen experiment; `seed` is the one key a file must always carry.

use crate::error::Error;
use crate::field::{make_grid, sample, ClosedForm, GridSpec, SampledField};
use crate::hamflow::{check_lemh, default_steps, flow, flow_det, scaled_det};
use crate::norms::{amalgam_norm_with, RowSampling};
use crate::potentials::{compute_t1, constant_m, LemmaConstants, Potential, PotentialSpec};
use crate::propagate::{free_covariance_deviation, free_prop, stark_prop, FlowStepping, Parametrix, PropagatorSpec};
use crate::stft::{adjoint_stft, stft, PhaseSpaceForm, Window};
use crate::strichartz::{
    dispersive_fit_with, lemma3_ratio_with, lemma4_ratio, refinement_drift, strichartz_quotient_with, AdmissiblePair,
    ExperimentRecord, PhaseNodes, QuotientOptions, MIN_TIME_SAMPLES,
};
use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "strichlab", version, about = "Phase-space numerics for Schrodinger propagators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the global pool.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Run the identity and invariant suites; exit 0 iff all pass.
    Verify,
    /// Run one experiment sweep and write records.
    Sweep {
        #[arg(value_enum)]
        experiment: Experiment,
    },
    /// Run only the Hamiltonian-flow checks.
    FlowCheck,
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Dispersive,
    Strichartz,
    Duhamel,
    Lemmas,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Dispersive => "dispersive",
            Experiment::Strichartz => "strichartz",
            Experiment::Duhamel => "duhamel",
            Experiment::Lemmas => "lemmas",
        }
    }
}

/// Failures of the harness, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("computation failed: {0}")]
    Compute(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub points: usize,
    pub half_width: f64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Largest |t| at which the evolved window may be used.
    pub horizon: f64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Strichartz interval [-T, T].
    pub horizon: f64,
    /// Uniform samples on [-T, T] at the coarsest level.
    pub samples: usize,
    /// Dispersive sample times: `count` log-spaced points in [t_min, t_max].
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    /// Split-step Δt for potentials without a closed-form propagator.
    pub split_dt: f64,
}

/// Center, width and momentum of the Gaussian datum (L²-normalized).
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub center: f64,
    pub sigma: f64,
    pub momentum: f64,
}

/// Gaussian family for Strichartz sweeps. In two dimensions a momentum k means (k, k).
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub sigmas: Vec<f64>,
    pub momenta: Vec<f64>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PairsConfig {
    /// (p, r) pairs; `inf` is allowed for p.
    pub list: Vec<[f64; 2]>,
    /// Add the endpoint pair with the Lorentz inner norm (n ≥ 2).
    pub endpoint: bool,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    /// Number of grids; level ℓ doubles N (and the time samples) ℓ times.
    pub levels: usize,
    /// Row spacing for windowed amalgam norms; 0 evaluates every row.
    pub row_spacing: f64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DuhamelConfig {
    pub t: f64,
    /// Gauss–Legendre nodes at the coarsest level, doubled per level.
    pub nodes: usize,
    /// Flow step level at the coarsest level, incremented per level.
    pub flow_level: u32,
    /// Split-step Δt at the coarsest level, halved per level.
    pub split_dt: f64,
    pub levels: usize,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    /// Gaussian-class functions for the STFT identities.
    pub functions: usize,
    /// Phase-space seeds per (builtin, t) for the Liouville check.
    pub flow_seeds: usize,
    pub flow_times: Vec<f64>,
    /// Random (x, ξ, z, η) tuples for the separation inequalities.
    pub tuples: usize,
    /// Random (x, ξ, t) samples for the scaled determinant.
    pub det_samples: usize,
    /// Random coherent superpositions for the lemma3 ratio.
    pub forms: usize,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub identity: f64,
    pub covariance: f64,
    pub liouville: f64,
    pub determinant: f64,
    pub exactness: f64,
    pub defect_order: f64,
    pub slope: f64,
    pub drift: f64,
    pub finite: f64,
    pub duhamel_ratio: f64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Copied verbatim into every record when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub grid: GridConfig,
    pub potential: PotentialSpec,
    pub window: WindowConfig,
    pub time: TimeConfig,
    pub data: DataConfig,
    pub family: FamilyConfig,
    pub pairs: PairsConfig,
    pub refinement: RefinementConfig,
    pub duhamel: DuhamelConfig,
    pub suite: SuiteConfig,
    pub tolerance: ToleranceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Defaults for verify and flow-check (`None`) or for one sweep.
    pub fn defaults(experiment: Option<Experiment>) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            seed: 20240601,
            grid: GridConfig { dim: 1, points: 1024, half_width: 32.0 },
            potential: PotentialSpec::Zero,
            window: WindowConfig { horizon: 2.0 },
            time: TimeConfig { horizon: 0.5, samples: MIN_TIME_SAMPLES, t_min: 0.01, t_max: 0.2, count: 12, split_dt: 2e-4 },
            data: DataConfig { center: 0.5, sigma: 1.0, momentum: 1.0 },
            family: FamilyConfig { sigmas: vec![0.25, 0.5, 1.0, 2.0, 4.0], momenta: vec![0.0, 2.0, -2.0, 5.0, -5.0] },
            pairs: PairsConfig { list: vec![[4.0, 8.0], [3.0, 12.0], [2.5, 20.0]], endpoint: false },
            refinement: RefinementConfig { levels: 2, row_spacing: 0.375 },
            duhamel: DuhamelConfig { t: 0.2, nodes: 32, flow_level: 0, split_dt: 2e-4, levels: 2 },
            suite: SuiteConfig {
                functions: 50,
                flow_seeds: 1000,
                flow_times: vec![0.25, 0.5, 1.0],
                tuples: 10_000,
                det_samples: 1000,
                forms: 100,
            },
            tolerance: ToleranceConfig {
                identity: 1e-8,
                covariance: 1e-6,
                liouville: 1e-8,
                determinant: 1e-6,
                exactness: 1e-6,
                defect_order: 1.8,
                slope: 0.15,
                drift: 0.1,
                finite: 1e6,
                duhamel_ratio: 3.0,
            },
            output: OutputConfig::default(),
        };
        match experiment {
            Some(Experiment::Dispersive) => {
                c.grid = GridConfig { dim: 1, points: 262_144, half_width: 220.0 };
                c.potential = PotentialSpec::Harmonic;
                c.data = DataConfig { center: 0.0, sigma: 0.007, momentum: 0.0 };
                c.refinement.levels = 1;
            }
            Some(Experiment::Strichartz) => {
                c.grid = GridConfig { dim: 1, points: 1024, half_width: 48.0 };
                c.data = DataConfig { center: 0.0, sigma: 1.0, momentum: 0.0 };
            }
            Some(Experiment::Duhamel) => {
                c.potential = PotentialSpec::Harmonic;
            }
            Some(Experiment::Lemmas) => {
                c.potential = PotentialSpec::Cosine;
                c.grid = GridConfig { dim: 1, points: 256, half_width: 16.0 };
                c.data = DataConfig { center: 0.0, sigma: 1.0, momentum: 0.5 };
            }
            None => {}
        }
        c
    }

    /// Parse a TOML document over the defaults for `experiment`.
    pub fn from_toml(text: &str, experiment: Option<Experiment>) -> Result<Self, CliError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        if !user.contains_key("seed") {
            return Err(config_err("`seed` is required in a config file"));
        }
        if let (Some(v), Some(e)) = (user.get("experiment"), experiment) {
            if v.as_str() != Some(e.name()) {
                return Err(config_err(format!("config is for experiment {v}, not {}", e.name())));
            }
        }
        let base = toml::Table::try_from(Self::defaults(experiment)).map_err(|e| config_err(e.to_string()))?;
        let merged = merge(base, user);
        let cfg: ExperimentConfig = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, experiment: Option<Experiment>) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, experiment)
    }

    pub fn grid_spec(&self) -> crate::Result<GridSpec> {
        make_grid(self.grid.dim, self.grid.points, self.grid.half_width)
    }

    pub fn window(&self) -> Window {
        Window::gaussian().with_horizon(self.window.horizon)
    }

    pub fn sampling(&self) -> RowSampling {
        if self.refinement.row_spacing > 0.0 {
            RowSampling::windowed(self.refinement.row_spacing)
        } else {
            RowSampling::exact()
        }
    }

    pub fn pairs(&self) -> crate::Result<Vec<(AdmissiblePair, bool)>> {
        let mut out = Vec::new();
        for [p, r] in &self.pairs.list {
            out.push((AdmissiblePair::new(self.grid.dim, *p, *r)?, false));
        }
        if self.pairs.endpoint {
            out.push((AdmissiblePair::endpoint(self.grid.dim)?, true));
        }
        Ok(out)
    }

    /// Reject anything that would fail for reasons other than numerics.
    pub fn validate(&self, command: Command) -> Result<(), CliError> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(config_err(format!("{what} must be positive and finite, got {v}")))
            }
        };
        if let Command::Sweep { experiment } = command {
            if let Some(e) = self.experiment {
                if e != experiment {
                    return Err(config_err(format!("config is for {}, not {}", e.name(), experiment.name())));
                }
            }
        }
        self.grid_spec().map_err(|e| config_err(e.to_string()))?;
        if self.grid.dim > 2 {
            return Err(config_err("grid.dim must be 1 or 2"));
        }
        let needs_1d = !matches!(command, Command::Sweep { experiment: Experiment::Strichartz });
        if needs_1d && self.grid.dim != 1 {
            return Err(config_err("this command runs in one dimension only"));
        }
        if self.grid.dim == 2 && self.potential != PotentialSpec::Zero {
            return Err(config_err("two-dimensional runs support only the zero potential"));
        }
        if let PotentialSpec::Stark { field } = self.potential {
            if !field.is_finite() {
                return Err(config_err("stark field must be finite"));
            }
        }
        pos(self.window.horizon, "window.horizon")?;
        pos(self.time.horizon, "time.horizon")?;
        pos(self.time.t_min, "time.t_min")?;
        pos(self.time.split_dt, "time.split_dt")?;
        if self.time.samples < MIN_TIME_SAMPLES {
            return Err(config_err(format!("time.samples must be at least {MIN_TIME_SAMPLES}")));
        }
        if !(self.time.t_max > self.time.t_min) || !self.time.t_max.is_finite() {
            return Err(config_err("time.t_max must exceed time.t_min"));
        }
        if self.time.count < 4 {
            return Err(config_err("time.count must be at least 4"));
        }
        pos(self.data.sigma, "data.sigma")?;
        if !self.data.center.is_finite() || !self.data.momentum.is_finite() {
            return Err(config_err("data center and momentum must be finite"));
        }
        if self.family.sigmas.is_empty() || self.family.momenta.is_empty() {
            return Err(config_err("family needs at least one sigma and one momentum"));
        }
        for s in &self.family.sigmas {
            pos(*s, "family.sigmas")?;
        }
        if self.family.momenta.iter().any(|k| !k.is_finite()) {
            return Err(config_err("family.momenta must be finite"));
        }
        self.pairs().map_err(|e| config_err(e.to_string()))?;
        if matches!(command, Command::Sweep { experiment: Experiment::Strichartz }) && !self.pairs.endpoint && self.pairs.list.is_empty() {
            return Err(config_err("no pairs to sweep"));
        }
        if self.refinement.levels == 0 {
            return Err(config_err("refinement.levels must be at least 1"));
        }
        if !(self.refinement.row_spacing >= 0.0) || !self.refinement.row_spacing.is_finite() {
            return Err(config_err("refinement.row_spacing must be nonnegative"));
        }
        pos(self.duhamel.t, "duhamel.t")?;
        pos(self.duhamel.split_dt, "duhamel.split_dt")?;
        if self.duhamel.nodes == 0 || self.duhamel.levels == 0 {
            return Err(config_err("duhamel.nodes and duhamel.levels must be at least 1"));
        }
        let s = &self.suite;
        if s.functions == 0 || s.flow_seeds == 0 || s.tuples == 0 || s.det_samples == 0 || s.forms == 0 {
            return Err(config_err("suite counts must be at least 1"));
        }
        if s.flow_times.is_empty() || s.flow_times.iter().any(|t| !t.is_finite()) {
            return Err(config_err("suite.flow_times must be finite and nonempty"));
        }
        let t = &self.tolerance;
        for (v, what) in [
            (t.identity, "identity"),
            (t.covariance, "covariance"),
            (t.liouville, "liouville"),
            (t.determinant, "determinant"),
            (t.exactness, "exactness"),
            (t.defect_order, "defect_order"),
            (t.slope, "slope"),
            (t.drift, "drift"),
            (t.finite, "finite"),
            (t.duhamel_ratio, "duhamel_ratio"),
        ] {
            pos(v, &format!("tolerance.{what}"))?;
        }
        Ok(())
    }
}

/// Overlay `user` on `base`; nested tables merge, everything else (including the
/// tagged potential table) is replaced.
fn merge(mut base: toml::Table, user: toml::Table) -> toml::Table {
    for (k, v) in user {
        let merged = match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if k != "potential" => toml::Value::Table(merge(b, u)),
            (_, v) => v,
        };
        base.insert(k, merged);
    }
    base
}

// ---------------------------------------------------------------------------
// shared helpers

/// Independent random stream `stream` for a seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// L²-normalized Gaussian datum.
pub fn gaussian_datum(grid: &GridSpec, center: f64, sigma: f64, momentum: f64) -> crate::Result<SampledField> {
    let n = grid.dim();
    sample(grid, &ClosedForm::normalized(vec![center; n], sigma, vec![momentum; n]))
}

/// Modulated Gaussians with centers in [-3, 3], widths in [0.6, 2], momenta in [-3, 3]
/// and random complex amplitudes.
pub fn gaussian_suite(grid: &GridSpec, count: usize, seed: u64) -> crate::Result<Vec<SampledField>> {
    let mut rng = rng_for(seed, 1);
    (0..count)
        .map(|_| {
            let c = rng.gen_range(-3.0..3.0);
            let s = rng.gen_range(0.6..2.0);
            let k = rng.gen_range(-3.0..3.0);
            let a = Complex64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..2.0 * PI));
            sample(grid, &ClosedForm::modulated(c, s, k).with_amplitude(a))
        })
        .collect()
}

fn builtins_named() -> Vec<(String, Potential)> {
    Potential::builtins().into_iter().map(|p| (p.name().to_string(), p)).collect()
}

/// One named pass/fail outcome.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The measured quantity compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Check { name: name.into(), passed: value <= tolerance, value, tolerance, detail }
    }
    fn at_least(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Check { name: name.into(), passed: value >= tolerance, value, tolerance, detail }
    }
    fn failed(name: &str, tolerance: f64, err: impl std::fmt::Display) -> Self {
        Check { name: name.into(), passed: false, value: f64::NAN, tolerance, detail: err.to_string() }
    }
}

fn guarded(name: &str, tolerance: f64, f: impl FnOnce() -> crate::Result<Check>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, tolerance, e))
}

// ---------------------------------------------------------------------------
// invariant suites

pub fn check_plancherel(cfg: &ExperimentConfig) -> Check {
    let tol = cfg.tolerance.identity;
    guarded("plancherel", tol, || {
        let grid = cfg.grid_spec()?;
        let g = cfg.window();
        let mut worst: f64 = 0.0;
        for f in gaussian_suite(&grid, cfg.suite.functions, cfg.seed)? {
            let v = stft(&f, &g)?;
            let rel = v.norm_l2() / ((2.0 * PI).sqrt() * f.norm_l2()) - 1.0;
            worst = worst.max(rel.abs());
        }
        Ok(Check::at_most("plancherel", worst, tol, format!("{} functions, N = {}", cfg.suite.functions, grid.points_per_axis())))
    })
}

pub fn check_inversion(cfg: &ExperimentConfig) -> Check {
    let tol = cfg.tolerance.identity;
    guarded("inversion", tol, || {
        let grid = cfg.grid_spec()?;
        let g = cfg.window();
        let mut worst: f64 = 0.0;
        for f in gaussian_suite(&grid, cfg.suite.functions, cfg.seed)? {
            let back = adjoint_stft(&stft(&f, &g)?, &g)?;
            worst = worst.max(back.rel_l2_error(&f)?);
        }
        Ok(Check::at_most("inversion", worst, tol, format!("{} functions", cfg.suite.functions)))
    })
}

pub fn check_free_covariance(cfg: &ExperimentConfig) -> Check {
    let tol = cfg.tolerance.covariance;
    guarded("free_covariance", tol, || {
        let grid = cfg.grid_spec()?;
        let f = gaussian_datum(&grid, cfg.data.center, cfg.data.sigma, cfg.data.momentum)?;
        let stride = (grid.points_per_axis() / 128).max(1);
        let mut worst: f64 = 0.0;
        for t in [0.05, 0.1, 0.2, 0.3] {
            worst = worst.max(free_covariance_deviation(&f, t, &cfg.window(), stride)?);
        }
        Ok(Check::at_most("free_covariance", worst, tol, "t in {0.05, 0.1, 0.2, 0.3}".into()))
    })
}

pub fn check_stark_covariance(cfg: &ExperimentConfig) -> Check {
    let tol = cfg.tolerance.covariance;
    guarded("stark_covariance", tol, || {
        let grid = cfg.grid_spec()?;
        let f = gaussian_datum(&grid, cfg.data.center, cfg.data.sigma, cfg.data.momentum)?;
        let rows = RowSampling::exact().with_continuous_sup(true);
        let g = cfg.window();
        let mut worst: f64 = 0.0;
        for e in [0.5, 2.0] {
            for t in [0.1, 0.3] {
                let a = amalgam_norm_with(&stark_prop(&f, t, e)?, f64::INFINITY, 1.0, &g, &rows)?;
                let b = amalgam_norm_with(&free_prop(&f, t)?, f64::INFINITY, 1.0, &g, &rows)?;
                worst = worst.max((a - b).abs() / b);
            }
        }
        Ok(Check::at_most("stark_covariance", worst, tol, "E in {0.5, 2}, t in {0.1, 0.3}, W^{inf,1} relative".into()))
    })
}

pub fn check_parametrix_exactness(cfg: &ExperimentConfig) -> Check {
    let tol = cfg.tolerance.exactness;
    guarded("parametrix_exactness", tol, || {
        let grid = cfg.grid_spec()?;
        let f = gaussian_datum(&grid, cfg.data.center, cfg.data.sigma, cfg.data.momentum)?;
        let mut worst: f64 = 0.0;
        for spec in [PotentialSpec::Zero, PotentialSpec::Stark { field: 1.0 }] {
            let p = Parametrix::new(spec.build());
            let exact = PropagatorSpec::for_potential(&spec, cfg.time.split_dt);
            for t in [0.05, 0.1] {
                worst = worst.max(p.u0(&f, t)?.rel_l2_error(&exact.apply(&f, t)?)?);
            }
        }
        Ok(Check::at_most("parametrix_exactness", worst, tol, "V in {zero, stark(1)}, t in {0.05, 0.1}".into()))
    })
}

pub fn check_liouville(cfg: &ExperimentConfig) -> Check {
    let tol = cfg.tolerance.liouville;
    guarded("liouville", tol, || {
        let mut rng = rng_for(cfg.seed, 2);
        let seeds: Vec<(f64, f64)> =
            (0..cfg.suite.flow_seeds).map(|_| (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))).collect();
        let mut worst: f64 = 0.0;
        let builtins = builtins_named();
        for (_, pot) in &builtins {
            for &t in &cfg.suite.flow_times {
                let steps = default_steps(pot, t);
                for &(x, xi) in &seeds {
                    worst = worst.max((flow_det(&flow(pot, t, x, xi, steps)?) - 1.0).abs());
                }
            }
        }
        let detail = format!("{} seeds x {} builtins x t in {:?}", seeds.len(), builtins.len(), cfg.suite.flow_times);
        Ok(Check::at_most("liouville", worst, tol, detail))
    })
}

fn lemh_potentials(cfg: &ExperimentConfig) -> Vec<Potential> {
    let mut out = vec![Potential::zero(), Potential::harmonic(), Potential::cosine()];
    let own = cfg.potential.build();
    if !out.iter().any(|p| p.name() == own.name()) {
        out.push(own);
    }
    out
}

pub fn check_lemh_suite(cfg: &ExperimentConfig) -> Check {
    guarded("separation", 0.0, || {
        let mut rng = rng_for(cfg.seed, 3);
        let tuples: Vec<[f64; 4]> = (0..cfg.suite.tuples)
            .map(|_| [0; 4].map(|_: i32| rng.gen_range(-5.0..5.0)))
            .collect();
        let mut violations = 0usize;
        let mut names = Vec::new();
        for pot in lemh_potentials(cfg) {
            let t = 0.9 * compute_t1(constant_m(&pot, 1));
            violations += check_lemh(&pot, t, &tuples)?.violations();
            names.push(pot.name().to_string());
        }
        let detail = format!("{} tuples at 0.9 T1 for {}", tuples.len(), names.join(", "));
        Ok(Check::at_most("separation", violations as f64, 0.0, detail))
    })
}

pub fn check_determinant(cfg: &ExperimentConfig) -> Check {
    let tol = cfg.tolerance.determinant;
    guarded("determinant", tol, || {
        let mut rng = rng_for(cfg.seed, 4);
        let mut worst: f64 = 0.0;
        for (_, pot) in builtins_named() {
            let t2 = LemmaConstants::of(&pot, 1).t2;
            for _ in 0..cfg.suite.det_samples {
                let x = rng.gen_range(-5.0..5.0);
                let xi = rng.gen_range(-5.0..5.0);
                let t = rng.gen_range(-t2..=t2);
                let d = scaled_det(&pot, t, x, xi, default_steps(&pot, t))?;
                // distance outside [0.5, 2]
                worst = worst.max(0.5 - d).max(d - 2.0);
            }
        }
        let h = Potential::harmonic();
        // the exact value needs Verlet error well below 1e-8
        let exact = scaled_det(&h, 0.3, 0.7, -0.4, 20_000)?;
        let gap = (exact - 0.3f64.sin() / 0.3).abs();
        if gap > cfg.tolerance.identity {
            return Ok(Check {
                name: "determinant".into(),
                passed: false,
                value: gap,
                tolerance: cfg.tolerance.identity,
                detail: "harmonic scaled determinant differs from sin t / t at t = 0.3".into(),
            });
        }
        let detail = format!("{} samples per builtin; excess outside [0.5, 2]; harmonic sin t/t gap {gap:.3e}", cfg.suite.det_samples);
        Ok(Check::at_most("determinant", worst.max(0.0), tol, detail))
    })
}

pub fn check_defect(cfg: &ExperimentConfig) -> Check {
    let tol = cfg.tolerance.defect_order;
    guarded("defect", tol, || {
        let grid = cfg.grid_spec()?;
        let f = gaussian_datum(&grid, cfg.data.center, cfg.data.sigma, cfg.data.momentum)?;
        let pot = cfg.potential.build();
        let (t, d1, d2) = (0.1, 0.02, 0.01);
        let base = Parametrix::new(pot.clone());
        let p = base
            .clone()
            .with_horizon(base.horizon().max(t + d1))
            .with_stepping(FlowStepping::Fixed(400));
        let c = p.defect_check(&f, t, d1, d2)?;
        let mut detail = format!("{}: errors {:.3e}, {:.3e}", pot.name(), c.errors.0, c.errors.1);
        if c.defect_norm > 0.0 {
            let fine = gaussian_datum(&grid.refined(), cfg.data.center, cfg.data.sigma, cfg.data.momentum)?;
            let d = p.defect(&fine, t)?.norm_l2() / fine.norm_l2();
            let drift = refinement_drift(c.defect_norm, d);
            if drift >= cfg.tolerance.drift {
                return Ok(Check {
                    name: "defect".into(),
                    passed: false,
                    value: drift,
                    tolerance: cfg.tolerance.drift,
                    detail: format!("defect norm drifts {drift:.3e} under refinement"),
                });
            }
            detail.push_str(&format!("; defect norm {:.6e}, refinement drift {drift:.3e}", c.defect_norm));
        }
        Ok(Check::at_least("defect", c.order, tol, detail))
    })
}

/// Outcome of verify or flow-check.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub command: String,
    pub passed: bool,
    pub first_failure: Option<String>,
    pub checks: Vec<Check>,
    pub config: ExperimentConfig,
}

fn report_of(command: &str, checks: Vec<Check>, cfg: &ExperimentConfig) -> VerifyReport {
    let first_failure = checks.iter().find(|c| !c.passed).map(|c| c.name.clone());
    VerifyReport { command: command.into(), passed: first_failure.is_none(), first_failure, checks, config: cfg.clone() }
}

type Suite = fn(&ExperimentConfig) -> Check;

/// All identity and invariant suites, in reporting order.
pub fn run_verify(cfg: &ExperimentConfig) -> VerifyReport {
    let suites: [Suite; 10] = [
        check_plancherel,
        check_inversion,
        check_free_covariance,
        check_stark_covariance,
        check_parametrix_exactness,
        check_liouville,
        check_lemh_suite,
        check_determinant,
        check_defect,
        check_flow_consistency,
    ];
    report_of("verify", suites.iter().map(|s| s(cfg)).collect(), cfg)
}

/// Flow checks only.
pub fn run_flow_check(cfg: &ExperimentConfig) -> VerifyReport {
    let suites: [Suite; 4] = [check_liouville, check_lemh_suite, check_determinant, check_flow_consistency];
    report_of("flow-check", suites.iter().map(|s| s(cfg)).collect(), cfg)
}

/// The configured potential's flow run forward then backward returns to its start.
pub fn check_flow_consistency(cfg: &ExperimentConfig) -> Check {
    let tol = cfg.tolerance.liouville;
    guarded("flow_reversibility", tol, || {
        let pot = cfg.potential.build();
        let mut rng = rng_for(cfg.seed, 5);
        let mut worst: f64 = 0.0;
        for &t in &cfg.suite.flow_times {
            let steps = default_steps(&pot, t);
            for _ in 0..cfg.suite.flow_seeds.min(100) {
                let (x, xi) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
                let fwd = flow(&pot, t, x, xi, steps)?;
                let back = flow(&pot, -t, fwd.x, fwd.xi, steps)?;
                worst = worst.max(((back.x - x).abs() + (back.xi - xi).abs()) / (1.0 + x.abs() + xi.abs()));
            }
        }
        Ok(Check::at_most("flow_reversibility", worst, tol, format!("{}", pot.name())))
    })
}

// ---------------------------------------------------------------------------
// sweeps

/// Records of one sweep: one per cell, then the summaries, plus (series, x, y) plot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub experiment: Experiment,
    pub records: Vec<ExperimentRecord>,
    pub summaries: Vec<ExperimentRecord>,
    pub plot: Vec<(String, f64, f64)>,
    pub passed: bool,
}

pub fn run_sweep(cfg: &ExperimentConfig, experiment: Experiment) -> Result<SweepOutput, CliError> {
    let mut out = match experiment {
        Experiment::Dispersive => sweep_dispersive(cfg)?,
        Experiment::Strichartz => sweep_strichartz(cfg)?,
        Experiment::Duhamel => sweep_duhamel(cfg)?,
        Experiment::Lemmas => sweep_lemmas(cfg)?,
    };
    if let Some(ts) = &cfg.output.timestamp {
        for r in out.records.iter_mut().chain(out.summaries.iter_mut()) {
            r.timestamp = Some(ts.clone());
        }
    }
    out.passed = out.summaries.iter().all(|s| s.stable != Some(false));
    Ok(out)
}

fn grid_record(r: ExperimentRecord, grid: &GridSpec) -> ExperimentRecord {
    r.param("n", grid.dim()).param("points", grid.points_per_axis()).param("half_width", grid.half_width())
}

fn geometric(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| a * (b / a).powf(i as f64 / (count - 1) as f64)).collect()
}

fn sweep_dispersive(cfg: &ExperimentConfig) -> Result<SweepOutput, CliError> {
    let mut props = vec![PropagatorSpec::Free];
    if cfg.potential != PotentialSpec::Zero {
        props.push(PropagatorSpec::for_potential(&cfg.potential, cfg.time.split_dt));
    }
    let times = geometric(cfg.time.t_min, cfg.time.t_max, cfg.time.count);
    let sampling = cfg.sampling();
    let expected = -(cfg.grid.dim as f64);
    let (mut records, mut summaries, mut plot) = (Vec::new(), Vec::new(), Vec::new());
    for prop in &props {
        let label = prop.label();
        let mut grid = cfg.grid_spec()?;
        let mut slopes = Vec::new();
        for level in 0..cfg.refinement.levels {
            let u0 = gaussian_datum(&grid, cfg.data.center, cfg.data.sigma, cfg.data.momentum)?;
            let fit = dispersive_fit_with(prop, &u0, &times, &sampling)?;
            for (t, v) in fit.times.iter().zip(&fit.norms) {
                let r = ExperimentRecord::new("dispersive", format!("{label}/level{level}/t={t:.6e}"))
                    .param("propagator", &label)
                    .param("level", level)
                    .param("t", t)
                    .param("sigma", cfg.data.sigma)
                    .param("row_spacing", cfg.refinement.row_spacing)
                    .value("norm", *v)
                    .value("data_norm", fit.data_norm);
                records.push(grid_record(r, &grid));
                if level == 0 {
                    plot.push((label.clone(), t.ln(), v.ln()));
                }
            }
            slopes.push(fit);
            grid = grid.refined();
        }
        let first = &slopes[0];
        let last = slopes.last().expect("at least one level");
        let drift = if slopes.len() > 1 { refinement_drift(first.slope, last.slope) } else { 0.0 };
        let ok = (last.slope - expected).abs() <= cfg.tolerance.slope && drift < cfg.tolerance.drift;
        let s = ExperimentRecord::new("dispersive", format!("summary/{label}"))
            .param("propagator", &label)
            .param("t_min", cfg.time.t_min)
            .param("t_max", cfg.time.t_max)
            .param("count", cfg.time.count)
            .param("levels", cfg.refinement.levels)
            .param("expected_slope", expected)
            .param("slope_tolerance", cfg.tolerance.slope)
            .value("slope", last.slope)
            .value("intercept", last.intercept)
            .value("max", last.norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .value("spread", spread(&last.norms))
            .value("drift", drift)
            .stable(ok);
        summaries.push(grid_record(s, &cfg.grid_spec()?));
    }
    Ok(SweepOutput { experiment: Experiment::Dispersive, records, summaries, plot, passed: true })
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

fn pair_label(pair: &AdmissiblePair, endpoint: bool) -> String {
    let p = if pair.p.is_infinite() { "inf".to_string() } else { format!("{}", pair.p) };
    let r = if pair.r.is_infinite() { "inf".to_string() } else { format!("{}", pair.r) };
    if endpoint {
        format!("({p},{r})L")
    } else {
        format!("({p},{r})")
    }
}

fn sweep_strichartz(cfg: &ExperimentConfig) -> Result<SweepOutput, CliError> {
    let prop = PropagatorSpec::for_potential(&cfg.potential, cfg.time.split_dt);
    let (mut records, mut summaries, mut plot) = (Vec::new(), Vec::new(), Vec::new());
    let base = cfg.grid_spec()?;
    for (pair, endpoint) in cfg.pairs()? {
        let plabel = pair_label(&pair, endpoint);
        let mut finest = Vec::new();
        let mut worst_drift: f64 = 0.0;
        for &sigma in &cfg.family.sigmas {
            for &k in &cfg.family.momenta {
                let mut grid = base;
                let mut samples = cfg.time.samples;
                let mut qs = Vec::new();
                for _ in 0..cfg.refinement.levels {
                    let u0 = gaussian_datum(&grid, 0.0, sigma, k)?;
                    let opts = QuotientOptions { samples, sampling: cfg.sampling(), split_dt: cfg.time.split_dt };
                    qs.push(strichartz_quotient_with(&prop, &u0, cfg.time.horizon, &pair, endpoint, &opts)?);
                    grid = grid.refined();
                    samples = 2 * (samples - 1) + 1;
                }
                let q = *qs.last().expect("at least one level");
                let drift = if qs.len() > 1 { refinement_drift(qs[qs.len() - 2], q) } else { 0.0 };
                worst_drift = worst_drift.max(drift);
                let mut r = ExperimentRecord::new("strichartz", format!("{plabel}/sigma={sigma}/k={k}"))
                    .param("propagator", prop.label())
                    .param("p", pair.p)
                    .param("r", pair.r)
                    .param("endpoint", endpoint)
                    .param("sigma", sigma)
                    .param("momentum", k)
                    .param("T", cfg.time.horizon)
                    .param("samples", cfg.time.samples)
                    .param("levels", cfg.refinement.levels)
                    .param("row_spacing", cfg.refinement.row_spacing);
                for (l, v) in qs.iter().enumerate() {
                    r = r.value(&format!("quotient_level{l}"), *v);
                }
                let r = r.value("quotient", q).value("drift", drift).stable(drift < cfg.tolerance.drift && q < cfg.tolerance.finite);
                records.push(grid_record(r, &base));
                plot.push((plabel.clone(), sigma.ln(), q.ln()));
                finest.push(q);
            }
        }
        let max = finest.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ok = max.is_finite() && max < cfg.tolerance.finite && worst_drift < cfg.tolerance.drift;
        let s = ExperimentRecord::new("strichartz", format!("summary/{plabel}"))
            .param("propagator", prop.label())
            .param("p", pair.p)
            .param("r", pair.r)
            .param("endpoint", endpoint)
            .param("sigmas", &cfg.family.sigmas)
            .param("momenta", &cfg.family.momenta)
            .param("T", cfg.time.horizon)
            .param("levels", cfg.refinement.levels)
            .value("max", max)
            .value("spread", spread(&finest))
            .value("worst_drift", worst_drift)
            .stable(ok);
        summaries.push(grid_record(s, &base));
    }
    Ok(SweepOutput { experiment: Experiment::Strichartz, records, summaries, plot, passed: true })
}

fn sweep_duhamel(cfg: &ExperimentConfig) -> Result<SweepOutput, CliError> {
    let pot = cfg.potential.build();
    let d = &cfg.duhamel;
    let base = Parametrix::new(pot.clone()).with_window(cfg.window());
    let horizon = base.horizon().max(d.t);
    let (mut records, mut plot) = (Vec::new(), Vec::new());
    let mut residuals = Vec::new();
    let mut grid = cfg.grid_spec()?;
    for level in 0..d.levels {
        let scale = 1usize << level;
        let nodes = d.nodes * scale;
        let flow_level = d.flow_level + level as u32;
        let split_dt = d.split_dt / scale as f64;
        let p = base.clone().with_horizon(horizon).with_flow_level(flow_level);
        let u0 = gaussian_datum(&grid, cfg.data.center, cfg.data.sigma, cfg.data.momentum)?;
        let rep = p.duhamel_residual(&u0, d.t, nodes, split_dt)?;
        let r = ExperimentRecord::new("duhamel", format!("{}/level{level}", pot.name()))
            .param("potential", pot.name())
            .param("t", d.t)
            .param("nodes", nodes)
            .param("flow_level", flow_level)
            .param("split_dt", split_dt)
            .param("horizon", horizon)
            .param("sigma", cfg.data.sigma)
            .param("center", cfg.data.center)
            .param("momentum", cfg.data.momentum)
            .value("residual", rep.residual)
            .value("parametrix_gap", rep.parametrix_gap);
        records.push(grid_record(r, &grid));
        plot.push((pot.name().to_string(), (nodes as f64).ln(), rep.residual.ln()));
        residuals.push(rep.residual);
        grid = grid.refined();
    }
    let decreasing = residuals.windows(2).all(|w| w[1] < w[0]);
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = decreasing && (ratios.is_empty() || min_ratio >= cfg.tolerance.duhamel_ratio);
    let mut s = ExperimentRecord::new("duhamel", format!("summary/{}", pot.name()))
        .param("potential", pot.name())
        .param("t", d.t)
        .param("levels", d.levels)
        .param("ratio_tolerance", cfg.tolerance.duhamel_ratio)
        .value("max", residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .value("spread", spread(&residuals))
        .value("strictly_decreasing", if decreasing { 1.0 } else { 0.0 });
    if !ratios.is_empty() {
        s = s.value("min_ratio", min_ratio);
    }
    let summaries = vec![grid_record(s.stable(ok), &cfg.grid_spec()?)];
    Ok(SweepOutput { experiment: Experiment::Duhamel, records, summaries, plot, passed: true })
}

fn sweep_lemmas(cfg: &ExperimentConfig) -> Result<SweepOutput, CliError> {
    let (mut records, mut summaries, mut plot) = (Vec::new(), Vec::new(), Vec::new());
    for check in [check_liouville(cfg), check_lemh_suite(cfg), check_determinant(cfg)] {
        let s = ExperimentRecord::new("lemmas", format!("summary/{}", check.name))
            .param("seed", cfg.seed)
            .param("detail", &check.detail)
            .value("max", check.value)
            .value("tolerance", check.tolerance)
            .stable(check.passed);
        summaries.push(s);
    }

    let pot = cfg.potential.build();
    let pname = pot.name().to_string();
    let window = cfg.window();
    let grid = cfg.grid_spec()?;
    let consts = LemmaConstants::of(&pot, 1);

    // decay ratio across t, with a refinement twin on the doubled grid
    let t_hi = cfg.time.t_max.min(consts.t2);
    let t_lo = 0.02f64.min(0.5 * t_hi);
    let times = geometric(t_lo, t_hi, 6);
    let f = gaussian_datum(&grid, cfg.data.center, cfg.data.sigma, cfg.data.momentum)?;
    let f2 = gaussian_datum(&grid.refined(), cfg.data.center, cfg.data.sigma, cfg.data.momentum)?;
    let mut ratios = Vec::new();
    let mut worst: f64 = 0.0;
    for &t in &times {
        let a = lemma4_ratio(&pot, &window, 0.0, t, &f)?;
        let b = lemma4_ratio(&pot, &window, 0.0, t, &f2)?;
        let drift = refinement_drift(a, b);
        worst = worst.max(drift);
        let r = ExperimentRecord::new("lemmas", format!("decay/{pname}/t={t:.6e}"))
            .param("potential", &pname)
            .param("t", t)
            .param("s", 0.0)
            .value("ratio", b)
            .value("ratio_coarse", a)
            .value("drift", drift)
            .stable(drift < cfg.tolerance.drift);
        records.push(grid_record(r, &grid));
        plot.push((format!("decay/{pname}"), t.ln(), b.ln()));
        ratios.push(b);
    }
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s = ExperimentRecord::new("lemmas", format!("summary/decay/{pname}"))
        .param("potential", &pname)
        .param("times", &times)
        .value("max", max)
        .value("spread", spread(&ratios))
        .value("worst_drift", worst)
        .stable(max < cfg.tolerance.finite && worst < cfg.tolerance.drift);
    summaries.push(grid_record(s, &grid));

    // localization ratio over random coherent superpositions
    let t1 = consts.t1;
    let (s_time, t_time) = ((0.03f64).min(0.4 * t1), (0.05f64).min(0.6 * t1));
    let mut rng = rng_for(cfg.seed, 6);
    let forms: Vec<PhaseSpaceForm> = (0..cfg.suite.forms).map(|_| PhaseSpaceForm::random_coherent(&mut rng, 3, 2.0)).collect();
    let fine = grid.refined();
    let mut ratios = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, form) in forms.iter().enumerate() {
        let a = lemma3_ratio_with(&pot, &window, s_time, t_time, form, &grid, PhaseNodes::default())?;
        let b = lemma3_ratio_with(&pot, &window, s_time, t_time, form, &fine, PhaseNodes::default())?;
        let drift = refinement_drift(a, b);
        worst = worst.max(drift);
        let r = ExperimentRecord::new("lemmas", format!("localization/{pname}/form{i:04}"))
            .param("potential", &pname)
            .param("s", s_time)
            .param("t", t_time)
            .param("form", i)
            .value("ratio", b)
            .value("ratio_coarse", a)
            .value("drift", drift)
            .stable(drift < cfg.tolerance.drift);
        records.push(grid_record(r, &grid));
        ratios.push(b);
    }
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s = ExperimentRecord::new("lemmas", format!("summary/localization/{pname}"))
        .param("potential", &pname)
        .param("forms", cfg.suite.forms)
        .param("s", s_time)
        .param("t", t_time)
        .value("max", max)
        .value("spread", spread(&ratios))
        .value("worst_drift", worst)
        .stable(max < cfg.tolerance.finite && worst < cfg.tolerance.drift);
    summaries.push(grid_record(s, &grid));
    Ok(SweepOutput { experiment: Experiment::Lemmas, records, summaries, plot, passed: true })
}

// ---------------------------------------------------------------------------
// persistence

/// Fixed column order of results.csv.
pub const CSV_COLUMNS: [&str; 6] = ["experiment", "cell", "parameters", "quantity", "value", "stable"];

/// 17 significant digits; round-trips every finite double.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_csv(path: &Path, records: &[ExperimentRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.into()))?;
    w.write_record(CSV_COLUMNS).map_err(|e| CliError::Io(e.into()))?;
    for r in records {
        let params = serde_json::to_string(&r.parameters).expect("parameters serialize");
        let stable = r.stable.map(|b| b.to_string()).unwrap_or_default();
        for (k, v) in &r.values {
            w.write_record([r.experiment.as_str(), r.cell.as_str(), &params, k, &fmt_float(*v), &stable])
                .map_err(|e| CliError::Io(e.into()))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_jsonl(path: &Path, records: &[ExperimentRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("record serializes");
        buf.push(b'\n');
    }
    fs::write(path, buf)?;
    Ok(())
}

fn write_plot(path: &Path, rows: &[(String, f64, f64)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.into()))?;
    w.write_record(["series", "x", "y"]).map_err(|e| CliError::Io(e.into()))?;
    for (s, x, y) in rows {
        w.write_record([s.as_str(), &fmt_float(*x), &fmt_float(*y)]).map_err(|e| CliError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).expect("report serializes");
    f.write_all(b"\n")?;
    Ok(())
}

fn check_records(report: &VerifyReport) -> Vec<ExperimentRecord> {
    report
        .checks
        .iter()
        .map(|c| {
            ExperimentRecord::new(report.command.as_str(), c.name.as_str())
                .param("seed", report.config.seed)
                .param("detail", &c.detail)
                .value("value", c.value)
                .value("tolerance", c.tolerance)
                .stable(c.passed)
        })
        .collect()
}

/// report.json and results.csv for verify / flow-check.
pub fn write_verify(dir: &Path, report: &VerifyReport) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), report)?;
    write_csv(&dir.join("results.csv"), &check_records(report))
}

#[derive(Serialize)]
struct SweepReport<'a> {
    command: &'static str,
    experiment: &'static str,
    passed: bool,
    cells: usize,
    summaries: &'a [ExperimentRecord],
    config: &'a ExperimentConfig,
}

/// report.json, results.csv, records.jsonl and plotdata_<experiment>.csv.
pub fn write_sweep(dir: &Path, out: &SweepOutput, cfg: &ExperimentConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let all: Vec<ExperimentRecord> = out.records.iter().chain(&out.summaries).cloned().collect();
    let report = SweepReport {
        command: "sweep",
        experiment: out.experiment.name(),
        passed: out.passed,
        cells: out.records.len(),
        summaries: &out.summaries,
        config: cfg,
    };
    write_json(&dir.join("report.json"), &report)?;
    write_csv(&dir.join("results.csv"), &all)?;
    write_jsonl(&dir.join("records.jsonl"), &all)?;
    write_plot(&dir.join(format!("plotdata_{}.csv", out.experiment.name())), &out.plot)
}

// ---------------------------------------------------------------------------
// entry point

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let experiment = match cli.command {
        Command::Sweep { experiment } => Some(experiment),
        _ => None,
    };
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, experiment)?,
        None => ExperimentConfig::defaults(experiment),
    };
    cfg.validate(cli.command)?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("config error: --threads must be at least 1");
            return 2;
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg);
    match cli.command {
        Command::Verify | Command::FlowCheck => {
            let report = if cli.command == Command::Verify { run_verify(&cfg) } else { run_flow_check(&cfg) };
            write_verify(&dir, &report)?;
            for c in &report.checks {
                println!("{:<22} {}  value {}  tolerance {}", c.name, if c.passed { "ok  " } else { "FAIL" }, fmt_float(c.value), fmt_float(c.tolerance));
            }
            match &report.first_failure {
                None => Ok(0),
                Some(name) => {
                    eprintln!("first failing invariant: {name}");
                    Ok(1)
                }
            }
        }
        Command::Sweep { experiment } => {
            let out = run_sweep(&cfg, experiment)?;
            write_sweep(&dir, &out, &cfg)?;
            for s in &out.summaries {
                let vals: Vec<String> = s.values.iter().map(|(k, v)| format!("{k}={}", fmt_float(*v))).collect();
                println!("{} {}  {}", s.cell, if s.stable == Some(false) { "FAIL" } else { "ok" }, vals.join(" "));
            }
            if out.passed {
                Ok(0)
            } else {
                let name = out.summaries.iter().find(|s| s.stable == Some(false)).map(|s| s.cell.clone()).unwrap_or_default();
                eprintln!("first failing summary: {name}");
                Ok(1)
            }
        }
    }
}

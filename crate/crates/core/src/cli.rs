//! Configuration documents and the commands behind the `contactig` binary.
//!
//! Every command reads a JSON config (`schema_version` 1, unknown fields rejected),
//! writes its outputs into `--out-dir`, and writes `assumptions.json`: the config
//! with every default filled in, which can be fed back as `--config` to repeat the run.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{run_filter, write_belief_csv, FilterConfig, FilterOptions, ModeSpec, SwitchDetection};
use crate::gaussian::{belief_entropy, info_gain_lower_bound, mixture_entropy_lower_bound, BeliefVector, Gaussian};
use crate::gradient::{ascent_check, design_target, info_gain_gradient_with, GradientOptions, GradientReport};
use crate::infogain::{
    info_gain_fully_observed, info_gain_monte_carlo, info_gain_partially_observed, magazine_info_gain, two_mode_surface,
    GainValue, InfoGainReport, MonteCarloGain,
};
use crate::model::{MagazineCondition, TwoMassModel, DEFAULT_SIGMA_F};
use crate::scenario::{spearman, stiffness_sweep, ApproachScenario, SweepPoint};
use crate::simulate::{simulate_from, InputSignal, ModeSchedule};
use crate::sysid::{fit, initial_guess, FitOptions, FitResult, ParamBounds};
use crate::trace::{fmt_f64, Trace};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_THRESHOLD_NEWTONS: f64 = 6.0;

#[derive(Debug, Parser)]
#[command(name = "contactig", version, about = "Contact-mode estimation and information-gain design metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Random seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for outputs (created if missing).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Force threshold (N) of the comparison detector; overrides the config.
    #[arg(long, global = true)]
    pub threshold_newtons: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a noisy two-mass contact trace.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the mode estimator over a trace.
    Estimate {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate information-gain bounds, surfaces and table comparisons.
    Infogain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Identify two-mass parameters from a trace.
    Identify {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference design gradient of the partially observed bound.
    Gradient {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detection latency and belief entropy over a sensor-stiffness sweep.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 2 for configuration or I/O errors, 3 for numerical failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}

/// Runs one command and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Simulate { config } => cmd_simulate(config.as_deref(), cli.seed, &out_dir),
        Command::Estimate { trace, config } => cmd_estimate(trace.as_deref(), config, cli.threshold_newtons, &out_dir),
        Command::Infogain { config } => cmd_infogain(config, cli.seed, &out_dir),
        Command::Identify { trace, config, out } => {
            cmd_identify(trace.as_deref(), config.as_deref(), out.as_deref(), cli.seed, cli.out_dir.as_deref())
        }
        Command::Gradient { config, out } => cmd_gradient(config, out.as_deref(), cli.out_dir.as_deref()),
        Command::Sweep { config } => cmd_sweep(config.as_deref(), cli.seed, cli.threshold_newtons, &out_dir),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads a JSON config, reporting the path of any offending field.
pub fn load_config<T: DeserializeOwned + Versioned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let cfg: T = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: format!("{}: {}", path.display(), e.path()),
        message: e.inner().to_string(),
    })?;
    if cfg.schema_version() != SCHEMA_VERSION {
        return Err(Error::Config {
            path: format!("{}: schema_version", path.display()),
            message: format!("unsupported schema_version {}, expected {SCHEMA_VERSION}", cfg.schema_version()),
        });
    }
    Ok(cfg)
}

pub trait Versioned {
    fn schema_version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn schema_version(&self) -> u32 {
                self.schema_version
            }
        }
    )*};
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn load_trace(path: &Path) -> Result<Trace> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    Trace::read_csv(file)
}

fn write_csv_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema_version: u32,
    pub model: Option<TwoMassModel>,
    /// Seconds.
    pub duration: Option<f64>,
    pub schedule: Option<ModeSchedule>,
    pub input: Option<InputSignal>,
    /// Hidden state `[q2, q̇2]` at t = 0.
    pub initial_state: Option<[f64; 2]>,
    pub seed: Option<u64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: None,
            duration: None,
            schedule: None,
            input: None,
            initial_state: None,
            seed: None,
        }
    }
}

impl SimulateConfig {
    /// Defaults: compliant-surface plant with Σw = 1 N², 1 s, contact at mid-run
    /// reached by a 10 mm/s approach.
    pub fn resolved(&self, seed: Option<u64>) -> Self {
        let duration = self.duration.unwrap_or(1.0);
        let t_contact = 0.5 * duration;
        Self {
            schema_version: SCHEMA_VERSION,
            model: Some(self.model.unwrap_or_else(|| MagazineCondition::CompliantSurface.model(1.0))),
            duration: Some(duration),
            schedule: Some(self.schedule.clone().unwrap_or_else(|| ModeSchedule::contact_at(t_contact, duration))),
            input: Some(self.input.clone().unwrap_or(InputSignal::Ramp {
                start: t_contact,
                velocity: 0.01,
                offset: 0.0,
            })),
            initial_state: Some(self.initial_state.unwrap_or([0.0, 0.0])),
            seed: Some(seed.or(self.seed).unwrap_or(DEFAULT_SEED)),
        }
    }
}

pub fn cmd_simulate(config: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = match config {
        Some(p) => load_config::<SimulateConfig>(p)?,
        None => SimulateConfig::default(),
    }
    .resolved(seed);
    let (model, duration, schedule, input, x0, seed) = (
        cfg.model.unwrap(),
        cfg.duration.unwrap(),
        cfg.schedule.clone().unwrap(),
        cfg.input.clone().unwrap(),
        cfg.initial_state.unwrap(),
        cfg.seed.unwrap(),
    );
    let trace = simulate_from(&model, &schedule, &|t| input.eval(t), duration, seed, x0.into())?;
    ensure_dir(out_dir)?;
    let path = out_dir.join("trace.csv");
    trace.save(&path).map_err(|e| match e {
        Error::Io(io) => io_err(&path, io),
        other => other,
    })?;
    Ok(vec![path, write_json(&out_dir.join("assumptions.json"), &cfg)?])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub schema_version: u32,
    pub trace: Option<PathBuf>,
    pub modes: Vec<ModeSpec>,
    pub prior: Option<BeliefVector>,
    /// Row-stochastic; identity when omitted.
    pub transition: Option<Vec<Vec<f64>>>,
    /// Force noise variance for fully observed modes (N²).
    pub sigma_f: Option<f64>,
    pub initial_variances: Option<[f64; 2]>,
    pub debounce: Option<usize>,
    pub threshold_newtons: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateSummary {
    pub schema_version: u32,
    pub samples: usize,
    pub total_entropy: f64,
    pub final_belief: BeliefVector,
    pub degenerate_steps: usize,
    pub threshold_newtons: f64,
    pub detections: Vec<SwitchDetection>,
}

pub fn cmd_estimate(trace: Option<&Path>, config: &Path, threshold: Option<f64>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg: EstimateConfig = load_config(config)?;
    let n = cfg.modes.len();
    if n == 0 {
        return Err(Error::Config {
            path: format!("{}: modes", config.display()),
            message: "at least one mode is required".into(),
        });
    }
    let trace_path = trace
        .map(Path::to_path_buf)
        .or_else(|| cfg.trace.clone())
        .ok_or_else(|| Error::arg("no trace given (--trace or config `trace`)"))?;
    let transition = match &cfg.transition {
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::arg(format!("transition must be {n}x{n}")));
            }
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        }
        None => DMatrix::identity(n, n),
    };
    let resolved = EstimateConfig {
        schema_version: SCHEMA_VERSION,
        trace: Some(trace_path.clone()),
        modes: cfg.modes.clone(),
        prior: Some(cfg.prior.clone().unwrap_or_else(|| BeliefVector::uniform(n))),
        transition: Some(transition.row_iter().map(|r| r.iter().copied().collect()).collect()),
        sigma_f: Some(cfg.sigma_f.unwrap_or(DEFAULT_SIGMA_F)),
        initial_variances: Some(cfg.initial_variances.unwrap_or([1e-4, 1e-2])),
        debounce: Some(cfg.debounce.unwrap_or(5)),
        threshold_newtons: Some(threshold.or(cfg.threshold_newtons).unwrap_or(DEFAULT_THRESHOLD_NEWTONS)),
    };
    let filter = FilterConfig {
        modes: resolved.modes.clone(),
        prior: resolved.prior.clone().unwrap(),
        transition: Some(transition),
        sigma_f: resolved.sigma_f.unwrap(),
        initial_variances: resolved.initial_variances.unwrap(),
    };
    let opts = FilterOptions {
        debounce: resolved.debounce.unwrap(),
        threshold_newtons: resolved.threshold_newtons.unwrap(),
    };
    let data = load_trace(&trace_path)?;
    let out = run_filter(&data, &filter, &opts)?;

    ensure_dir(out_dir)?;
    let beliefs = out_dir.join("beliefs.csv");
    write_belief_csv(&data.t, &out, fs::File::create(&beliefs).map_err(|e| io_err(&beliefs, e))?)?;
    let summary = EstimateSummary {
        schema_version: SCHEMA_VERSION,
        samples: data.len(),
        total_entropy: out.total_entropy,
        final_belief: out.final_state.belief.clone(),
        degenerate_steps: out.degenerate_steps,
        threshold_newtons: opts.threshold_newtons,
        detections: out.detections.clone(),
    };
    Ok(vec![
        beliefs,
        write_json(&out_dir.join("summary.json"), &summary)?,
        write_json(&out_dir.join("assumptions.json"), &resolved)?,
    ])
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count < 2 || !(self.stop > self.start) {
            return Err(Error::arg("grid needs count >= 2 and stop > start"));
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        Ok((0..self.count).map(|i| self.start + step * i as f64).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    K1,
    M2,
    B2,
    K2,
    #[serde(rename = "sigma_w")]
    SigmaW,
    #[serde(rename = "gap")]
    Gap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Mode whose parameter is varied; defaults to the only contact mode.
    pub mode: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InfoGainQuery {
    /// Free space against a sensor spring with both positions measured.
    FullyObserved {
        #[serde(rename = "K1")]
        k1: f64,
        gap: f64,
        sigma_f: Option<f64>,
        prior: Option<BeliefVector>,
    },
    /// Steady-state predictive distributions, one plant per mode.
    PartiallyObserved {
        models: Vec<TwoMassModel>,
        gap: f64,
        prior: Option<BeliefVector>,
        eval_time: Option<f64>,
        sweep: Option<ParameterSweep>,
    },
    /// Arbitrary Gaussian components, optionally with a Monte Carlo estimate of the exact gain.
    Mixture {
        components: Vec<Gaussian>,
        prior: Option<BeliefVector>,
        monte_carlo_samples: Option<usize>,
        seed: Option<u64>,
    },
    /// Bound for {N(0,1), N(μ₂,Σ₂)} under a flat prior over a grid.
    Surface { mu2: Grid, sigma2: Grid },
    /// Partially observed bound for the three identified magazine conditions.
    Table { sigma_w: Vec<f64>, gap: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoGainConfig {
    pub schema_version: u32,
    pub query: InfoGainQuery,
}

#[derive(Clone, Debug, Serialize)]
struct MixtureReport {
    lower_bound: f64,
    mixture_entropy_lower_bound: f64,
    prior_entropy: f64,
    monte_carlo: Option<MonteCarloGain>,
}

#[derive(Clone, Debug, Serialize)]
struct SurfaceReport {
    points: usize,
    minimum_mu2: f64,
    minimum_sigma2: f64,
    minimum_info_gain: f64,
    /// Points where the pairwise closed form exceeds ln 2.
    saturated_points: usize,
}

#[derive(Clone, Debug, Serialize)]
struct TablePoint {
    sigma_w: f64,
    gap: f64,
    /// Conditions from highest to lowest bound.
    ranking: Vec<&'static str>,
    bounds: Vec<f64>,
    /// compliant_feet > flex_joints > compliant_surface.
    expected_ordering_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
struct TableReport {
    points: Vec<TablePoint>,
    expected_ordering_holds_everywhere: bool,
}

#[derive(Clone, Debug, Serialize)]
struct FullyObservedReport {
    value: GainValue,
}

/// One grid point of the magazine comparison.
pub fn table_point(sigma_w: f64, gap: f64) -> Result<Vec<(MagazineCondition, InfoGainReport)>> {
    MagazineCondition::ALL
        .iter()
        .map(|c| Ok((*c, magazine_info_gain(*c, sigma_w, gap)?)))
        .collect()
}

/// Whether compliant feet > flex joints > compliant surface on the raw bound.
pub fn table_ordering_holds(point: &[(MagazineCondition, InfoGainReport)]) -> bool {
    let get = |c: MagazineCondition| point.iter().find(|(k, _)| *k == c).map(|(_, r)| r.raw_bound).unwrap_or(f64::NAN);
    get(MagazineCondition::CompliantFeet) > get(MagazineCondition::FlexJoints)
        && get(MagazineCondition::FlexJoints) > get(MagazineCondition::CompliantSurface)
}

fn apply_sweep(models: &[TwoMassModel], sweep: &ParameterSweep, value: f64, gap: f64) -> Result<(Vec<TwoMassModel>, f64)> {
    let mut models = models.to_vec();
    if sweep.parameter == SweepParameter::Gap {
        return Ok((models, value));
    }
    let i = match sweep.mode {
        Some(i) if i < models.len() => i,
        Some(i) => return Err(Error::arg(format!("sweep mode {i} out of range"))),
        None => design_target(&models)?,
    };
    let m = &mut models[i];
    match sweep.parameter {
        SweepParameter::K1 => m.k1 = value,
        SweepParameter::M2 => m.m2 = value,
        SweepParameter::B2 => m.b2 = value,
        SweepParameter::K2 => m.k2 = value,
        SweepParameter::SigmaW => m.sigma_w = value,
        SweepParameter::Gap => unreachable!(),
    }
    Ok((models, gap))
}

pub fn cmd_infogain(config: &Path, seed: Option<u64>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg: InfoGainConfig = load_config(config)?;
    ensure_dir(out_dir)?;
    let report_path = out_dir.join("report.json");
    let mut files = Vec::new();
    let resolved_query = match cfg.query {
        InfoGainQuery::FullyObserved { k1, gap, sigma_f, prior } => {
            let sigma_f = sigma_f.unwrap_or(DEFAULT_SIGMA_F);
            let prior = prior.unwrap_or_else(|| BeliefVector::uniform(2));
            let value = info_gain_fully_observed(k1, gap, sigma_f, &prior)?;
            files.push(write_json(&report_path, &FullyObservedReport { value })?);
            InfoGainQuery::FullyObserved {
                k1,
                gap,
                sigma_f: Some(sigma_f),
                prior: Some(prior),
            }
        }
        InfoGainQuery::PartiallyObserved {
            models,
            gap,
            prior,
            eval_time,
            sweep,
        } => {
            if models.is_empty() {
                return Err(Error::Config {
                    path: format!("{}: query.models", config.display()),
                    message: "at least one mode model is required".into(),
                });
            }
            let prior = prior.unwrap_or_else(|| BeliefVector::uniform(models.len()));
            let eval_time = eval_time.unwrap_or_else(|| models.iter().map(|m| m.ts).fold(0.0, f64::max));
            let report = info_gain_partially_observed(&models, gap, &prior, eval_time)?;
            files.push(write_json(&report_path, &report)?);
            if let Some(sw) = &sweep {
                let mut rows = Vec::with_capacity(sw.values.len());
                for &v in &sw.values {
                    let (ms, g) = apply_sweep(&models, sw, v, gap)?;
                    let r = info_gain_partially_observed(&ms, g, &prior, eval_time)?;
                    rows.push(vec![fmt_f64(v), fmt_f64(r.lower_bound), fmt_f64(r.raw_bound), r.saturated.to_string()]);
                }
                files.push(write_csv_rows(
                    &out_dir.join("sweep.csv"),
                    &["value", "lower_bound", "raw_bound", "saturated"],
                    rows,
                )?);
            }
            InfoGainQuery::PartiallyObserved {
                models,
                gap,
                prior: Some(prior),
                eval_time: Some(eval_time),
                sweep,
            }
        }
        InfoGainQuery::Mixture {
            components,
            prior,
            monte_carlo_samples,
            seed: cfg_seed,
        } => {
            if components.is_empty() {
                return Err(Error::Config {
                    path: format!("{}: query.components", config.display()),
                    message: "at least one component is required".into(),
                });
            }
            let prior = prior.unwrap_or_else(|| BeliefVector::uniform(components.len()));
            let seed = seed.or(cfg_seed).unwrap_or(DEFAULT_SEED);
            let monte_carlo = monte_carlo_samples
                .map(|n| info_gain_monte_carlo(&prior, &components, n, seed))
                .transpose()?;
            let report = MixtureReport {
                lower_bound: info_gain_lower_bound(&prior, &components)?,
                mixture_entropy_lower_bound: mixture_entropy_lower_bound(&prior, &components)?,
                prior_entropy: belief_entropy(&prior),
                monte_carlo,
            };
            files.push(write_json(&report_path, &report)?);
            InfoGainQuery::Mixture {
                components,
                prior: Some(prior),
                monte_carlo_samples,
                seed: Some(seed),
            }
        }
        InfoGainQuery::Surface { mu2, sigma2 } => {
            let (ms, ss) = (mu2.values()?, sigma2.values()?);
            if ss[0] <= 0.0 {
                return Err(Error::arg("sigma2 grid must be strictly positive"));
            }
            let pts = two_mode_surface(&ms, &ss)?;
            let min = pts
                .iter()
                .min_by(|a, b| a.info_gain.total_cmp(&b.info_gain))
                .copied()
                .expect("non-empty grid");
            files.push(write_csv_rows(
                &out_dir.join("surface.csv"),
                &["mu2", "sigma2", "info_gain"],
                pts.iter().map(|p| vec![fmt_f64(p.mu2), fmt_f64(p.sigma2), fmt_f64(p.info_gain)]),
            )?);
            files.push(write_json(
                &report_path,
                &SurfaceReport {
                    points: pts.len(),
                    minimum_mu2: min.mu2,
                    minimum_sigma2: min.sigma2,
                    minimum_info_gain: min.info_gain,
                    saturated_points: pts.iter().filter(|p| p.saturated).count(),
                },
            )?);
            InfoGainQuery::Surface { mu2, sigma2 }
        }
        InfoGainQuery::Table { sigma_w, gap } => {
            let mut rows = Vec::new();
            let mut points = Vec::new();
            for &sw in &sigma_w {
                for &g in &gap {
                    let pt = table_point(sw, g)?;
                    for (c, r) in &pt {
                        rows.push(vec![
                            c.label().to_string(),
                            fmt_f64(sw),
                            fmt_f64(g),
                            fmt_f64(r.lower_bound),
                            fmt_f64(r.raw_bound),
                            r.saturated.to_string(),
                        ]);
                    }
                    let mut ranked: Vec<(&'static str, f64)> = pt.iter().map(|(c, r)| (c.label(), r.raw_bound)).collect();
                    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
                    points.push(TablePoint {
                        sigma_w: sw,
                        gap: g,
                        ranking: ranked.iter().map(|r| r.0).collect(),
                        bounds: ranked.iter().map(|r| r.1).collect(),
                        expected_ordering_holds: table_ordering_holds(&pt),
                    });
                }
            }
            files.push(write_csv_rows(
                &out_dir.join("table.csv"),
                &["condition", "sigma_w", "gap", "lower_bound", "raw_bound", "saturated"],
                rows,
            )?);
            let everywhere = points.iter().all(|p| p.expected_ordering_holds);
            files.push(write_json(
                &report_path,
                &TableReport {
                    points,
                    expected_ordering_holds_everywhere: everywhere,
                },
            )?);
            InfoGainQuery::Table { sigma_w, gap }
        }
    };
    let resolved = InfoGainConfig {
        schema_version: SCHEMA_VERSION,
        query: resolved_query,
    };
    files.push(write_json(&out_dir.join("assumptions.json"), &resolved)?);
    Ok(files)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    pub schema_version: u32,
    pub trace: Option<PathBuf>,
    /// Starting point; a spectral heuristic is used when omitted.
    pub guess: Option<TwoMassModel>,
    pub bounds: Option<ParamBounds>,
    /// Used by the heuristic guess; defaults to the trace's sample period.
    pub ts: Option<f64>,
    pub sigma_f: Option<f64>,
    pub restarts: Option<usize>,
    pub perturbation: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
struct IdentifyOutput<'a> {
    schema_version: u32,
    guess: TwoMassModel,
    bounds: ParamBounds,
    fit: &'a FitResult,
}

fn output_paths(out: Option<&Path>, out_dir: Option<&Path>, default_name: &str) -> (PathBuf, PathBuf) {
    match (out, out_dir) {
        (Some(o), Some(d)) => (o.to_path_buf(), d.to_path_buf()),
        (Some(o), None) => {
            let dir = o.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            (o.to_path_buf(), dir.to_path_buf())
        }
        (None, Some(d)) => (d.join(default_name), d.to_path_buf()),
        (None, None) => (PathBuf::from(default_name), PathBuf::from(".")),
    }
}

pub fn cmd_identify(
    trace: Option<&Path>,
    config: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
    out_dir: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let cfg = match config {
        Some(p) => load_config::<IdentifyConfig>(p)?,
        None => IdentifyConfig {
            schema_version: SCHEMA_VERSION,
            trace: None,
            guess: None,
            bounds: None,
            ts: None,
            sigma_f: None,
            restarts: None,
            perturbation: None,
            seed: None,
        },
    };
    let trace_path = trace
        .map(Path::to_path_buf)
        .or_else(|| cfg.trace.clone())
        .ok_or_else(|| Error::arg("no trace given (--trace or config `trace`)"))?;
    let data = load_trace(&trace_path)?;
    data.validate()?;
    let ts = cfg.guess.map(|g| g.ts).or(cfg.ts).unwrap_or_else(|| data.sample_period());
    let sigma_f = cfg.guess.map(|g| g.sigma_f).or(cfg.sigma_f).unwrap_or(DEFAULT_SIGMA_F);
    let guess = match cfg.guess {
        Some(g) => g,
        None => initial_guess(&data, ts, sigma_f)?,
    };
    let bounds = cfg.bounds.unwrap_or_else(|| ParamBounds::around(&guess));
    let defaults = FitOptions::default();
    let opts = FitOptions {
        restarts: cfg.restarts.unwrap_or(defaults.restarts),
        seed: seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
        perturbation: cfg.perturbation.unwrap_or(defaults.perturbation),
        ..defaults
    };
    let result = fit(&data, &guess, &bounds, &opts)?;

    let (out_path, dir) = output_paths(out, out_dir, "fit.json");
    ensure_dir(&dir)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let resolved = IdentifyConfig {
        schema_version: SCHEMA_VERSION,
        trace: Some(trace_path),
        guess: Some(guess),
        bounds: Some(bounds),
        ts: Some(ts),
        sigma_f: Some(sigma_f),
        restarts: Some(opts.restarts),
        perturbation: Some(opts.perturbation),
        seed: Some(opts.seed),
    };
    Ok(vec![
        write_json(
            &out_path,
            &IdentifyOutput {
                schema_version: SCHEMA_VERSION,
                guess,
                bounds,
                fit: &result,
            },
        )?,
        write_json(&dir.join("assumptions.json"), &resolved)?,
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientConfig {
    pub schema_version: u32,
    pub models: Vec<TwoMassModel>,
    /// `q1 − q2` (m).
    pub gap: f64,
    pub prior: Option<BeliefVector>,
    /// Mode whose parameters are differentiated; defaults to the only contact mode.
    pub target: Option<usize>,
    pub rel_step: Option<f64>,
    /// Relative size of the first-order ascent check step.
    pub ascent_step: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
struct AnalyticCheck {
    /// K1·gap²/(2Σf), valid when no mode has process noise.
    expected_d_k1: f64,
    relative_error: f64,
    plant_entries_zero: bool,
    matches: bool,
}

#[derive(Clone, Debug, Serialize)]
struct AscentCheck {
    before: f64,
    after: f64,
    increased: bool,
}

#[derive(Clone, Debug, Serialize)]
struct GradientOutput {
    schema_version: u32,
    report: GradientReport,
    analytic_check: Option<AnalyticCheck>,
    ascent_check: Option<AscentCheck>,
}

pub fn cmd_gradient(config: &Path, out: Option<&Path>, out_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let cfg: GradientConfig = load_config(config)?;
    if cfg.models.is_empty() {
        return Err(Error::Config {
            path: format!("{}: models", config.display()),
            message: "at least one mode model is required".into(),
        });
    }
    let prior = cfg.prior.clone().unwrap_or_else(|| BeliefVector::uniform(cfg.models.len()));
    let target = match cfg.target {
        Some(t) => t,
        None => design_target(&cfg.models)?,
    };
    let defaults = GradientOptions::default();
    let opts = GradientOptions {
        rel_step: cfg.rel_step.unwrap_or(defaults.rel_step),
        ..defaults
    };
    let ascent_step = cfg.ascent_step.unwrap_or(1e-3);
    let report = info_gain_gradient_with(&cfg.models, target, cfg.gap, &prior, &opts)?;

    let analytic_check = (cfg.models.iter().all(|m| m.sigma_w == 0.0) && prior.is_flat() && cfg.models.len() == 2).then(|| {
        let m = report.params;
        let expected = m.k1 * cfg.gap * cfg.gap / (2.0 * m.sigma_f);
        let got = report.gradient[0].unwrap_or(f64::NAN);
        let rel = ((got - expected) / expected).abs();
        let zero = report.gradient[1..].iter().all(|g| *g == Some(0.0));
        AnalyticCheck {
            expected_d_k1: expected,
            relative_error: rel,
            plant_entries_zero: zero,
            matches: rel < 1e-6 && zero,
        }
    });
    let ascent_check = match ascent_check(&cfg.models, &report, cfg.gap, &prior, ascent_step) {
        Ok((before, after)) => Some(AscentCheck {
            before,
            after,
            increased: after > before,
        }),
        Err(_) => None,
    };

    let (out_path, dir) = output_paths(out, out_dir, "grad.json");
    ensure_dir(&dir)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let resolved = GradientConfig {
        schema_version: SCHEMA_VERSION,
        prior: Some(prior),
        target: Some(target),
        rel_step: Some(opts.rel_step),
        ascent_step: Some(ascent_step),
        ..cfg
    };
    Ok(vec![
        write_json(
            &out_path,
            &GradientOutput {
                schema_version: SCHEMA_VERSION,
                report,
                analytic_check,
                ascent_check,
            },
        )?,
        write_json(&dir.join("assumptions.json"), &resolved)?,
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub scenario: Option<ApproachScenario>,
    /// Sensor stiffness values (N/m).
    pub k1_values: Option<Vec<f64>>,
    pub trials: Option<usize>,
    /// Gap at which the bound of each configuration is reported (m).
    pub gap: Option<f64>,
    pub seed: Option<u64>,
    pub debounce: Option<usize>,
    pub threshold_newtons: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
struct SweepSummary {
    schema_version: u32,
    points: Vec<SweepPoint>,
    median_latency_strictly_decreasing: bool,
    median_total_entropy_decreasing: bool,
    /// Rank correlation between the bound and the median Bayesian latency.
    info_gain_latency_rank_correlation: f64,
}

pub fn cmd_sweep(config: Option<&Path>, seed: Option<u64>, threshold: Option<f64>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = match config {
        Some(p) => load_config::<SweepConfig>(p)?,
        None => SweepConfig {
            schema_version: SCHEMA_VERSION,
            scenario: None,
            k1_values: None,
            trials: None,
            gap: None,
            seed: None,
            debounce: None,
            threshold_newtons: None,
        },
    };
    let resolved = SweepConfig {
        schema_version: SCHEMA_VERSION,
        scenario: Some(cfg.scenario.unwrap_or_else(ApproachScenario::standard)),
        k1_values: Some(cfg.k1_values.clone().unwrap_or_else(|| vec![2.5e3, 5e3, 1e4, 2e4])),
        trials: Some(cfg.trials.unwrap_or(100)),
        gap: Some(cfg.gap.unwrap_or(1e-4)),
        seed: Some(seed.or(cfg.seed).unwrap_or(DEFAULT_SEED)),
        debounce: Some(cfg.debounce.unwrap_or(5)),
        threshold_newtons: Some(threshold.or(cfg.threshold_newtons).unwrap_or(DEFAULT_THRESHOLD_NEWTONS)),
    };
    let opts = FilterOptions {
        debounce: resolved.debounce.unwrap(),
        threshold_newtons: resolved.threshold_newtons.unwrap(),
    };
    let points = stiffness_sweep(
        resolved.scenario.as_ref().unwrap(),
        resolved.k1_values.as_ref().unwrap(),
        resolved.trials.unwrap(),
        resolved.seed.unwrap(),
        resolved.gap.unwrap(),
        &opts,
    )?;
    ensure_dir(out_dir)?;
    let csv_path = write_csv_rows(
        &out_dir.join("sweep.csv"),
        &[
            "k1",
            "info_gain",
            "median_latency_samples",
            "median_threshold_latency_samples",
            "median_total_entropy",
            "detected",
        ],
        points.iter().map(|p| {
            vec![
                fmt_f64(p.k1),
                fmt_f64(p.info_gain),
                fmt_f64(p.median_latency_samples),
                fmt_f64(p.median_threshold_latency_samples),
                fmt_f64(p.median_total_entropy),
                p.latencies.iter().filter(|l| l.is_some()).count().to_string(),
            ]
        }),
    )?;
    let ig: Vec<f64> = points.iter().map(|p| p.info_gain).collect();
    let lat: Vec<f64> = points.iter().map(|p| p.median_latency_samples).collect();
    let summary = SweepSummary {
        schema_version: SCHEMA_VERSION,
        median_latency_strictly_decreasing: lat.windows(2).all(|w| w[1] < w[0]),
        median_total_entropy_decreasing: points.windows(2).all(|w| w[1].median_total_entropy < w[0].median_total_entropy),
        info_gain_latency_rank_correlation: if points.len() > 1 { spearman(&ig, &lat) } else { f64::NAN },
        points,
    };
    Ok(vec![
        csv_path,
        write_json(&out_dir.join("summary.json"), &summary)?,
        write_json(&out_dir.join("assumptions.json"), &resolved)?,
    ])
}

versioned!(SimulateConfig, EstimateConfig, InfoGainConfig, IdentifyConfig, GradientConfig, SweepConfig);

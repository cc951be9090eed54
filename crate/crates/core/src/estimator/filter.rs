use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{bayes_update_log, hmm_step, validate_transition, HiddenState};
use crate::error::{Error, Result};
use crate::gaussian::{belief_entropy, BeliefVector, Gaussian};
use crate::model::{discretize, ContactMode, StateSpace, TwoMassModel};
use crate::trace::{fmt_f64, Trace};

/// How one mode's force likelihood is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeObservation {
    /// All positions measured; `q = [q1]` or `[q1, q2]` depending on the mode's stiffness width.
    FullyObserved(ContactMode),
    /// Hidden environment state tracked by a Kalman filter under this plant.
    PartiallyObserved(TwoMassModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub name: String,
    pub observation: ModeObservation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    pub modes: Vec<ModeSpec>,
    pub prior: BeliefVector,
    /// Row-stochastic mode transition; `None` is the identity.
    pub transition: Option<DMatrix<f64>>,
    /// Force noise variance for fully observed modes.
    pub sigma_f: f64,
    /// Initial hidden-state variances `[q2 (m²), q̇2 ((m/s)²)]`.
    pub initial_variances: [f64; 2],
}

impl FilterConfig {
    pub fn new(modes: Vec<ModeSpec>, prior: BeliefVector) -> Self {
        Self {
            modes,
            prior,
            transition: None,
            sigma_f: crate::model::DEFAULT_SIGMA_F,
            initial_variances: [1e-4, 1e-2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::arg("at least one mode is required"));
        }
        if self.prior.len() != self.modes.len() {
            return Err(Error::arg(format!(
                "prior has {} entries for {} modes",
                self.prior.len(),
                self.modes.len()
            )));
        }
        if let Some(t) = &self.transition {
            validate_transition(t, self.modes.len())?;
        }
        if !(self.sigma_f > 0.0) {
            return Err(Error::arg("sigma_f must be > 0"));
        }
        if self.initial_variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::arg("initial hidden-state variances must be > 0"));
        }
        for m in &self.modes {
            match &m.observation {
                ModeObservation::FullyObserved(c) => {
                    if c.force_dim() != 1 || !(1..=2).contains(&c.config_dim()) {
                        return Err(Error::arg(format!(
                            "mode `{}`: traces carry one force and q = [q1] or [q1, q2]",
                            m.name
                        )));
                    }
                }
                ModeObservation::PartiallyObserved(p) => {
                    p.validate()?;
                    if !(p.sigma_f > 0.0) {
                        return Err(Error::arg(format!("mode `{}`: sigma_f must be > 0", m.name)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterOptions {
    /// Consecutive samples the MAP mode must hold to count as a detection.
    pub debounce: usize,
    /// Force-threshold detector used for comparison (N).
    pub threshold_newtons: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            debounce: 5,
            threshold_newtons: 6.0,
        }
    }
}

enum ModeModel {
    Full(ContactMode),
    Partial { model: TwoMassModel, ss: StateSpace },
}

/// Belief over modes plus one hidden-state estimate per partially observed mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeFilterState {
    pub belief: BeliefVector,
    pub per_mode_state: Vec<Option<HiddenState>>,
    pub step_count: usize,
}

impl ModeFilterState {
    /// Per-mode hidden-state Gaussians (`None` for fully observed modes).
    pub fn hidden_gaussians(&self) -> Result<Vec<Option<Gaussian>>> {
        self.per_mode_state
            .iter()
            .map(|s| s.as_ref().map(HiddenState::to_gaussian).transpose())
            .collect()
    }
}

struct Bank {
    models: Vec<ModeModel>,
    transition: Option<DMatrix<f64>>,
    sigma_f: f64,
}

impl Bank {
    fn new(cfg: &FilterConfig) -> Self {
        let models = cfg
            .modes
            .iter()
            .map(|m| match &m.observation {
                ModeObservation::FullyObserved(c) => ModeModel::Full(c.clone()),
                ModeObservation::PartiallyObserved(p) => ModeModel::Partial {
                    model: *p,
                    ss: discretize(p),
                },
            })
            .collect();
        let transition = cfg
            .transition
            .clone()
            .filter(|t| *t != DMatrix::identity(t.nrows(), t.ncols()));
        Self {
            models,
            transition,
            sigma_f: cfg.sigma_f,
        }
    }

    fn initial_state(&self, cfg: &FilterConfig, q1_0: f64) -> ModeFilterState {
        ModeFilterState {
            belief: cfg.prior.clone(),
            per_mode_state: self
                .models
                .iter()
                .map(|m| match m {
                    ModeModel::Full(_) => None,
                    ModeModel::Partial { .. } => Some(HiddenState::initial(q1_0, cfg.initial_variances)),
                })
                .collect(),
            step_count: 0,
        }
    }

    /// Consumes one sample `(q1, q2?, f)` and returns the updated state.
    fn step(&self, state: ModeFilterState, q1: f64, q2: Option<f64>, f: f64) -> Result<(ModeFilterState, bool)> {
        let belief = match (&self.transition, state.step_count) {
            (Some(t), k) if k > 0 => hmm_step(&state.belief, t)?,
            _ => state.belief,
        };
        let mut lls = Vec::with_capacity(self.models.len());
        let mut hidden = Vec::with_capacity(self.models.len());
        for (model, prev) in self.models.iter().zip(state.per_mode_state) {
            match model {
                ModeModel::Full(mode) => {
                    let q = match mode.config_dim() {
                        1 => DVector::from_element(1, q1),
                        _ => {
                            let q2 = q2.ok_or_else(|| {
                                Error::arg(format!("fully observed mode `{}` needs q2 in the trace", mode.name))
                            })?;
                            DVector::from_vec(vec![q1, q2])
                        }
                    };
                    let mean = mode.mean_force(&q)?[0];
                    lls.push(ln_normal(f, mean, self.sigma_f));
                    hidden.push(None);
                }
                ModeModel::Partial { model, ss } => {
                    let prev = prev.expect("partially observed modes always carry a hidden state");
                    let (next, (mean, var)) = prev.step(ss, q1, f, model.sigma_w, model.sigma_f)?;
                    lls.push(ln_normal(f, mean, var));
                    hidden.push(Some(next));
                }
            }
        }
        let update = bayes_update_log(&belief, &lls)?;
        Ok((
            ModeFilterState {
                belief: update.belief,
                per_mode_state: hidden,
                step_count: state.step_count + 1,
            },
            update.degenerate,
        ))
    }
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

/// Detection delays after one ground-truth mode switch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SwitchDetection {
    pub switch_index: usize,
    pub from_mode: usize,
    pub to_mode: usize,
    pub bayes_latency_samples: Option<usize>,
    pub bayes_latency_s: Option<f64>,
    pub threshold_latency_samples: Option<usize>,
    pub threshold_latency_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    pub beliefs: Vec<BeliefVector>,
    pub entropy: Vec<f64>,
    pub map_mode: Vec<usize>,
    /// Σ_t H(b_t).
    pub total_entropy: f64,
    /// Samples where every likelihood underflowed.
    pub degenerate_steps: usize,
    pub detections: Vec<SwitchDetection>,
    pub final_state: ModeFilterState,
}

impl FilterOutput {
    /// Bayesian latency (samples) after the first ground-truth switch.
    pub fn first_latency(&self) -> Option<usize> {
        self.detections.first().and_then(|d| d.bayes_latency_samples)
    }
}

/// Runs the mode filter over a trace and scores detection against any labeled switches.
pub fn run_filter(trace: &Trace, cfg: &FilterConfig, opts: &FilterOptions) -> Result<FilterOutput> {
    trace.validate()?;
    cfg.validate()?;
    let bank = Bank::new(cfg);
    let n = trace.len();
    let mut state = bank.initial_state(cfg, trace.q1[0]);
    let mut beliefs = Vec::with_capacity(n);
    let mut degenerate_steps = 0;
    for k in 0..n {
        let q2 = trace.q2.as_ref().map(|v| v[k]);
        let (next, degenerate) = bank.step(state, trace.q1[k], q2, trace.f[k])?;
        degenerate_steps += usize::from(degenerate);
        beliefs.push(next.belief.clone());
        state = next;
    }
    let entropy: Vec<f64> = beliefs.iter().map(belief_entropy).collect();
    let map_mode: Vec<usize> = beliefs.iter().map(BeliefVector::argmax).collect();
    let detections = match &trace.mode_id {
        Some(ids) => trace
            .switch_indices()
            .into_iter()
            .map(|s| {
                let to = ids[s];
                let bayes = (s..n).find(|&k| k + opts.debounce <= n && map_mode[k..k + opts.debounce].iter().all(|m| *m == to));
                let thr = (s..n).find(|&k| trace.f[k].abs() > opts.threshold_newtons);
                SwitchDetection {
                    switch_index: s,
                    from_mode: ids[s - 1],
                    to_mode: to,
                    bayes_latency_samples: bayes.map(|k| k - s),
                    bayes_latency_s: bayes.map(|k| trace.t[k] - trace.t[s]),
                    threshold_latency_samples: thr.map(|k| k - s),
                    threshold_latency_s: thr.map(|k| trace.t[k] - trace.t[s]),
                }
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(FilterOutput {
        total_entropy: entropy.iter().sum(),
        beliefs,
        entropy,
        map_mode,
        degenerate_steps,
        detections,
        final_state: state,
    })
}

/// Writes `t,b_1..b_N,entropy,map_mode`.
pub fn write_belief_csv<W: Write>(t: &[f64], out: &FilterOutput, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let n_modes = out.beliefs.first().map_or(0, BeliefVector::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n_modes).map(|i| format!("b_{i}")));
    header.push("entropy".into());
    header.push("map_mode".into());
    wr.write_record(&header)?;
    for (k, b) in out.beliefs.iter().enumerate() {
        let mut row = vec![fmt_f64(t[k])];
        row.extend(b.probs().iter().map(|p| fmt_f64(*p)));
        row.push(fmt_f64(out.entropy[k]));
        row.push(out.map_mode[k].to_string());
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

//! Simulation-error identification of the two-mass parameters `(K1, M2, B2, K2)`.
//!
//! The model is rolled out open loop from the measured `q1` and compared to the
//! measured force. Parameters are searched in log space, so positivity comes for
//! free and the simplex moves in relative terms across orders of magnitude.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{discretize, StateSpace, TwoMassModel};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::simulate::{divergence, plant_step, DIVERGENCE_NORM};
use crate::trace::Trace;

pub const MIN_TRACE_LEN: usize = 100;
const PARAM_NAMES: [&str; 4] = ["K1", "M2", "B2", "K2"];

/// Inclusive `[lo, hi]` per parameter, in `(K1, M2, B2, K2)` order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    #[serde(rename = "K1")]
    pub k1: [f64; 2],
    #[serde(rename = "M2")]
    pub m2: [f64; 2],
    #[serde(rename = "B2")]
    pub b2: [f64; 2],
    #[serde(rename = "K2")]
    pub k2: [f64; 2],
}

impl ParamBounds {
    /// Two decades either side of `guess`.
    pub fn around(guess: &TwoMassModel) -> Self {
        let b = |v: f64| [v / 100.0, v * 100.0];
        Self {
            k1: b(guess.k1),
            m2: b(guess.m2),
            b2: b(guess.b2),
            k2: b(guess.k2),
        }
    }

    fn as_array(&self) -> [[f64; 2]; 4] {
        [self.k1, self.m2, self.b2, self.k2]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in PARAM_NAMES.iter().zip(self.as_array()) {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::arg(format!("bounds for {name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Standard deviation of the log-normal perturbation of restart starting points.
    pub perturbation: f64,
    /// Extra simplex rebuilds around the incumbent after each run.
    pub max_polish: usize,
    pub simplex: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 42,
            perturbation: 0.5,
            max_polish: 20,
            simplex: NelderMeadOptions {
                flat_spread: 1.1f64.ln(),
                ..NelderMeadOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub params: TwoMassModel,
    /// √mean((f^m − f)²) in N.
    pub residual_rms: f64,
    /// `f^m − f` per sample.
    pub residual_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub identifiable: bool,
    /// Mean squared simulation error at `params`.
    pub objective: f64,
    pub initial_objective: f64,
    /// Best objective reached by each restart, in restart order.
    pub restart_objectives: Vec<f64>,
}

/// Noise-free force response to `q1`, starting from `[q1[0], 0]`.
pub fn simulate_model_output(params: &TwoMassModel, q1: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    let ss = discretize(params);
    let mut x = Vector2::new(q1.first().copied().unwrap_or(0.0), 0.0);
    let mut out = Vec::with_capacity(q1.len());
    for (k, &u) in q1.iter().enumerate() {
        let (force, next) = plant_step(&ss, &x, u, 0.0);
        out.push(force);
        let norm = next.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(divergence(params, k, norm));
        }
        x = next;
    }
    Ok(out)
}

/// Mean squared simulation error; +∞ when the rollout diverges.
fn rollout_mse(ss: &StateSpace, q1: &[f64], f: &[f64]) -> f64 {
    let mut x = Vector2::new(q1[0], 0.0);
    let mut sum = 0.0;
    for (&u, &fk) in q1.iter().zip(f) {
        let (force, next) = plant_step(ss, &x, u, 0.0);
        let e = force - fk;
        sum += e * e;
        if !(next.norm() <= DIVERGENCE_NORM) {
            return f64::INFINITY;
        }
        x = next;
    }
    sum / q1.len() as f64
}

/// Mean squared simulation error of `params` on `trace`.
pub fn objective(params: &TwoMassModel, trace: &Trace) -> Result<f64> {
    let fm = simulate_model_output(params, &trace.q1)?;
    Ok(fm.iter().zip(&trace.f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / fm.len() as f64)
}

fn check_trace(trace: &Trace, ts: f64) -> Result<()> {
    trace.validate()?;
    if trace.len() < MIN_TRACE_LEN {
        return Err(Error::arg(format!("identification needs >= {MIN_TRACE_LEN} samples, got {}", trace.len())));
    }
    let period = trace.sample_period();
    if ((period - ts) / ts).abs() > 1e-9 {
        return Err(Error::arg(format!("trace sampled at {period} s, model Ts is {ts} s")));
    }
    Ok(())
}

/// Dominant nonzero frequency of `signal` in rad/s.
fn dominant_frequency(signal: &[f64], ts: f64) -> Option<f64> {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (k, mag) = buf[1..n / 2]
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c.norm_sqr()))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    (mag > 0.0).then(|| 2.0 * std::f64::consts::PI * k as f64 / (n as f64 * ts))
}

/// Heuristic starting point from peak force over peak displacement and the
/// dominant oscillation frequency of the force. `B2` is raised if the guess would
/// make the Euler rollout unstable.
pub fn initial_guess(trace: &Trace, ts: f64, sigma_f: f64) -> Result<TwoMassModel> {
    check_trace(trace, ts)?;
    let q0 = trace.q1[0];
    let peak_q = trace.q1.iter().map(|q| (q - q0).abs()).fold(0.0, f64::max);
    let peak_f = trace.f.iter().map(|f| f.abs()).fold(0.0, f64::max);
    if !(peak_q > 0.0 && peak_f > 0.0) {
        return Err(Error::arg("initial guess needs a trace with motion and force"));
    }
    let k1 = peak_f / peak_q;
    let k2 = k1 / 10.0;
    let omega = dominant_frequency(&trace.f, ts).ok_or_else(|| Error::arg("force has no oscillatory content"))?;
    let m2 = (k1 + k2) / (omega * omega);
    let guess = TwoMassModel {
        k1,
        m2,
        b2: 0.1 * 2.0 * (k2 * m2).sqrt(),
        k2,
        ts,
        sigma_w: 0.0,
        sigma_f,
    };
    Ok(with_stable_damping(guess, f64::INFINITY))
}

/// Raises `B2` in 25% steps until the Euler discretization is stable, or until
/// it reaches `b2_max` or the damping itself destabilizes the step.
fn with_stable_damping(mut m: TwoMassModel, b2_max: f64) -> TwoMassModel {
    while !discretize(&m).is_stable() && m.b2 < b2_max && m.b2 * m.ts / m.m2 < 2.0 {
        m.b2 = (1.25 * m.b2).min(b2_max);
    }
    m
}

struct RestartOutcome {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    flat: bool,
}

fn run_restart(
    start: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    guess: &TwoMassModel,
    trace: &Trace,
    opts: &FitOptions,
) -> RestartOutcome {
    let cost = |z: &[f64]| {
        let p = guess.with_design_vector([z[0].exp(), z[1].exp(), z[2].exp(), z[3].exp()]);
        rollout_mse(&discretize(&p), &trace.q1, &trace.f)
    };
    let mut m = nelder_mead(cost, &start, lo, hi, &opts.simplex);
    let mut iterations = m.iterations;
    if !m.flat {
        for _ in 0..opts.max_polish {
            let next = nelder_mead(cost, &m.x, lo, hi, &opts.simplex);
            iterations += next.iterations;
            let improved = next.value < m.value;
            let small = (m.value - next.value).abs() <= opts.simplex.rel_tol * next.value.abs();
            if improved {
                m = next;
            }
            if !improved || small {
                break;
            }
        }
    }
    RestartOutcome {
        x: m.x,
        value: m.value,
        iterations,
        converged: m.converged,
        flat: m.flat,
    }
}

/// Least-squares simulation-error fit of `(K1, M2, B2, K2)`; `Ts` and `Σf` are kept
/// from `guess`. Restart 0 starts at `guess`; the others at seeded log-normal
/// perturbations of it. The best restart wins, ties going to the lower index.
pub fn fit(trace: &Trace, guess: &TwoMassModel, bounds: &ParamBounds, opts: &FitOptions) -> Result<FitResult> {
    guess.validate()?;
    bounds.validate()?;
    check_trace(trace, guess.ts)?;
    if opts.restarts == 0 {
        return Err(Error::arg("at least one restart is required"));
    }
    let b = bounds.as_array();
    let lo: Vec<f64> = b.iter().map(|r| r[0].ln()).collect();
    let hi: Vec<f64> = b.iter().map(|r| r[1].ln()).collect();
    let x0: Vec<f64> = guess.design_vector().iter().map(|v| v.ln()).collect();
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("initial guess must have K1, M2, B2, K2 > 0"));
    }
    let initial_objective = rollout_mse(&discretize(guess), &trace.q1, &trace.f);

    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|r| {
            if r == 0 {
                return x0.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let z: Vec<f64> = x0
                .iter()
                .zip(lo.iter().zip(&hi))
                .map(|(v, (l, h))| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (v + opts.perturbation * z).clamp(*l, *h)
                })
                .collect();
            let m = with_stable_damping(guess.with_design_vector([z[0].exp(), z[1].exp(), z[2].exp(), z[3].exp()]), b[2][1]);
            m.design_vector().iter().map(|v| v.ln()).collect()
        })
        .collect();
    let outcomes: Vec<RestartOutcome> = starts
        .into_par_iter()
        .map(|s| run_restart(s, &lo, &hi, guess, trace, opts))
        .collect();
    let restart_objectives: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    if outcomes.iter().all(|o| !o.value.is_finite()) {
        return Err(Error::FitFailure {
            objectives: restart_objectives,
        });
    }
    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(_, o)| o)
        .expect("at least one restart");
    let x = &best.x;
    let params = guess.with_design_vector([x[0].exp(), x[1].exp(), x[2].exp(), x[3].exp()]);
    let fm = simulate_model_output(&params, &trace.q1)?;
    let residual_trace: Vec<f64> = fm.iter().zip(&trace.f).map(|(a, b)| a - b).collect();
    let objective = residual_trace.iter().map(|e| e * e).sum::<f64>() / residual_trace.len() as f64;
    Ok(FitResult {
        params,
        residual_rms: objective.sqrt(),
        residual_trace,
        iterations: outcomes.iter().map(|o| o.iterations).sum(),
        converged: best.converged,
        identifiable: !best.flat,
        objective,
        initial_objective,
        restart_objectives,
    })
}

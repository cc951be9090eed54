//! Noisy forward simulation of the two-mass plant under a contact-mode schedule.
//!
//! Mode 0 is free space (the sensor spring is disengaged), mode 1 is contact.
//! The hidden state carries over unchanged across mode switches.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{discretize, StateSpace, TwoMassModel};
use crate::trace::Trace;

pub const FREE_MODE: usize = 0;
pub const CONTACT_MODE: usize = 1;

pub(crate) const DIVERGENCE_NORM: f64 = 1e9;

/// Prescribed measured-position trajectory `q1(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSignal {
    Constant { value: f64 },
    Step { time: f64, before: f64, after: f64 },
    /// `offset + velocity·(t − start)`.
    Ramp { start: f64, velocity: f64, offset: f64 },
    /// Linear chirp `offset + amplitude·sin(φ(t))` sweeping `f0 → f1` Hz over `duration` seconds.
    Chirp { amplitude: f64, f0: f64, f1: f64, duration: f64, offset: f64 },
}

impl InputSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            InputSignal::Constant { value } => value,
            InputSignal::Step { time, before, after } => {
                if t < time {
                    before
                } else {
                    after
                }
            }
            InputSignal::Ramp { start, velocity, offset } => offset + velocity * (t - start),
            InputSignal::Chirp { amplitude, f0, f1, duration, offset } => {
                let tau = t.clamp(0.0, duration);
                let k = (f1 - f0) / duration;
                let phase = 2.0 * std::f64::consts::PI * (f0 * tau + 0.5 * k * tau * tau);
                offset + amplitude * phase.sin()
            }
        }
    }
}

/// A half-open interval `[start, end)` governed by one mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeInterval {
    pub start: f64,
    pub end: f64,
    pub mode: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeSchedule(pub Vec<ModeInterval>);

impl ModeSchedule {
    /// Free space until `t_switch`, contact afterwards.
    pub fn contact_at(t_switch: f64, duration: f64) -> Self {
        let mut v = Vec::new();
        if t_switch > 0.0 {
            v.push(ModeInterval { start: 0.0, end: t_switch, mode: FREE_MODE });
        }
        v.push(ModeInterval { start: t_switch.max(0.0), end: duration, mode: CONTACT_MODE });
        ModeSchedule(v)
    }

    pub fn constant(mode: usize, duration: f64) -> Self {
        ModeSchedule(vec![ModeInterval { start: 0.0, end: duration, mode }])
    }

    /// Intervals must be contiguous from 0 and reach `duration`.
    pub fn validate(&self, duration: f64) -> Result<()> {
        let iv = &self.0;
        if iv.is_empty() {
            return Err(Error::arg("mode schedule is empty"));
        }
        if iv[0].start != 0.0 {
            return Err(Error::arg("mode schedule must start at t = 0"));
        }
        for w in iv.windows(2) {
            if (w[0].end - w[1].start).abs() > 1e-12 {
                return Err(Error::arg(format!(
                    "mode schedule has a gap or overlap at t = {}",
                    w[0].end
                )));
            }
        }
        if iv.iter().any(|i| i.end <= i.start) {
            return Err(Error::arg("mode interval with end <= start"));
        }
        if iv.iter().any(|i| i.mode > CONTACT_MODE) {
            return Err(Error::arg("two-mass simulation supports modes 0 (free) and 1 (contact)"));
        }
        if iv[iv.len() - 1].end + 1e-12 < duration {
            return Err(Error::arg("mode schedule ends before the simulation duration"));
        }
        Ok(())
    }

    pub fn mode_at(&self, t: f64) -> usize {
        self.0
            .iter()
            .find(|i| t < i.end)
            .unwrap_or(&self.0[self.0.len() - 1])
            .mode
    }
}

/// Number of samples for `duration` seconds at period `ts`.
pub fn sample_count(duration: f64, ts: f64) -> usize {
    (duration / ts).round() as usize
}

/// One Euler step of the plant plus the force on the sensor spring at the current state.
#[inline]
pub(crate) fn plant_step(ss: &StateSpace, x: &Vector2<f64>, q1: f64, w: f64) -> (f64, Vector2<f64>) {
    let force = ss.c[0] * (x[0] - q1);
    (force, ss.a * x + ss.b * q1 + ss.bw * w)
}

pub(crate) fn divergence(model: &TwoMassModel, step: usize, norm: f64) -> Error {
    Error::Divergence {
        step,
        norm,
        params: model.describe(),
    }
}

/// Simulates from the environment at rest at its origin.
pub fn simulate(
    model: &TwoMassModel,
    schedule: &ModeSchedule,
    q1_input: &dyn Fn(f64) -> f64,
    duration: f64,
    seed: u64,
) -> Result<Trace> {
    simulate_from(model, schedule, q1_input, duration, seed, Vector2::zeros())
}

/// Simulates from hidden state `x0 = [q2, q̇2]`.
pub fn simulate_from(
    model: &TwoMassModel,
    schedule: &ModeSchedule,
    q1_input: &dyn Fn(f64) -> f64,
    duration: f64,
    seed: u64,
    x0: Vector2<f64>,
) -> Result<Trace> {
    model.validate()?;
    schedule.validate(duration)?;
    let n = sample_count(duration, model.ts);
    if n < 2 {
        return Err(Error::arg("duration shorter than two samples"));
    }
    let contact = discretize(model);
    let free = discretize(&model.free_space());
    let (std_w, std_f) = (model.sigma_w.sqrt(), model.sigma_f.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut trace = Trace {
        t: Vec::with_capacity(n),
        q1: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
        q2: Some(Vec::with_capacity(n)),
        mode_id: Some(Vec::with_capacity(n)),
    };
    let mut x = x0;
    for k in 0..n {
        let t = k as f64 * model.ts;
        let mode = schedule.mode_at(t);
        let q1 = q1_input(t);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let w: f64 = StandardNormal.sample(&mut rng);
        let ss = if mode == CONTACT_MODE { &contact } else { &free };
        let (force, next) = plant_step(ss, &x, q1, std_w * w);

        trace.t.push(t);
        trace.q1.push(q1);
        trace.f.push(force + std_f * eps);
        trace.q2.as_mut().unwrap().push(x[0]);
        trace.mode_id.as_mut().unwrap().push(mode);

        let norm = next.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(divergence(model, k, norm));
        }
        x = next;
    }
    Ok(trace)
}

//! Synthetic contact experiments: a constant-velocity approach into a compliant
//! environment, and sweeps of that approach over sensor stiffness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{run_filter, sticky_transition, FilterConfig, FilterOptions, FilterOutput, ModeObservation, ModeSpec};
use crate::gaussian::BeliefVector;
use crate::infogain::info_gain_partially_observed;
use crate::model::{ContactMode, MagazineCondition, TwoMassModel};
use crate::simulate::{simulate, InputSignal, ModeSchedule};
use crate::trace::Trace;

/// `q1` moves at constant velocity and meets the environment (resting at 0) at `contact_time`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachScenario {
    pub model: TwoMassModel,
    /// Approach speed (m/s).
    pub velocity: f64,
    pub contact_time: f64,
    pub duration: f64,
    /// Off-diagonal mass of the sticky mode transition.
    pub switch_probability: f64,
    /// Give the estimator the true `q2` and use the per-sample likelihood directly,
    /// instead of a Kalman filter per mode.
    #[serde(default)]
    pub fully_observed: bool,
}

impl ApproachScenario {
    /// Compliant-surface environment, Σw = 1 N², 10 mm/s approach, contact at 1 s.
    pub fn standard() -> Self {
        Self {
            model: MagazineCondition::CompliantSurface.model(1.0),
            velocity: 0.01,
            contact_time: 1.0,
            duration: 1.5,
            switch_probability: 1e-4,
            fully_observed: false,
        }
    }

    pub fn with_k1(&self, k1: f64) -> Self {
        Self {
            model: TwoMassModel { k1, ..self.model },
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.velocity > 0.0) {
            return Err(Error::arg("approach velocity must be > 0"));
        }
        if !(self.contact_time > 0.0 && self.contact_time < self.duration) {
            return Err(Error::arg("contact_time must lie inside (0, duration)"));
        }
        if !(0.0..1.0).contains(&self.switch_probability) {
            return Err(Error::arg("switch_probability must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn input(&self) -> InputSignal {
        InputSignal::Ramp {
            start: self.contact_time,
            velocity: self.velocity,
            offset: 0.0,
        }
    }

    pub fn simulate(&self, seed: u64) -> Result<Trace> {
        self.validate()?;
        let input = self.input();
        simulate(
            &self.model,
            &ModeSchedule::contact_at(self.contact_time, self.duration),
            &|t| input.eval(t),
            self.duration,
            seed,
        )
    }

    /// Free space against contact under a flat prior.
    pub fn filter_config(&self) -> FilterConfig {
        let (free, contact) = if self.fully_observed {
            (
                ModeObservation::FullyObserved(ContactMode::free_space("free", 1, 2)),
                ModeObservation::FullyObserved(ContactMode::sensor_spring("contact", self.model.k1)),
            )
        } else {
            (
                ModeObservation::PartiallyObserved(self.model.free_space()),
                ModeObservation::PartiallyObserved(self.model),
            )
        };
        let mut cfg = FilterConfig::new(
            vec![
                ModeSpec {
                    name: "free".into(),
                    observation: free,
                },
                ModeSpec {
                    name: "contact".into(),
                    observation: contact,
                },
            ],
            BeliefVector::uniform(2),
        );
        cfg.sigma_f = self.model.sigma_f;
        cfg.transition = (self.switch_probability > 0.0).then(|| sticky_transition(2, self.switch_probability));
        cfg
    }

    pub fn run(&self, seed: u64, opts: &FilterOptions) -> Result<(Trace, FilterOutput)> {
        let trace = self.simulate(seed)?;
        let out = run_filter(&trace, &self.filter_config(), opts)?;
        Ok((trace, out))
    }
}

/// Outcome of many seeded approaches at one stiffness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub k1: f64,
    /// Raw partially observed bound at the sweep's declared gap.
    pub info_gain: f64,
    /// Per trial; `None` when the contact was never detected.
    pub latencies: Vec<Option<usize>>,
    /// Undetected trials count as infinitely late.
    pub median_latency_samples: f64,
    pub median_threshold_latency_samples: f64,
    pub median_total_entropy: f64,
}

/// Runs `trials` approaches per stiffness. Trial `i` uses seed `seed + i` at every
/// stiffness, so the comparison is paired.
pub fn stiffness_sweep(
    base: &ApproachScenario,
    k1_values: &[f64],
    trials: usize,
    seed: u64,
    gap: f64,
    opts: &FilterOptions,
) -> Result<Vec<SweepPoint>> {
    if trials == 0 || k1_values.is_empty() {
        return Err(Error::arg("sweep needs at least one stiffness and one trial"));
    }
    k1_values
        .iter()
        .map(|&k1| {
            let sc = base.with_k1(k1);
            sc.validate()?;
            let runs = (0..trials)
                .into_par_iter()
                .map(|i| {
                    let (_, out) = sc.run(seed.wrapping_add(i as u64), opts)?;
                    let d = out.detections.first().cloned();
                    Ok((
                        d.as_ref().and_then(|d| d.bayes_latency_samples),
                        d.and_then(|d| d.threshold_latency_samples),
                        out.total_entropy,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let to_f = |v: Option<usize>| v.map_or(f64::INFINITY, |x| x as f64);
            let model = sc.model;
            let ig = info_gain_partially_observed(&[model.free_space(), model], gap, &BeliefVector::uniform(2), model.ts)?;
            Ok(SweepPoint {
                k1,
                info_gain: ig.raw_bound,
                latencies: runs.iter().map(|r| r.0).collect(),
                median_latency_samples: median(runs.iter().map(|r| to_f(r.0)).collect()),
                median_threshold_latency_samples: median(runs.iter().map(|r| to_f(r.1)).collect()),
                median_total_entropy: median(runs.iter().map(|r| r.2).collect()),
            })
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty(), "median of nothing");
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Belief entropy one sample after `switch` and the median over the `window` samples before it.
pub fn entropy_around_switch(out: &FilterOutput, switch: usize, window: usize) -> Option<(f64, f64)> {
    if switch < window || switch + 1 >= out.entropy.len() {
        return None;
    }
    let before = median(out.entropy[switch - window..switch].to_vec());
    Some((out.entropy[switch + 1], before))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 8.0, 3.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]) - 1.0).abs() < 1e-15);
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!(r > 0.9 && r < 1.0);
    }

    #[test]
    fn median_counts_infinities() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![1.0, f64::INFINITY, 2.0, f64::INFINITY]), f64::INFINITY);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn standard_approach_detects_contact() {
        let sc = ApproachScenario::standard();
        let (trace, out) = sc.run(3, &FilterOptions::default()).unwrap();
        assert_eq!(trace.switch_indices().len(), 1);
        assert!(out.first_latency().is_some());
        assert_eq!(out.map_mode[trace.switch_indices()[0] - 1], 0);
    }

    #[test]
    fn rejects_contact_outside_run() {
        let sc = ApproachScenario { contact_time: 2.0, ..ApproachScenario::standard() };
        assert!(sc.simulate(0).is_err());
    }
}

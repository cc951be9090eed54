//! Finite-difference sensitivities of the partially observed information-gain bound
//! with respect to the contact mode's `(K1, M2, B2, K2)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::BeliefVector;
use crate::infogain::{info_gain_partially_observed_with, GainAssumptions};
use crate::model::TwoMassModel;

pub const PARAM_NAMES: [&str; 4] = ["K1", "M2", "B2", "K2"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradientOptions {
    /// Step as a fraction of the parameter value.
    pub rel_step: f64,
    pub abs_step_floor: f64,
    /// Largest relative change allowed when the step is halved.
    pub richardson_tol: f64,
    /// Riccati tolerance used at every evaluation.
    pub dare_tol: f64,
    /// Step reductions by 10 tried after a failed evaluation.
    pub retries: usize,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self {
            rel_step: 1e-5,
            abs_step_floor: 1e-8,
            richardson_tol: 0.01,
            dare_tol: 1e-14,
            retries: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoordinateGradient {
    pub parameter: &'static str,
    /// Central difference at `step`; `None` if every retry failed.
    pub value: Option<f64>,
    pub step: f64,
    /// Central difference at `step / 2`.
    pub half_step_value: Option<f64>,
    /// One-sided difference at `step`.
    pub forward_value: Option<f64>,
    /// Halving the step moved the estimate by less than the tolerance.
    pub richardson_consistent: bool,
    pub retries_used: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    /// Mode whose parameters were perturbed.
    pub params: TwoMassModel,
    pub target_mode: usize,
    /// d(bound)/d(K1, M2, B2, K2); `None` where differencing failed.
    pub gradient: [Option<f64>; 4],
    /// Raw (uncapped) bound at the nominal point.
    pub nominal_bound: f64,
    pub method: GradientOptions,
    pub coordinates: Vec<CoordinateGradient>,
    pub assumptions: GainAssumptions,
}

impl GradientReport {
    /// All four entries, or an error naming the first failed coordinate.
    pub fn values(&self) -> Result<[f64; 4]> {
        let mut out = [0.0; 4];
        for (i, c) in self.coordinates.iter().enumerate() {
            out[i] = c.value.ok_or(Error::NoConvergence {
                iterations: c.retries_used,
                residual: f64::NAN,
            })?;
        }
        Ok(out)
    }
}

/// The only non-free-space mode in `models`.
pub fn design_target(models: &[TwoMassModel]) -> Result<usize> {
    let contact: Vec<usize> = (0..models.len()).filter(|&i| !models[i].is_free_space()).collect();
    match contact.as_slice() {
        [i] => Ok(*i),
        _ => Err(Error::arg(format!(
            "gradient needs exactly one mode with K1 > 0, found {}",
            contact.len()
        ))),
    }
}

pub fn info_gain_gradient(models: &[TwoMassModel], gap: f64, prior: &BeliefVector) -> Result<GradientReport> {
    info_gain_gradient_with(models, design_target(models)?, gap, prior, &GradientOptions::default())
}

struct Evaluator<'a> {
    models: &'a [TwoMassModel],
    target: usize,
    gap: f64,
    prior: &'a BeliefVector,
    dare_tol: f64,
}

impl Evaluator<'_> {
    fn at(&self, p: [f64; 4]) -> Result<f64> {
        let mut models = self.models.to_vec();
        models[self.target] = models[self.target].with_design_vector(p);
        let ts = models[self.target].ts;
        Ok(info_gain_partially_observed_with(&models, self.gap, self.prior, ts, self.dare_tol)?.raw_bound)
    }

    fn shifted(&self, base: [f64; 4], i: usize, delta: f64) -> Result<f64> {
        let mut p = base;
        p[i] += delta;
        self.at(p)
    }

    /// (central at h, central at h/2, forward at h).
    fn differences(&self, base: [f64; 4], nominal: f64, i: usize, h: f64) -> Result<(f64, f64, f64)> {
        let plus = self.shifted(base, i, h)?;
        let minus = self.shifted(base, i, -h)?;
        let plus_half = self.shifted(base, i, 0.5 * h)?;
        let minus_half = self.shifted(base, i, -0.5 * h)?;
        Ok(((plus - minus) / (2.0 * h), (plus_half - minus_half) / h, (plus - nominal) / h))
    }
}

/// Central differences of the raw bound in each parameter of `models[target]`.
pub fn info_gain_gradient_with(
    models: &[TwoMassModel],
    target: usize,
    gap: f64,
    prior: &BeliefVector,
    opts: &GradientOptions,
) -> Result<GradientReport> {
    if target >= models.len() {
        return Err(Error::arg(format!("target mode {target} out of range for {} modes", models.len())));
    }
    let eval = Evaluator {
        models,
        target,
        gap,
        prior,
        dare_tol: opts.dare_tol,
    };
    let params = models[target];
    let nominal_report = info_gain_partially_observed_with(models, gap, prior, params.ts, opts.dare_tol)?;
    let nominal = nominal_report.raw_bound;
    let base = params.design_vector();

    let coordinates: Vec<CoordinateGradient> = (0..4)
        .into_par_iter()
        .map(|i| {
            let mut h = (opts.rel_step * base[i].abs()).max(opts.abs_step_floor);
            let mut last_err = None;
            for attempt in 0..=opts.retries {
                // never step a positive parameter through zero
                if base[i] > 0.0 && h >= base[i] {
                    h = 0.5 * base[i];
                }
                match eval.differences(base, nominal, i, h) {
                    Ok((c, half, fwd)) => {
                        let consistent = (c - half).abs() <= opts.richardson_tol * half.abs();
                        return CoordinateGradient {
                            parameter: PARAM_NAMES[i],
                            value: Some(c),
                            step: h,
                            half_step_value: Some(half),
                            forward_value: Some(fwd),
                            richardson_consistent: consistent,
                            retries_used: attempt,
                            error: None,
                        };
                    }
                    Err(e) => {
                        last_err = Some(e.to_string());
                        h /= 10.0;
                    }
                }
            }
            CoordinateGradient {
                parameter: PARAM_NAMES[i],
                value: None,
                step: h * 10.0,
                half_step_value: None,
                forward_value: None,
                richardson_consistent: false,
                retries_used: opts.retries,
                error: last_err,
            }
        })
        .collect();

    Ok(GradientReport {
        params,
        target_mode: target,
        gradient: [0, 1, 2, 3].map(|i| coordinates[i].value),
        nominal_bound: nominal,
        method: *opts,
        coordinates,
        assumptions: nominal_report.assumptions,
    })
}

/// Raw bound before and after a step of relative size `delta` along the gradient in
/// log-parameter space (the largest parameter moves by a factor `e^delta`).
pub fn ascent_check(models: &[TwoMassModel], report: &GradientReport, gap: f64, prior: &BeliefVector, delta: f64) -> Result<(f64, f64)> {
    let g = report.values()?;
    let p = report.params.design_vector();
    let scaled: Vec<f64> = (0..4).map(|i| p[i] * g[i]).collect();
    let norm = scaled.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if norm == 0.0 {
        return Err(Error::arg("ascent check needs a nonzero gradient"));
    }
    let next = [0, 1, 2, 3].map(|i| p[i] * (delta * scaled[i] / norm).exp());
    let eval = Evaluator {
        models,
        target: report.target_mode,
        gap,
        prior,
        dare_tol: report.method.dare_tol,
    };
    Ok((report.nominal_bound, eval.at(next)?))
}

//! Information gain of one force observation about the contact mode.
//!
//! Two bounds are computed. The general mixture bound works for any prior and any
//! number of modes. For a flat two-mode prior the pairwise closed form
//! `−ln N(μ₁|μ₂, Σ₁+Σ₂) − ½ln 2πe − ¼ln Σ₁ − ¼ln Σ₂` is used instead; with equal
//! variances it is the familiar `K1²·gap²/(4Σf) − ½(1 − ln 2)`. Both are reported
//! raw and capped at the prior entropy, since the true gain saturates there.

use std::f64::consts::{E, PI};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{predictive_force_steady_state, solve_dare_with, DARE_MAX_ITER, DARE_TOL};
use crate::gaussian::{belief_entropy, info_gain_lower_bound, log_sum_exp, BeliefVector, Gaussian, PROB_FLOOR};
use crate::model::{discretize, MagazineCondition, TwoMassModel};
use crate::trace::Trace;

/// Which expression produced a bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    PairwiseClosedForm,
    MixtureBound,
}

/// Pairwise closed form for two equally likely Gaussian modes.
pub fn pairwise_info_gain(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::arg("pairwise gain needs components of one dimension"));
    }
    let joint = Gaussian::new(a.mean().clone(), a.cov() + b.cov())?;
    let l = a.dim() as f64;
    Ok(-joint.ln_pdf(b.mean())? - 0.5 * l * (2.0 * PI * E).ln() - 0.25 * (a.log_det() + b.log_det()))
}

/// `½·K1²·gap²/(2Σf) − ½(1 − ln 2)`.
pub fn fully_observed_closed_form(k1: f64, gap: f64, sigma_f: f64) -> f64 {
    0.5 * (k1 * gap).powi(2) / (2.0 * sigma_f) - 0.5 * (1.0 - 2f64.ln())
}

/// Free-space and contact force distributions at a given gap `q1 − q2`.
pub fn contact_pair(k1: f64, gap: f64, sigma_f: f64) -> Result<[Gaussian; 2]> {
    Ok([Gaussian::scalar(0.0, sigma_f)?, Gaussian::scalar(-k1 * gap, sigma_f)?])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GainValue {
    /// Bound as computed, possibly above the prior entropy.
    pub raw: f64,
    /// `min(raw, H(prior))`.
    pub capped: f64,
    pub prior_entropy: f64,
    pub saturated: bool,
    pub form: BoundForm,
}

impl GainValue {
    fn new(raw: f64, prior: &BeliefVector, form: BoundForm) -> Self {
        let h = belief_entropy(prior);
        Self {
            raw,
            capped: raw.min(h),
            prior_entropy: h,
            saturated: raw > h,
            form,
        }
    }
}

fn two_mode_bound(prior: &BeliefVector, comps: &[Gaussian]) -> Result<GainValue> {
    if comps.len() == 2 && prior.is_flat() {
        Ok(GainValue::new(pairwise_info_gain(&comps[0], &comps[1])?, prior, BoundForm::PairwiseClosedForm))
    } else {
        Ok(GainValue::new(info_gain_lower_bound(prior, comps)?, prior, BoundForm::MixtureBound))
    }
}

/// Gain between free space and a sensor spring `k1` with both positions measured.
pub fn info_gain_fully_observed(k1: f64, gap: f64, sigma_f: f64, prior: &BeliefVector) -> Result<GainValue> {
    if prior.len() != 2 {
        return Err(Error::arg(format!("fully observed contact gain has two modes, prior has {}", prior.len())));
    }
    if !(sigma_f > 0.0) || !k1.is_finite() || !gap.is_finite() {
        return Err(Error::arg("need finite K1, gap and sigma_f > 0"));
    }
    if prior.is_flat() {
        return Ok(GainValue::new(
            fully_observed_closed_form(k1, gap, sigma_f),
            prior,
            BoundForm::PairwiseClosedForm,
        ));
    }
    two_mode_bound(prior, &contact_pair(k1, gap, sigma_f)?)
}

/// Mean of the flat-prior fully observed gain over `|gap| ∈ [0, max_gap]` on `points` evenly spaced gaps.
pub fn gap_averaged_gain(k1: f64, sigma_f: f64, max_gap: f64, points: usize) -> Result<f64> {
    if points < 2 || !(max_gap > 0.0) {
        return Err(Error::arg("gap average needs >= 2 points and max_gap > 0"));
    }
    let flat = BeliefVector::uniform(2);
    let mut sum = 0.0;
    for i in 0..points {
        let gap = max_gap * i as f64 / (points - 1) as f64;
        sum += info_gain_fully_observed(k1, gap, sigma_f, &flat)?.capped;
    }
    Ok(sum / points as f64)
}

/// Per-mode context recorded alongside a partially observed bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeAssumptions {
    pub model: TwoMassModel,
    /// Steady-state one-step predictive variance of q2 (m²); zero in free space.
    pub p_plus_q2: f64,
    pub dare_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainAssumptions {
    /// `q1 − q2` (m).
    pub gap: f64,
    pub prior: BeliefVector,
    pub eval_time: f64,
    /// Hidden-state covariance taken at its steady state.
    pub steady_state_covariance: bool,
    pub dare_tolerance: f64,
    pub bound_form: BoundForm,
    pub modes: Vec<ModeAssumptions>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfoGainReport {
    /// Bound capped at the prior entropy.
    pub lower_bound: f64,
    pub raw_bound: f64,
    pub prior_entropy: f64,
    pub saturated: bool,
    /// General mixture bound over the same distributions, for reference.
    pub mixture_bound: f64,
    pub per_mode_distributions: Vec<Gaussian>,
    pub assumptions: GainAssumptions,
}

/// Steady-state force predictive of each mode at `gap`.
fn predictive_distributions(
    models: &[TwoMassModel],
    gap: f64,
    dare_tol: f64,
) -> Result<(Vec<Gaussian>, Vec<ModeAssumptions>)> {
    let mut dists = Vec::with_capacity(models.len());
    let mut record = Vec::with_capacity(models.len());
    for m in models {
        m.validate()?;
        if !(m.sigma_f > 0.0) {
            return Err(Error::arg("partially observed gain needs sigma_f > 0 in every mode"));
        }
        if m.is_free_space() {
            dists.push(Gaussian::scalar(0.0, m.sigma_f)?);
            record.push(ModeAssumptions {
                model: *m,
                p_plus_q2: 0.0,
                dare_iterations: 0,
            });
            continue;
        }
        let gains = solve_dare_with(&discretize(m), m.sigma_w, m.sigma_f, dare_tol, DARE_MAX_ITER)?;
        // q1 = 0 and μ_q2 = −gap
        dists.push(predictive_force_steady_state(m, -gap, 0.0, &gains)?);
        record.push(ModeAssumptions {
            model: *m,
            p_plus_q2: gains.p_plus[(0, 0)],
            dare_iterations: gains.iterations,
        });
    }
    Ok((dists, record))
}

pub fn info_gain_partially_observed(
    models: &[TwoMassModel],
    gap: f64,
    prior: &BeliefVector,
    eval_time: f64,
) -> Result<InfoGainReport> {
    info_gain_partially_observed_with(models, gap, prior, eval_time, DARE_TOL)
}

/// As [`info_gain_partially_observed`] with an explicit Riccati tolerance.
pub fn info_gain_partially_observed_with(
    models: &[TwoMassModel],
    gap: f64,
    prior: &BeliefVector,
    eval_time: f64,
    dare_tol: f64,
) -> Result<InfoGainReport> {
    if models.is_empty() {
        return Err(Error::arg("at least one mode model is required"));
    }
    if models.len() != prior.len() {
        return Err(Error::arg(format!("{} models for a prior over {} modes", models.len(), prior.len())));
    }
    if !gap.is_finite() {
        return Err(Error::arg("gap must be finite"));
    }
    let min_time = models.iter().map(|m| m.ts).fold(0.0, f64::max);
    if !(eval_time >= min_time) {
        return Err(Error::arg(format!("eval_time {eval_time} must be >= Ts ({min_time})")));
    }
    let (dists, modes) = predictive_distributions(models, gap, dare_tol)?;
    let value = two_mode_bound(prior, &dists)?;
    let mixture_bound = info_gain_lower_bound(prior, &dists)?;
    Ok(InfoGainReport {
        lower_bound: value.capped,
        raw_bound: value.raw,
        prior_entropy: value.prior_entropy,
        saturated: value.saturated,
        mixture_bound,
        per_mode_distributions: dists,
        assumptions: GainAssumptions {
            gap,
            prior: prior.clone(),
            eval_time,
            steady_state_covariance: true,
            dare_tolerance: dare_tol,
            bound_form: value.form,
            modes,
        },
    })
}

/// `q1 − q2` at `eval_time` along a simulated trajectory, linearly interpolated.
pub fn gap_at_time(trace: &Trace, eval_time: f64) -> Result<f64> {
    trace.validate()?;
    let q2 = trace
        .q2
        .as_ref()
        .ok_or_else(|| Error::arg("gap along a trajectory needs q2 in the trace"))?;
    let (t0, t1) = (trace.t[0], trace.t[trace.len() - 1]);
    if !(eval_time >= t0 && eval_time <= t1) {
        return Err(Error::arg(format!("eval_time {eval_time} outside trace span [{t0}, {t1}]")));
    }
    let k = trace.t.partition_point(|t| *t <= eval_time).clamp(1, trace.len() - 1);
    let w = (eval_time - trace.t[k - 1]) / (trace.t[k] - trace.t[k - 1]);
    let gap = |i: usize| trace.q1[i] - q2[i];
    Ok(gap(k - 1) * (1.0 - w) + gap(k) * w)
}

/// Free space versus contact under one identified magazine condition, flat prior.
pub fn magazine_info_gain(condition: MagazineCondition, sigma_w: f64, gap: f64) -> Result<InfoGainReport> {
    let contact = condition.model(sigma_w);
    let models = [contact.free_space(), contact];
    info_gain_partially_observed(&models, gap, &BeliefVector::uniform(2), contact.ts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub mu2: f64,
    pub sigma2: f64,
    /// Mixture bound against N(0, 1) under a flat prior.
    pub info_gain: f64,
    /// The pairwise closed form exceeds ln 2 here.
    pub saturated: bool,
}

/// Bound for `{N(0,1), N(μ₂,Σ₂)}` over a grid, row-major in `mu2`.
pub fn two_mode_surface(mu2: &[f64], sigma2: &[f64]) -> Result<Vec<SurfacePoint>> {
    let flat = BeliefVector::uniform(2);
    let base = Gaussian::scalar(0.0, 1.0)?;
    let mut out = Vec::with_capacity(mu2.len() * sigma2.len());
    for &m in mu2 {
        for &s in sigma2 {
            let other = Gaussian::scalar(m, s)?;
            let saturated = pairwise_info_gain(&base, &other)? > 2f64.ln();
            let bound = info_gain_lower_bound(&flat, &[base.clone(), other])?;
            out.push(SurfacePoint {
                mu2: m,
                sigma2: s,
                info_gain: bound,
                saturated,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloGain {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

const MC_CHUNK: usize = 4096;

fn posterior_entropy(ln_prior: &[f64], comps: &[Gaussian], f: &DVector<f64>) -> Result<f64> {
    let mut lp = Vec::with_capacity(comps.len());
    for (lb, g) in ln_prior.iter().zip(comps) {
        lp.push(lb + g.ln_pdf(f)?);
    }
    let z = log_sum_exp(&lp);
    Ok(-lp
        .iter()
        .map(|l| {
            let ln_p = l - z;
            let p = ln_p.exp();
            if p > 0.0 {
                p * ln_p
            } else {
                0.0
            }
        })
        .sum::<f64>())
}

/// Monte Carlo estimate of `H(prior) − E[H(n | f)]`.
///
/// Samples are drawn in fixed-size chunks, chunk `c` on stream `c` of the seeded
/// generator, so the result does not depend on thread count.
pub fn info_gain_monte_carlo(
    prior: &BeliefVector,
    components: &[Gaussian],
    samples: usize,
    seed: u64,
) -> Result<MonteCarloGain> {
    if samples < 1000 {
        return Err(Error::arg("monte carlo gain needs at least 1000 samples"));
    }
    if components.len() != prior.len() {
        return Err(Error::arg(format!("{} components for {} modes", components.len(), prior.len())));
    }
    if components.iter().any(|g| g.dim() != components[0].dim()) {
        return Err(Error::arg("components must share one dimension"));
    }
    let ln_prior: Vec<f64> = prior.probs().iter().map(|p| p.max(PROB_FLOOR).ln()).collect();
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(f64, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let u: f64 = rng.random();
                let mode = pick(prior.probs(), u);
                let f = components[mode].sample(&mut rng);
                let h = posterior_entropy(&ln_prior, components, &f)?;
                s += h;
                s2 += h * h;
            }
            Ok((s, s2))
        })
        .collect::<Result<Vec<_>>>()?;
    let (s, s2) = partial.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(MonteCarloGain {
        estimate: belief_entropy(prior) - mean,
        std_error: (var / n).sqrt(),
        samples,
    })
}

fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Monte Carlo estimate of a mixture's differential entropy by resubstitution.
pub fn mixture_entropy_monte_carlo(
    weights: &BeliefVector,
    components: &[Gaussian],
    samples: usize,
    seed: u64,
) -> Result<MonteCarloGain> {
    if components.len() != weights.len() || samples < 2 {
        return Err(Error::arg("mixture entropy needs one component per weight and >= 2 samples"));
    }
    let ln_w: Vec<f64> = weights.probs().iter().map(|p| p.max(PROB_FLOOR).ln()).collect();
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(f64, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let u: f64 = rng.random();
                let f = components[pick(weights.probs(), u)].sample(&mut rng);
                let mut terms = Vec::with_capacity(components.len());
                for (lw, g) in ln_w.iter().zip(components) {
                    terms.push(lw + g.ln_pdf(&f)?);
                }
                let nll = -log_sum_exp(&terms);
                s += nll;
                s2 += nll * nll;
            }
            Ok((s, s2))
        })
        .collect::<Result<Vec<_>>>()?;
    let (s, s2) = partial.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(MonteCarloGain {
        estimate: mean,
        std_error: (var / n).sqrt(),
        samples,
    })
}

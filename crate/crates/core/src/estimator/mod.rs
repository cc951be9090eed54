//! Recursive Bayesian contact-mode inference.
//!
//! Fully observed modes evaluate the force likelihood directly. Partially
//! observed modes run one Kalman filter each over the hidden `[q2, q̇2]` state
//! and score the force with the filter's predictive distribution.

mod dare;
mod filter;
mod kalman;

pub use dare::{dare_residual, riccati_step, solve_dare, solve_dare_with, SteadyStateGains, DARE_MAX_ITER, DARE_TOL};
pub use filter::{
    run_filter, write_belief_csv, FilterConfig, FilterOptions, FilterOutput, ModeFilterState, ModeObservation, ModeSpec,
    SwitchDetection,
};
pub use kalman::{kalman_step, predictive_force_steady_state, HiddenState, KalmanOutput};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{BeliefVector, PROB_FLOOR};
use crate::model::{mode_force_distribution, ContactMode};

/// Result of one Bayes update.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesUpdate {
    pub belief: BeliefVector,
    /// Every likelihood fell below the floor; the prior was returned unchanged.
    pub degenerate: bool,
}

/// Posterior from per-mode log-likelihoods. Each likelihood is floored at 1e−300.
pub fn bayes_update_log(belief: &BeliefVector, log_likelihoods: &[f64]) -> Result<BayesUpdate> {
    if log_likelihoods.len() != belief.len() {
        return Err(Error::arg(format!(
            "{} likelihoods for {} modes",
            log_likelihoods.len(),
            belief.len()
        )));
    }
    let floor = PROB_FLOOR.ln();
    if log_likelihoods.iter().any(|l| l.is_nan()) {
        return Err(Error::arg("NaN likelihood"));
    }
    if log_likelihoods.iter().all(|l| *l <= floor) {
        return Ok(BayesUpdate {
            belief: belief.clone(),
            degenerate: true,
        });
    }
    let log_post: Vec<f64> = belief
        .probs()
        .iter()
        .zip(log_likelihoods)
        .map(|(b, l)| b.ln() + l.max(floor))
        .collect();
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
    let belief = BeliefVector::from_weights(&weights).expect("max-shifted weights sum to >= 1");
    Ok(BayesUpdate {
        belief,
        degenerate: false,
    })
}

/// bₙ′ ∝ N(f | Kₙ(q − q0ₙ), Σf)·bₙ.
pub fn bayes_update_fully_observed(
    belief: &BeliefVector,
    modes: &[ContactMode],
    q: &DVector<f64>,
    f: &DVector<f64>,
    sigma_f: &DMatrix<f64>,
) -> Result<BayesUpdate> {
    if modes.len() != belief.len() {
        return Err(Error::arg(format!("{} modes for a belief over {}", modes.len(), belief.len())));
    }
    let lls = modes
        .iter()
        .map(|m| mode_force_distribution(m, q, sigma_f)?.ln_pdf(f))
        .collect::<Result<Vec<_>>>()?;
    bayes_update_log(belief, &lls)
}

const STOCHASTIC_TOL: f64 = 1e-12;

/// Checks that `t` is square, nonnegative and row-stochastic.
pub fn validate_transition(t: &DMatrix<f64>, n: usize) -> Result<()> {
    if t.nrows() != n || t.ncols() != n {
        return Err(Error::arg(format!("transition is {}x{}, expected {n}x{n}", t.nrows(), t.ncols())));
    }
    if t.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::arg("transition entries must be finite and nonnegative"));
    }
    for (i, row) in t.row_iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::arg(format!("transition row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// One Markov prediction step bᵀT, renormalized.
pub fn hmm_step(belief: &BeliefVector, transition: &DMatrix<f64>) -> Result<BeliefVector> {
    validate_transition(transition, belief.len())?;
    let b = DVector::from_column_slice(belief.probs());
    let next = transition.transpose() * b;
    Ok(BeliefVector::from_weights(next.as_slice()).expect("stochastic image of a belief has unit mass"))
}

/// Diagonal `1 − ρ`, with `ρ` spread uniformly over the other modes.
pub fn sticky_transition(n: usize, rho: f64) -> DMatrix<f64> {
    if n == 1 {
        return DMatrix::identity(1, 1);
    }
    let off = rho / (n - 1) as f64;
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - rho } else { off })
}

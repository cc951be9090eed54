use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::SteadyStateGains;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::model::{StateSpace, TwoMassModel};

/// Gaussian belief over the hidden `[q2, q̇2]` state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HiddenState {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl HiddenState {
    /// Environment at the first measured position, at rest, with a broad covariance.
    pub fn initial(q1_0: f64, variances: [f64; 2]) -> Self {
        Self {
            mean: Vector2::new(q1_0, 0.0),
            cov: Matrix2::new(variances[0], 0.0, 0.0, variances[1]),
        }
    }

    pub fn from_gaussian(g: &Gaussian) -> Result<Self> {
        if g.dim() != 2 {
            return Err(Error::arg(format!("hidden state is 2-dimensional, got {}", g.dim())));
        }
        Ok(Self {
            mean: Vector2::new(g.mean()[0], g.mean()[1]),
            cov: Matrix2::from_fn(|i, j| g.cov()[(i, j)]),
        })
    }

    pub fn to_gaussian(&self) -> Result<Gaussian> {
        Gaussian::new(
            DVector::from_column_slice(self.mean.as_slice()),
            DMatrix::from_column_slice(2, 2, self.cov.as_slice()),
        )
    }

    /// Force predictive `(mean, variance)` before seeing `f` at this step.
    pub fn predict_force(&self, ss: &StateSpace, q1: f64, sigma_f: f64) -> (f64, f64) {
        let k1 = ss.c[0];
        (k1 * (self.mean[0] - q1), k1 * k1 * self.cov[(0, 0)] + sigma_f)
    }

    /// Measurement update with `f`, then time update through the plant with input `q1`.
    /// Returns the next-step belief and the force predictive used for the update.
    pub fn step(&self, ss: &StateSpace, q1: f64, f: f64, sigma_w: f64, sigma_f: f64) -> Result<(HiddenState, (f64, f64))> {
        let (f_mean, f_var) = self.predict_force(ss, q1, sigma_f);
        let gain = self.cov * ss.c.transpose() / f_var;
        let mean = self.mean + gain * (f - f_mean);
        // Joseph form keeps the update symmetric and PSD
        let ikc = Matrix2::identity() - gain * ss.c;
        let cov = ikc * self.cov * ikc.transpose() + gain * sigma_f * gain.transpose();

        let next_mean = ss.a * mean + ss.b * q1;
        let next_cov = ss.a * cov * ss.a.transpose() + ss.process_cov(sigma_w);
        let next_cov = (next_cov + next_cov.transpose()) * 0.5;
        if !(next_cov[(0, 0)] > 0.0 && next_cov.determinant() > 0.0) || !next_mean.iter().all(|v| v.is_finite()) {
            return Err(Error::not_pd("kalman predicted covariance", &next_cov));
        }
        Ok((
            HiddenState {
                mean: next_mean,
                cov: next_cov,
            },
            (f_mean, f_var),
        ))
    }
}

/// Output of one Kalman step.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanOutput {
    /// Belief over the hidden state at the next sample, given forces up to this one.
    pub posterior: Gaussian,
    /// N(K1(μ_q2 − q1), K1²Σ_q2 + Σf), evaluated on the incoming prior.
    pub predictive_force: Gaussian,
}

pub fn kalman_step(
    prior: &Gaussian,
    ss: &StateSpace,
    q1: f64,
    f: f64,
    sigma_w: f64,
    sigma_f: f64,
) -> Result<KalmanOutput> {
    if !(sigma_f > 0.0) {
        return Err(Error::arg("kalman step needs sigma_f > 0"));
    }
    let state = HiddenState::from_gaussian(prior)?;
    let (next, (f_mean, f_var)) = state.step(ss, q1, f, sigma_w, sigma_f)?;
    Ok(KalmanOutput {
        posterior: next.to_gaussian()?,
        predictive_force: Gaussian::scalar(f_mean, f_var)?,
    })
}

/// Steady-state force predictive N(K1(μ_q2 − q1), K1·P⁺·K1 + Σf).
pub fn predictive_force_steady_state(model: &TwoMassModel, mu_q2: f64, q1: f64, gains: &SteadyStateGains) -> Result<Gaussian> {
    let k1 = model.k1;
    Gaussian::scalar(k1 * (mu_q2 - q1), k1 * k1 * gains.p_plus[(0, 0)] + model.sigma_f)
}

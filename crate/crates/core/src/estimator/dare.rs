use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::StateSpace;

/// Relative change between successive iterates that counts as converged.
pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 1_000_000;

/// Steady-state hidden-state covariances of the contact-mode Kalman filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SteadyStateGains {
    /// Fixed point of the Riccati recursion.
    pub p: Matrix2<f64>,
    /// One-step inflation A·P·Aᵀ + Bw·Σw·Bwᵀ used for the force predictive.
    pub p_plus: Matrix2<f64>,
    pub iterations: usize,
}

/// P ↦ APAᵀ − APCᵀ(CPCᵀ+Σf)⁻¹CPAᵀ + Q.
pub fn riccati_step(ss: &StateSpace, p: &Matrix2<f64>, q: &Matrix2<f64>, sigma_f: f64) -> Matrix2<f64> {
    let apa = ss.a * p * ss.a.transpose();
    let pct = p * ss.c.transpose();
    let s = (ss.c * pct)[0] + sigma_f;
    let apct = ss.a * pct;
    let next = apa - apct * apct.transpose() / s + q;
    (next + next.transpose()) * 0.5
}

/// ‖P − riccati(P)‖ / ‖P‖ in the max norm (absolute when P = 0).
pub fn dare_residual(ss: &StateSpace, p: &Matrix2<f64>, sigma_w: f64, sigma_f: f64) -> f64 {
    let r = (p - riccati_step(ss, p, &ss.process_cov(sigma_w), sigma_f)).amax();
    let scale = p.amax();
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

pub fn solve_dare(ss: &StateSpace, sigma_w: f64, sigma_f: f64) -> Result<SteadyStateGains> {
    solve_dare_with(ss, sigma_w, sigma_f, DARE_TOL, DARE_MAX_ITER)
}

/// Fixed-point iteration of the Riccati recursion from `Bw·Σw·Bwᵀ + 1e−9·I`.
pub fn solve_dare_with(
    ss: &StateSpace,
    sigma_w: f64,
    sigma_f: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyStateGains> {
    if !(sigma_f > 0.0) {
        return Err(Error::arg("riccati solve needs sigma_f > 0"));
    }
    if !(sigma_w >= 0.0) {
        return Err(Error::arg("riccati solve needs sigma_w >= 0"));
    }
    let q = ss.process_cov(sigma_w);
    if sigma_w == 0.0 {
        // zero process noise: P = 0 solves the equation exactly
        return Ok(SteadyStateGains {
            p: Matrix2::zeros(),
            p_plus: Matrix2::zeros(),
            iterations: 0,
        });
    }
    let mut p = q + Matrix2::identity() * 1e-9;
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        let next = riccati_step(ss, &p, &q, sigma_f);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: f64::INFINITY,
            });
        }
        change = (next - p).amax() / next.amax();
        p = next;
        if change < tol {
            return Ok(SteadyStateGains {
                p,
                p_plus: ss.a * p * ss.a.transpose() + q,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{discretize, MagazineCondition, TwoMassModel};

    #[test]
    fn zero_process_noise_gives_zero() {
        let ss = discretize(&MagazineCondition::FlexJoints.model(0.0));
        let g = solve_dare(&ss, 0.0, 1.25).unwrap();
        assert_eq!(g.p, Matrix2::zeros());
        assert_eq!(dare_residual(&ss, &g.p, 0.0, 1.25), 0.0);
    }

    #[test]
    fn free_space_reduces_to_lyapunov_sum() {
        let m = TwoMassModel { k1: 0.0, ..MagazineCondition::CompliantFeet.model(1.0) };
        let ss = discretize(&m);
        assert!(ss.is_stable());
        let g = solve_dare(&ss, 1.0, 1.25).unwrap();
        // truncated Σ Aⁱ Q (Aⁱ)ᵀ; the tail past 1e4 terms is below 1e−40 relative
        let q = ss.process_cov(1.0);
        let mut sum = Matrix2::zeros();
        let mut ai = Matrix2::identity();
        for _ in 0..10_000 {
            sum += ai * q * ai.transpose();
            ai = ss.a * ai;
        }
        assert!((g.p - sum).amax() < 1e-9 * sum.amax(), "{} vs {}", g.p, sum);
    }

    #[test]
    fn compliant_feet_residual() {
        let ss = discretize(&MagazineCondition::CompliantFeet.model(1.0));
        let g = solve_dare(&ss, 1.0, 1.25).unwrap();
        assert!(g.p.symmetric_eigenvalues().iter().all(|e| *e >= 0.0));
        assert!(dare_residual(&ss, &g.p, 1.0, 1.25) < 1e-8);
        // one more sweep barely moves the fixed point
        let again = riccati_step(&ss, &g.p, &ss.process_cov(1.0), 1.25);
        assert!((again - g.p).amax() < 1e-10 * g.p.amax());
        assert!((g.p_plus - (ss.a * g.p * ss.a.transpose() + ss.process_cov(1.0))).amax() == 0.0);
    }

    #[test]
    fn unstable_free_space_fails() {
        let m = TwoMassModel { k1: 0.0, b2: 0.0, k2: 0.0, ..MagazineCondition::FlexJoints.model(1.0) };
        let ss = discretize(&m);
        let err = solve_dare_with(&ss, 1.0, 1.25, 1e-12, 10_000).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    #[test]
    fn rejects_nonpositive_sensor_noise() {
        let ss = discretize(&MagazineCondition::FlexJoints.model(1.0));
        assert!(solve_dare(&ss, 1.0, 0.0).is_err());
    }
}

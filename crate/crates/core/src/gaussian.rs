//! Gaussian primitives, discrete beliefs, and the Gaussian-mixture entropy bound.
//!
//! Every density is evaluated in the log domain through a Cholesky factor. A
//! covariance whose Cholesky factorization fails is rejected as not positive
//! definite; there is no fallback path.

use std::f64::consts::{E, PI};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest probability a belief entry may hold.
pub const PROB_FLOOR: f64 = 1e-300;

const SYMMETRY_TOL: f64 = 1e-12;
const SUM_TOL: f64 = 1e-12;

/// Multivariate normal distribution with a validated, factored covariance.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<GaussianRepr> for Gaussian {
    type Error = Error;

    fn try_from(r: GaussianRepr) -> Result<Self> {
        let l = r.mean.len();
        if r.cov.len() != l || r.cov.iter().any(|row| row.len() != l) {
            return Err(Error::arg(format!("covariance must be {l}x{l}")));
        }
        let cov = DMatrix::from_fn(l, l, |i, j| r.cov[i][j]);
        Gaussian::new(DVector::from_vec(r.mean), cov)
    }
}

impl From<Gaussian> for GaussianRepr {
    fn from(g: Gaussian) -> Self {
        let l = g.dim();
        GaussianRepr {
            mean: g.mean.iter().copied().collect(),
            cov: (0..l).map(|i| g.cov.row(i).iter().copied().collect()).collect(),
        }
    }
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let l = mean.len();
        if l == 0 {
            return Err(Error::arg("gaussian must have dimension >= 1"));
        }
        if cov.nrows() != l || cov.ncols() != l {
            return Err(Error::arg(format!(
                "covariance is {}x{}, mean has length {l}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("gaussian parameters must be finite"));
        }
        let scale = cov.amax();
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::arg(format!(
                "covariance is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::not_pd("gaussian covariance", &cov))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::not_pd("gaussian covariance (degenerate pivots)", &cov));
        }
        Ok(Self {
            mean,
            cov,
            chol,
            log_det,
        })
    }

    /// One-dimensional normal with the given mean and variance.
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// ln det Σ.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Mahalanobis distance squared (x−μ)ᵀΣ⁻¹(x−μ).
    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::arg(format!(
                "point has dimension {}, gaussian has {}",
                x.len(),
                self.dim()
            )));
        }
        let diff = x - &self.mean;
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .ok_or_else(|| Error::not_pd("triangular solve", &self.cov))?;
        Ok(z.norm_squared())
    }

    pub fn ln_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let m = self.mahalanobis_sq(x)?;
        Ok(-0.5 * (self.dim() as f64 * (2.0 * PI).ln() + self.log_det + m))
    }

    /// Draws μ + Lz with z standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + self.chol.l_dirty().lower_triangle() * z
    }

    /// Covariance sum Σ_self + Σ_other, mean kept from `self`.
    fn widened(&self, other: &Gaussian) -> Result<Gaussian> {
        Gaussian::new(self.mean.clone(), &self.cov + &other.cov)
    }
}

/// N(x | μ, Σ).
pub fn gaussian_pdf(g: &Gaussian, x: &DVector<f64>) -> Result<f64> {
    g.ln_pdf(x).map(f64::exp)
}

/// Differential entropy (L/2)·ln(2πe) + ½·ln det Σ, in nats.
pub fn gaussian_entropy(g: &Gaussian) -> f64 {
    0.5 * g.dim() as f64 * (2.0 * PI * E).ln() + 0.5 * g.log_det()
}

/// Discrete distribution over contact modes. Entries are kept strictly positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BeliefVector(Vec<f64>);

impl TryFrom<Vec<f64>> for BeliefVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        BeliefVector::new(v)
    }
}

impl From<BeliefVector> for Vec<f64> {
    fn from(b: BeliefVector) -> Self {
        b.0
    }
}

impl BeliefVector {
    /// Validates a probability vector. Exact zeros are lifted to [`PROB_FLOOR`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::arg("belief must have at least one mode"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::arg(format!("belief entries must lie in [0, 1]: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::arg(format!("belief sums to {sum}, expected 1")));
        }
        Ok(Self(probs.into_iter().map(|p| p.max(PROB_FLOOR)).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform belief needs n >= 1");
        Self(vec![1.0 / n as f64; n])
    }

    /// Normalizes arbitrary nonnegative weights. Returns `None` if they sum to zero.
    pub fn from_weights(weights: &[f64]) -> Option<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return None;
        }
        Some(Self(
            weights.iter().map(|w| (w / sum).max(PROB_FLOOR)).collect(),
        ))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every entry equals 1/N within 1e−12.
    pub fn is_flat(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.0.iter().all(|p| (p - u).abs() <= SUM_TOL)
    }

    /// Index of the most probable mode (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Shannon entropy −Σ bₙ ln bₙ in nats.
pub fn belief_entropy(b: &BeliefVector) -> f64 {
    -b.probs()
        .iter()
        .map(|p| {
            let p = p.clamp(PROB_FLOOR, 1.0);
            p * p.ln()
        })
        .sum::<f64>()
}

fn check_components(b: &BeliefVector, components: &[Gaussian]) -> Result<usize> {
    if components.len() != b.len() {
        return Err(Error::arg(format!(
            "{} components for a belief over {} modes",
            components.len(),
            b.len()
        )));
    }
    let l = components[0].dim();
    if components.iter().any(|g| g.dim() != l) {
        return Err(Error::arg("mixture components must share one dimension"));
    }
    Ok(l)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Lower bound on the differential entropy of Σₙ bₙ N(μₙ, Σₙ):
/// −Σₙ bₙ ln Σₘ bₘ N(μₘ | μₙ, Σₙ+Σₘ).
pub fn mixture_entropy_lower_bound(b: &BeliefVector, components: &[Gaussian]) -> Result<f64> {
    check_components(b, components)?;
    let ln_b: Vec<f64> = b.probs().iter().map(|p| p.clamp(PROB_FLOOR, 1.0).ln()).collect();
    let mut total = 0.0;
    for (n, gn) in components.iter().enumerate() {
        let mut terms = Vec::with_capacity(components.len());
        for (m, gm) in components.iter().enumerate() {
            terms.push(ln_b[m] + gn.widened(gm)?.ln_pdf(gm.mean())?);
        }
        total -= b.probs()[n] * log_sum_exp(&terms);
    }
    Ok(total)
}

/// Lower bound on the mode information gain of one observation drawn from the mixture.
pub fn info_gain_lower_bound(b: &BeliefVector, components: &[Gaussian]) -> Result<f64> {
    let l = check_components(b, components)?;
    let conditional = 0.5 * l as f64 * (2.0 * PI * E).ln()
        + b.probs()
            .iter()
            .zip(components)
            .map(|(p, g)| 0.5 * p * g.log_det())
            .sum::<f64>();
    Ok(mixture_entropy_lower_bound(b, components)? - conditional)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(m: f64, v: f64) -> Gaussian {
        Gaussian::scalar(m, v).unwrap()
    }

    #[test]
    fn pdf_closed_forms() {
        let x0 = DVector::from_element(1, 0.0);
        assert!((gaussian_pdf(&g1(0.0, 1.0), &x0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((gaussian_pdf(&g1(0.0, 2.0), &x0).unwrap() - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        let g2 = Gaussian::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let p = gaussian_pdf(&g2, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((p - (-1.0f64).exp() / (2.0 * PI)).abs() < 1e-15);
        assert!((p - 0.058_549_831_524_319_16).abs() < 1e-12);
    }

    #[test]
    fn pdf_dimension_mismatch_is_argument_error() {
        let err = gaussian_pdf(&g1(0.0, 1.0), &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn non_pd_covariance_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = Gaussian::new(DVector::zeros(2), cov).unwrap_err();
        assert!(err.is_numerical());
        assert!(Gaussian::scalar(0.0, 0.0).is_err());
        assert!(Gaussian::scalar(0.0, -1.0).is_err());
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            Gaussian::new(DVector::zeros(2), cov),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn entropy_closed_forms() {
        assert!((gaussian_entropy(&g1(0.0, 1.0)) - 1.418_938_533_204_672_7).abs() < 1e-12);
        let i3 = Gaussian::new(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        assert!((gaussian_entropy(&i3) - 4.256_815_599_614_018).abs() < 1e-12);
        let d = Gaussian::new(
            DVector::zeros(2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5])),
        )
        .unwrap();
        assert!((gaussian_entropy(&d) - 2.837_877_066_409_345).abs() < 1e-12);
    }

    #[test]
    fn belief_entropy_examples() {
        let b = BeliefVector::new(vec![0.5, 0.5]).unwrap();
        assert!((belief_entropy(&b) - 2f64.ln()).abs() < 1e-15);
        let b = BeliefVector::new(vec![1.0 - 1e-12, 1e-12]).unwrap();
        assert!(belief_entropy(&b).abs() < 1e-10);
        assert!((belief_entropy(&BeliefVector::uniform(4)) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn belief_validation() {
        assert!(BeliefVector::new(vec![0.6, 0.6]).is_err());
        assert!(BeliefVector::new(vec![-0.1, 1.1]).is_err());
        assert!(BeliefVector::new(vec![]).is_err());
        let b = BeliefVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(b.probs()[1], PROB_FLOOR);
        assert_eq!(b.argmax(), 0);
    }

    #[test]
    fn identical_components_collapse() {
        let b = BeliefVector::uniform(2);
        let comps = [g1(0.0, 1.0), g1(0.0, 1.0)];
        let h = mixture_entropy_lower_bound(&b, &comps).unwrap();
        assert!((h - 0.5 * (4.0 * PI).ln()).abs() < 1e-12);
        let gain = info_gain_lower_bound(&b, &comps).unwrap();
        assert!((gain - 0.5 * (2f64.ln() - 1.0)).abs() < 1e-12);
        assert!((gain + 0.153_426_409_720_027_3).abs() < 1e-12);
    }

    #[test]
    fn near_degenerate_prior_approaches_single_component() {
        let eps = 1e-9;
        let b = BeliefVector::new(vec![1.0 - eps, eps]).unwrap();
        let h = mixture_entropy_lower_bound(&b, &[g1(0.0, 1.0), g1(3.0, 1.0)]).unwrap();
        assert!((h - 0.5 * (4.0 * PI).ln()).abs() < 1e-6);
        assert!(h <= gaussian_entropy(&g1(0.0, 1.0)));
    }

    #[test]
    fn well_separated_modes_do_not_underflow() {
        let b = BeliefVector::uniform(2);
        let comps = [g1(0.0, 1.0), g1(1e3, 1.0)];
        let h = mixture_entropy_lower_bound(&b, &comps).unwrap();
        assert!(h.is_finite());
        // each inner sum is dominated by its self-term: −ln(½·N(0|0,2))
        assert!((h - (2f64.ln() + 0.5 * (4.0 * PI).ln())).abs() < 1e-12);
    }

    #[test]
    fn mismatched_components_rejected() {
        let b = BeliefVector::uniform(2);
        assert!(info_gain_lower_bound(&b, &[g1(0.0, 1.0)]).is_err());
        let g2 = Gaussian::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(info_gain_lower_bound(&b, &[g1(0.0, 1.0), g2]).is_err());
    }

    #[test]
    fn serde_roundtrip_validates() {
        let g: Gaussian = serde_json::from_str(r#"{"mean":[1.0],"cov":[[2.0]]}"#).unwrap();
        assert_eq!(g, g1(1.0, 2.0));
        assert!(serde_json::from_str::<Gaussian>(r#"{"mean":[1.0],"cov":[[-2.0]]}"#).is_err());
        assert!(serde_json::from_str::<BeliefVector>("[0.2, 0.2]").is_err());
    }
}

#![allow(dead_code)]

use contactig::estimator::kalman_step;
use contactig::gaussian::Gaussian;
use contactig::model::{discretize, StateSpace, TwoMassModel};
use contactig::simulate::{simulate, InputSignal, ModeSchedule};
use contactig::sysid::{fit, initial_guess, objective, FitOptions, FitResult, ParamBounds};
use contactig::Trace;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Symmetric positive definite matrix with eigenvalues in `[1, cond]·scale`.
pub fn random_spd<R: Rng>(rng: &mut R, dim: usize, cond: f64, scale: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let q = raw.qr().q();
    let eig = DVector::from_fn(dim, |_, _| scale * log_uniform(rng, 1.0, cond));
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Gaussian {
    let mean = DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0));
    let scale = log_uniform(rng, 0.2, 2.0);
    Gaussian::new(mean, random_spd(rng, dim, 30.0, scale)).unwrap()
}

/// Contact-mode plant whose Euler discretization is stable and lightly to
/// moderately damped, with its resonance inside 5–40 Hz.
pub fn random_plant<R: Rng>(rng: &mut R, sigma_w: f64, sigma_f: f64) -> TwoMassModel {
    loop {
        let m2 = log_uniform(rng, 0.5, 50.0);
        let f_n = rng.random_range(5.0..40.0);
        let k_total = m2 * (2.0 * std::f64::consts::PI * f_n).powi(2);
        let share = rng.random_range(0.2..0.8);
        let zeta = rng.random_range(0.05..0.5);
        let m = TwoMassModel {
            m2,
            b2: 2.0 * zeta * (k_total * m2).sqrt(),
            k2: k_total * (1.0 - share),
            k1: k_total * share,
            ts: 0.0008,
            sigma_w,
            sigma_f,
        };
        if discretize(&m).spectral_radius() < 0.9999 {
            return m;
        }
    }
}

/// Chirp-excited contact trace (whole run in contact).
pub fn chirp_trace(model: &TwoMassModel, duration: f64, amplitude: f64, seed: u64) -> Trace {
    let input = InputSignal::Chirp {
        amplitude,
        f0: 0.5,
        f1: 50.0,
        duration,
        offset: 0.0,
    };
    simulate(model, &ModeSchedule::constant(1, duration), &|t| input.eval(t), duration, seed).unwrap()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub struct Instance {
    pub ss: StateSpace,
    pub k1: f64,
    pub sigma_w: f64,
    pub sigma_f: f64,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
    pub q1: Vec<f64>,
}

/// Posterior of `x_n` given `f_0..f_{n-1}`, by writing every state and force as an
/// affine function of the independent variables (x0, process noises, force noises)
/// and conditioning the joint Gaussian directly.
pub fn condition_joint(inst: &Instance, f: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = inst.q1.len();
    let dim = 2 + 2 * n;
    let mut cov_xi = DMatrix::zeros(dim, dim);
    cov_xi.view_mut((0, 0), (2, 2)).copy_from(&inst.p0);
    for k in 0..n {
        cov_xi[(2 + k, 2 + k)] = inst.sigma_w;
        cov_xi[(2 + n + k, 2 + n + k)] = inst.sigma_f;
    }
    let a = DMatrix::from_column_slice(2, 2, inst.ss.a.as_slice());
    let mut c = inst.m0.clone();
    let mut g = DMatrix::zeros(2, dim);
    g[(0, 0)] = 1.0;
    g[(1, 1)] = 1.0;
    let mut h = DMatrix::zeros(n, dim);
    let mut h0 = DVector::zeros(n);
    for k in 0..n {
        h0[k] = inst.k1 * (c[0] - inst.q1[k]);
        for j in 0..dim {
            h[(k, j)] = inst.k1 * g[(0, j)];
        }
        h[(k, 2 + n + k)] = 1.0;
        c = &a * &c + DVector::from_column_slice(inst.ss.b.as_slice()) * inst.q1[k];
        g = &a * &g;
        g[(0, 2 + k)] += inst.ss.bw[0];
        g[(1, 2 + k)] += inst.ss.bw[1];
    }
    let s = &h * &cov_xi * h.transpose();
    let cross = &g * &cov_xi * h.transpose();
    let chol = s.cholesky().expect("innovation covariance is PD");
    let resid = DVector::from_column_slice(f) - h0;
    let mean = &c + &cross * chol.solve(&resid);
    let cov = &g * &cov_xi * g.transpose() - &cross * chol.solve(&cross.transpose());
    (mean, cov)
}

/// Draws forces from the instance's own generative model.
pub fn sample_forces<R: Rng>(inst: &Instance, r: &mut R) -> Vec<f64> {
    let x0 = Gaussian::new(inst.m0.clone(), inst.p0.clone()).unwrap().sample(r);
    let mut x = nalgebra::Vector2::new(x0[0], x0[1]);
    let mut f = Vec::with_capacity(inst.q1.len());
    for &q in &inst.q1 {
        let v: f64 = StandardNormal.sample(r);
        let w: f64 = StandardNormal.sample(r);
        f.push(inst.k1 * (x[0] - q) + inst.sigma_f.sqrt() * v);
        x = inst.ss.a * x + inst.ss.b * q + inst.ss.bw * (inst.sigma_w.sqrt() * w);
    }
    f
}

pub fn filter(inst: &Instance, f: &[f64]) -> Gaussian {
    let mut g = Gaussian::new(inst.m0.clone(), inst.p0.clone()).unwrap();
    for (q, fk) in inst.q1.iter().zip(f) {
        g = kalman_step(&g, &inst.ss, *q, *fk, inst.sigma_w, inst.sigma_f).unwrap().posterior;
    }
    g
}

/// Chirp amplitude giving a peak spring force of about `force` newtons.
pub fn amplitude_for(model: &TwoMassModel, force: f64) -> f64 {
    force / model.k1
}

pub fn recover(truth: &TwoMassModel, amplitude: f64, seed: u64) -> FitResult {
    let trace = chirp_trace(truth, 5.0, amplitude, seed);
    let guess = initial_guess(&trace, truth.ts, 1.25).unwrap();
    let result = fit(&trace, &guess, &ParamBounds::around(&guess), &FitOptions::default()).unwrap();
    let direct = objective(&result.params, &trace).unwrap();
    assert!((direct - result.objective).abs() <= 1e-12 * direct.max(1e-300));
    assert!(result.objective <= result.initial_objective);
    result
}

pub fn worst_error(truth: &TwoMassModel, got: &TwoMassModel) -> f64 {
    let (t, g) = (truth.design_vector(), got.design_vector());
    (0..4).map(|i| rel_err(g[i], t[i])).fold(0.0, f64::max)
}

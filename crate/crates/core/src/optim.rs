//! Bounded Nelder–Mead simplex minimization.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Relative change of the best value over `window` iterations that counts as converged.
    pub rel_tol: f64,
    pub window: usize,
    /// Initial simplex edge along each coordinate.
    pub initial_step: f64,
    /// A simplex whose vertices differ in value by less than this, while still spread
    /// out in parameters by more than `flat_spread`, is declared flat.
    pub flat_value_tol: f64,
    pub flat_spread: f64,
    /// Simplex size (largest coordinate range) that counts as converged. Needed when
    /// the minimum value is 0 and the relative test never settles.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            rel_tol: 1e-10,
            window: 50,
            initial_step: 0.2,
            flat_value_tol: 1e-12,
            flat_spread: 0.1,
            x_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// The objective did not vary across a wide simplex.
    pub flat: bool,
    /// Largest coordinate range across the final simplex.
    pub spread: f64,
    /// Range of objective values across the final simplex.
    pub value_spread: f64,
}

struct Problem<'a, F> {
    f: F,
    lo: &'a [f64],
    hi: &'a [f64],
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Problem<'_, F> {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lo).zip(self.hi).map(|((v, lo), hi)| v.clamp(*lo, *hi)).collect()
    }

    /// Objective at the projection onto the box, plus a penalty growing with the
    /// distance outside it, so vertices never pile up on a face.
    fn eval(&mut self, x: &[f64]) -> f64 {
        let p = self.project(x);
        self.evaluations += 1;
        let v = (self.f)(&p);
        if v.is_nan() {
            return f64::INFINITY;
        }
        let d = x.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if d > 0.0 && v.is_finite() {
            v + (1.0 + v.abs()) * d
        } else {
            v
        }
    }
}

fn spreads(simplex: &[(Vec<f64>, f64)]) -> (f64, f64) {
    let n = simplex[0].0.len();
    let mut spread: f64 = 0.0;
    for i in 0..n {
        let (lo, hi) = simplex
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| (lo.min(x[i]), hi.max(x[i])));
        spread = spread.max(hi - lo);
    }
    let best = simplex[0].1;
    let worst = simplex[simplex.len() - 1].1;
    (spread, worst - best)
}

/// Minimizes `f` inside the box `[lo, hi]`, starting from `x0`. The objective is only
/// ever evaluated inside the box; NaN counts as +∞.
pub fn nelder_mead<F>(f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0 && lo.len() == n && hi.len() == n, "dimension mismatch");
    let mut p = Problem {
        f,
        lo,
        hi,
        evaluations: 0,
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let start = p.project(x0);
    let v0 = p.eval(&start);
    simplex.push((start.clone(), v0));
    for i in 0..n {
        let mut x = start.clone();
        // step away from the nearer bound
        x[i] += if x[i] + opts.initial_step <= hi[i] { opts.initial_step } else { -opts.initial_step };
        let v = p.eval(&x);
        simplex.push((x, v));
    }

    let mut history = Vec::with_capacity(opts.max_iter.min(100_000) + 1);
    let mut iterations = 0;
    let mut converged = false;
    let mut flat = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);
        let (spread, value_spread) = spreads(&simplex);
        if value_spread.abs() <= opts.flat_value_tol && spread > opts.flat_spread {
            flat = true;
            break;
        }
        if spread <= opts.x_tol {
            converged = true;
            break;
        }
        if history.len() > opts.window {
            let old = history[history.len() - 1 - opts.window];
            let now = simplex[0].1;
            if (old - now).abs() <= opts.rel_tol * now.abs() || now == 0.0 {
                converged = true;
                break;
            }
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|i| centroid[i] + t * (worst.0[i] - centroid[i])).collect() };

        let xr = along(-1.0);
        let fr = p.eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = p.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, t) = if fr < worst.1 { (along(-0.5), fr) } else { (along(0.5), worst.1) };
        let fc = p.eval(&xc);
        if fc < t {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = (0..n).map(|i| best[i] + 0.5 * (v.0[i] - best[i])).collect();
            let fx = p.eval(&x);
            *v = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (spread, value_spread) = spreads(&simplex);
    Minimum {
        x: p.project(&simplex[0].0),
        value: simplex[0].1,
        iterations,
        evaluations: p.evaluations,
        converged,
        flat,
        spread,
        value_spread,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BIG: [f64; 2] = [1e9, 1e9];
    const NEG: [f64; 2] = [-1e9, -1e9];

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &NEG, &BIG, &NelderMeadOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] - 5.0).powi(2) + x[1].powi(2);
        let m = nelder_mead(f, &[0.0, 0.5], &[-1.0, -1.0], &[2.0, 1.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-6, "{m:?}");
        assert!(m.x[1].abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn flat_objective_is_flagged() {
        let m = nelder_mead(|_| 3.0, &[0.0, 0.0], &NEG, &BIG, &NelderMeadOptions::default());
        assert!(m.flat);
        assert!(!m.converged);
        assert_eq!(m.value, 3.0);
    }

    #[test]
    fn nan_is_treated_as_worse() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { (x[0] - 0.4).powi(2) + x[1].powi(2) };
        let m = nelder_mead(f, &[0.0, 0.0], &NEG, &BIG, &NelderMeadOptions::default());
        assert!((m.x[0] - 0.4).abs() < 1e-5);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1].powi(2);
        let x0 = [0.3, 0.2];
        let m = nelder_mead(f, &x0, &NEG, &BIG, &NelderMeadOptions::default());
        assert!(m.value <= f(&x0));
    }
}

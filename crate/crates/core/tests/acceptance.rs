//! Acceptance criteria, one test each. Every test prints a `PASS` or `FAIL` line
//! before asserting; run with `cargo test --test acceptance -- --nocapture`.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use contactig::cli::{table_ordering_holds, table_point};
use contactig::estimator::{dare_residual, riccati_step, solve_dare, FilterOptions, HiddenState};
use contactig::gaussian::{info_gain_lower_bound, BeliefVector, Gaussian};
use contactig::gradient::info_gain_gradient;
use contactig::infogain::{info_gain_fully_observed, info_gain_monte_carlo, pairwise_info_gain, two_mode_surface};
use contactig::model::{discretize, MagazineCondition, TwoMassModel};
use contactig::scenario::{spearman, stiffness_sweep, ApproachScenario};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use common::{
    amplitude_for, condition_joint, filter, log_uniform, random_gaussian, random_plant, recover, rng, sample_forces,
    worst_error, Instance,
};

const SIGMA_W_GRID: [f64; 3] = [0.1, 1.0, 10.0];
const GAP_GRID: [f64; 3] = [1e-4, 5e-4, 1e-3];

fn verdict(id: u32, title: &str, ok: bool, detail: &str) {
    println!("{} criterion {id}: {title} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

#[test]
fn criterion_01_equal_gap_anchor() {
    let want = -0.5 * (1.0 - 2f64.ln());
    let mut worst = 0.0f64;
    for k1 in [0.0, 1.0, 1e3, 17.4e4] {
        for sigma_f in [0.01, 1.25, 100.0] {
            let v = info_gain_fully_observed(k1, 0.0, sigma_f, &BeliefVector::uniform(2)).unwrap();
            worst = worst.max((v.raw - want).abs());
        }
    }
    verdict(1, "equal-gap anchor -0.153426", worst <= 1e-12, &format!("max deviation {worst:.1e}"));
}

#[test]
fn criterion_02_two_mode_surface() {
    let mu: Vec<f64> = (0..=100).map(|i| -5.0 + 0.1 * i as f64).collect();
    let sig: Vec<f64> = (1..=60).map(|j| j as f64 / 20.0).collect();
    let rows = two_mode_surface(&mu, &sig).unwrap();
    let at = |i: usize, j: usize| rows[i * sig.len() + j];

    let min = rows.iter().min_by(|a, b| a.info_gain.total_cmp(&b.info_gain)).unwrap();
    let min_ok = min.mu2.abs() < 1e-12 && (min.sigma2 - 1.0).abs() < 1e-12;

    let unit = sig.iter().position(|s| *s == 1.0).unwrap();
    let zero = mu.iter().position(|m| m.abs() < 1e-12).unwrap();
    let right: Vec<f64> = (zero..mu.len()).map(|i| at(i, unit).info_gain).collect();
    let left: Vec<f64> = (0..=zero).rev().map(|i| at(i, unit).info_gain).collect();
    let grows = [right, left].iter().all(|c| c.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    // the minimum at Σ₂ = 1 bounds the monotone range in Σ₂ to (0, 1]
    let shrinks = (0..unit).all(|j| at(zero, j + 1).info_gain <= at(zero, j).info_gain + 1e-12);

    let flat = BeliefVector::uniform(2);
    let base = Gaussian::scalar(0.0, 1.0).unwrap();
    let mut flags_ok = true;
    let mut saturated = 0;
    for p in &rows {
        let other = Gaussian::scalar(p.mu2, p.sigma2).unwrap();
        let raw = pairwise_info_gain(&base, &other).unwrap();
        let bound = info_gain_lower_bound(&flat, &[base.clone(), other]).unwrap();
        flags_ok &= p.saturated == (raw > 2f64.ln()) && p.info_gain <= 2f64.ln() + 1e-12 && p.info_gain == bound;
        saturated += p.saturated as usize;
    }
    let ok = min_ok && grows && shrinks && flags_ok && saturated > 0;
    verdict(
        2,
        "two-mode surface shape",
        ok,
        &format!(
            "minimum at ({}, {}), monotone in |mu2| {grows}, non-increasing in sigma2 on (0,1] {shrinks}, {saturated} saturated points flagged {flags_ok}",
            min.mu2, min.sigma2
        ),
    );
}

#[test]
fn criterion_03_bound_below_sampled_gain() {
    let mut r = rng(303);
    let instances: Vec<(BeliefVector, Vec<Gaussian>)> = (0..100)
        .map(|_| {
            let n = r.random_range(2..=4);
            let dim = r.random_range(1..=3);
            let comps = (0..n).map(|_| random_gaussian(&mut r, dim)).collect();
            let w: Vec<f64> = (0..n).map(|_| r.random_range(0.05..1.0)).collect();
            (BeliefVector::from_weights(&w).unwrap(), comps)
        })
        .collect();
    let slack: Vec<f64> = instances
        .par_iter()
        .enumerate()
        .map(|(i, (b, comps))| {
            let bound = info_gain_lower_bound(b, comps).unwrap();
            let mc = info_gain_monte_carlo(b, comps, 100_000, 1000 + i as u64).unwrap();
            mc.estimate + 3.0 * mc.std_error - bound
        })
        .collect();
    let violations = slack.iter().filter(|s| **s < 0.0).count();
    let tightest = slack.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        3,
        "bound below Monte Carlo gain on 100 instances",
        violations == 0,
        &format!("{violations} violations, smallest margin {tightest:.3e}"),
    );
}

#[test]
fn criterion_04_table_ordering() {
    let mut failures = Vec::new();
    for sw in SIGMA_W_GRID {
        for gap in GAP_GRID {
            let point = table_point(sw, gap).unwrap();
            if !table_ordering_holds(&point) {
                let vals: Vec<String> =
                    point.iter().map(|(c, r)| format!("{}={:.4}", c.label(), r.raw_bound)).collect();
                failures.push(format!("sigma_w={sw} gap={gap}: {}", vals.join(" ")));
            }
        }
    }
    for f in &failures {
        println!("  ordering broken at {f}");
    }
    verdict(
        4,
        "feet > flex joints > surface at every grid point",
        failures.is_empty(),
        &format!("{} of 9 grid points out of order", failures.len()),
    );
}

fn expected_signs(c: MagazineCondition) -> [f64; 4] {
    match c {
        MagazineCondition::FlexJoints => [1.0, 1.0, 1.0, -1.0],
        _ => [1.0, 1.0, 1.0, 1.0],
    }
}

#[test]
fn criterion_05_gradient_signs() {
    const NAMES: [&str; 4] = ["K1", "M2", "B2", "K2"];
    let flat = BeliefVector::uniform(2);
    let mut mismatches = Vec::new();
    for c in MagazineCondition::ALL {
        for sw in SIGMA_W_GRID {
            for gap in GAP_GRID {
                let m = c.model(sw);
                let g = info_gain_gradient(&[m.free_space(), m], gap, &flat).unwrap().values().unwrap();
                for i in 0..4 {
                    if g[i].signum() != expected_signs(c)[i] {
                        mismatches.push(format!("{} d{} = {:.3e} at sigma_w={sw} gap={gap}", c.label(), NAMES[i], g[i]));
                    }
                }
            }
        }
    }
    let mut collapse = 0.0f64;
    for c in MagazineCondition::ALL {
        let m = c.model(0.0);
        let gap = 5e-4;
        let g = info_gain_gradient(&[m.free_space(), m], gap, &flat).unwrap().values().unwrap();
        let expected = m.k1 * gap * gap / (2.0 * m.sigma_f);
        collapse = collapse.max(((g[0] - expected) / expected).abs());
    }
    for s in &mismatches {
        println!("  sign mismatch: {s}");
    }
    verdict(
        5,
        "gradient sign pattern and noise-free collapse",
        mismatches.is_empty() && collapse <= 1e-6,
        &format!("{} of 108 signs wrong, collapse relative error {collapse:.1e}", mismatches.len()),
    );
}

#[test]
fn criterion_06_kalman_matches_conditioning() {
    let mut r = rng(606);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut model = random_plant(&mut r, 0.0, 0.0);
        model.sigma_w = log_uniform(&mut r, 0.01, 10.0);
        model.sigma_f = log_uniform(&mut r, 0.1, 5.0);
        let n = r.random_range(5..=50);
        let inst = Instance {
            ss: discretize(&model),
            k1: model.k1,
            sigma_w: model.sigma_w,
            sigma_f: model.sigma_f,
            m0: DVector::from_vec(vec![r.random_range(-1e-3..1e-3), 0.0]),
            p0: DMatrix::from_diagonal(&DVector::from_vec(vec![1e-6, 1e-4])),
            q1: (0..n).map(|_| r.random_range(-2e-3..2e-3)).collect(),
        };
        let f = sample_forces(&inst, &mut r);
        let (mean, cov) = condition_joint(&inst, &f);
        let got = filter(&inst, &f);
        let scale = mean.amax() + cov.amax().sqrt();
        worst = worst.max((got.mean() - &mean).amax() / scale).max((got.cov() - &cov).amax() / cov.amax());
    }
    verdict(6, "Kalman bank equals joint conditioning", worst < 1e-8, &format!("max relative error {worst:.1e}"));
}

#[test]
fn criterion_07_riccati_solution() {
    let mut table: Vec<TwoMassModel> = Vec::new();
    for c in MagazineCondition::ALL {
        table.extend(SIGMA_W_GRID.map(|sw| c.model(sw)));
    }
    let mut r = rng(707);
    let random: Vec<TwoMassModel> =
        (0..50).map(|_| { let sw = log_uniform(&mut r, 0.01, 10.0); random_plant(&mut r, sw, 1.25) }).collect();

    let (mut residual, mut fixed_point) = (0.0f64, 0.0f64);
    for m in table.iter().chain(&random) {
        let ss = discretize(m);
        let p = solve_dare(&ss, m.sigma_w, m.sigma_f).unwrap().p;
        residual = residual.max(dare_residual(&ss, &p, m.sigma_w, m.sigma_f));
        let again = riccati_step(&ss, &p, &ss.process_cov(m.sigma_w), m.sigma_f);
        fixed_point = fixed_point.max((again - p).amax() / p.amax());
    }
    let convergence = table
        .par_iter()
        .chain(random[..5].par_iter())
        .map(|m| {
            let ss = discretize(m);
            let p = solve_dare(&ss, m.sigma_w, m.sigma_f).unwrap().p;
            let mut state = HiddenState::initial(0.0, [1e-4, 1e-2]);
            for _ in 0..100_000 {
                state = state.step(&ss, 0.0, 0.0, m.sigma_w, m.sigma_f).unwrap().0;
            }
            (state.cov - p).amax() / p.amax()
        })
        .reduce(|| 0.0, f64::max);
    verdict(
        7,
        "Riccati residual, fixed point and long-run filter covariance",
        residual < 1e-8 && fixed_point < 1e-10 && convergence < 1e-6,
        &format!("residual {residual:.1e}, one-step change {fixed_point:.1e}, 1e5-step gap {convergence:.1e}"),
    );
}

#[test]
fn criterion_08_identification_round_trip() {
    let mut r = rng(808);
    let clean: Vec<TwoMassModel> = (0..20).map(|_| random_plant(&mut r, 0.0, 0.0)).collect();
    let noisy: Vec<TwoMassModel> = (0..10).map(|_| random_plant(&mut r, 0.0, 1.25)).collect();
    let clean_err =
        clean.par_iter().map(|m| worst_error(m, &recover(m, 1e-3, 0).params)).reduce(|| 0.0, f64::max);
    let noisy_fits: Vec<(f64, f64)> = noisy
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let res = recover(m, amplitude_for(m, 50.0), 800 + i as u64);
            (worst_error(m, &res.params), res.residual_rms)
        })
        .collect();
    let noisy_err = noisy_fits.iter().map(|f| f.0).fold(0.0, f64::max);
    let rms_dev = noisy_fits.iter().map(|f| (f.1 - 1.25f64.sqrt()).abs()).fold(0.0, f64::max);
    verdict(
        8,
        "parameter recovery from chirp traces",
        clean_err < 0.01 && noisy_err < 0.1 && rms_dev < 0.05,
        &format!(
            "noise-free worst {:.2e}, noisy worst {:.2e}, residual rms off 1.118 by at most {rms_dev:.3}",
            clean_err, noisy_err
        ),
    );
}

#[test]
fn criterion_09_latency_falls_with_stiffness() {
    let k1 = [2.5e3, 5e3, 1e4, 2e4];
    let points = stiffness_sweep(&ApproachScenario::standard(), &k1, 100, 42, 1e-4, &FilterOptions::default()).unwrap();
    let medians: Vec<f64> = points.iter().map(|p| p.median_latency_samples).collect();
    let gains: Vec<f64> = points.iter().map(|p| p.info_gain).collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let rho = spearman(&gains, &medians);
    verdict(
        9,
        "median detection latency falls as K1 and the bound rise",
        decreasing && rho <= -0.8,
        &format!("median latencies {medians:?} samples, rank correlation {rho:.2}"),
    );
}

fn docs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs")
}

fn run_into(args: &[String], dir: &Path) -> Vec<(String, Vec<u8>)> {
    let out = Command::new(env!("CARGO_BIN_EXE_contactig"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_cli_determinism() {
    let ex = |name: &str| docs().join("examples").join(name).to_string_lossy().into_owned();
    let work = tempfile::tempdir().unwrap();
    let contact = work.path().join("contact");
    let chirp = work.path().join("chirp");
    run_into(&["simulate".into(), "--config".into(), ex("simulate.json")], &contact);
    run_into(&["simulate".into(), "--config".into(), ex("simulate_chirp.json")], &chirp);
    let trace = |d: &Path| d.join("trace.csv").to_string_lossy().into_owned();

    let cases: Vec<Vec<String>> = vec![
        vec!["simulate".into()],
        vec!["simulate".into(), "--config".into(), ex("simulate.json")],
        vec!["estimate".into(), "--config".into(), ex("estimate.json"), "--trace".into(), trace(&contact)],
        vec!["infogain".into(), "--config".into(), ex("infogain_fully_observed.json")],
        vec!["infogain".into(), "--config".into(), ex("infogain_partially_observed.json")],
        vec!["infogain".into(), "--config".into(), ex("infogain_surface.json")],
        vec!["infogain".into(), "--config".into(), ex("infogain_table.json")],
        vec!["infogain".into(), "--config".into(), ex("infogain_mixture.json")],
        vec!["identify".into(), "--config".into(), ex("identify.json"), "--trace".into(), trace(&chirp)],
        vec!["gradient".into(), "--config".into(), ex("gradient.json")],
        vec!["sweep".into(), "--config".into(), ex("sweep.json")],
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for (i, args) in cases.iter().enumerate() {
        let a = run_into(args, &work.path().join(format!("{i}a")));
        let b = run_into(args, &work.path().join(format!("{i}b")));
        files += a.len();
        if a != b {
            differing.push(args.join(" "));
        }
    }
    for d in &differing {
        println!("  outputs differ for: {d}");
    }
    verdict(
        10,
        "byte-identical reruns of every command",
        differing.is_empty(),
        &format!("{} commands, {files} files, {} differing", cases.len(), differing.len()),
    );
}

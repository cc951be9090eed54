//! Parameter recovery from synthetic chirp-excited traces.

mod common;

use contactig::TwoMassModel;
use rayon::prelude::*;

use common::{amplitude_for, random_plant, recover, rng, worst_error};

#[test]
fn noise_free_chirps_recover_all_parameters() {
    let mut r = rng(8);
    let truths: Vec<TwoMassModel> = (0..20).map(|_| random_plant(&mut r, 0.0, 0.0)).collect();
    let errors: Vec<f64> = truths
        .par_iter()
        .map(|m| {
            let res = recover(m, 1e-3, 0);
            assert!(res.identifiable);
            worst_error(m, &res.params)
        })
        .collect();
    for (m, e) in truths.iter().zip(&errors) {
        assert!(*e < 0.01, "{m:?}: worst relative error {e}");
    }
}

#[test]
fn noisy_chirps_recover_within_ten_percent() {
    let mut r = rng(9);
    let truths: Vec<TwoMassModel> = (0..10).map(|_| random_plant(&mut r, 0.0, 1.25)).collect();
    let outcomes: Vec<(f64, f64)> = truths
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let res = recover(m, amplitude_for(m, 50.0), 100 + i as u64);
            (worst_error(m, &res.params), res.residual_rms)
        })
        .collect();
    for (m, (e, rms)) in truths.iter().zip(&outcomes) {
        assert!(*e < 0.1, "{m:?}: worst relative error {e}");
        assert!((rms - 1.25f64.sqrt()).abs() < 0.05, "{m:?}: residual rms {rms}");
    }
}

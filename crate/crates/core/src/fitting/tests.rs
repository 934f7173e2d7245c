use super::*;
use crate::correlator::normalize;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

/// Histogram whose expected counts are `base · model(τ)`.
fn synthetic_g2(f: impl Fn(f64) -> f64, base: f64, seed: Option<u64>) -> CorrelationHistogram {
    let bw = 1000u64;
    let max_tau = 150_000u64;
    let mut h = CorrelationHistogram::empty(bw, max_tau);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    for i in 0..h.bins.len() {
        let mean = base * f(h.tau_center_ps(i));
        h.bins[i] = match seed {
            Some(_) => Poisson::new(mean).unwrap().sample(&mut rng) as u64,
            None => mean.round() as u64,
        };
    }
    // duration chosen so that g2_scale = 1 / base
    h.n_a = 1_000_000;
    h.n_b = 1_000_000;
    h.duration_ps = (1e12 * bw as f64 / base) as u64;
    normalize(&h).unwrap()
}

#[test]
fn rho_examples() {
    assert_eq!(rho_from_sb(5.0, 0.0).unwrap(), 1.0);
    assert_eq!(rho_from_sb(3.0, 3.0).unwrap(), 0.5);
    assert!((rho_from_sb(4.0, 1.0).unwrap() - 0.8).abs() < 1e-15);
    assert!(rho_from_sb(0.0, 0.0).is_err());
    assert!(rho_from_sb(-1.0, 2.0).is_err());
}

#[test]
fn correction_examples() {
    assert_eq!(correct_background(0.37, 1.0).unwrap(), 0.37);
    let rho = 0.7;
    assert!(correct_background(1.0 - rho * rho, rho).unwrap().abs() < 1e-15);
    let c = correct_background(0.30, 0.9).unwrap();
    assert!((c - 0.11 / 0.81).abs() < 1e-12);
    assert!((c - 0.135802469).abs() < 1e-8);
    assert!(correct_background(0.3, 0.0).is_err());
    assert!(correct_background(0.3, 1.1).is_err());
}

proptest! {
    #[test]
    fn correction_inverts_mixing(rho in 1e-3..=1.0f64, g in proptest::collection::vec(0.0..3.0f64, 1..50)) {
        let tau: Vec<f64> = (0..g.len()).map(|i| i as f64).collect();
        let mixed: Vec<f64> = g.iter().map(|&v| mix_background(v, rho).unwrap()).collect();
        let back = correct_background_curve(&tau, &mixed, rho).unwrap();
        prop_assert_eq!(back.rho, rho);
        for (a, b) in g.iter().zip(&back.g2) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 / (rho * rho)).max(1.0), "{} vs {}", a, b);
        }
    }
}

#[test]
fn g2_three_level_recovery() {
    let truth = [0.24, 3000.0, 30000.0, 0.1];
    let h = synthetic_g2(|t| G2ThreeLevel::value(t, &truth), 2000.0, Some(11));
    let fit = fit_g2(&h).unwrap();
    assert!(fit.three_level, "{:?}", fit.fit);
    assert!(fit.fit.converged);
    assert!(fit.single_photon);
    for (k, name) in ["g2_0", "tau1_ps", "tau2_ps", "a"].iter().enumerate() {
        let v = fit.fit.get(name).unwrap();
        let s = fit.fit.sigma(name).unwrap();
        assert!((v - truth[k]).abs() <= 3.0 * s, "{name}: {v} ± {s} vs {}", truth[k]);
    }
}

#[test]
fn g2_noiseless_exact() {
    let truth = [0.37, 2500.0, 20000.0, 0.2];
    let tau_grid = |t: f64| G2ThreeLevel::value(t, &truth);
    // one million counts per bin keeps rounding below 1e-6
    let h = synthetic_g2(tau_grid, 1e6, None);
    let fit = fit_g2(&h).unwrap();
    assert!(fit.three_level);
    let p = fit.params();
    for k in 0..4 {
        assert!((p[k] - truth[k]).abs() / truth[k] < 1e-3, "{k}: {} vs {}", p[k], truth[k]);
    }
}

#[test]
fn g2_two_level_selected_without_bunching() {
    let h = synthetic_g2(|t| G2TwoLevel.eval(t, &[0.2, 3500.0]), 2000.0, Some(5));
    let fit = fit_g2(&h).unwrap();
    assert!(!fit.three_level);
    assert!(fit.fit.has_flag(FLAG_TWO_LEVEL));
    assert!((fit.g2_0() - 0.2).abs() < 3.0 * fit.g2_0_sigma());
    assert!(fit.params()[3] == 0.0);
}

#[test]
fn g2_flat_curve() {
    let h = synthetic_g2(|_| 1.0, 2000.0, Some(3));
    let fit = fit_g2(&h).unwrap();
    assert!(!fit.single_photon);
    // the dip amplitude 1 − g2_0 is consistent with zero
    assert!((fit.g2_0() - 1.0).abs() < 4.0 * fit.g2_0_sigma().max(0.02), "{:?}", fit.fit);
    let p = fit.params();
    assert!(p[3].abs() < 0.05);
}

#[test]
fn g2_needs_normalisation() {
    let mut h = synthetic_g2(|_| 1.0, 100.0, None);
    h.normalized = None;
    assert!(matches!(fit_g2(&h), Err(Error::InvalidInput(_))));
}

#[test]
fn g2_scale_invariance() {
    let truth = [0.24, 3000.0, 30000.0, 0.1];
    let h = synthetic_g2(|t| G2ThreeLevel::value(t, &truth), 2000.0, Some(21));
    let mut scaled = h.clone();
    for c in &mut scaled.bins {
        *c *= 7;
    }
    scaled.n_a *= 7;
    let scaled = normalize(&scaled).unwrap();
    let a = fit_g2(&h).unwrap();
    let b = fit_g2(&scaled).unwrap();
    assert_eq!(a.three_level, b.three_level);
    for (x, y) in a.fit.params.iter().zip(&b.fit.params) {
        assert!((x - y).abs() <= 1e-6 * x.abs(), "{x} vs {y}");
    }
}

#[test]
fn single_photon_flag_matches_model_at_zero() {
    for (seed, g0) in [(1, 0.1), (2, 0.45), (3, 0.55), (4, 0.8)] {
        let h = synthetic_g2(|t| G2TwoLevel.eval(t, &[g0, 3000.0]), 5000.0, Some(seed));
        let fit = fit_g2(&h).unwrap();
        assert_eq!(fit.single_photon, fit.eval(0.0) < 0.5);
        assert_eq!(fit.single_photon, g0 < 0.5);
    }
}

fn lifetime_hist(mut f: impl FnMut(f64) -> f64, n: usize) -> LifetimeHistogram {
    LifetimeHistogram {
        bin_width_ps: 100,
        window_ps: 100 * n as u64,
        bins: (0..n).map(|i| f(i as f64 * 100.0 + 50.0).round() as u64).collect(),
        dropped_before_sync: 0,
        dropped_outside_window: 0,
    }
}

#[test]
fn lifetime_exact() {
    let h = lifetime_hist(|t| 1e12 * (-t / 3500.0).exp(), 400);
    let fit = fit_lifetime(&h, 500.0).unwrap();
    assert!(fit.converged, "{fit:?}");
    let tau = fit.get("tau_ps").unwrap();
    assert!((tau - 3500.0).abs() / 3500.0 < 1e-6, "{tau}");
}

#[test]
fn lifetime_with_offset_and_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = lifetime_hist(|t| Poisson::new(5000.0 * (-t / 3500.0).exp() + 20.0).unwrap().sample(&mut rng), 1000);
    let fit = fit_lifetime(&h, 300.0).unwrap();
    let (tau, s) = (fit.get("tau_ps").unwrap(), fit.sigma("tau_ps").unwrap());
    assert!((tau - 3500.0).abs() < 3.0 * s, "{tau} ± {s}");
    let (c, cs) = (fit.get("offset").unwrap(), fit.sigma("offset").unwrap());
    // weights taken from the data pull a low floor down by about one count
    assert!((c - 20.0).abs() < 3.0 * cs + 1.5, "{c} ± {cs}");
}

#[test]
fn lifetime_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = lifetime_hist(|_| Poisson::new(100.0).unwrap().sample(&mut rng), 200);
    let fit = fit_lifetime(&h, 0.0).unwrap();
    assert!(!fit.converged || fit.has_flag(FLAG_TAU_UNBOUNDED));
}

#[test]
fn lifetime_too_few_bins() {
    let h = lifetime_hist(|t| 1e4 * (-t / 3500.0).exp(), 50);
    assert!(fit_lifetime(&h, 4200.0).is_err());
}

fn ladder(i0: f64, a: f64, e: f64) -> Vec<(f64, f64)> {
    (3..=8).map(|k| k as f64 * 100.0).map(|t| (t, i0 / (1.0 + a * (-e / (K_B_EV * t)).exp()))).collect()
}

#[test]
fn quenching_noiseless() {
    for (a, e) in [(206.0, 0.25), (19.0, 0.17)] {
        let fit = fit_quenching(&ladder(1.0, a, e)).unwrap();
        assert!(fit.converged);
        assert!(!fit.has_flag(FLAG_E_UNCONSTRAINED));
        assert!((fit.get("E_eV").unwrap() - e).abs() < 1e-6 * e);
        assert!((fit.get("A").unwrap() - a).abs() < 1e-5 * a);
        assert!((fit.get("I0").unwrap() - 1.0).abs() < 1e-7);
    }
}

#[test]
fn quenching_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = Normal::new(0.0, 0.03).unwrap();
    let data: Vec<(f64, f64)> = ladder(1.0, 206.0, 0.25).into_iter().map(|(t, i)| (t, i * (1.0 + n.sample(&mut rng)))).collect();
    let fit = fit_quenching(&data).unwrap();
    let e = fit.get("E_eV").unwrap();
    assert!((e - 0.25).abs() < 3.0 * fit.sigma("E_eV").unwrap());
    let a = fit.get("A").unwrap();
    assert!(a > 206.0 / 4.0 && a < 206.0 * 4.0);
}

#[test]
fn quenching_constant_series() {
    let data: Vec<(f64, f64)> = (3..=8).map(|k| (k as f64 * 100.0, 2.0)).collect();
    let fit = fit_quenching(&data).unwrap();
    assert!(fit.converged);
    assert!(fit.has_flag(FLAG_E_UNCONSTRAINED));
    assert_eq!(fit.get("A").unwrap(), 0.0);
    assert_eq!(fit.get("I0").unwrap(), 2.0);
}

#[test]
fn quenching_noisy_flat_series_is_flagged() {
    let mut hits = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 0.03).unwrap();
        let data: Vec<(f64, f64)> = (3..=8).map(|k| (k as f64 * 100.0, 1.0 + n.sample(&mut rng))).collect();
        let fit = fit_quenching(&data).unwrap();
        if fit.has_flag(FLAG_E_UNCONSTRAINED) {
            hits += 1;
        }
    }
    assert!(hits >= 16, "{hits}/20");
}

#[test]
fn quenching_preconditions() {
    assert!(fit_quenching(&ladder(1.0, 206.0, 0.25)[..3]).is_err());
    let mut d = ladder(1.0, 206.0, 0.25);
    d[2].1 = 0.0;
    assert!(fit_quenching(&d).is_err());
    let narrow: Vec<(f64, f64)> = (0..6).map(|k| (300.0 + 50.0 * k as f64, 1.0 - 0.1 * k as f64)).collect();
    assert!(fit_quenching(&narrow).is_err());
}

#[test]
fn linear_two_points() {
    let fit = fit_linear(&[(300.0, 80.0), (800.0, 145.0)]).unwrap();
    assert!((fit.get("slope").unwrap() - 0.13).abs() < 1e-14);
    assert!((fit.get("intercept").unwrap() - 41.0).abs() < 1e-11);
    assert!(fit_linear(&[(300.0, 1.0), (300.0, 2.0)]).is_err());
    assert!(fit_linear(&[(300.0, 1.0)]).is_err());
}

#[test]
fn linear_noisy_slopes() {
    for (seed, slope) in [(1, 0.13), (2, 0.11)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 2.0).unwrap();
        let data: Vec<(f64, f64)> =
            (3..=8).map(|k| k as f64 * 100.0).map(|t| (t, 40.0 + slope * t + n.sample(&mut rng))).collect();
        let fit = fit_linear(&data).unwrap();
        assert!((fit.get("slope").unwrap() - slope).abs() < 3.0 * fit.sigma("slope").unwrap());
    }
}

#[test]
fn fit_result_json() {
    let fit = fit_quenching(&ladder(1.0, 19.0, 0.17)).unwrap();
    let v = serde_json::to_value(&fit).unwrap();
    assert_eq!(v["model"], "thermal_quenching");
    assert_eq!(v["parameters"][2]["name"], "E_eV");
    assert!(v["parameters"][2]["sigma"].is_number());
    let back: FitResult = serde_json::from_value(v).unwrap();
    assert_eq!(back.names, fit.names);
    assert_eq!(back.params, fit.params);

    let flat: Vec<(f64, f64)> = (3..=8).map(|k| (k as f64 * 100.0, 2.0)).collect();
    let v = serde_json::to_value(fit_quenching(&flat).unwrap()).unwrap();
    assert!(v["parameters"][2]["value"].is_null());
    assert_eq!(v["flags"][0], FLAG_E_UNCONSTRAINED);
}

#[test]
fn covariance_is_symmetric_psd() {
    let fit = fit_quenching(&ladder(1.0, 206.0, 0.25)).unwrap();
    let c = &fit.covariance;
    assert!((c - c.transpose()).abs().max() <= 1e-12 * c.abs().max());
    let eig = c.clone().symmetric_eigen();
    assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12 * c.abs().max()));
}

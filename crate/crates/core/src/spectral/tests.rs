use super::*;
use crate::fitting::FLAG_E_UNCONSTRAINED;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn grid() -> Vec<f64> {
    (0..=1600).map(|i| 1.5 + i as f64 * 0.0005).collect()
}

fn lorentz(e: f64, c: f64, fwhm: f64, area: f64) -> f64 {
    let amp = area / (std::f64::consts::FRAC_PI_2 * fwhm);
    amp * Lineshape::Lorentzian.profile(e - c, fwhm)
}

fn spectrum(f: impl Fn(f64) -> f64) -> Spectrum {
    let e = grid();
    let c = e.iter().map(|&x| f(x)).collect();
    Spectrum::new(e, c).unwrap()
}

#[test]
fn spectrum_validation() {
    let e: Vec<f64> = (0..20).map(|i| 2.0 + 0.01 * i as f64).collect();
    assert!(Spectrum::new(e[..10].to_vec(), vec![1.0; 10]).is_err());
    assert!(Spectrum::new(e.clone(), vec![-1.0; 20]).is_err());
    let mut bad = e.clone();
    bad[5] = bad[4];
    assert!(Spectrum::new(bad, vec![1.0; 20]).is_err());
    let rev: Vec<f64> = e.iter().rev().copied().collect();
    let counts: Vec<f64> = (0..20).map(f64::from).collect();
    let s = Spectrum::new(rev, counts).unwrap();
    assert_eq!(s.energy_ev()[0], 2.0);
    assert_eq!(s.counts()[0], 19.0);
}

#[test]
fn csv_round_trip() {
    let s = spectrum(|e| lorentz(e, 1.94, 0.015, 10.0));
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let back = Spectrum::read_csv(&buf[..]).unwrap();
    assert_eq!(back.energy_ev(), s.energy_ev());
    assert_eq!(back.counts(), s.counts());
    let no_header = String::from_utf8(buf).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
    assert!(matches!(Spectrum::read_csv(no_header.as_bytes()), Err(Error::Format(_))));
}

#[test]
fn zpl_noiseless_lorentzian() {
    let s = spectrum(|e| lorentz(e, 1.94, 0.015, 10.0));
    let p = fit_zpl(&s, (1.86, 2.02), Lineshape::Lorentzian).unwrap();
    assert!(p.converged);
    assert!((p.center_ev - 1.94).abs() < 1e-8);
    assert!((p.fwhm_ev - 0.015).abs() < 1e-8);
    assert!((p.area - 10.0).abs() < 1e-6);
    let w = default_zpl_window(&s);
    assert!((w.0 - (1.94 - 0.045)).abs() < 1e-3 && (w.1 - (1.94 + 0.045)).abs() < 1e-3, "{w:?}");
}

#[test]
fn zpl_noiseless_gaussian_on_slope() {
    let s = spectrum(|e| 5.0 * Lineshape::Gaussian.profile(e - 1.80, 0.03) + 0.4 + 0.8 * (e - 1.8));
    let p = fit_zpl(&s, (1.70, 1.90), Lineshape::Gaussian).unwrap();
    assert!((p.center_ev - 1.80).abs() < 1e-8);
    assert!((p.fwhm_ev - 0.03).abs() < 1e-8);
    assert!((p.amplitude - 5.0).abs() < 1e-7);
}

#[test]
fn zpl_noisy_broad_line() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 0.02).unwrap();
        let e = grid();
        let c = e.iter().map(|&x| lorentz(x, 1.90, 0.080, 100.0) * (1.0 + n.sample(&mut rng))).collect();
        let s = Spectrum::new(e, c).unwrap();
        let p = fit_zpl(&s, default_zpl_window(&s), Lineshape::Lorentzian).unwrap();
        assert!(p.converged);
        assert!((p.center_ev - 1.90).abs() < 1e-3, "seed {seed}: {}", p.center_ev);
        assert!((p.fwhm_ev / 0.080 - 1.0).abs() < 0.05, "seed {seed}: {}", p.fwhm_ev);
    }
}

#[test]
fn flat_spectrum_has_no_peak() {
    let s = spectrum(|_| 42.0);
    assert!(matches!(fit_zpl(&s, (1.8, 2.0), Lineshape::Lorentzian), Err(Error::NoPeak { .. })));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = Normal::new(100.0, 1.0).unwrap();
    let e = grid();
    let c = e.iter().map(|_| n.sample(&mut rng)).collect();
    let noisy = Spectrum::new(e, c).unwrap();
    assert!(matches!(fit_zpl(&noisy, (1.8, 2.0), Lineshape::Lorentzian), Err(Error::NoPeak { .. })));
}

#[test]
fn window_outside_grid() {
    let s = spectrum(|e| lorentz(e, 1.94, 0.015, 10.0));
    assert!(matches!(fit_zpl(&s, (1.4, 2.0), Lineshape::Lorentzian), Err(Error::InvalidInput(_))));
}

#[test]
fn zpl_scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = Normal::new(0.0, 0.02).unwrap();
    let e = grid();
    let c = e.iter().map(|&x| lorentz(x, 1.93, 0.02, 3.0) * (1.0 + n.sample(&mut rng)) + 0.1).collect();
    let s = Spectrum::new(e, c).unwrap();
    let w = default_zpl_window(&s);
    let a = fit_zpl(&s, w, Lineshape::Lorentzian).unwrap();
    let b = fit_zpl(&s.scaled(37.5).unwrap(), w, Lineshape::Lorentzian).unwrap();
    assert!((a.center_ev - b.center_ev).abs() < 1e-10);
    assert!((a.fwhm_ev - b.fwhm_ev).abs() < 1e-10 * a.fwhm_ev);
    assert!((b.amplitude / a.amplitude - 37.5).abs() < 1e-7);
}

#[test]
fn decomposition() {
    let zpl = (1.90, 1.98);
    let psb = (1.70, 1.86);
    let only_zpl = spectrum(|e| lorentz(e, 1.94, 0.004, 10.0));
    let d = decompose_zpl_psb(&only_zpl, zpl, psb).unwrap();
    // the convex Lorentzian tail sits slightly below its chord baseline
    assert!(d.i_psb.abs() < 5e-3 * d.i_zpl, "{d:?}");
    let empty = spectrum(|e| if e < 1.87 { 0.0 } else { lorentz(e, 1.94, 0.004, 10.0) });
    assert_eq!(decompose_zpl_psb(&empty, zpl, psb).unwrap().i_psb, 0.0);

    // same shape and relative window for both peaks, areas 3:1
    let two = spectrum(|e| lorentz(e, 1.94, 0.004, 3.0) + lorentz(e, 1.78, 0.008, 1.0));
    let d = decompose_zpl_psb(&two, (1.90, 1.98), (1.70, 1.86)).unwrap();
    assert!((d.i_zpl / d.i_psb / 3.0 - 1.0).abs() < 0.02, "{}", d.i_zpl / d.i_psb);

    assert!(decompose_zpl_psb(&two, (1.85, 1.98), (1.70, 1.86)).is_err());
}

#[test]
fn weak_sideband_ratio() {
    // ZPL fraction e^{-0.3}; the PSB is a broad band 160 meV below the line
    let fz = (-0.3f64).exp();
    let s = spectrum(|e| {
        lorentz(e, 1.94, 0.015, fz) + (1.0 - fz) * (-(e - 1.78f64).powi(2) / (2.0 * 0.04f64.powi(2))).exp() / (0.04 * (2.0 * std::f64::consts::PI).sqrt())
    });
    let w = default_zpl_window(&s);
    let p = fit_zpl(&s, w, Lineshape::Lorentzian).unwrap();
    let d = decompose_zpl_psb(&s, w, default_psb_window(&s, p.center_ev).unwrap()).unwrap();
    assert!(d.i_psb / d.i_zpl < 0.35, "{}", d.i_psb / d.i_zpl);
}

#[test]
fn huang_rhys_examples() {
    assert_eq!(huang_rhys(5.0, 0.0).unwrap(), 0.0);
    assert!((huang_rhys(1.0, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    let f = (-0.5f64).exp();
    assert!((huang_rhys(f, 1.0 - f).unwrap() - 0.5).abs() < 1e-12);
    assert!(huang_rhys(0.0, 1.0).is_err());
    assert!(huang_rhys(1.0, -0.1).is_err());
}

proptest! {
    #[test]
    fn huang_rhys_round_trip(s in 0.0..10.0f64, total in 1e-3..1e6f64) {
        let zpl = total * (-s).exp();
        let psb = total - zpl;
        prop_assert!((huang_rhys(zpl, psb).unwrap() - s).abs() < 1e-12 * s.max(1.0) * 10.0);
    }
}

fn entry(t: f64, phase: Phase, shift: f64) -> SeriesEntry {
    let c = 1.94 - shift;
    let mut e = SeriesEntry::new(t, phase, spectrum(|x| lorentz(x, c, 0.015 + 1.3e-4 * (t - 300.0), 1.0) + 0.05));
    e.g2_0 = Some(0.3);
    e
}

#[test]
fn series_validation() {
    assert!(ThermalSeries::new(vec![]).is_err());
    assert!(ThermalSeries::new(vec![entry(250.0, Phase::Heating, 0.0)]).is_err());
    assert!(ThermalSeries::new(vec![entry(300.0, Phase::Cooling, 0.0), entry(400.0, Phase::Heating, 0.0)]).is_err());
    assert!(ThermalSeries::new(vec![entry(300.0, Phase::Heating, 0.0), entry(300.0, Phase::Heating, 0.0)]).is_err());
}

#[test]
fn heating_only_series() {
    let ts = ThermalSeries::new((3..=8).map(|k| entry(k as f64 * 100.0, Phase::Heating, 8e-5 * (k as f64 * 100.0 - 300.0))).collect()).unwrap();
    let r = analyze_series(&ts, &SeriesConfig::default()).unwrap();
    assert_eq!(r.rows.len(), 6);
    assert!(r.reversibility.is_none());
    assert!(r.warnings.iter().any(|w| w.contains("heating-only")));
    assert!((r.red_shift_mev.unwrap() - 40.0).abs() < 1e-4);
    let slope = r.broadening.as_ref().unwrap().get("slope").unwrap();
    assert!((slope - 0.13).abs() < 1e-6, "{slope}");
    // constant intensity: no false quenching
    assert!(r.quenching.as_ref().unwrap().has_flag(FLAG_E_UNCONSTRAINED), "{:?}", r.quenching);
}

#[test]
fn identical_cooling_gives_zero_deltas() {
    let temps = [300.0, 400.0, 500.0, 600.0, 700.0, 800.0];
    let mut entries: Vec<SeriesEntry> = temps.iter().map(|&t| entry(t, Phase::Heating, 0.0)).collect();
    entries.extend(temps[..5].iter().rev().map(|&t| entry(t, Phase::Cooling, 0.0)));
    let ts = ThermalSeries::new(entries).unwrap();
    let r = analyze_series(&ts, &SeriesConfig::default()).unwrap();
    assert_eq!(r.rows.len(), 11);
    let rev = r.reversibility.unwrap();
    assert_eq!(rev.len(), 5);
    for d in rev {
        assert_eq!(d.d_center_mev, 0.0);
        assert_eq!(d.d_fwhm_mev, 0.0);
        assert_eq!(d.d_intensity_rel, 0.0);
        assert_eq!(d.d_g2_0_raw, Some(0.0));
    }
}

#[test]
fn corrected_g2_iff_rates() {
    let mut a = entry(300.0, Phase::Heating, 0.0);
    a.s_rate = Some(4.0);
    a.b_rate = Some(1.0);
    let mut b = entry(400.0, Phase::Heating, 0.0);
    b.s_rate = Some(4.0);
    let ts = ThermalSeries::new(vec![a, b]).unwrap();
    let r = analyze_series(&ts, &SeriesConfig::default()).unwrap();
    let row = r.row(300.0, Phase::Heating).unwrap();
    assert!((row.rho.unwrap() - 0.8).abs() < 1e-15);
    assert!((row.g2_0_corrected.unwrap() - (0.3 - 0.36) / 0.64).abs() < 1e-12);
    assert!(r.row(400.0, Phase::Heating).unwrap().g2_0_corrected.is_none());
    assert!(r.quenching.is_none() && r.broadening.is_none());
    assert!(r.warnings.iter().any(|w| w.contains("at least 3")));
}

#[test]
fn manifest_missing_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let s = spectrum(|e| lorentz(e, 1.94, 0.015, 1.0));
    s.write_csv(std::fs::File::create(dir.path().join("a.csv")).unwrap()).unwrap();
    let json = r#"[{"temperature_k": 300, "phase": "heating", "spectrum_path": "a.csv", "g2_0": 0.3},
                   {"temperature_k": 400, "phase": "heating", "spectrum_path": "missing.csv"}]"#;
    std::fs::write(dir.path().join("m.json"), json).unwrap();
    let m = read_manifest(&dir.path().join("m.json")).unwrap();
    assert_eq!(m[0].g2_0, Some(0.3));
    let err = ThermalSeries::from_manifest(&m, dir.path()).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("entry 1") && err.to_string().contains("missing.csv"), "{err}");
    let ok = ThermalSeries::from_manifest(&m[..1], dir.path()).unwrap();
    assert_eq!(ok.entries()[0].spectrum.source_id, "a");
}

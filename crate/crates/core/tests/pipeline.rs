use photonstat::correlator::{correlate, correlate_parallel, normalize, StreamingCorrelator};
use photonstat::emitter::{build_four_level, g2_analytic, quench_intensity, steady_state, FourLevelParams, QuenchModel};
use photonstat::fitting::{fit_g2, fit_quenching};
use photonstat::sim::{simulate, DetectorModel, Excitation, SimConfig};
use photonstat::timetag::{read_tag_file, split_channels, write_ptag_file, write_tag_csv, Channel, TimeTagStream};
use proptest::prelude::*;

fn shelved() -> FourLevelParams {
    FourLevelParams { pump_rate: 2e6, k_rad: 2.857e8, k24: 1e6, k42: 1e5, k43: 1e5, k31: 1e5, zpl_energy_ev: None }
}

// reference values from a dense matrix exponential of the rate equations
const SHELVED_G2: [(f64, f64); 7] = [
    (0.0, 0.0),
    (1e-9, 0.26770055350947597),
    (5e-9, 0.8154907865804251),
    (5e-8, 1.0672416344430136),
    (1e-6, 1.0609070458663294),
    (1e-5, 1.0236394616032822),
    (1e-4, 1.0000015791134553),
];

#[test]
fn four_level_matches_reference() {
    let sys = build_four_level(&shelved()).unwrap();
    let taus: Vec<f64> = SHELVED_G2.iter().map(|p| p.0).collect();
    let g = g2_analytic(&sys, &taus).unwrap();
    for ((t, want), got) in SHELVED_G2.iter().zip(&g) {
        assert!((got - want).abs() < 1e-9, "tau {t}: {got} vs {want}");
    }
    let p = steady_state(&sys).unwrap();
    let want = [0.9286177806619067, 0.006489292667099282, 0.032446463335497264, 0.03244646333549669];
    for (got, want) in p.iter().zip(want) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn simulated_histogram_follows_analytic_g2() {
    let sys = build_four_level(&shelved()).unwrap();
    let cfg = SimConfig { duration_s: 5.0, seed: 21, excitation: Excitation::Cw { pump_rate: 2e6 }, background_rate: 0.0 };
    let out = simulate(&sys, &DetectorModel::ideal(), &cfg).unwrap();
    let bw = 4096;
    let h = normalize(&correlate(&out.a, &out.b, bw, 400_000).unwrap()).unwrap();
    let g = h.normalized.as_ref().unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..h.bins.len() {
        let t = h.tau_center_ps(i);
        if t.abs() < 20_000.0 {
            continue;
        }
        let want = g2_analytic(&sys, &[t * 1e-12]).unwrap()[0];
        let sigma = (want * h.g2_scale()).sqrt();
        worst = worst.max((g[i] - want).abs() / sigma);
    }
    // about 180 bins: a 5σ excursion would be very unlikely
    assert!(worst < 5.0, "worst deviation {worst:.2} σ");

    let fit = fit_g2(&h).unwrap();
    assert!(fit.three_level, "the shelf bunching should be detected");
    assert!(fit.g2_0() < 0.15);
}

#[test]
fn ptag_and_csv_files_round_trip_simulation() {
    let sys = build_four_level(&shelved()).unwrap();
    let cfg = SimConfig { duration_s: 0.05, seed: 4, excitation: Excitation::pulsed(1e10), background_rate: 1e4 };
    let out = simulate(&sys, &DetectorModel::apd(), &cfg).unwrap();
    let sync = out.sync.as_ref().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ptag = dir.path().join("t.ptag");
    write_ptag_file(&ptag, &[&out.a, &out.b, sync]).unwrap();
    let csv = dir.path().join("t.csv");
    write_tag_csv(std::fs::File::create(&csv).unwrap(), &[&out.a, &out.b, sync]).unwrap();
    for path in [&ptag, &csv] {
        let recs = read_tag_file(path).unwrap();
        let (a, b, s) = split_channels(&recs, Some(out.a.duration_ps())).unwrap();
        assert_eq!(a.timestamps(), out.a.timestamps());
        assert_eq!(b.timestamps(), out.b.timestamps());
        assert_eq!(s.timestamps(), sync.timestamps());
    }
}

#[test]
fn quench_model_round_trip() {
    for (a, e) in [(206.0, 0.25), (19.0, 0.17)] {
        let m = QuenchModel::new(5e3, a, e).unwrap();
        let series: Vec<(f64, f64)> =
            (0..6).map(|i| 300.0 + 100.0 * i as f64).map(|t| (t, quench_intensity(&m, t).unwrap())).collect();
        let f = fit_quenching(&series).unwrap();
        assert!((f.get("E_eV").unwrap() - e).abs() < 1e-6);
        assert!((f.get("A").unwrap() - a).abs() / a < 1e-5);
    }
}

fn tags() -> impl Strategy<Value = Vec<u64>> {
    proptest::collection::btree_set(0u64..2_000_000, 0..400).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parallel_and_streaming_match_serial(a in tags(), b in tags(), threads in 1usize..9, chunk in 1usize..50, bw in 1u64..500, m in 1u64..60) {
        let d = 2_000_000;
        let sa = TimeTagStream::new(Channel::A, a.clone(), d).unwrap();
        let sb = TimeTagStream::new(Channel::B, b.clone(), d).unwrap();
        let serial = correlate(&sa, &sb, bw, bw * m).unwrap();
        let par = correlate_parallel(&sa, &sb, bw, bw * m, threads).unwrap();
        prop_assert_eq!(&serial.bins, &par.bins);

        let mut st = StreamingCorrelator::new(bw, bw * m).unwrap();
        let (mut ia, mut ib) = (0, 0);
        while ia < a.len() || ib < b.len() {
            let na = (ia + chunk).min(a.len());
            st.push_a(&a[ia..na]).unwrap();
            ia = na;
            let nb = (ib + chunk).min(b.len());
            st.push_b(&b[ib..nb]).unwrap();
            ib = nb;
        }
        prop_assert_eq!(&st.finish(d).bins, &serial.bins);
    }

    #[test]
    fn swapping_channels_mirrors_histogram(a in tags(), b in tags(), bw in 1u64..250, m in 1u64..60) {
        // even tags on A and odd tags on B never put a pair on a bin edge
        let d = 4_000_001;
        let a: Vec<u64> = a.iter().map(|t| 2 * t).collect();
        let b: Vec<u64> = b.iter().map(|t| 2 * t + 1).collect();
        let sa = TimeTagStream::new(Channel::A, a, d).unwrap();
        let sb = TimeTagStream::new(Channel::B, b, d).unwrap();
        let ab = correlate(&sa, &sb, 2 * bw, 2 * bw * m).unwrap();
        let ba = correlate(&sb, &sa, 2 * bw, 2 * bw * m).unwrap();
        prop_assert_eq!(ab.mirrored(), ba);
    }
}

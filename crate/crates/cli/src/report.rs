//! Thermal-cycle report: per-temperature tables, trend fits and summary.

use std::path::Path;

use serde_json::json;

use photonstat::fitting::Lineshape;
use photonstat::spectral::{
    analyze_series, read_manifest, IntensityMetric, MetricRow, Phase, SeriesConfig, SeriesReport, ThermalSeries,
    PSB_OFFSETS_EV,
};

use crate::commands::{Metric, ReportArgs, Shape};
use crate::config::{ensure_dir, merge, Provenance, Resolver, RunRecord};
use crate::io::{num, opt, write_json, write_table};
use crate::{validation, CliError, CliResult};

/// Step of the sampled quenching curve.
pub const CURVE_STEP_K: f64 = 1.0;

type Cells = Vec<Option<String>>;

/// Distinct temperatures, ascending.
fn temperatures(rows: &[MetricRow]) -> Vec<f64> {
    let mut t: Vec<f64> = rows.iter().map(|r| r.temperature_k).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// One line per temperature with `cols` cells for each phase present.
fn wide_table(
    report: &SeriesReport,
    phases: &[Phase],
    names: &[&str],
    cells: impl Fn(&MetricRow) -> Cells,
) -> (Vec<String>, Vec<Cells>) {
    let mut header = vec!["temperature_k".to_string()];
    for p in phases {
        header.extend(names.iter().map(|n| format!("{n}_{}", p.as_str())));
    }
    let rows = temperatures(&report.rows)
        .into_iter()
        .map(|t| {
            let mut line = vec![num(t)];
            for &p in phases {
                match report.row(t, p) {
                    Some(r) => line.extend(cells(r)),
                    None => line.extend(std::iter::repeat_n(None, names.len())),
                }
            }
            line
        })
        .collect();
    (header, rows)
}

fn write_wide(dir: &Path, name: &str, t: (Vec<String>, Vec<Cells>)) -> CliResult<()> {
    let header: Vec<&str> = t.0.iter().map(String::as_str).collect();
    write_table(&dir.join(name), &header, &t.1)
}

pub fn report(args: ReportArgs, cfg: Option<&Path>) -> CliResult<()> {
    let (a, hash) = merge(args, cfg)?;
    let mut r = Resolver::default();
    let manifest_path = r.required("manifest", a.manifest)?;
    if !manifest_path.is_file() {
        return validation(format!("manifest {} not found", manifest_path.display()));
    }
    let shape: Lineshape = r.value("shape", a.shape, Shape::Lorentzian, Provenance::ToolDefault).into();
    let intensity = match r.value("intensity", a.intensity, Metric::Area, Provenance::ToolDefault) {
        Metric::Area => IntensityMetric::Area,
        Metric::Height => IntensityMetric::Height,
    };
    if let Some(h) = a.zpl_half_width_ev {
        r.set("zpl_half_width_ev", &h);
    }
    let psb = match (a.psb_near_ev, a.psb_far_ev) {
        (Some(n), Some(f)) => {
            r.set("psb_near_ev", &n);
            r.set("psb_far_ev", &f);
            (n, f)
        }
        (None, None) => (
            r.value("psb_near_ev", None, PSB_OFFSETS_EV.0, Provenance::ToolDefault),
            r.value("psb_far_ev", None, PSB_OFFSETS_EV.1, Provenance::ToolDefault),
        ),
        _ => return validation("--psb-near-ev and --psb-far-ev must be given together"),
    };
    let dir = r.value("out_dir", a.out_dir, Path::new(".").to_path_buf(), Provenance::ToolDefault);

    let manifest = read_manifest(&manifest_path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let series = ThermalSeries::from_manifest(&manifest, base)?;
    let sc = SeriesConfig { shape, intensity, zpl_half_width_ev: a.zpl_half_width_ev, psb_offsets_ev: Some(psb) };
    let rep = analyze_series(&series, &sc)?;
    ensure_dir(&dir)?;

    let mut phases = vec![Phase::Heating];
    let has_cooling = rep.rows.iter().any(|r| r.phase == Phase::Cooling);
    if has_cooling {
        phases.push(Phase::Cooling);
    }
    let mut outputs = Vec::new();

    write_wide(
        &dir,
        "g2_vs_T.csv",
        wide_table(&rep, &phases, &["g2_0_raw", "g2_0_corrected"], |r| vec![opt(r.g2_0_raw), opt(r.g2_0_corrected)]),
    )?;
    outputs.push("g2_vs_T.csv");
    write_wide(
        &dir,
        "zpl_vs_T.csv",
        wide_table(
            &rep,
            &phases,
            &["center_ev", "center_sigma_ev", "fwhm_mev", "fwhm_sigma_mev"],
            |r| vec![num(r.zpl_center_ev), num(r.zpl_center_sigma_ev), num(r.zpl_fwhm_mev), num(r.zpl_fwhm_sigma_mev)],
        ),
    )?;
    outputs.push("zpl_vs_T.csv");
    write_wide(&dir, "intensity_vs_T.csv", wide_table(&rep, &phases, &["intensity"], |r| vec![num(r.intensity)]))?;
    outputs.push("intensity_vs_T.csv");

    let temps = temperatures(&rep.rows);
    let curve = match (temps.first(), temps.last()) {
        (Some(&t0), Some(&t1)) => rep.quench_curve(t0, t1, CURVE_STEP_K),
        _ => Vec::new(),
    };
    let curve_rows: Vec<Cells> = curve.iter().map(|&(t, i)| vec![num(t), num(i)]).collect();
    write_table(&dir.join("intensity_fit_curve.csv"), &["temperature_k", "intensity_model"], &curve_rows)?;
    outputs.push("intensity_fit_curve.csv");

    let metric_rows: Vec<Cells> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.temperature_k),
                Some(r.phase.as_str().to_string()),
                num(r.zpl_center_ev),
                num(r.zpl_center_sigma_ev),
                num(r.zpl_fwhm_mev),
                num(r.zpl_fwhm_sigma_mev),
                num(r.zpl_height),
                num(r.zpl_area),
                num(r.intensity),
                Some(r.fit_converged.to_string()),
                opt(r.i_zpl),
                opt(r.i_psb),
                opt(r.huang_rhys),
                opt(r.g2_0_raw),
                opt(r.rho),
                opt(r.g2_0_corrected),
            ]
        })
        .collect();
    write_table(
        &dir.join("metrics.csv"),
        &[
            "temperature_k",
            "phase",
            "zpl_center_ev",
            "zpl_center_sigma_ev",
            "zpl_fwhm_mev",
            "zpl_fwhm_sigma_mev",
            "zpl_height",
            "zpl_area",
            "intensity",
            "fit_converged",
            "i_zpl",
            "i_psb",
            "huang_rhys",
            "g2_0_raw",
            "rho",
            "g2_0_corrected",
        ],
        &metric_rows,
    )?;
    outputs.push("metrics.csv");

    if let Some(rev) = &rep.reversibility {
        let rows: Vec<Cells> = rev
            .iter()
            .map(|d| {
                vec![
                    num(d.temperature_k),
                    num(d.d_center_mev),
                    num(d.d_fwhm_mev),
                    num(d.d_intensity_rel),
                    opt(d.d_g2_0_raw),
                    opt(d.d_g2_0_corrected),
                ]
            })
            .collect();
        write_table(
            &dir.join("reversibility.csv"),
            &["temperature_k", "d_center_mev", "d_fwhm_mev", "d_intensity_rel", "d_g2_0_raw", "d_g2_0_corrected"],
            &rows,
        )?;
        outputs.push("reversibility.csv");
    }

    let q = rep.quenching.as_ref();
    let get = |name: &str| q.and_then(|f| f.get(name)).filter(|v| v.is_finite());
    let sig = |name: &str| q.and_then(|f| f.sigma(name)).filter(|v| v.is_finite());
    let slope = rep.broadening.as_ref().and_then(|f| f.get("slope"));
    let slope_sigma = rep.broadening.as_ref().and_then(|f| f.sigma("slope")).filter(|v| v.is_finite());
    let summary = json!({
        "intensity_metric": rep.intensity_metric,
        "activation_energy_ev": get("E_eV"),
        "activation_energy_sigma_ev": sig("E_eV"),
        "quench_ratio_a": get("A"),
        "quench_ratio_a_sigma": sig("A"),
        "quench_flags": q.map(|f| f.flags.clone()).unwrap_or_default(),
        "broadening_mev_per_k": slope,
        "broadening_sigma_mev_per_k": slope_sigma,
        "red_shift_mev": rep.red_shift_mev,
        "huang_rhys": rep.rows.iter().map(|r| json!({
            "temperature_k": r.temperature_k,
            "phase": r.phase,
            "huang_rhys": r.huang_rhys,
        })).collect::<Vec<_>>(),
        "huang_rhys_mean": rep.huang_rhys_mean,
        "all_fits_converged": rep.rows.iter().all(|r| r.fit_converged)
            && q.is_none_or(|f| f.converged)
            && rep.broadening.as_ref().is_none_or(|f| f.converged),
        "quenching_fit": rep.quenching,
        "broadening_fit": rep.broadening,
        "warnings": rep.warnings,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    outputs.push("summary.json");
    for w in &rep.warnings {
        log::warn!("{w}");
    }
    if let Some(e) = get("E_eV") {
        println!("E = {e:.4} eV");
    }
    if let Some(s) = slope {
        println!("broadening = {s:.4} meV/K");
    }
    if let Some(s) = rep.red_shift_mev {
        println!("red shift = {s:.2} meV");
    }

    let mut rec = RunRecord::new("report", r);
    rec.input("manifest", &manifest_path)?;
    for (i, m) in manifest.iter().enumerate() {
        rec.input(&format!("spectrum_{i:03}"), &base.join(&m.spectrum_path))?;
    }
    rec.results = json!({
        "rows": rep.rows.len(),
        "red_shift_mev": rep.red_shift_mev,
        "activation_energy_ev": get("E_eV"),
        "broadening_mev_per_k": slope,
        "warnings": rep.warnings,
    });
    rec.config_file(hash);
    rec.outputs = outputs.iter().map(|s| s.to_string()).collect();
    rec.write(&dir)?;
    Ok(())
}

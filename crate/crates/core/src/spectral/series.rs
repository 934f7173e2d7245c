//! Thermal-cycle series and their metric tables.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decompose_zpl_psb, default_zpl_window, fit_zpl, huang_rhys, Spectrum, PSB_OFFSETS_EV};
use crate::error::{invalid, Error, Result};
use crate::fitting::{correct_background, fit_linear, fit_quenching, rho_from_sb, FitResult, Lineshape, Quenching};
use crate::fitting::Model;

pub const T_MIN_K: f64 = 300.0;
pub const T_MAX_K: f64 = 800.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Heating,
    Cooling,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Heating => "heating",
            Phase::Cooling => "cooling",
        }
    }
}

/// One line of a series manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub temperature_k: f64,
    pub phase: Phase,
    pub spectrum_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2_0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_rate: Option<f64>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesEntry {
    pub temperature_k: f64,
    pub phase: Phase,
    pub spectrum: Spectrum,
    pub g2_0: Option<f64>,
    pub s_rate: Option<f64>,
    pub b_rate: Option<f64>,
}

impl SeriesEntry {
    pub fn new(temperature_k: f64, phase: Phase, spectrum: Spectrum) -> Self {
        SeriesEntry { temperature_k, phase, spectrum, g2_0: None, s_rate: None, b_rate: None }
    }
}

/// Spectra along a heat-then-cool cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSeries {
    entries: Vec<SeriesEntry>,
}

impl ThermalSeries {
    pub fn new(entries: Vec<SeriesEntry>) -> Result<Self> {
        if entries.is_empty() {
            return invalid("series has no entries");
        }
        let mut cooling = false;
        for (i, e) in entries.iter().enumerate() {
            if !(T_MIN_K..=T_MAX_K).contains(&e.temperature_k) {
                return invalid(format!("entry {i}: temperature {} K outside [{T_MIN_K}, {T_MAX_K}]", e.temperature_k));
            }
            match e.phase {
                Phase::Cooling => cooling = true,
                Phase::Heating if cooling => return invalid(format!("entry {i}: heating entry after cooling began")),
                Phase::Heating => {}
            }
            if entries[..i].iter().any(|p| p.phase == e.phase && p.temperature_k == e.temperature_k) {
                return invalid(format!("entry {i}: duplicate {} K {}", e.temperature_k, e.phase.as_str()));
            }
            for (name, v) in [("g2_0", e.g2_0), ("s_rate", e.s_rate), ("b_rate", e.b_rate)] {
                if v.is_some_and(|v| !v.is_finite()) {
                    return invalid(format!("entry {i}: {name} is not finite"));
                }
            }
        }
        Ok(ThermalSeries { entries })
    }

    /// Loads the spectra of a manifest; relative paths resolve against `base`.
    pub fn from_manifest(manifest: &[ManifestEntry], base: &Path) -> Result<Self> {
        let entries = manifest
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let path = base.join(&m.spectrum_path);
                if !path.is_file() {
                    return invalid(format!("entry {i} ({} K {}): spectrum {} not found", m.temperature_k, m.phase.as_str(), path.display()));
                }
                let mut spectrum = Spectrum::read_csv_file(&path)
                    .map_err(|e| Error::InvalidInput(format!("entry {i}: {e}")))?;
                spectrum.temperature_k = Some(m.temperature_k);
                Ok(SeriesEntry {
                    temperature_k: m.temperature_k,
                    phase: m.phase,
                    spectrum,
                    g2_0: m.g2_0,
                    s_rate: m.s_rate,
                    b_rate: m.b_rate,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ThermalSeries::new(entries)
    }

    pub fn entries(&self) -> &[SeriesEntry] {
        &self.entries
    }
}

/// Which ZPL number feeds the quenching fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityMetric {
    /// Analytic area of the fitted peak.
    #[default]
    Area,
    /// Fitted peak height.
    Height,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeriesConfig {
    pub shape: Lineshape,
    pub intensity: IntensityMetric,
    /// Fixed ZPL window half-width around the seed centre; by default
    /// `min(3·FWHM seed, 0.10 eV)`.
    pub zpl_half_width_ev: Option<f64>,
    /// PSB window below the ZPL centre as `(near, far)`; `None` skips
    /// Huang–Rhys factors.
    pub psb_offsets_ev: Option<(f64, f64)>,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            shape: Lineshape::Lorentzian,
            intensity: IntensityMetric::Area,
            zpl_half_width_ev: None,
            psb_offsets_ev: Some(PSB_OFFSETS_EV),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub temperature_k: f64,
    pub phase: Phase,
    pub zpl_center_ev: f64,
    pub zpl_center_sigma_ev: f64,
    pub zpl_fwhm_mev: f64,
    pub zpl_fwhm_sigma_mev: f64,
    pub zpl_height: f64,
    pub zpl_area: f64,
    /// The value handed to the quenching fit.
    pub intensity: f64,
    pub fit_converged: bool,
    pub i_zpl: Option<f64>,
    pub i_psb: Option<f64>,
    pub huang_rhys: Option<f64>,
    pub g2_0_raw: Option<f64>,
    pub rho: Option<f64>,
    pub g2_0_corrected: Option<f64>,
}

/// Cooling minus heating at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversibilityRow {
    pub temperature_k: f64,
    pub d_center_mev: f64,
    pub d_fwhm_mev: f64,
    /// `I_cool / I_heat − 1`.
    pub d_intensity_rel: f64,
    pub d_g2_0_raw: Option<f64>,
    pub d_g2_0_corrected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub rows: Vec<MetricRow>,
    pub intensity_metric: IntensityMetric,
    pub quenching: Option<FitResult>,
    /// FWHM against temperature; slope in meV/K.
    pub broadening: Option<FitResult>,
    /// `center(300 K, heating) − center(800 K)` in meV.
    pub red_shift_mev: Option<f64>,
    pub huang_rhys_mean: Option<f64>,
    /// `None` for a heating-only series.
    pub reversibility: Option<Vec<ReversibilityRow>>,
    pub warnings: Vec<String>,
}

impl SeriesReport {
    pub fn row(&self, t: f64, phase: Phase) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.temperature_k == t && r.phase == phase)
    }

    /// The fitted quenching law sampled from `t0` to `t1` inclusive.
    pub fn quench_curve(&self, t0: f64, t1: f64, step: f64) -> Vec<(f64, f64)> {
        let Some(q) = &self.quenching else { return Vec::new() };
        let (i0, a, e) = (q.params[0], q.params[1], q.params[2]);
        if !(step > 0.0) || !e.is_finite() {
            return Vec::new();
        }
        let n = ((t1 - t0) / step).floor() as usize;
        (0..=n)
            .map(|k| {
                let t = t0 + k as f64 * step;
                (t, Quenching.eval(t, &[i0, a.max(f64::MIN_POSITIVE).ln(), e]))
            })
            .collect()
    }
}

fn analyze_entry(i: usize, e: &SeriesEntry, cfg: &SeriesConfig) -> Result<MetricRow> {
    let s = &e.spectrum;
    let window = match cfg.zpl_half_width_ev {
        Some(h) => {
            let (c, _) = super::peak_seed(s);
            let (a, b) = s.range();
            ((c - h).max(a), (c + h).min(b))
        }
        None => default_zpl_window(s),
    };
    let tag = |err: Error| match err {
        Error::NoPeak { .. } => Error::Numerical(format!("entry {i} ({} K {}): {err}", e.temperature_k, e.phase.as_str())),
        other => other,
    };
    let peak = fit_zpl(s, window, cfg.shape).map_err(tag)?;

    let (mut i_zpl, mut i_psb, mut hr) = (None, None, None);
    if let Some((near, far)) = cfg.psb_offsets_ev {
        // the ZPL window is centred on the seed, so keep the PSB window below it
        let psb = (peak.center_ev - far, (peak.center_ev - near).min(window.0));
        let (lo, _) = s.range();
        if psb.0 >= lo {
            let d = decompose_zpl_psb(s, window, psb)?;
            i_zpl = Some(d.i_zpl);
            i_psb = Some(d.i_psb);
            hr = huang_rhys(d.i_zpl, d.i_psb.max(0.0)).ok();
        }
    }

    let rho = match (e.s_rate, e.b_rate) {
        (Some(sr), Some(br)) => Some(rho_from_sb(sr, br)?),
        _ => None,
    };
    let g2_0_corrected = match (e.g2_0, rho) {
        (Some(g), Some(r)) => Some(correct_background(g, r)?),
        _ => None,
    };
    Ok(MetricRow {
        temperature_k: e.temperature_k,
        phase: e.phase,
        zpl_center_ev: peak.center_ev,
        zpl_center_sigma_ev: peak.sigma("center_ev"),
        zpl_fwhm_mev: 1e3 * peak.fwhm_ev,
        zpl_fwhm_sigma_mev: 1e3 * peak.sigma("fwhm_ev"),
        zpl_height: peak.amplitude,
        zpl_area: peak.area,
        intensity: match cfg.intensity {
            IntensityMetric::Area => peak.area,
            IntensityMetric::Height => peak.amplitude,
        },
        fit_converged: peak.converged,
        i_zpl,
        i_psb,
        huang_rhys: hr,
        g2_0_raw: e.g2_0,
        rho,
        g2_0_corrected,
    })
}

/// Per-point metrics for every entry, then the series-level fits.
///
/// Trend fits need at least three distinct temperatures; when they cannot
/// run, the reason is recorded in `warnings` and the per-point rows are
/// still returned.
pub fn analyze_series(ts: &ThermalSeries, cfg: &SeriesConfig) -> Result<SeriesReport> {
    let rows: Vec<MetricRow> = ts
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| analyze_entry(i, e, cfg))
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    for r in rows.iter().filter(|r| !r.fit_converged) {
        warnings.push(format!("ZPL fit at {} K {} did not converge", r.temperature_k, r.phase.as_str()));
    }

    let mut temps: Vec<f64> = rows.iter().map(|r| r.temperature_k).collect();
    temps.sort_by(f64::total_cmp);
    temps.dedup();
    let (mut quenching, mut broadening) = (None, None);
    if temps.len() < 3 {
        warnings.push(format!("{} distinct temperatures; trend fits need at least 3", temps.len()));
    } else {
        match fit_quenching(&rows.iter().map(|r| (r.temperature_k, r.intensity)).collect::<Vec<_>>()) {
            Ok(f) => {
                if !f.converged {
                    warnings.push("quenching fit did not converge".into());
                }
                quenching = Some(f);
            }
            Err(e) => warnings.push(format!("quenching fit skipped: {e}")),
        }
        match fit_linear(&rows.iter().map(|r| (r.temperature_k, r.zpl_fwhm_mev)).collect::<Vec<_>>()) {
            Ok(f) => broadening = Some(f),
            Err(e) => warnings.push(format!("broadening fit skipped: {e}")),
        }
    }

    let find = |t: f64, p: Phase| rows.iter().find(|r| r.temperature_k == t && r.phase == p);
    let cold = find(T_MIN_K, Phase::Heating);
    let hot = find(T_MAX_K, Phase::Heating).or_else(|| find(T_MAX_K, Phase::Cooling));
    let red_shift_mev = match (cold, hot) {
        (Some(c), Some(h)) => Some(1e3 * (c.zpl_center_ev - h.zpl_center_ev)),
        _ => {
            warnings.push("red shift needs a 300 K heating entry and an 800 K entry".into());
            None
        }
    };

    let hrs: Vec<f64> = rows.iter().filter_map(|r| r.huang_rhys).collect();
    let huang_rhys_mean = (!hrs.is_empty()).then(|| hrs.iter().sum::<f64>() / hrs.len() as f64);

    let reversibility = if rows.iter().any(|r| r.phase == Phase::Cooling) {
        Some(
            rows.iter()
                .filter(|r| r.phase == Phase::Cooling)
                .filter_map(|c| find(c.temperature_k, Phase::Heating).map(|h| (h, c)))
                .map(|(h, c)| ReversibilityRow {
                    temperature_k: c.temperature_k,
                    d_center_mev: 1e3 * (c.zpl_center_ev - h.zpl_center_ev),
                    d_fwhm_mev: c.zpl_fwhm_mev - h.zpl_fwhm_mev,
                    d_intensity_rel: c.intensity / h.intensity - 1.0,
                    d_g2_0_raw: c.g2_0_raw.zip(h.g2_0_raw).map(|(a, b)| a - b),
                    d_g2_0_corrected: c.g2_0_corrected.zip(h.g2_0_corrected).map(|(a, b)| a - b),
                })
                .collect(),
        )
    } else {
        warnings.push("heating-only series: no reversibility deltas".into());
        None
    };

    Ok(SeriesReport {
        rows,
        intensity_metric: cfg.intensity,
        quenching,
        broadening,
        red_shift_mev,
        huang_rhys_mean,
        reversibility,
        warnings,
    })
}

//! Photoluminescence spectra: zero-phonon-line fits, ZPL/PSB areas and
//! Huang–Rhys factors.

mod series;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fitting::{fit_linear, lm_fit, FitResult, LmOptions, Lineshape, PeakOnLine};
pub use series::{
    analyze_series, MetricRow, Phase, ReversibilityRow, SeriesConfig, SeriesEntry, SeriesReport, ThermalSeries,
    IntensityMetric, ManifestEntry, read_manifest,
};

pub const MIN_SPECTRUM_POINTS: usize = 16;
/// ZPL window half-width in units of the FWHM seed.
pub const ZPL_WINDOW_FWHMS: f64 = 3.0;
/// Upper bound on the ZPL window half-width so that it stays clear of the PSB.
pub const ZPL_WINDOW_MAX_HALF_EV: f64 = 0.10;
/// PSB window, measured below the ZPL centre: `(near, far)`.
pub const PSB_OFFSETS_EV: (f64, f64) = (0.10, 0.25);
/// A peak must rise this many noise rms above the local baseline.
pub const PEAK_SNR: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    energy_ev: Vec<f64>,
    counts: Vec<f64>,
    pub temperature_k: Option<f64>,
    pub source_id: String,
}

impl Spectrum {
    /// Validates the grid. A strictly decreasing grid is stored reversed, so
    /// energies are always ascending.
    pub fn new(energy_ev: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        if energy_ev.len() != counts.len() {
            return invalid(format!("{} energies but {} counts", energy_ev.len(), counts.len()));
        }
        if energy_ev.len() < MIN_SPECTRUM_POINTS {
            return invalid(format!("spectrum has {} points; at least {MIN_SPECTRUM_POINTS} needed", energy_ev.len()));
        }
        if energy_ev.iter().chain(&counts).any(|v| !v.is_finite()) {
            return invalid("spectrum contains non-finite values");
        }
        if let Some(i) = counts.iter().position(|&c| c < 0.0) {
            return invalid(format!("negative count {} at point {i}", counts[i]));
        }
        let (mut energy_ev, mut counts) = (energy_ev, counts);
        if energy_ev[1] < energy_ev[0] {
            energy_ev.reverse();
            counts.reverse();
        }
        if let Some(i) = energy_ev.windows(2).position(|w| w[1] <= w[0]) {
            return invalid(format!("energy grid not strictly monotonic at point {}", i + 1));
        }
        Ok(Spectrum { energy_ev, counts, temperature_k: None, source_id: String::new() })
    }

    pub fn energy_ev(&self) -> &[f64] {
        &self.energy_ev
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.energy_ev[0], self.energy_ev[self.len() - 1])
    }

    /// Multiplies every count by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return invalid(format!("scale factor must be non-negative, got {factor}"));
        }
        let mut s = self.clone();
        s.counts.iter_mut().for_each(|c| *c *= factor);
        Ok(s)
    }

    /// Indices of the points inside `[lo, hi]`.
    fn window(&self, (lo, hi): (f64, f64)) -> std::ops::Range<usize> {
        let a = self.energy_ev.partition_point(|&e| e < lo);
        let b = self.energy_ev.partition_point(|&e| e <= hi);
        a..b
    }

    /// Reads `energy_ev,counts` CSV; the header line is required.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| match l {
            Ok(l) => !l.trim().is_empty() && !l.trim_start().starts_with('#'),
            Err(_) => true,
        });
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(Error::Format("empty spectrum file".into())),
        };
        let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
        if cols.len() < 2 || cols[0] != "energy_ev" || cols[1] != "counts" {
            return Err(Error::Format(format!("spectrum header must be `energy_ev,counts`, found `{header}`")));
        }
        let (mut e, mut c) = (Vec::new(), Vec::new());
        for (n, line) in lines {
            let line = line?;
            let mut f = line.split(',').map(str::trim);
            let parse = |v: Option<&str>| -> Result<f64> {
                v.and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("line {}: cannot parse `{line}`", n + 1)))
            };
            e.push(parse(f.next())?);
            c.push(parse(f.next())?);
        }
        Spectrum::new(e, c)
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::InvalidInput(format!("cannot open spectrum {}: {e}", path.display())))?;
        let mut s = Spectrum::read_csv(std::io::BufReader::new(f))?;
        s.source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(s)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "energy_ev,counts")?;
        for (e, c) in self.energy_ev.iter().zip(&self.counts) {
            writeln!(w, "{e},{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub center_ev: f64,
    pub fwhm_ev: f64,
    pub amplitude: f64,
    /// Analytic area of the fitted profile, counts·eV.
    pub area: f64,
    pub shape: Lineshape,
    pub window_ev: (f64, f64),
    pub converged: bool,
    pub fit: FitResult,
}

impl PeakFit {
    pub fn sigma(&self, name: &str) -> f64 {
        self.fit.sigma(name).unwrap_or(f64::NAN)
    }
}

fn check_window(s: &Spectrum, (lo, hi): (f64, f64)) -> Result<()> {
    let (a, b) = s.range();
    if !(lo < hi) {
        return invalid(format!("empty window [{lo}, {hi}]"));
    }
    if lo < a || hi > b {
        return invalid(format!("window [{lo}, {hi}] eV lies outside the spectrum [{a}, {b}]"));
    }
    Ok(())
}

/// Points in the outer `fraction` of a window, at least one per side.
fn outer_indices(n: usize, fraction: f64) -> Vec<usize> {
    let k = ((0.5 * fraction * n as f64).round() as usize).max(1).min(n / 2);
    (0..k).chain(n - k..n).collect()
}

/// Linear baseline through the outer 10% of the points; `(b0, b1)` about `x0`.
fn outer_baseline(x: &[f64], y: &[f64], x0: f64) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = outer_indices(x.len(), 0.10).into_iter().map(|i| (x[i] - x0, y[i])).collect();
    let line = fit_linear(&pts)?;
    Ok((line.params[1], line.params[0]))
}

/// Half-maximum width around `peak`, interpolated between grid points.
fn half_width(x: &[f64], y: &[f64], peak: usize, floor: f64) -> f64 {
    let half = floor + 0.5 * (y[peak] - floor);
    let cross = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
        for i in range {
            let j = (i as isize - step) as usize;
            if y[i] < half {
                let t = (half - y[i]) / (y[j] - y[i]);
                return Some(x[i] + t * (x[j] - x[i]));
            }
        }
        None
    };
    let left = cross(&mut (0..peak).rev(), -1).unwrap_or(x[0]);
    let right = cross(&mut (peak + 1..x.len()), 1).unwrap_or(x[x.len() - 1]);
    right - left
}

/// Fits a peak on a linear baseline inside `window`.
///
/// Errors with [`Error::NoPeak`] unless the baseline-subtracted maximum is an
/// interior point standing [`PEAK_SNR`] times the rms of the outer points
/// above the baseline. Least squares are unweighted, so centre and width do
/// not depend on the count scale.
pub fn fit_zpl(s: &Spectrum, window: (f64, f64), shape: Lineshape) -> Result<PeakFit> {
    check_window(s, window)?;
    let idx = s.window(window);
    let x = &s.energy_ev[idx.clone()];
    let y = &s.counts[idx];
    if x.len() < 8 {
        return invalid(format!("window [{}, {}] eV holds {} points; at least 8 needed", window.0, window.1, x.len()));
    }
    let x0 = 0.5 * (window.0 + window.1);
    let (b0, b1) = outer_baseline(x, y, x0)?;
    let resid: Vec<f64> = x.iter().zip(y).map(|(&e, &c)| c - b0 - b1 * (e - x0)).collect();
    let outer = outer_indices(x.len(), 0.10);
    let rms = (outer.iter().map(|&i| resid[i] * resid[i]).sum::<f64>() / outer.len() as f64).sqrt();
    let peak = (0..resid.len()).fold(0, |m, i| if resid[i] > resid[m] { i } else { m });
    let height = resid[peak];
    if peak == 0 || peak == resid.len() - 1 || !(height > PEAK_SNR * rms) || !(height > 0.0) {
        return Err(Error::NoPeak { lo: window.0, hi: window.1 });
    }
    let spacing = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let w0 = half_width(x, &resid, peak, 0.0).max(2.0 * spacing);

    let model = PeakOnLine { shape, x0 };
    let init = [x[peak], w0, height, b0, b1];
    let out = lm_fit(&model, x, y, None, &init, &LmOptions::default())?;
    let fit = FitResult {
        model: format!("{}_peak", shape.name()),
        names: ["center_ev", "fwhm_ev", "amplitude", "baseline", "baseline_slope"].map(String::from).to_vec(),
        residual_norm: out.residual_norm(),
        params: out.params.clone(),
        covariance: out.covariance,
        converged: out.converged,
        iterations: out.iterations,
        flags: Vec::new(),
        diagnostic: out.diagnostic,
    };
    let p = &out.params;
    let area = shape.area(p[2], p[1]);
    let converged = fit.converged && p[1] > 0.0 && area > 0.0 && p[0] >= window.0 && p[0] <= window.1;
    Ok(PeakFit { center_ev: p[0], fwhm_ev: p[1], amplitude: p[2], area, shape, window_ev: window, converged, fit })
}

/// Tallest point of the spectrum and its half-maximum width.
pub fn peak_seed(s: &Spectrum) -> (f64, f64) {
    let c = &s.counts;
    let peak = (0..c.len()).fold(0, |m, i| if c[i] > c[m] { i } else { m });
    let mut sorted = c.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[..(c.len() / 10).max(1)].iter().sum::<f64>() / (c.len() / 10).max(1) as f64;
    let spacing = (s.range().1 - s.range().0) / (c.len() - 1) as f64;
    (s.energy_ev[peak], half_width(&s.energy_ev, c, peak, floor).max(2.0 * spacing))
}

/// `seed centre ± min(3·FWHM seed, 0.10 eV)`, clipped to the grid.
pub fn default_zpl_window(s: &Spectrum) -> (f64, f64) {
    let (c, w) = peak_seed(s);
    let half = (ZPL_WINDOW_FWHMS * w).min(ZPL_WINDOW_MAX_HALF_EV);
    let (a, b) = s.range();
    ((c - half).max(a), (c + half).min(b))
}

/// `centre − 0.25 eV` to `centre − 0.10 eV`, or `None` when it leaves the grid.
pub fn default_psb_window(s: &Spectrum, zpl_center_ev: f64) -> Option<(f64, f64)> {
    let w = (zpl_center_ev - PSB_OFFSETS_EV.1, zpl_center_ev - PSB_OFFSETS_EV.0);
    check_window(s, w).ok().map(|_| w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZplPsb {
    pub i_zpl: f64,
    pub i_psb: f64,
}

/// Trapezoidal area above the linear baseline through the outer 10% of the
/// window's points.
pub fn window_area(s: &Spectrum, window: (f64, f64)) -> Result<f64> {
    check_window(s, window)?;
    let idx = s.window(window);
    let x = &s.energy_ev[idx.clone()];
    let y = &s.counts[idx];
    if x.len() < 4 {
        return invalid(format!("window [{}, {}] eV holds fewer than 4 points", window.0, window.1));
    }
    let x0 = 0.5 * (window.0 + window.1);
    let (b0, b1) = outer_baseline(x, y, x0)?;
    let r: Vec<f64> = x.iter().zip(y).map(|(&e, &c)| c - b0 - b1 * (e - x0)).collect();
    Ok(x.windows(2).zip(r.windows(2)).map(|(e, v)| 0.5 * (e[1] - e[0]) * (v[0] + v[1])).sum())
}

pub fn decompose_zpl_psb(s: &Spectrum, zpl: (f64, f64), psb: (f64, f64)) -> Result<ZplPsb> {
    if zpl.0 < psb.1 && psb.0 < zpl.1 {
        return invalid(format!("ZPL window [{}, {}] overlaps PSB window [{}, {}]", zpl.0, zpl.1, psb.0, psb.1));
    }
    Ok(ZplPsb { i_zpl: window_area(s, zpl)?, i_psb: window_area(s, psb)? })
}

/// `S = −ln(I_zpl / (I_zpl + I_psb))`, i.e. a Debye–Waller factor `e^{−S}`.
pub fn huang_rhys(i_zpl: f64, i_psb: f64) -> Result<f64> {
    if !(i_zpl > 0.0) || !i_zpl.is_finite() {
        return invalid(format!("ZPL intensity must be positive, got {i_zpl}"));
    }
    if !(i_psb >= 0.0) || !i_psb.is_finite() {
        return invalid(format!("PSB intensity must be non-negative, got {i_psb}"));
    }
    Ok((i_psb / i_zpl).ln_1p())
}

#[cfg(test)]
mod tests;

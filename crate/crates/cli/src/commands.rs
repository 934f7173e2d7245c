//! Subcommand options and handlers.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use photonstat::correlator::{correlate_parallel, lifetime_histogram, normalize, CorrelationHistogram};
use photonstat::fitting::{
    correct_background, correct_histogram, fit_g2, fit_lifetime, fit_quenching, rho_from_sb, Lineshape, Model,
    PeakOnLine, Quenching,
};
use photonstat::sim::{self, DetectorModel, Excitation, SimConfig};
use photonstat::spectral::{decompose_zpl_psb, default_psb_window, default_zpl_window, fit_zpl, huang_rhys, Spectrum};
use photonstat::timetag::{write_ptag, write_tag_csv};

use crate::config::{create, ensure_dir, merge, Provenance, Resolver, RunRecord};
use crate::io::{self, num, write_json, write_table};
use crate::{validation, CliError, CliResult};

pub const DEFAULT_BIN_WIDTH_PS: u64 = 256;
pub const DEFAULT_MAX_TAU_PS: u64 = 100_000;
pub const DEFAULT_DURATION_S: f64 = 1.0;
pub const DEFAULT_LIFETIME_BIN_PS: u64 = 64;
/// Fit start after the histogram maximum when `--fit-start-ps` is absent.
pub const DEFAULT_FIT_START_OFFSET_PS: u64 = 1_000;

fn out_dir(r: &mut Resolver, given: Option<PathBuf>) -> CliResult<PathBuf> {
    let d = r.value("out_dir", given, PathBuf::from("."), Provenance::ToolDefault);
    ensure_dir(&d)?;
    Ok(d)
}

fn finish(mut rec: RunRecord, dir: &Path, outputs: &[&str], hash: Option<crate::config::InputFile>) -> CliResult<()> {
    rec.config_file(hash);
    rec.outputs = outputs.iter().map(|s| s.to_string()).collect();
    rec.write(dir)?;
    Ok(())
}

fn runtime(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cw,
    Pulsed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TagFormat {
    Ptag,
    Csv,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Level-system JSON or four-level parameter JSON.
    #[arg(long, value_name = "JSON")]
    pub model: Option<PathBuf>,
    /// Simulated time in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Pump rate (s⁻¹); in pulsed mode, the rate during a pulse. Defaults to the model's pump transition.
    #[arg(long)]
    pub pump_rate: Option<f64>,
    #[arg(long)]
    pub rep_rate_hz: Option<f64>,
    #[arg(long)]
    pub pulse_width_ps: Option<f64>,
    /// Uncorrelated background photons per second at the beamsplitter.
    #[arg(long)]
    pub background_rate: Option<f64>,
    #[arg(long)]
    pub efficiency: Option<f64>,
    #[arg(long)]
    pub dead_time_ps: Option<u64>,
    /// Gaussian timing jitter (standard deviation).
    #[arg(long)]
    pub jitter_ps: Option<f64>,
    /// Dark counts per second per detector.
    #[arg(long)]
    pub dark_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<TagFormat>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn simulate(args: SimulateArgs, cfg: Option<&Path>) -> CliResult<()> {
    let (a, hash) = merge(args, cfg)?;
    let mut r = Resolver::default();
    let model_path = r.required("model", a.model)?;
    let sys = io::load_model(&model_path)?;
    let (src, dst) = sys.radiative();
    let duration_s = r.value("duration", a.duration, DEFAULT_DURATION_S, Provenance::ToolDefault);
    let seed = r.value("seed", a.seed, 0, Provenance::ToolDefault);
    let mode = r.value("mode", a.mode, Mode::Cw, Provenance::ToolDefault);
    let pump = r.value("pump_rate", a.pump_rate, sys.rate(dst, src), Provenance::Input);
    let excitation = match mode {
        Mode::Cw => Excitation::Cw { pump_rate: pump },
        Mode::Pulsed => Excitation::Pulsed {
            rep_rate_hz: r.value("rep_rate_hz", a.rep_rate_hz, Excitation::DEFAULT_REP_RATE_HZ, Provenance::Paper),
            pulse_width_ps: r.value("pulse_width_ps", a.pulse_width_ps, Excitation::DEFAULT_PULSE_WIDTH_PS, Provenance::Paper),
            pump_rate_in_pulse: pump,
        },
    };
    let det = DetectorModel {
        efficiency: r.value("efficiency", a.efficiency, 1.0, Provenance::ToolDefault),
        dead_time_ps: r.value("dead_time_ps", a.dead_time_ps, sim::DEFAULT_DEAD_TIME_PS, Provenance::ToolDefault),
        jitter_sigma_ps: r.value("jitter_ps", a.jitter_ps, sim::DEFAULT_JITTER_PS, Provenance::ToolDefault),
        dark_rate: r.value("dark_rate", a.dark_rate, 0.0, Provenance::ToolDefault),
    };
    let sc = SimConfig {
        duration_s,
        seed,
        excitation,
        background_rate: r.value("background_rate", a.background_rate, 0.0, Provenance::ToolDefault),
    };
    let format = r.value("format", a.format, TagFormat::Ptag, Provenance::ToolDefault);
    let dir = out_dir(&mut r, a.out_dir)?;
    r.set("model", &model_path);

    let out = sim::simulate(&sys, &det, &sc)?;
    let mut streams = vec![&out.a, &out.b];
    if let Some(s) = &out.sync {
        streams.push(s);
    }
    let name = match format {
        TagFormat::Ptag => "tags.ptag",
        TagFormat::Csv => "tags.csv",
    };
    let path = dir.join(name);
    let w = BufWriter::new(create(&path)?);
    match format {
        TagFormat::Ptag => write_ptag(w, &streams)?,
        TagFormat::Csv => write_tag_csv(w, &streams)?,
    }
    log::info!("{} + {} tags in {}", out.a.len(), out.b.len(), path.display());

    let mut rec = RunRecord::new("simulate", r);
    rec.input("model", &model_path)?;
    rec.results = json!({
        "config_hash": sim::config_hash(&sys, &det, &sc),
        "rng": sim::RNG_NAME,
        "counts_a": out.a.len(),
        "counts_b": out.b.len(),
        "counts_sync": out.sync.as_ref().map(|s| s.len()),
        "jumps": out.stats.jumps,
        "emitted_photons": out.stats.emitted_photons,
        "background_photons": out.stats.background_photons,
        "occupancy": out.stats.occupancy(),
    });
    finish(rec, &dir, &[name], hash)
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateArgs {
    /// One tag file holding channels A and B, or two files (A, then B).
    #[arg(value_name = "TAGS", num_args = 0..=2)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub bin_width_ps: Option<u64>,
    #[arg(long)]
    pub max_tau_ps: Option<u64>,
    /// Acquisition time used for normalisation; defaults to the last tag.
    #[arg(long)]
    pub duration_ps: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn histogram_from_tags(
    r: &mut Resolver,
    rec_inputs: &mut Vec<(String, PathBuf)>,
    inputs: Vec<PathBuf>,
    bin_width_ps: Option<u64>,
    max_tau_ps: Option<u64>,
    duration_ps: Option<u64>,
    threads: usize,
) -> CliResult<CorrelationHistogram> {
    if inputs.is_empty() {
        return validation("no tag file given");
    }
    let bw = r.value("bin_width_ps", bin_width_ps, DEFAULT_BIN_WIDTH_PS, Provenance::ToolDefault);
    let mt = r.value("max_tau_ps", max_tau_ps, DEFAULT_MAX_TAU_PS, Provenance::ToolDefault);
    if let Some(d) = duration_ps {
        r.set("duration_ps", &d);
    }
    r.set("inputs", &inputs);
    let (a, b) = io::photon_pair(&inputs, duration_ps)?;
    for (i, p) in inputs.iter().enumerate() {
        rec_inputs.push((format!("tags_{}", i + 1), p.clone()));
    }
    let h = correlate_parallel(&a, &b, bw, mt, threads)?;
    Ok(normalize(&h)?)
}

fn write_histogram(h: &CorrelationHistogram, path: &Path) -> CliResult<()> {
    h.write_csv(BufWriter::new(create(path)?))?;
    Ok(())
}

pub fn correlate(args: CorrelateArgs, cfg: Option<&Path>, threads: usize) -> CliResult<()> {
    let (a, hash) = merge(args, cfg)?;
    let mut r = Resolver::default();
    let mut inputs = Vec::new();
    let h = histogram_from_tags(&mut r, &mut inputs, a.inputs, a.bin_width_ps, a.max_tau_ps, a.duration_ps, threads)?;
    let dir = out_dir(&mut r, a.out_dir)?;
    write_histogram(&h, &dir.join("histogram.csv"))?;
    let mut rec = RunRecord::new("correlate", r);
    for (role, p) in &inputs {
        rec.input(role, p)?;
    }
    rec.results = json!({ "n_a": h.n_a, "n_b": h.n_b, "duration_ps": h.duration_ps, "coincidences": h.total_counts() });
    finish(rec, &dir, &["histogram.csv"], hash)
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct G2Args {
    /// One tag file holding channels A and B, or two files (A, then B).
    #[arg(value_name = "TAGS", num_args = 0..=2)]
    pub inputs: Vec<PathBuf>,
    /// Start from a histogram CSV instead of tags.
    #[arg(long, conflicts_with = "inputs")]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub bin_width_ps: Option<u64>,
    #[arg(long)]
    pub max_tau_ps: Option<u64>,
    #[arg(long)]
    pub duration_ps: Option<u64>,
    /// Emitter signal rate S for background correction (with --background).
    #[arg(long)]
    pub signal: Option<f64>,
    /// Background rate B for background correction (with --signal).
    #[arg(long)]
    pub background: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn g2(args: G2Args, cfg: Option<&Path>, threads: usize) -> CliResult<()> {
    let (a, hash) = merge(args, cfg)?;
    let mut r = Resolver::default();
    let mut inputs = Vec::new();
    let h = match a.histogram {
        Some(p) => {
            if !a.inputs.is_empty() {
                return validation("give either tag files or --histogram, not both");
            }
            io::require_file(&p, "histogram file")?;
            let f = File::open(&p).map_err(runtime(&p))?;
            let h = CorrelationHistogram::read_csv(BufReader::new(f))
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            r.set("histogram", &p);
            inputs.push(("histogram".to_string(), p));
            match h.normalized {
                Some(_) => h,
                None => normalize(&h)?,
            }
        }
        None => histogram_from_tags(&mut r, &mut inputs, a.inputs, a.bin_width_ps, a.max_tau_ps, a.duration_ps, threads)?,
    };
    let rho = match (a.signal, a.background) {
        (Some(s), Some(b)) => {
            r.set("signal", &s);
            r.set("background", &b);
            Some(rho_from_sb(s, b)?)
        }
        (None, None) => None,
        _ => return validation("--signal and --background must be given together"),
    };
    let dir = out_dir(&mut r, a.out_dir)?;

    let fit = fit_g2(&h)?;
    let g0 = fit.g2_0();
    let corrected = rho.map(|rho| correct_background(g0, rho)).transpose()?;

    write_histogram(&h, &dir.join("histogram.csv"))?;
    let mut outputs = vec!["histogram.csv", "g2_fit.json", "g2_model.csv"];
    let doc = json!({
        "fit": fit.fit,
        "three_level": fit.three_level,
        "g2_0": num(g0).map(|_| g0),
        "g2_0_sigma": num(fit.g2_0_sigma()).map(|_| fit.g2_0_sigma()),
        "rho": rho,
        "g2_0_corrected": corrected,
        "single_photon": fit.single_photon,
    });
    write_json(&dir.join("g2_fit.json"), &doc)?;
    let model_rows: Vec<_> = (0..h.bins.len())
        .map(|i| {
            let t = h.tau_center_ps(i);
            vec![num(t), num(fit.eval(t))]
        })
        .collect();
    write_table(&dir.join("g2_model.csv"), &["tau_ps", "g2_model"], &model_rows)?;
    if let Some(rho) = rho {
        let c = correct_histogram(&h, rho)?;
        let raw = h.normalized.as_ref().expect("normalised above");
        let rows: Vec<_> = (0..c.tau_ps.len()).map(|i| vec![num(c.tau_ps[i]), num(raw[i]), num(c.g2[i])]).collect();
        write_table(&dir.join("g2_corrected.csv"), &["tau_ps", "g2_raw", "g2_corrected"], &rows)?;
        outputs.push("g2_corrected.csv");
    }

    println!("g2(0) = {g0:.4} ± {:.4}", fit.g2_0_sigma());
    match corrected {
        Some(c) => println!("corrected g2(0) = {c:.4} (rho = {:.4})", rho.unwrap_or(f64::NAN)),
        None => println!("corrected g2(0) = n/a (no --signal/--background)"),
    }
    println!("single-photon: {}", if fit.single_photon { "yes" } else { "no" });

    let mut rec = RunRecord::new("g2", r);
    for (role, p) in &inputs {
        rec.input(role, p)?;
    }
    rec.results = json!({
        "g2_0": num(g0).map(|_| g0),
        "g2_0_corrected": corrected,
        "single_photon": fit.single_photon,
        "model": fit.fit.model,
        "converged": fit.fit.converged,
    });
    finish(rec, &dir, &outputs, hash)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Lorentzian,
    Gaussian,
}

impl From<Shape> for Lineshape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Lorentzian => Lineshape::Lorentzian,
            Shape::Gaussian => Lineshape::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PhotonChannel {
    A,
    B,
    Both,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifetimeArgs {
    /// Tag file with photon and SYNC channels, or a photon file then a sync file.
    #[arg(value_name = "TAGS", num_args = 0..=2)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub bin_width_ps: Option<u64>,
    /// Histogram range after each sync; defaults to the sync period.
    #[arg(long)]
    pub window_ps: Option<u64>,
    /// Start of the tail fit; defaults to shortly after the histogram maximum.
    #[arg(long)]
    pub fit_start_ps: Option<f64>,
    #[arg(long, value_enum)]
    pub channel: Option<PhotonChannel>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn lifetime(args: LifetimeArgs, cfg: Option<&Path>) -> CliResult<()> {
    let (a, hash) = merge(args, cfg)?;
    let mut r = Resolver::default();
    if a.inputs.is_empty() {
        return validation("no tag file given");
    }
    r.set("inputs", &a.inputs);
    let bw = r.value("bin_width_ps", a.bin_width_ps, DEFAULT_LIFETIME_BIN_PS, Provenance::ToolDefault);
    let ch = r.value("channel", a.channel, PhotonChannel::Both, Provenance::ToolDefault);
    let which = match ch {
        PhotonChannel::A => "a",
        PhotonChannel::B => "b",
        PhotonChannel::Both => "both",
    };
    let (photons, sync) = io::photons_and_sync(&a.inputs, which)?;
    let h = lifetime_histogram(&photons, &sync, bw, a.window_ps)?;
    r.set("window_ps", &h.window_ps);
    let fit_start = match a.fit_start_ps {
        Some(v) => {
            r.set("fit_start_ps", &v);
            v
        }
        None => {
            let peak = (0..h.bins.len()).max_by_key(|&i| (h.bins[i], std::cmp::Reverse(i))).unwrap_or(0);
            let off = r.value("fit_start_offset_ps", None, DEFAULT_FIT_START_OFFSET_PS, Provenance::ToolDefault);
            let v = (h.delay_left_ps(peak) + off) as f64;
            r.set("fit_start_ps", &v);
            v
        }
    };
    let dir = out_dir(&mut r, a.out_dir)?;
    h.write_csv(BufWriter::new(create(&dir.join("lifetime.csv"))?))?;
    let fit = fit_lifetime(&h, fit_start)?;
    write_json(&dir.join("lifetime_fit.json"), &fit)?;
    let tau = fit.get("tau_ps").unwrap_or(f64::NAN);
    println!("tau = {:.1} ± {:.1} ps", tau, fit.sigma("tau_ps").unwrap_or(f64::NAN));
    for f in &fit.flags {
        println!("flag: {f}");
    }

    let mut rec = RunRecord::new("lifetime", r);
    for (i, p) in a.inputs.iter().enumerate() {
        rec.input(&format!("tags_{}", i + 1), p)?;
    }
    rec.results = json!({
        "tau_ps": num(tau).map(|_| tau),
        "converged": fit.converged,
        "flags": fit.flags,
        "dropped_before_sync": h.dropped_before_sync,
        "dropped_outside_window": h.dropped_outside_window,
    });
    finish(rec, &dir, &["lifetime.csv", "lifetime_fit.json"], hash)
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSpectrumArgs {
    /// Spectrum CSV with `energy_ev,counts`.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    #[arg(long, requires = "zpl_hi_ev")]
    pub zpl_lo_ev: Option<f64>,
    #[arg(long, requires = "zpl_lo_ev")]
    pub zpl_hi_ev: Option<f64>,
    #[arg(long, value_enum)]
    pub shape: Option<Shape>,
    #[arg(long, requires = "psb_hi_ev")]
    pub psb_lo_ev: Option<f64>,
    #[arg(long, requires = "psb_lo_ev")]
    pub psb_hi_ev: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn pair(lo: Option<f64>, hi: Option<f64>, what: &str) -> CliResult<Option<(f64, f64)>> {
    match (lo, hi) {
        (Some(l), Some(h)) => Ok(Some((l, h))),
        (None, None) => Ok(None),
        _ => validation(format!("--{what}-lo-ev and --{what}-hi-ev must be given together")),
    }
}

pub fn fit_spectrum(args: FitSpectrumArgs, cfg: Option<&Path>) -> CliResult<()> {
    let (a, hash) = merge(args, cfg)?;
    let mut r = Resolver::default();
    let path = r.required("spectrum", a.spectrum)?;
    io::require_file(&path, "spectrum")?;
    let s = Spectrum::read_csv_file(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let shape: Lineshape = r.value("shape", a.shape, Shape::Lorentzian, Provenance::ToolDefault).into();
    let window = match pair(a.zpl_lo_ev, a.zpl_hi_ev, "zpl")? {
        Some(w) => w,
        None => default_zpl_window(&s),
    };
    r.set("zpl_window_ev", &window);
    let dir = out_dir(&mut r, a.out_dir)?;

    let peak = fit_zpl(&s, window, shape)?;
    let psb = match pair(a.psb_lo_ev, a.psb_hi_ev, "psb")? {
        Some(w) => Some(w),
        None => default_psb_window(&s, peak.center_ev).map(|(lo, hi)| (lo, hi.min(window.0))),
    };
    r.set("psb_window_ev", &psb);
    let (mut i_zpl, mut i_psb, mut hr) = (None, None, None);
    if let Some(w) = psb {
        let d = decompose_zpl_psb(&s, window, w)?;
        i_zpl = Some(d.i_zpl);
        i_psb = Some(d.i_psb);
        hr = huang_rhys(d.i_zpl, d.i_psb.max(0.0)).ok();
    }
    let doc = json!({
        "center_ev": peak.center_ev,
        "center_sigma_ev": num(peak.sigma("center_ev")).map(|_| peak.sigma("center_ev")),
        "fwhm_mev": 1e3 * peak.fwhm_ev,
        "fwhm_sigma_mev": num(peak.sigma("fwhm_ev")).map(|_| 1e3 * peak.sigma("fwhm_ev")),
        "amplitude": peak.amplitude,
        "area": peak.area,
        "shape": peak.shape,
        "zpl_window_ev": peak.window_ev,
        "psb_window_ev": psb,
        "i_zpl": i_zpl,
        "i_psb": i_psb,
        "huang_rhys": hr,
        "converged": peak.converged,
        "fit": peak.fit,
    });
    write_json(&dir.join("zpl_fit.json"), &doc)?;
    let model = PeakOnLine { shape, x0: 0.5 * (window.0 + window.1) };
    let rows: Vec<_> = s
        .energy_ev()
        .iter()
        .zip(s.counts())
        .filter(|(e, _)| (window.0..=window.1).contains(*e))
        .map(|(&e, &c)| vec![num(e), num(c), num(model.eval(e, &peak.fit.params))])
        .collect();
    write_table(&dir.join("zpl_model.csv"), &["energy_ev", "counts", "model"], &rows)?;
    println!("ZPL {:.5} eV, FWHM {:.3} meV", peak.center_ev, 1e3 * peak.fwhm_ev);
    if let Some(h) = hr {
        println!("Huang-Rhys S = {h:.4}");
    }

    let mut rec = RunRecord::new("fit-spectrum", r);
    rec.input("spectrum", &path)?;
    rec.results = json!({ "center_ev": peak.center_ev, "fwhm_mev": 1e3 * peak.fwhm_ev, "huang_rhys": hr, "converged": peak.converged });
    finish(rec, &dir, &["zpl_fit.json", "zpl_model.csv"], hash)
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitQuenchArgs {
    /// CSV with `temperature_k` and an intensity column.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Sampling step of the fitted curve.
    #[arg(long)]
    pub curve_step_k: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn fit_quench(args: FitQuenchArgs, cfg: Option<&Path>) -> CliResult<()> {
    let (a, hash) = merge(args, cfg)?;
    let mut r = Resolver::default();
    let path = r.required("input", a.input)?;
    let series = io::read_series_csv(&path)?;
    let step = r.value("curve_step_k", a.curve_step_k, 1.0, Provenance::ToolDefault);
    if !(step > 0.0) {
        return validation("--curve-step-k must be positive");
    }
    let dir = out_dir(&mut r, a.out_dir)?;
    let fit = fit_quenching(&series)?;
    write_json(&dir.join("quench_fit.json"), &fit)?;
    let (i0, amp, e) = (fit.params[0], fit.params[1], fit.params[2]);
    let t0 = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t1 = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let n = ((t1 - t0) / step).floor() as usize;
    let rows: Vec<_> = (0..=n)
        .map(|k| {
            let t = t0 + k as f64 * step;
            let v = if e.is_finite() { Quenching.eval(t, &[i0, amp.max(f64::MIN_POSITIVE).ln(), e]) } else { i0 };
            vec![num(t), num(v)]
        })
        .collect();
    write_table(&dir.join("quench_curve.csv"), &["temperature_k", "intensity_model"], &rows)?;
    println!("E = {:.4} ± {:.4} eV, A = {:.3} ± {:.3}", e, fit.sigma("E_eV").unwrap_or(f64::NAN), amp, fit.sigma("A").unwrap_or(f64::NAN));
    for f in &fit.flags {
        println!("flag: {f}");
    }
    let mut rec = RunRecord::new("fit-quench", r);
    rec.input("series", &path)?;
    rec.results = json!({ "E_eV": num(e).map(|_| e), "A": num(amp).map(|_| amp), "converged": fit.converged, "flags": fit.flags });
    finish(rec, &dir, &["quench_fit.json", "quench_curve.csv"], hash)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Area,
    Height,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportArgs {
    /// JSON array of series entries; spectrum paths are relative to it.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub shape: Option<Shape>,
    /// ZPL quantity used as emission intensity.
    #[arg(long, value_enum)]
    pub intensity: Option<Metric>,
    /// Fixed ZPL half-window instead of the width-based default.
    #[arg(long)]
    pub zpl_half_width_ev: Option<f64>,
    /// PSB window offsets below the ZPL centre (near edge, far edge).
    #[arg(long, requires = "psb_far_ev")]
    pub psb_near_ev: Option<f64>,
    #[arg(long, requires = "psb_near_ev")]
    pub psb_far_ev: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

//! Stochastic photon-stream generation for a Hanbury Brown–Twiss setup.
//!
//! The emitter follows an exact-jump trajectory: exponential waiting times
//! from the total outgoing rate of the current state, then a categorical
//! choice of transition. Every radiative jump emits a photon that a 50/50
//! beamsplitter routes to channel A or B. Uncorrelated Poisson background
//! reaches the detectors split the same way. Each channel then passes through
//! the detector model in a fixed order:
//!
//! 1. efficiency thinning
//! 2. Gaussian timing jitter, followed by a re-sort
//! 3. dead-time pruning
//! 4. dark-count injection (dark counts obey the same dead time)
//!
//! Randomness comes from ChaCha8 with one stream per purpose (trajectory,
//! background, detector A, detector B), so a (seed, config) pair fully
//! determines the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emitter::LevelSystem;
use crate::error::{invalid, Error, Result};
use crate::timetag::{Channel, StreamMetadata, TimeTagStream};
use crate::PS_PER_S;

pub const RNG_NAME: &str = "ChaCha8";

/// Longest simulated span; keeps picosecond tags well inside `u64`.
pub const MAX_DURATION_S: f64 = 1e6;

/// Default avalanche-photodiode dead time. Tool default, not a measured value.
pub const DEFAULT_DEAD_TIME_PS: u64 = 25_000;
/// Default avalanche-photodiode timing jitter (1σ). Tool default, not a measured value.
pub const DEFAULT_JITTER_PS: f64 = 350.0;

const STREAM_TRAJECTORY: u64 = 0;
const STREAM_BACKGROUND: u64 = 1;
const STREAM_DETECTOR_A: u64 = 2;
const STREAM_DETECTOR_B: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dead_time_ps: u64,
    pub jitter_sigma_ps: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
}

impl DetectorModel {
    /// Unit efficiency, no dead time, jitter or dark counts.
    pub fn ideal() -> Self {
        DetectorModel { efficiency: 1.0, dead_time_ps: 0, jitter_sigma_ps: 0.0, dark_rate: 0.0 }
    }

    /// Typical single-photon avalanche diode timing figures.
    pub fn apd() -> Self {
        DetectorModel {
            efficiency: 1.0,
            dead_time_ps: DEFAULT_DEAD_TIME_PS,
            jitter_sigma_ps: DEFAULT_JITTER_PS,
            dark_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return invalid(format!("efficiency {} outside [0, 1]", self.efficiency));
        }
        if !(self.jitter_sigma_ps >= 0.0) || !self.jitter_sigma_ps.is_finite() {
            return invalid(format!("jitter sigma {} must be ≥ 0", self.jitter_sigma_ps));
        }
        if !(self.dark_rate >= 0.0) || !self.dark_rate.is_finite() {
            return invalid(format!("dark rate {} must be ≥ 0", self.dark_rate));
        }
        Ok(())
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel::apd()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Excitation {
    /// Continuous pumping; the rate replaces the system's pump transition.
    Cw { pump_rate: f64 },
    /// Rectangular pump pulses starting at multiples of `1/rep_rate_hz`.
    Pulsed { rep_rate_hz: f64, pulse_width_ps: f64, pump_rate_in_pulse: f64 },
}

impl Excitation {
    pub const DEFAULT_REP_RATE_HZ: f64 = 10e6;
    pub const DEFAULT_PULSE_WIDTH_PS: f64 = 100.0;

    pub fn pulsed(pump_rate_in_pulse: f64) -> Self {
        Excitation::Pulsed {
            rep_rate_hz: Self::DEFAULT_REP_RATE_HZ,
            pulse_width_ps: Self::DEFAULT_PULSE_WIDTH_PS,
            pump_rate_in_pulse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub duration_s: f64,
    pub seed: u64,
    pub excitation: Excitation,
    /// Background photons per second reaching the beamsplitter.
    pub background_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub jumps: u64,
    pub emitted_photons: u64,
    pub background_photons: u64,
    /// Time spent in each state, seconds.
    pub state_time_s: Vec<f64>,
}

impl SimStats {
    pub fn occupancy(&self) -> Vec<f64> {
        let total: f64 = self.state_time_s.iter().sum();
        self.state_time_s.iter().map(|t| t / total).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub a: TimeTagStream,
    pub b: TimeTagStream,
    pub sync: Option<TimeTagStream>,
    pub stats: SimStats,
}

struct RateTable {
    /// Outgoing (target, rate) per state.
    moves: Vec<Vec<(usize, f64)>>,
    total: Vec<f64>,
}

impl RateTable {
    fn new(sys: &LevelSystem, pump: f64) -> Self {
        let n = sys.n_states();
        let (src, dst) = sys.radiative();
        let rate = |i: usize, j: usize| if i == dst && j == src { pump } else { sys.rate(i, j) };
        let moves: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && rate(i, j) > 0.0).map(|j| (j, rate(i, j))).collect())
            .collect();
        let total = moves.iter().map(|m| m.iter().map(|(_, k)| k).sum()).collect();
        RateTable { moves, total }
    }
}

/// Absolute time as an integer picosecond epoch plus a small fractional
/// offset, so precision does not degrade over long runs.
struct Clock {
    epoch: u64,
    offset: f64,
}

impl Clock {
    const REBASE_PS: f64 = 1e6;

    fn advance(&mut self, dt_ps: f64) {
        self.offset += dt_ps;
        if self.offset >= Self::REBASE_PS {
            let whole = self.offset.floor();
            self.epoch += whole as u64;
            self.offset -= whole;
        }
    }

    /// Picoseconds until the absolute time `t`.
    fn until(&self, t: u64) -> f64 {
        (t as f64 - self.epoch as f64) - self.offset
    }

    fn jump_to(&mut self, t: u64) {
        self.epoch = t;
        self.offset = 0.0;
    }

    fn tag(&self) -> u64 {
        self.epoch + self.offset.round() as u64
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable hash of the simulation inputs, recorded in stream metadata.
pub fn config_hash(sys: &LevelSystem, det: &DetectorModel, cfg: &SimConfig) -> String {
    let doc = serde_json::json!({ "system": sys, "detector": det, "config": cfg });
    let digest = Sha256::digest(doc.to_string().as_bytes());
    hex::encode(&digest[..8])
}

fn validate(det: &DetectorModel, cfg: &SimConfig) -> Result<u64> {
    det.validate()?;
    if !(cfg.duration_s > 0.0) {
        return invalid(format!("duration {} s must be positive", cfg.duration_s));
    }
    if cfg.duration_s > MAX_DURATION_S {
        return invalid(format!(
            "duration {} s overflows the picosecond range (limit {MAX_DURATION_S} s)",
            cfg.duration_s
        ));
    }
    if !(cfg.background_rate >= 0.0) || !cfg.background_rate.is_finite() {
        return invalid(format!("background rate {} must be ≥ 0", cfg.background_rate));
    }
    match cfg.excitation {
        Excitation::Cw { pump_rate } => {
            if !(pump_rate >= 0.0) || !pump_rate.is_finite() {
                return invalid(format!("pump rate {pump_rate} must be ≥ 0"));
            }
        }
        Excitation::Pulsed { rep_rate_hz, pulse_width_ps, pump_rate_in_pulse } => {
            if !(rep_rate_hz > 0.0) || !rep_rate_hz.is_finite() {
                return invalid(format!("repetition rate {rep_rate_hz} Hz must be positive"));
            }
            if !(pulse_width_ps > 0.0) || pulse_width_ps >= PS_PER_S / rep_rate_hz {
                return invalid(format!(
                    "pulse width {pulse_width_ps} ps must be positive and shorter than the period"
                ));
            }
            if !(pump_rate_in_pulse >= 0.0) || !pump_rate_in_pulse.is_finite() {
                return invalid(format!("in-pulse pump rate {pump_rate_in_pulse} must be ≥ 0"));
            }
        }
    }
    Ok((cfg.duration_s * PS_PER_S).round() as u64)
}

/// Runs one trajectory and returns the detected streams.
pub fn simulate(sys: &LevelSystem, det: &DetectorModel, cfg: &SimConfig) -> Result<SimOutput> {
    let duration_ps = validate(det, cfg)?;
    let mut stats = SimStats { state_time_s: vec![0.0; sys.n_states()], ..Default::default() };
    let (raw_a, raw_b, sync) = run_trajectory(sys, det, cfg, duration_ps, &mut stats)?;

    let mut bg_rng = rng_for(cfg.seed, STREAM_BACKGROUND);
    let bg_rate = 0.5 * cfg.background_rate * det.efficiency;
    let bg_a = poisson_times(&mut bg_rng, bg_rate, duration_ps);
    let bg_b = poisson_times(&mut bg_rng, bg_rate, duration_ps);
    stats.background_photons = (bg_a.len() + bg_b.len()) as u64;

    let metadata = StreamMetadata {
        generator: "photonstat-sim".into(),
        rng: Some(RNG_NAME.into()),
        seed: Some(cfg.seed),
        config_hash: Some(config_hash(sys, det, cfg)),
    };
    let finish = |channel: Channel, photons: Vec<u64>, background: Vec<u64>, stream: u64| {
        let mut rng = rng_for(cfg.seed, stream);
        let tags = apply_detector(&mut rng, det, merge_with_dups(photons, background), duration_ps);
        TimeTagStream::from_sorted_unchecked(channel, tags, duration_ps, metadata.clone())
    };
    let a = finish(Channel::A, raw_a, bg_a, STREAM_DETECTOR_A);
    let b = finish(Channel::B, raw_b, bg_b, STREAM_DETECTOR_B);
    let sync = sync.map(|s| {
        TimeTagStream::from_sorted_unchecked(Channel::Sync, s, duration_ps, metadata.clone())
    });
    Ok(SimOutput { a, b, sync, stats })
}

type RawStreams = (Vec<u64>, Vec<u64>, Option<Vec<u64>>);

fn run_trajectory(
    sys: &LevelSystem,
    det: &DetectorModel,
    cfg: &SimConfig,
    duration_ps: u64,
    stats: &mut SimStats,
) -> Result<RawStreams> {
    let (src, dst) = sys.radiative();
    let mut rng = rng_for(cfg.seed, STREAM_TRAJECTORY);
    let (on, off, pulses) = match cfg.excitation {
        Excitation::Cw { pump_rate } => (RateTable::new(sys, pump_rate), None, None),
        Excitation::Pulsed { rep_rate_hz, pulse_width_ps, pump_rate_in_pulse } => {
            let period = ((PS_PER_S / rep_rate_hz).round() as u64).max(1);
            let width = pulse_width_ps.round().max(1.0) as u64;
            (
                RateTable::new(sys, pump_rate_in_pulse),
                Some(RateTable::new(sys, 0.0)),
                Some((period, width.min(period - 1).max(1))),
            )
        }
    };
    if pulses.is_none() && on.total[dst] == 0.0 {
        return Err(Error::InvalidInput("zero total rate from the initial state".into()));
    }

    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut sync = pulses.map(|_| Vec::new());
    let mut clock = Clock { epoch: 0, offset: 0.0 };
    let mut state = dst;
    let mut pump_on = true;
    // Absolute time of the next pump switch (pulsed mode only).
    let mut boundary = u64::MAX;
    if let (Some((_, width)), Some(sync)) = (pulses, sync.as_mut()) {
        boundary = width;
        sync.push(0);
    }
    let eff = det.efficiency;

    loop {
        let table = if pump_on { &on } else { off.as_ref().unwrap_or(&on) };
        let total = table.total[state];
        let to_end = clock.until(duration_ps);
        let to_boundary = clock.until(boundary);
        let dt = if total > 0.0 {
            let e: f64 = Exp1.sample(&mut rng);
            e / total * PS_PER_S
        } else {
            f64::INFINITY
        };
        if dt >= to_boundary.min(to_end) {
            if to_end <= to_boundary {
                stats.state_time_s[state] += to_end.max(0.0) / PS_PER_S;
                break;
            }
            // Pump switches; the waiting time is memoryless so it is redrawn.
            stats.state_time_s[state] += to_boundary.max(0.0) / PS_PER_S;
            clock.jump_to(boundary);
            let (period, width) = pulses.expect("boundaries only exist in pulsed mode");
            if pump_on {
                boundary = boundary - width + period;
            } else {
                if let Some(s) = sync.as_mut() {
                    s.push(boundary);
                }
                boundary += width;
            }
            pump_on = !pump_on;
            continue;
        }
        stats.state_time_s[state] += dt / PS_PER_S;
        clock.advance(dt);
        let mut pick = rng.random::<f64>() * total;
        let mut next = table.moves[state][table.moves[state].len() - 1].0;
        for &(j, k) in &table.moves[state] {
            if pick < k {
                next = j;
                break;
            }
            pick -= k;
        }
        stats.jumps += 1;
        if state == src && next == dst {
            stats.emitted_photons += 1;
            let to_a = rng.random::<bool>();
            if eff >= 1.0 || rng.random::<f64>() < eff {
                let t = clock.tag().min(duration_ps);
                if to_a {
                    a.push(t);
                } else {
                    b.push(t);
                }
            }
        }
        state = next;
    }
    Ok((a, b, sync))
}

fn poisson_times(rng: &mut ChaCha8Rng, rate: f64, duration_ps: u64) -> Vec<u64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let mean_gap = PS_PER_S / rate;
    let mut clock = Clock { epoch: 0, offset: 0.0 };
    loop {
        let e: f64 = Exp1.sample(rng);
        if e * mean_gap >= clock.until(duration_ps) {
            break;
        }
        clock.advance(e * mean_gap);
        out.push(clock.tag().min(duration_ps));
    }
    out
}

/// Sorted union keeping duplicates; coincident tags collapse in dead-time pruning.
fn merge_with_dups(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    a.extend(b);
    a.sort_unstable();
    a
}

fn prune_dead_time(tags: &[u64], dead_time_ps: u64) -> Vec<u64> {
    // strict ordering needs at least 1 ps between tags
    let dead = dead_time_ps.max(1);
    let mut out: Vec<u64> = Vec::with_capacity(tags.len());
    for &t in tags {
        match out.last() {
            Some(&last) if t - last < dead => {}
            _ => out.push(t),
        }
    }
    out
}

fn apply_detector(rng: &mut ChaCha8Rng, det: &DetectorModel, mut tags: Vec<u64>, duration_ps: u64) -> Vec<u64> {
    if det.jitter_sigma_ps > 0.0 {
        tags = tags
            .into_iter()
            .filter_map(|t| {
                let z: f64 = StandardNormal.sample(rng);
                let shifted = t as f64 + z * det.jitter_sigma_ps;
                (shifted >= 0.0 && shifted <= duration_ps as f64).then(|| shifted.round() as u64)
            })
            .collect();
        tags.sort_unstable();
    }
    let live = prune_dead_time(&tags, det.dead_time_ps);
    if det.dark_rate <= 0.0 {
        return live;
    }
    let dark = poisson_times(rng, det.dark_rate, duration_ps);
    let merged = merge_with_dups(live, dark);
    prune_dead_time(&merged, det.dead_time_ps)
}

/// Photon counts per consecutive bin of `bin_ms` milliseconds.
pub fn intensity_trace(stream: &TimeTagStream, bin_ms: f64) -> Result<Vec<u64>> {
    if !(bin_ms > 0.0) || !bin_ms.is_finite() {
        return invalid(format!("bin width {bin_ms} ms must be positive"));
    }
    let bin_ps = bin_ms * 1e9;
    let n_bins = ((stream.duration_ps() as f64 / bin_ps).ceil() as usize).max(1);
    let mut counts = vec![0u64; n_bins];
    for &t in stream.timestamps() {
        let idx = ((t as f64 / bin_ps) as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

//! Coincidence and lifetime histograms from time-tag streams.
//!
//! Delays are `τ = t_B − t_A`. A histogram with bin width `w` and half-width
//! `M = ⌈max_tau / w⌉` bins covers `[−M·w, M·w)`; bin `m` holds
//! `m·w ≤ τ < (m+1)·w`, so a delay on an edge lands in the higher bin. Every
//! pair inside the window is counted (full correlation, not start–stop).

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::timetag::{check_strictly_increasing, TimeTagStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bin_width_ps: u64,
    pub max_tau_ps: u64,
    /// Counts per bin, from `τ = −M·w` upwards.
    pub bins: Vec<u64>,
    pub n_a: u64,
    pub n_b: u64,
    pub duration_ps: u64,
    pub normalized: Option<Vec<f64>>,
}

impl CorrelationHistogram {
    pub fn empty(bin_width_ps: u64, max_tau_ps: u64) -> Self {
        let half = max_tau_ps.div_ceil(bin_width_ps) as usize;
        CorrelationHistogram {
            bin_width_ps,
            max_tau_ps,
            bins: vec![0; 2 * half],
            n_a: 0,
            n_b: 0,
            duration_ps: 0,
            normalized: None,
        }
    }

    /// Number of bins on each side of zero delay.
    pub fn half_bins(&self) -> usize {
        self.bins.len() / 2
    }

    /// Lower edge of bin `i`, in ps.
    pub fn tau_left_ps(&self, i: usize) -> i64 {
        (i as i64 - self.half_bins() as i64) * self.bin_width_ps as i64
    }

    pub fn tau_center_ps(&self, i: usize) -> f64 {
        self.tau_left_ps(i) as f64 + 0.5 * self.bin_width_ps as f64
    }

    pub fn total_counts(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// The histogram with channels swapped: bin `m` ↔ bin `−m−1`.
    pub fn mirrored(&self) -> Self {
        let mut bins = self.bins.clone();
        bins.reverse();
        CorrelationHistogram {
            bins,
            n_a: self.n_b,
            n_b: self.n_a,
            normalized: self.normalized.as_ref().map(|g| g.iter().rev().copied().collect()),
            ..*self
        }
    }

    /// Poisson scale factor turning counts into g².
    pub fn g2_scale(&self) -> f64 {
        self.duration_ps as f64 / (self.n_a as f64 * self.n_b as f64 * self.bin_width_ps as f64)
    }

    /// Adds the counts of another histogram with identical binning.
    pub fn accumulate(&mut self, other: &CorrelationHistogram) -> Result<()> {
        if other.bin_width_ps != self.bin_width_ps || other.bins.len() != self.bins.len() {
            return invalid("histograms have different binning");
        }
        for (x, y) in self.bins.iter_mut().zip(&other.bins) {
            *x += y;
        }
        self.n_a += other.n_a;
        self.n_b += other.n_b;
        self.duration_ps += other.duration_ps;
        self.normalized = None;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# meta: bin_width_ps={},max_tau_ps={},n_a={},n_b={},duration_ps={}",
            self.bin_width_ps, self.max_tau_ps, self.n_a, self.n_b, self.duration_ps
        )?;
        writeln!(w, "tau_ps,counts,g2")?;
        for (i, c) in self.bins.iter().enumerate() {
            match &self.normalized {
                Some(g) => writeln!(w, "{},{},{}", self.tau_left_ps(i), c, g[i])?,
                None => writeln!(w, "{},{},", self.tau_left_ps(i), c)?,
            }
        }
        Ok(())
    }

    /// Reads the format written by [`write_csv`](Self::write_csv). A
    /// non-empty `g2` column is kept as the normalised curve.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let fmt = |m: String| Error::Format(m);
        let meta = lines.next().transpose()?.ok_or_else(|| fmt("empty histogram file".into()))?;
        let body = meta
            .strip_prefix("# meta:")
            .ok_or_else(|| fmt(format!("first line must start with `# meta:`, found `{meta}`")))?;
        let mut fields = std::collections::HashMap::new();
        for kv in body.split(',') {
            let (k, v) = kv.trim().split_once('=').ok_or_else(|| fmt(format!("bad meta field `{kv}`")))?;
            let v: u64 = v.trim().parse().map_err(|_| fmt(format!("bad meta value `{kv}`")))?;
            fields.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| fmt(format!("meta line lacks `{k}`")));
        let mut h = CorrelationHistogram::empty(get("bin_width_ps")?, get("max_tau_ps")?);
        check_binning(h.bin_width_ps, h.max_tau_ps)?;
        h.n_a = get("n_a")?;
        h.n_b = get("n_b")?;
        h.duration_ps = get("duration_ps")?;
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "tau_ps,counts,g2" {
            return Err(fmt(format!("expected header `tau_ps,counts,g2`, found `{header}`")));
        }
        let mut g2 = Vec::with_capacity(h.bins.len());
        let mut n = 0;
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if n >= h.bins.len() {
                return Err(fmt(format!("more than {} rows", h.bins.len())));
            }
            let mut f = line.split(',');
            let bad = || fmt(format!("row {}: cannot parse `{line}`", k + 1));
            let tau: i64 = f.next().and_then(|v| v.trim().parse().ok()).ok_or_else(bad)?;
            if tau != h.tau_left_ps(n) {
                return Err(fmt(format!("row {}: tau {tau} ps, expected {}", k + 1, h.tau_left_ps(n))));
            }
            h.bins[n] = f.next().and_then(|v| v.trim().parse().ok()).ok_or_else(bad)?;
            match f.next().map(str::trim) {
                Some(v) if !v.is_empty() => g2.push(v.parse::<f64>().map_err(|_| bad())?),
                _ => {}
            }
            n += 1;
        }
        if n != h.bins.len() {
            return Err(fmt(format!("{n} rows, expected {}", h.bins.len())));
        }
        if g2.len() == n {
            h.normalized = Some(g2);
        }
        Ok(h)
    }
}

fn check_binning(bin_width_ps: u64, max_tau_ps: u64) -> Result<()> {
    if bin_width_ps == 0 {
        return invalid("bin width must be positive");
    }
    if bin_width_ps > max_tau_ps {
        return invalid(format!("bin width {bin_width_ps} ps exceeds max_tau {max_tau_ps} ps"));
    }
    Ok(())
}

/// Adds all pairs `(a_i, b_j)` with `−w ≤ b_j − a_i < w` to `bins`.
fn accumulate_pairs(a: &[u64], b: &[u64], bin_width: u64, window: u64, bins: &mut [u64]) {
    let mut lo = 0usize;
    for &ta in a {
        let start = ta.saturating_sub(window);
        while lo < b.len() && b[lo] < start {
            lo += 1;
        }
        let end = ta + window;
        for &tb in &b[lo..] {
            if tb >= end {
                break;
            }
            bins[((tb + window - ta) / bin_width) as usize] += 1;
        }
    }
}

/// Coincidence histogram of two sorted tag lists.
pub fn correlate_tags(
    a: &[u64],
    b: &[u64],
    bin_width_ps: u64,
    max_tau_ps: u64,
    duration_ps: u64,
) -> Result<CorrelationHistogram> {
    check_binning(bin_width_ps, max_tau_ps)?;
    check_strictly_increasing(a)?;
    check_strictly_increasing(b)?;
    let mut h = CorrelationHistogram::empty(bin_width_ps, max_tau_ps);
    let window = h.half_bins() as u64 * bin_width_ps;
    accumulate_pairs(a, b, bin_width_ps, window, &mut h.bins);
    h.n_a = a.len() as u64;
    h.n_b = b.len() as u64;
    h.duration_ps = duration_ps;
    Ok(h)
}

pub fn correlate(
    a: &TimeTagStream,
    b: &TimeTagStream,
    bin_width_ps: u64,
    max_tau_ps: u64,
) -> Result<CorrelationHistogram> {
    let duration = a.duration_ps().max(b.duration_ps());
    correlate_tags(a.timestamps(), b.timestamps(), bin_width_ps, max_tau_ps, duration)
}

/// Same result as [`correlate`], computed on `threads` workers by splitting
/// channel A into contiguous chunks. Counts are integers, so the merge is
/// exact for any worker count.
pub fn correlate_parallel(
    a: &TimeTagStream,
    b: &TimeTagStream,
    bin_width_ps: u64,
    max_tau_ps: u64,
    threads: usize,
) -> Result<CorrelationHistogram> {
    check_binning(bin_width_ps, max_tau_ps)?;
    let threads = threads.max(1);
    let mut h = CorrelationHistogram::empty(bin_width_ps, max_tau_ps);
    let window = h.half_bins() as u64 * bin_width_ps;
    let (ta, tb) = (a.timestamps(), b.timestamps());
    let chunk = ta.len().div_ceil(threads * 4).max(4096);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    let partials: Vec<Vec<u64>> = pool.install(|| {
        ta.par_chunks(chunk)
            .map(|part| {
                let mut bins = vec![0u64; h.bins.len()];
                let first = part[0].saturating_sub(window);
                let start = tb.partition_point(|&t| t < first);
                accumulate_pairs(part, &tb[start..], bin_width_ps, window, &mut bins);
                bins
            })
            .collect()
    });
    for p in partials {
        for (x, y) in h.bins.iter_mut().zip(p) {
            *x += y;
        }
    }
    h.n_a = ta.len() as u64;
    h.n_b = tb.len() as u64;
    h.duration_ps = a.duration_ps().max(b.duration_ps());
    Ok(h)
}

/// Incremental correlator for streams too large to hold in memory.
///
/// Tags are pushed per channel in increasing order, in chunks of any size.
/// Each pair is counted when its later member arrives; a buffered tag is
/// dropped once no future tag of the other channel can fall inside its
/// window, so memory stays proportional to the window when the two channels
/// are pushed roughly in step.
#[derive(Debug, Clone)]
pub struct StreamingCorrelator {
    hist: CorrelationHistogram,
    window: u64,
    buf_a: VecDeque<u64>,
    buf_b: VecDeque<u64>,
    last_a: Option<u64>,
    last_b: Option<u64>,
}

impl StreamingCorrelator {
    pub fn new(bin_width_ps: u64, max_tau_ps: u64) -> Result<Self> {
        check_binning(bin_width_ps, max_tau_ps)?;
        let hist = CorrelationHistogram::empty(bin_width_ps, max_tau_ps);
        let window = hist.half_bins() as u64 * bin_width_ps;
        Ok(StreamingCorrelator {
            hist,
            window,
            buf_a: VecDeque::new(),
            buf_b: VecDeque::new(),
            last_a: None,
            last_b: None,
        })
    }

    pub fn push_a(&mut self, tags: &[u64]) -> Result<()> {
        let (w, bw) = (self.window, self.hist.bin_width_ps);
        for &t in tags {
            if self.last_a.is_some_and(|l| t <= l) {
                return Err(Error::Unsorted(format!("channel A tag {t} ps out of order")));
            }
            for &tb in self.buf_b.iter().rev() {
                if tb + w < t {
                    break;
                }
                if tb < t + w {
                    self.hist.bins[((tb + w - t) / bw) as usize] += 1;
                }
            }
            self.last_a = Some(t);
            self.buf_a.push_back(t);
            self.hist.n_a += 1;
        }
        self.prune();
        Ok(())
    }

    pub fn push_b(&mut self, tags: &[u64]) -> Result<()> {
        let (w, bw) = (self.window, self.hist.bin_width_ps);
        for &t in tags {
            if self.last_b.is_some_and(|l| t <= l) {
                return Err(Error::Unsorted(format!("channel B tag {t} ps out of order")));
            }
            for &ta in self.buf_a.iter().rev() {
                if ta + w <= t {
                    break;
                }
                if ta <= t + w {
                    self.hist.bins[((t + w - ta) / bw) as usize] += 1;
                }
            }
            self.last_b = Some(t);
            self.buf_b.push_back(t);
            self.hist.n_b += 1;
        }
        self.prune();
        Ok(())
    }

    fn prune(&mut self) {
        let w = self.window;
        // Future B tags are ≥ last_b + 1 and need τ = b − a < w.
        if let Some(lb) = self.last_b {
            while self.buf_a.front().is_some_and(|&a| a + w <= lb + 1) {
                self.buf_a.pop_front();
            }
        }
        // Future A tags are ≥ last_a + 1 and need τ = b − a ≥ −w.
        if let Some(la) = self.last_a {
            while self.buf_b.front().is_some_and(|&b| b + w <= la) {
                self.buf_b.pop_front();
            }
        }
    }

    /// Tags currently held for pairing.
    pub fn buffered(&self) -> usize {
        self.buf_a.len() + self.buf_b.len()
    }

    pub fn finish(mut self, duration_ps: u64) -> CorrelationHistogram {
        self.hist.duration_ps = duration_ps;
        self.hist
    }
}

/// Fills `normalized` with `g² = counts · duration / (n_a · n_b · bin_width)`.
pub fn normalize(h: &CorrelationHistogram) -> Result<CorrelationHistogram> {
    if h.n_a == 0 || h.n_b == 0 {
        return invalid("cannot normalise: a channel has no tags");
    }
    if h.duration_ps == 0 {
        return invalid("cannot normalise: zero duration");
    }
    let scale = h.g2_scale();
    let mut out = h.clone();
    out.normalized = Some(h.bins.iter().map(|&c| c as f64 * scale).collect());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeHistogram {
    pub bin_width_ps: u64,
    pub window_ps: u64,
    /// Counts per delay bin since the latest sync tag.
    pub bins: Vec<u64>,
    pub dropped_before_sync: u64,
    pub dropped_outside_window: u64,
}

impl LifetimeHistogram {
    pub fn delay_left_ps(&self, i: usize) -> u64 {
        i as u64 * self.bin_width_ps
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# meta: bin_width_ps={},window_ps={},dropped_before_sync={},dropped_outside_window={}",
            self.bin_width_ps, self.window_ps, self.dropped_before_sync, self.dropped_outside_window
        )?;
        writeln!(w, "delay_ps,counts")?;
        for (i, c) in self.bins.iter().enumerate() {
            writeln!(w, "{},{}", self.delay_left_ps(i), c)?;
        }
        Ok(())
    }
}

/// Histogram of photon delays after the most recent sync tag. The window
/// defaults to the median sync period.
pub fn lifetime_histogram(
    photons: &TimeTagStream,
    sync: &TimeTagStream,
    bin_width_ps: u64,
    window_ps: Option<u64>,
) -> Result<LifetimeHistogram> {
    lifetime_histogram_tags(photons.timestamps(), sync.timestamps(), bin_width_ps, window_ps, sync.duration_ps())
}

pub fn lifetime_histogram_tags(
    photons: &[u64],
    sync: &[u64],
    bin_width_ps: u64,
    window_ps: Option<u64>,
    duration_ps: u64,
) -> Result<LifetimeHistogram> {
    if bin_width_ps == 0 {
        return invalid("bin width must be positive");
    }
    if sync.is_empty() {
        return invalid("sync stream is empty");
    }
    check_strictly_increasing(photons)?;
    check_strictly_increasing(sync)?;
    let window = match window_ps {
        Some(w) => w,
        None if sync.len() >= 2 => {
            let mut periods: Vec<u64> = sync.windows(2).map(|w| w[1] - w[0]).collect();
            periods.sort_unstable();
            periods[periods.len() / 2]
        }
        None => duration_ps.saturating_sub(sync[0]).max(bin_width_ps),
    };
    if window < bin_width_ps {
        return invalid(format!("window {window} ps is shorter than one bin"));
    }
    let n_bins = window.div_ceil(bin_width_ps) as usize;
    let mut h = LifetimeHistogram {
        bin_width_ps,
        window_ps: window,
        bins: vec![0; n_bins],
        dropped_before_sync: 0,
        dropped_outside_window: 0,
    };
    let mut k = 0usize;
    for &t in photons {
        while k + 1 < sync.len() && sync[k + 1] <= t {
            k += 1;
        }
        if t < sync[k] {
            h.dropped_before_sync += 1;
            continue;
        }
        let delay = t - sync[k];
        if delay >= window {
            h.dropped_outside_window += 1;
            continue;
        }
        h.bins[(delay / bin_width_ps) as usize] += 1;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timetag::Channel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive pair enumeration with the same binning rule.
    fn brute_force(a: &[u64], b: &[u64], bw: u64, max_tau: u64) -> Vec<u64> {
        let half = max_tau.div_ceil(bw) as i64;
        let mut bins = vec![0u64; 2 * half as usize];
        for &x in a {
            for &y in b {
                let tau = y as i64 - x as i64;
                let m = tau.div_euclid(bw as i64);
                if (-half..half).contains(&m) {
                    bins[(m + half) as usize] += 1;
                }
            }
        }
        bins
    }

    fn stream(ts: Vec<u64>, ch: Channel) -> TimeTagStream {
        let d = ts.last().copied().unwrap_or(0) + 1;
        TimeTagStream::new(ch, ts, d).unwrap()
    }

    fn random_tags(rng: &mut ChaCha8Rng, n: usize, span: u64) -> Vec<u64> {
        let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..span)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    #[test]
    fn single_pair() {
        let h = correlate_tags(&[1000], &[1500], 100, 1000, 2000).unwrap();
        assert_eq!(h.bins.len(), 20);
        assert_eq!(h.total_counts(), 1);
        let i = h.bins.iter().position(|&c| c == 1).unwrap();
        assert_eq!(h.tau_left_ps(i), 500);
    }

    #[test]
    fn histogram_csv_round_trip() {
        let a = [10u64, 500, 900, 4000];
        let b = [12u64, 480, 1900, 4100];
        let h = normalize(&correlate_tags(&a, &b, 100, 1000, 5000).unwrap()).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(CorrelationHistogram::read_csv(&buf[..]).unwrap(), h);
        let raw = correlate_tags(&a, &b, 100, 1000, 5000).unwrap();
        buf.clear();
        raw.write_csv(&mut buf).unwrap();
        assert_eq!(CorrelationHistogram::read_csv(&buf[..]).unwrap(), raw);
        assert!(CorrelationHistogram::read_csv(&buf[buf.iter().position(|&c| c == b'\n').unwrap() + 1..]).is_err());
    }

    #[test]
    fn empty_channel() {
        let h = correlate_tags(&[], &[1, 2, 3], 10, 100, 100).unwrap();
        assert!(h.bins.iter().all(|&c| c == 0));
        assert!(normalize(&h).is_err());
    }

    #[test]
    fn rejects_bad_binning_and_order() {
        assert!(correlate_tags(&[1], &[2], 0, 100, 10).is_err());
        assert!(correlate_tags(&[1], &[2], 200, 100, 10).is_err());
        assert!(matches!(correlate_tags(&[5, 1], &[2], 10, 100, 10), Err(Error::Unsorted(_))));
    }

    #[test]
    fn bin_count_rounds_up() {
        let h = correlate_tags(&[], &[], 256, 1000, 1).unwrap();
        assert_eq!(h.bins.len(), 8);
    }

    #[test]
    fn matches_brute_force_on_dense_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_tags(&mut rng, 10_000, 50_000_000);
        let b = random_tags(&mut rng, 10_000, 50_000_000);
        let h = correlate_tags(&a, &b, 256, 100_000, 50_000_000).unwrap();
        assert_eq!(h.bins, brute_force(&a, &b, 256, 100_000));
        let (sa, sb) = (stream(a, Channel::A), stream(b, Channel::B));
        for threads in [1, 3, 8] {
            let p = correlate_parallel(&sa, &sb, 256, 100_000, threads).unwrap();
            assert_eq!(p.bins, h.bins);
        }
    }

    #[test]
    fn mirror_off_edge() {
        // A on even, B on odd picoseconds: no delay sits on an even bin edge.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<u64> = random_tags(&mut rng, 3000, 5_000_000).iter().map(|t| t * 2).collect();
        let b: Vec<u64> = random_tags(&mut rng, 3000, 5_000_000).iter().map(|t| t * 2 + 1).collect();
        let ab = correlate_tags(&a, &b, 64, 20_000, 10_000_001).unwrap();
        let ba = correlate_tags(&b, &a, 64, 20_000, 10_000_001).unwrap();
        assert_eq!(ab.mirrored(), ba);
    }

    #[test]
    fn doubling_duration_doubles_g2() {
        let h = correlate_tags(&[100, 900], &[150, 1000], 50, 200, 10_000).unwrap();
        let g1 = normalize(&h).unwrap().normalized.unwrap();
        let h2 = CorrelationHistogram { duration_ps: 20_000, ..h };
        let g2 = normalize(&h2).unwrap().normalized.unwrap();
        for (x, y) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn lifetime_examples() {
        let h = lifetime_histogram_tags(&[150], &[100], 10, Some(100), 1000).unwrap();
        assert_eq!(h.bins[5], 1);
        let h = lifetime_histogram_tags(&[100, 200, 300], &[100, 200, 300], 10, None, 1000).unwrap();
        assert_eq!(h.bins[0], 3);
        assert_eq!(h.window_ps, 100);
        let h = lifetime_histogram_tags(&[50, 120, 260], &[100, 200], 10, Some(100), 1000).unwrap();
        assert_eq!(h.dropped_before_sync, 1);
        assert_eq!(h.dropped_outside_window, 0);
        assert_eq!(h.bins.iter().sum::<u64>(), 2);
        assert!(lifetime_histogram_tags(&[1], &[], 10, None, 10).is_err());
    }

    #[test]
    fn streaming_matches_batch_under_any_chunking() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_tags(&mut rng, 5000, 20_000_000);
        let b = random_tags(&mut rng, 5000, 20_000_000);
        let batch = correlate_tags(&a, &b, 100, 30_000, 20_000_000).unwrap();
        for chunk in [1usize, 7, 250, 5000] {
            let mut s = StreamingCorrelator::new(100, 30_000).unwrap();
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let ni = (i + chunk).min(a.len());
                let nj = (j + chunk).min(b.len());
                s.push_a(&a[i..ni]).unwrap();
                s.push_b(&b[j..nj]).unwrap();
                i = ni;
                j = nj;
            }
            assert_eq!(s.finish(20_000_000).bins, batch.bins);
        }
    }

    #[test]
    fn streaming_memory_is_bounded_by_window() {
        let a: Vec<u64> = (0..100_000u64).map(|i| i * 1000).collect();
        let b: Vec<u64> = (0..100_000u64).map(|i| i * 1000 + 300).collect();
        let mut s = StreamingCorrelator::new(100, 10_000).unwrap();
        let mut peak = 0;
        for (ca, cb) in a.chunks(64).zip(b.chunks(64)) {
            s.push_a(ca).unwrap();
            s.push_b(cb).unwrap();
            peak = peak.max(s.buffered());
        }
        assert!(peak < 200, "{peak}");
    }

    #[test]
    fn split_stream_adds_cross_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_tags(&mut rng, 4000, 10_000_000);
        let b = random_tags(&mut rng, 4000, 10_000_000);
        let cut = 5_000_000;
        let (a1, a2): (Vec<u64>, Vec<u64>) = a.iter().partition(|&&t| t < cut);
        let (b1, b2): (Vec<u64>, Vec<u64>) = b.iter().partition(|&&t| t < cut);
        let full = correlate_tags(&a, &b, 128, 50_000, 10_000_000).unwrap();
        let mut sum = correlate_tags(&a1, &b1, 128, 50_000, cut).unwrap();
        for (x, y) in [(&a2, &b2), (&a1, &b2), (&a2, &b1)] {
            sum.accumulate(&correlate_tags(x, y, 128, 50_000, 0).unwrap()).unwrap();
        }
        assert_eq!(sum.bins, full.bins);
    }

    proptest! {
        #[test]
        fn windowed_equals_exhaustive(
            a in proptest::collection::btree_set(0u64..200_000, 0..300),
            b in proptest::collection::btree_set(0u64..200_000, 0..300),
            bw in 1u64..500,
            extra in 0u64..5000,
        ) {
            let a: Vec<u64> = a.into_iter().collect();
            let b: Vec<u64> = b.into_iter().collect();
            let max_tau = bw + extra;
            let h = correlate_tags(&a, &b, bw, max_tau, 200_000).unwrap();
            prop_assert_eq!(h.bins, brute_force(&a, &b, bw, max_tau));
        }
    }
}

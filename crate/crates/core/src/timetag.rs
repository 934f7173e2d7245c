//! Photon time-tag streams and their on-disk formats.
//!
//! PTAG v1 is little-endian binary: a 16-byte header (`PTAG`, version `u32`,
//! record count `u64`) followed by 16-byte records (timestamp `u64` in ps,
//! channel `u8`, 7 zero bytes). Records are sorted by timestamp, ties by
//! channel. A CSV mirror with columns `timestamp_ps,channel` is accepted on
//! input.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const PTAG_MAGIC: &[u8; 4] = b"PTAG";
pub const PTAG_VERSION: u32 = 1;
const RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    A,
    B,
    Sync,
}

impl Channel {
    pub fn code(self) -> u8 {
        match self {
            Channel::A => 0,
            Channel::B => 1,
            Channel::Sync => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Channel::A),
            1 => Ok(Channel::B),
            2 => Ok(Channel::Sync),
            c => Err(Error::Format(format!("unknown channel code {c}"))),
        }
    }

    fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "0" | "A" | "a" => Ok(Channel::A),
            "1" | "B" | "b" => Ok(Channel::B),
            "2" | "SYNC" | "sync" | "Sync" => Ok(Channel::Sync),
            other => Err(Error::Format(format!("unknown channel {other:?}"))),
        }
    }
}

/// Where a stream came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub generator: String,
    pub rng: Option<String>,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

/// Strictly increasing picosecond timestamps of one detector channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagStream {
    pub channel: Channel,
    timestamps: Vec<u64>,
    duration_ps: u64,
    pub metadata: StreamMetadata,
}

impl TimeTagStream {
    pub fn new(channel: Channel, timestamps: Vec<u64>, duration_ps: u64) -> Result<Self> {
        check_strictly_increasing(&timestamps)?;
        if let Some(&last) = timestamps.last() {
            if last > duration_ps {
                return invalid(format!("tag at {last} ps lies beyond duration {duration_ps} ps"));
            }
        }
        Ok(TimeTagStream { channel, timestamps, duration_ps, metadata: StreamMetadata::default() })
    }

    pub(crate) fn from_sorted_unchecked(
        channel: Channel,
        timestamps: Vec<u64>,
        duration_ps: u64,
        metadata: StreamMetadata,
    ) -> Self {
        debug_assert!(timestamps.windows(2).all(|w| w[0] < w[1]));
        TimeTagStream { channel, timestamps, duration_ps, metadata }
    }

    pub fn with_metadata(mut self, metadata: StreamMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn into_timestamps(self) -> Vec<u64> {
        self.timestamps
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Mean count rate in s⁻¹.
    pub fn rate(&self) -> f64 {
        if self.duration_ps == 0 {
            return 0.0;
        }
        self.timestamps.len() as f64 / (self.duration_ps as f64 * 1e-12)
    }

    /// Merges two streams of the same channel (e.g. emitter photons and
    /// background photons); coincident tags are kept once.
    pub fn merge(&self, other: &TimeTagStream) -> TimeTagStream {
        let merged = merge_sorted(&self.timestamps, &other.timestamps);
        TimeTagStream {
            channel: self.channel,
            timestamps: merged,
            duration_ps: self.duration_ps.max(other.duration_ps),
            metadata: self.metadata.clone(),
        }
    }
}

pub(crate) fn check_strictly_increasing(ts: &[u64]) -> Result<()> {
    if let Some(i) = ts.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::Unsorted(format!(
            "timestamps not strictly increasing at index {} ({} then {})",
            i + 1,
            ts[i],
            ts[i + 1]
        )));
    }
    Ok(())
}

pub(crate) fn merge_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let next = if a[i] <= b[j] {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        if out.last() != Some(&next) {
            out.push(next);
        }
    }
    for &t in a[i..].iter().chain(&b[j..]) {
        if out.last() != Some(&t) {
            out.push(t);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TagRecord {
    pub timestamp_ps: u64,
    pub channel: Channel,
}

/// Writes the streams as one PTAG file, interleaved by timestamp then channel.
pub fn write_ptag<W: Write>(writer: W, streams: &[&TimeTagStream]) -> Result<()> {
    let total: usize = streams.iter().map(|s| s.len()).sum();
    let mut w = BufWriter::new(writer);
    w.write_all(PTAG_MAGIC)?;
    w.write_all(&PTAG_VERSION.to_le_bytes())?;
    w.write_all(&(total as u64).to_le_bytes())?;
    let mut cursors = vec![0usize; streams.len()];
    let mut record = [0u8; RECORD_LEN];
    for _ in 0..total {
        let (k, _) = streams
            .iter()
            .enumerate()
            .filter(|(k, s)| cursors[*k] < s.len())
            .map(|(k, s)| (k, (s.timestamps[cursors[k]], s.channel)))
            .min_by_key(|&(_, key)| key)
            .expect("record count matches stream lengths");
        let s = streams[k];
        record[..8].copy_from_slice(&s.timestamps[cursors[k]].to_le_bytes());
        record[8] = s.channel.code();
        w.write_all(&record)?;
        cursors[k] += 1;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ptag_file(path: &Path, streams: &[&TimeTagStream]) -> Result<()> {
    write_ptag(std::fs::File::create(path)?, streams)
}

/// Streaming PTAG reader yielding records in file order.
pub struct PtagReader<R: Read> {
    inner: BufReader<R>,
    remaining: u64,
    last: Option<TagRecord>,
}

impl<R: Read> PtagReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut inner = BufReader::with_capacity(1 << 20, reader);
        let mut header = [0u8; 16];
        inner
            .read_exact(&mut header)
            .map_err(|_| Error::Format("file shorter than the 16-byte PTAG header".into()))?;
        if &header[..4] != PTAG_MAGIC {
            return Err(Error::Format("missing PTAG magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != PTAG_VERSION {
            return Err(Error::Format(format!("unsupported PTAG version {version}")));
        }
        let remaining = u64::from_le_bytes(header[8..16].try_into().unwrap());
        Ok(PtagReader { inner, remaining, last: None })
    }

    pub fn record_count_remaining(&self) -> u64 {
        self.remaining
    }
}

impl<R: Read> Iterator for PtagReader<R> {
    type Item = Result<TagRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut buf = [0u8; RECORD_LEN];
        if let Err(e) = self.inner.read_exact(&mut buf) {
            self.remaining = 0;
            return Some(Err(Error::Format(format!("truncated PTAG record: {e}"))));
        }
        let channel = match Channel::from_code(buf[8]) {
            Ok(c) => c,
            Err(e) => return Some(Err(e)),
        };
        if buf[9..].iter().any(|&b| b != 0) {
            return Some(Err(Error::Format("reserved PTAG bytes are not zero".into())));
        }
        let rec = TagRecord { timestamp_ps: u64::from_le_bytes(buf[..8].try_into().unwrap()), channel };
        if let Some(prev) = self.last {
            if rec <= prev {
                return Some(Err(Error::Unsorted(format!(
                    "PTAG record at {} ps ({:?}) does not follow {} ps ({:?})",
                    rec.timestamp_ps, rec.channel, prev.timestamp_ps, prev.channel
                ))));
            }
        }
        self.last = Some(rec);
        Some(Ok(rec))
    }
}

pub fn read_ptag<R: Read>(reader: R) -> Result<Vec<TagRecord>> {
    PtagReader::new(reader)?.collect()
}

/// Reads `timestamp_ps,channel` rows; a header line is optional, channels may
/// be given as 0/1/2 or A/B/SYNC.
pub fn read_tag_csv<R: Read>(reader: R) -> Result<Vec<TagRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let (ts, ch) = match (fields.next(), fields.next()) {
            (Some(ts), Some(ch)) => (ts.trim(), ch),
            _ => return Err(Error::Format(format!("line {}: expected two columns", lineno + 1))),
        };
        let timestamp_ps = match ts.parse::<u64>() {
            Ok(v) => v,
            Err(_) if lineno == 0 && out.is_empty() => continue,
            Err(_) => {
                return Err(Error::Format(format!("line {}: bad timestamp {ts:?}", lineno + 1)))
            }
        };
        out.push(TagRecord { timestamp_ps, channel: Channel::parse(ch)? });
    }
    out.sort();
    if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Unsorted(format!(
            "duplicate tag at {} ps on channel {:?}",
            w[0].timestamp_ps, w[0].channel
        )));
    }
    Ok(out)
}

/// Reads a PTAG file, or a CSV mirror when the extension is `.csv`.
pub fn read_tag_file(path: &Path) -> Result<Vec<TagRecord>> {
    let file = std::fs::File::open(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_tag_csv(file)
    } else {
        read_ptag(file)
    }
}

pub fn write_tag_csv<W: Write>(writer: W, streams: &[&TimeTagStream]) -> Result<()> {
    let mut records: Vec<TagRecord> = streams
        .iter()
        .flat_map(|s| {
            s.timestamps.iter().map(|&t| TagRecord { timestamp_ps: t, channel: s.channel })
        })
        .collect();
    records.sort();
    let mut w = BufWriter::new(writer);
    writeln!(w, "timestamp_ps,channel")?;
    for r in records {
        writeln!(w, "{},{}", r.timestamp_ps, r.channel.code())?;
    }
    w.flush()?;
    Ok(())
}

/// Splits records into per-channel streams. Without an explicit duration the
/// last tag time is used.
pub fn split_channels(
    records: &[TagRecord],
    duration_ps: Option<u64>,
) -> Result<(TimeTagStream, TimeTagStream, TimeTagStream)> {
    let end = records.iter().map(|r| r.timestamp_ps).max().unwrap_or(0);
    let duration = duration_ps.unwrap_or(end);
    let pick = |c: Channel| -> Result<TimeTagStream> {
        let ts: Vec<u64> =
            records.iter().filter(|r| r.channel == c).map(|r| r.timestamp_ps).collect();
        TimeTagStream::new(c, ts, duration)
    };
    Ok((pick(Channel::A)?, pick(Channel::B)?, pick(Channel::Sync)?))
}

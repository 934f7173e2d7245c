//! Input loading and table output.

use std::path::{Path, PathBuf};

use photonstat::emitter::{build_four_level, FourLevelParams, LevelSystem};
use photonstat::timetag::{read_tag_file, split_channels, Channel, TagRecord, TimeTagStream};

use crate::config::create;
use crate::{validation, CliError, CliResult};

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        validation(format!("{what} {} not found", path.display()))
    }
}

/// A `LevelSystem` document, or four-level parameters (recognised by `k_rad`).
pub fn load_model(path: &Path) -> CliResult<LevelSystem> {
    require_file(path, "model file")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read model file {}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("model file {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::Validation(format!("model file {}: {e}", path.display()));
    if v.get("n_states").is_some() {
        serde_json::from_value(v).map_err(bad)
    } else if v.get("k_rad").is_some() {
        let p: FourLevelParams = serde_json::from_value(v).map_err(bad)?;
        Ok(build_four_level(&p)?)
    } else {
        validation(format!("model file {}: expected `n_states` (level system) or `k_rad` (four-level parameters)", path.display()))
    }
}

pub fn load_records(path: &Path) -> CliResult<Vec<TagRecord>> {
    require_file(path, "tag file")?;
    read_tag_file(path).map_err(|e| {
        let c: CliError = e.into();
        match c {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            CliError::Runtime(m) => CliError::Runtime(format!("{}: {m}", path.display())),
        }
    })
}

fn last_tag(records: &[TagRecord]) -> u64 {
    records.iter().map(|r| r.timestamp_ps).max().unwrap_or(0)
}

fn channel(records: &[TagRecord], c: Channel) -> Vec<u64> {
    records.iter().filter(|r| r.channel == c).map(|r| r.timestamp_ps).collect()
}

/// Channels A and B for correlation. One file supplies both; with two files
/// A comes from the first and B from the second, each falling back to the
/// other photon channel when its own is empty. Duration defaults to the last
/// tag time.
pub fn photon_pair(inputs: &[PathBuf], duration_ps: Option<u64>) -> CliResult<(TimeTagStream, TimeTagStream)> {
    match inputs {
        [one] => {
            let r = load_records(one)?;
            let (a, b, _) = split_channels(&r, Some(duration_ps.unwrap_or(last_tag(&r))))?;
            Ok((a, b))
        }
        [first, second] => {
            let r1 = load_records(first)?;
            let r2 = load_records(second)?;
            let d = duration_ps.unwrap_or(last_tag(&r1).max(last_tag(&r2)));
            let pick = |r: &[TagRecord], own: Channel, other: Channel| {
                let t = channel(r, own);
                if t.is_empty() { channel(r, other) } else { t }
            };
            let a = TimeTagStream::new(Channel::A, pick(&r1, Channel::A, Channel::B), d)?;
            let b = TimeTagStream::new(Channel::B, pick(&r2, Channel::B, Channel::A), d)?;
            Ok((a, b))
        }
        _ => validation(format!("expected 1 or 2 tag files, got {}", inputs.len())),
    }
}

/// Photon tags (A, B or both merged) and the sync channel. The sync channel
/// comes from the second file when two are given.
pub fn photons_and_sync(
    inputs: &[PathBuf],
    which: &str,
) -> CliResult<(TimeTagStream, TimeTagStream)> {
    let (photon_file, sync_file) = match inputs {
        [one] => (one, one),
        [p, s] => (p, s),
        _ => return validation(format!("expected 1 or 2 tag files, got {}", inputs.len())),
    };
    let r = load_records(photon_file)?;
    let rs = if sync_file == photon_file { r.clone() } else { load_records(sync_file)? };
    let d = last_tag(&r).max(last_tag(&rs));
    let (a, b, _) = split_channels(&r, Some(d))?;
    let (_, _, sync) = split_channels(&rs, Some(d))?;
    if sync.is_empty() {
        return validation(format!("{} has no SYNC tags", sync_file.display()));
    }
    let photons = match which {
        "a" => a,
        "b" => b,
        "both" => a.merge(&b),
        other => return validation(format!("--channel must be a, b or both, not `{other}`")),
    };
    Ok((photons, sync))
}

/// Writes rows through the `csv` crate; `None` cells stay empty.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<Option<String>>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r.iter().map(|c| c.as_deref().unwrap_or(""))).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn num(v: f64) -> Option<String> {
    v.is_finite().then(|| v.to_string())
}

pub fn opt(v: Option<f64>) -> Option<String> {
    v.and_then(num)
}

pub fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> CliResult<()> {
    let f = create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), v).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// `temperature_k,intensity` pairs.
pub fn read_series_csv(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    require_file(path, "series file")?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?.clone();
    if headers.len() < 2 || &headers[0] != "temperature_k" {
        return validation(format!("{}: header must start with `temperature_k,<intensity>`", path.display()));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let parse = |k: usize| rec.get(k).and_then(|v| v.parse::<f64>().ok());
        match (parse(0), parse(1)) {
            (Some(t), Some(v)) => out.push((t, v)),
            _ => return validation(format!("{}: row {} is not numeric", path.display(), i + 1)),
        }
    }
    Ok(out)
}

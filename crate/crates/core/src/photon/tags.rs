use std::io::{BufRead, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use super::{ExperimentKind, PhotonError};
use crate::error::{Error, Result};

pub const TIME_TAGS_MAGIC: [u8; 4] = *b"PTTG";
const VERSION: u16 = 1;
const CSV_HEADER: &str = "channel,timestamp_ps";

/// Detection times per channel (ps), non-decreasing within each channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTags {
    pub kind: ExperimentKind,
    pub rep_rate_mhz: f64,
    pub channels: Vec<Vec<u64>>,
}

impl TimeTags {
    pub fn new(kind: ExperimentKind, rep_rate_mhz: f64, channels: Vec<Vec<u64>>) -> Result<Self, PhotonError> {
        let t = TimeTags { kind, rep_rate_mhz, channels };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), PhotonError> {
        if !(self.rep_rate_mhz > 0.0) || !self.rep_rate_mhz.is_finite() {
            return Err(PhotonError::InvalidParams(format!("rep rate {} MHz", self.rep_rate_mhz)));
        }
        if self.channels.len() > u8::MAX as usize + 1 {
            return Err(PhotonError::InvalidParams("more than 256 channels".into()));
        }
        if let Some(c) = self.channels.iter().position(|ts| ts.windows(2).any(|w| w[1] < w[0])) {
            return Err(PhotonError::InvalidParams(format!("channel {c} timestamps decrease")));
        }
        Ok(())
    }

    pub fn period_ps(&self) -> f64 {
        1e6 / self.rep_rate_mhz
    }

    pub fn total(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }

    /// All tags as `(timestamp, channel)` in time order, ties by channel.
    pub fn merged(&self) -> Vec<(u64, u8)> {
        let mut all: Vec<(u64, u8)> = self
            .channels
            .iter()
            .enumerate()
            .flat_map(|(c, ts)| ts.iter().map(move |&t| (t, c as u8)))
            .collect();
        all.sort_unstable();
        all
    }

    /// Same tags shifted by `offset_ps`.
    pub fn shifted(&self, offset_ps: u64) -> Self {
        let channels = self.channels.iter().map(|ts| ts.iter().map(|t| t + offset_ps).collect()).collect();
        TimeTags { channels, ..self.clone() }
    }
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Binary layout, all integers little-endian:
/// magic `PTTG` | u16 version | u16 kind | u16 channel count | u16 reserved |
/// f64 rep rate (MHz) | u64 record count | records of u8 channel + u64 ps.
pub fn write_time_tags<W: Write>(tags: &TimeTags, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(&TIME_TAGS_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&tags.kind.code().to_le_bytes())?;
    w.write_all(&(tags.channels.len() as u16).to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&tags.rep_rate_mhz.to_le_bytes())?;
    w.write_all(&(tags.total() as u64).to_le_bytes())?;
    for (t, c) in tags.merged() {
        w.write_all(&[c])?;
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_time_tags<R: Read>(mut r: R) -> Result<TimeTags> {
    let mut head = [0u8; 28];
    r.read_exact(&mut head).map_err(|_| format_err("time-tag header truncated"))?;
    if head[..4] != TIME_TAGS_MAGIC {
        return Err(format_err("not a time-tag file (bad magic)"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([head[i], head[i + 1]]);
    let version = u16_at(4);
    if version != VERSION {
        return Err(format_err(format!("unsupported time-tag version {version}")));
    }
    let kind = ExperimentKind::from_code(u16_at(6)).ok_or_else(|| format_err("unknown experiment kind"))?;
    let n_channels = u16_at(8) as usize;
    let rep = f64::from_le_bytes(head[12..20].try_into().expect("8 bytes"));
    let n = u64::from_le_bytes(head[20..28].try_into().expect("8 bytes"));
    let mut channels = vec![Vec::new(); n_channels];
    let mut rec = [0u8; 9];
    for _ in 0..n {
        r.read_exact(&mut rec).map_err(|_| format_err("time-tag records truncated"))?;
        let c = rec[0] as usize;
        let t = u64::from_le_bytes(rec[1..].try_into().expect("8 bytes"));
        channels.get_mut(c).ok_or_else(|| format_err(format!("record for channel {c} of {n_channels}")))?.push(t);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(format_err("trailing bytes after time-tag records"));
    }
    TimeTags::new(kind, rep, channels).map_err(|e| format_err(e.to_string()))
}

/// Debug text form: a `# kind=<hbt|hom> rep_rate_mhz=<f> channels=<n>` line,
/// the header `channel,timestamp_ps`, then one record per line in time order.
pub fn write_time_tags_csv<W: Write>(tags: &TimeTags, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let kind = match tags.kind {
        ExperimentKind::Hbt => "hbt",
        ExperimentKind::Hom => "hom",
    };
    writeln!(w, "# kind={kind} rep_rate_mhz={} channels={}", tags.rep_rate_mhz, tags.channels.len())?;
    writeln!(w, "{CSV_HEADER}")?;
    for (t, c) in tags.merged() {
        writeln!(w, "{c},{t}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_time_tags_csv<R: BufRead>(r: R) -> Result<TimeTags> {
    let mut lines = r.lines();
    let meta = lines.next().ok_or_else(|| format_err("empty time-tag CSV"))??;
    let meta = meta.trim().strip_prefix('#').ok_or_else(|| format_err("missing '#' metadata line"))?;
    let (mut kind, mut rep, mut n_channels) = (None, None, None);
    for field in meta.split_whitespace() {
        match field.split_once('=') {
            Some(("kind", "hbt")) => kind = Some(ExperimentKind::Hbt),
            Some(("kind", "hom")) => kind = Some(ExperimentKind::Hom),
            Some(("rep_rate_mhz", v)) => rep = v.parse::<f64>().ok(),
            Some(("channels", v)) => n_channels = v.parse::<usize>().ok(),
            _ => return Err(format_err(format!("bad metadata field '{field}'"))),
        }
    }
    let (Some(kind), Some(rep), Some(n_channels)) = (kind, rep, n_channels) else {
        return Err(format_err("metadata needs kind, rep_rate_mhz and channels"));
    };
    let header = lines.next().ok_or_else(|| format_err("missing CSV header"))??;
    if header.trim() != CSV_HEADER {
        return Err(format_err(format!("expected header '{CSV_HEADER}'")));
    }
    let mut channels = vec![Vec::new(); n_channels];
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(c, t)| Some((c.trim().parse::<usize>().ok()?, t.trim().parse::<u64>().ok()?)));
        let (c, t) = parsed.ok_or_else(|| format_err(format!("line {}: expected channel,timestamp_ps", i + 3)))?;
        channels.get_mut(c).ok_or_else(|| format_err(format!("line {}: channel {c} out of range", i + 3)))?.push(t);
    }
    TimeTags::new(kind, rep, channels).map_err(|e| format_err(e.to_string()))
}

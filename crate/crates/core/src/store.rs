//! File formats: binary channel traces, their JSON-lines text export,
//! episode records, response logs and CSV result tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::config::WlanConfig;
use crate::episode::EpisodeRecord;
use crate::error::{Error, Result};
use crate::gateway::{GatewayConfig, ResponseLogEntry};
use crate::metrics::{ErrorReport, GainReport, GroupSizeDistribution};
use crate::policy::PolicySpec;
use crate::prompt::PromptOptions;

pub const TRACE_MAGIC: &[u8; 4] = b"WISR";
pub const TRACE_VERSION: u16 = 1;
pub const TRACE_EXT: &str = "wisr";

fn dim(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} = {v} does not fit the trace header")))
}

pub fn write_trace<W: Write>(chan: &ChannelRealization, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let c = chan.config();
    w.write_all(TRACE_MAGIC)?;
    w.write_all(&TRACE_VERSION.to_le_bytes())?;
    for (v, what) in [
        (c.n_stations, "N"),
        (c.n_antennas, "M"),
        (c.n_rus, "R"),
        (c.n_slots, "T"),
    ] {
        w.write_all(&dim(v, what)?.to_le_bytes())?;
    }
    w.write_all(&c.rng_seed.to_le_bytes())?;
    for x in [c.noise_power, c.total_power, c.ru_bandwidth_hz] {
        w.write_all(&x.to_le_bytes())?;
    }
    for z in chan.raw() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    for p in chan.positions() {
        w.write_all(&p[0].to_le_bytes())?;
        w.write_all(&p[1].to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct LeReader<R> {
    inner: R,
}

impl<R: Read> LeReader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut buf = [0u8; K];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("truncated trace".into()),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

/// Reads a binary trace. Fields the header does not carry (cell radius,
/// delay profile) take their defaults; they only matter for generation.
pub fn read_trace<R: Read>(r: R) -> Result<ChannelRealization> {
    let mut r = LeReader {
        inner: BufReader::new(r),
    };
    let magic: [u8; 4] = r.bytes()?;
    if &magic != TRACE_MAGIC {
        return Err(Error::Format("not a channel trace (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != TRACE_VERSION {
        return Err(Error::Format(format!("unsupported trace version {version}")));
    }
    let (n, m, rus, t) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let mut config = WlanConfig::new(n, m, rus, t).with_seed(r.u64()?);
    config.noise_power = r.f64()?;
    config.total_power = r.f64()?;
    config.ru_bandwidth_hz = r.f64()?;
    config.validate()?;
    let entries = t
        .checked_mul(n)
        .and_then(|x| x.checked_mul(rus))
        .and_then(|x| x.checked_mul(m))
        .ok_or_else(|| Error::Format("trace dimensions overflow".into()))?;
    let mut h = Vec::with_capacity(entries);
    for _ in 0..entries {
        h.push(Complex64::new(r.f64()?, r.f64()?));
    }
    let mut positions = Vec::with_capacity(t * n);
    for _ in 0..t * n {
        positions.push([r.f64()?, r.f64()?]);
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after trace body".into()));
    }
    ChannelRealization::from_parts(config, h, positions)
}

pub fn save_trace(chan: &ChannelRealization, path: impl AsRef<Path>) -> Result<()> {
    write_trace(chan, File::create(path)?)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<ChannelRealization> {
    read_trace(File::open(path)?)
}

/// File name of episode `index` inside a trace directory.
pub fn trace_file_name(index: usize) -> String {
    format!("episode_{index:03}.{TRACE_EXT}")
}

/// Trace files in `dir`, sorted by name.
pub fn list_traces(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == TRACE_EXT))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Serialize, Deserialize)]
struct TextHeader {
    n_stations: usize,
    n_antennas: usize,
    n_rus: usize,
    n_slots: usize,
    seed: u64,
    noise_power: f64,
    total_power: f64,
    ru_bandwidth_hz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TextSlot {
    slot: usize,
    positions: Vec<[f64; 2]>,
    /// `h[i][l]` is the M-vector as (re, im) pairs.
    h: Vec<Vec<Vec<[f64; 2]>>>,
}

/// JSON-lines export: a header line followed by one line per slot.
pub fn write_trace_text<W: Write>(chan: &ChannelRealization, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let c = chan.config();
    let header = TextHeader {
        n_stations: c.n_stations,
        n_antennas: c.n_antennas,
        n_rus: c.n_rus,
        n_slots: c.n_slots,
        seed: c.rng_seed,
        noise_power: c.noise_power,
        total_power: c.total_power,
        ru_bandwidth_hz: c.ru_bandwidth_hz,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for t in 0..c.n_slots {
        let slot = TextSlot {
            slot: t,
            positions: (0..c.n_stations).map(|i| chan.position(t, i)).collect(),
            h: (0..c.n_stations)
                .map(|i| {
                    (0..c.n_rus)
                        .map(|l| chan.h(t, i, l).iter().map(|z| [z.re, z.im]).collect())
                        .collect()
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &slot)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_text<R: Read>(r: R) -> Result<ChannelRealization> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty trace export".into()))??;
    let hd: TextHeader = serde_json::from_str(&first)?;
    let mut config = WlanConfig::new(hd.n_stations, hd.n_antennas, hd.n_rus, hd.n_slots).with_seed(hd.seed);
    config.noise_power = hd.noise_power;
    config.total_power = hd.total_power;
    config.ru_bandwidth_hz = hd.ru_bandwidth_hz;
    let mut h = Vec::new();
    let mut positions = Vec::new();
    for (t, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: TextSlot = serde_json::from_str(&line)?;
        if s.slot != t {
            return Err(Error::Format(format!("slot {} found at line {}", s.slot, t + 2)));
        }
        positions.extend(s.positions);
        h.extend(s.h.into_iter().flatten().flatten().map(|[re, im]| Complex64::new(re, im)));
    }
    ChannelRealization::from_parts(config, h, positions)
}

pub fn save_record(record: &EpisodeRecord, path: impl AsRef<Path>) -> Result<()> {
    save_json(record, path)
}

pub fn load_record(path: impl AsRef<Path>) -> Result<EpisodeRecord> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn record_file_name(index: usize) -> String {
    format!("episode_{index:03}.json")
}

/// Episode records in a run directory, sorted by name.
pub fn load_run(dir: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|f| f.to_string_lossy().starts_with("episode_"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty("episode records in run directory"));
    }
    files.iter().map(load_record).collect()
}

/// Everything needed to repeat a `run`, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<String>,
    pub trace: Option<String>,
    pub policy: PolicySpec,
    pub prompt: Option<PromptOptions>,
    pub gateway: Option<GatewayConfig>,
    pub out_dir: String,
    pub master_seed: Option<u64>,
    pub revocation_feedback: bool,
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        for (field, path) in [("config_path", &self.config_path), ("trace", &self.trace)] {
            if let Some(p) = path {
                if !Path::new(p).exists() {
                    return Err(Error::config(field, format!("{p} does not exist")));
                }
            }
        }
        if self.trace.is_none() && self.master_seed.is_none() {
            return Err(Error::config("trace", "either a trace or a master seed is required"));
        }
        if matches!(self.policy, PolicySpec::Llm) && self.gateway.is_none() {
            return Err(Error::config("gateway", "llm policy requires a gateway"));
        }
        if let Some(g) = &self.gateway {
            g.validate()?;
        }
        let out = Path::new(&self.out_dir);
        if out.exists() && !out.is_dir() {
            return Err(Error::config("out_dir", format!("{} is not a directory", self.out_dir)));
        }
        Ok(())
    }
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub episode: usize,
    pub seed: u64,
    pub slot: usize,
    pub policy: String,
    pub rate_sum: f64,
    pub scheduled: usize,
    /// Revoked RU indices joined by ';'.
    pub revoked_rus: String,
    pub parse_errors: usize,
}

pub fn result_rows(record: &EpisodeRecord) -> Vec<ResultRow> {
    record
        .slots
        .iter()
        .map(|s| ResultRow {
            episode: record.episode,
            seed: record.config.rng_seed,
            slot: s.slot,
            policy: record.policy.to_string(),
            rate_sum: s.rate_sum,
            scheduled: s.assignment.count_ones(),
            revoked_rus: s.revoked_rus.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
            parse_errors: s.statuses.iter().filter(|f| f.is_error()).count(),
        })
        .collect()
}

pub fn write_results<W: Write>(records: &[EpisodeRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for rec in records {
        for row in result_rows(rec) {
            out.serialize(row)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(r);
    Ok(rd.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_response_log<W: Write>(entries: &[ResponseLogEntry], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_response_log<R: Read>(r: R) -> Result<Vec<ResponseLogEntry>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_error_csv<W: Write>(report: &ErrorReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["fp", "fn", "total", "error_rate"])?;
    out.write_record([
        report.fp.to_string(),
        report.fn_.to_string(),
        report.total.to_string(),
        report.error_rate.to_string(),
    ])?;
    out.flush()?;
    Ok(())
}

pub fn write_gain_csv<W: Write>(report: &GainReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["policy_total", "baseline_total", "gain_percent"])?;
    out.write_record([
        report.policy_total.to_string(),
        report.baseline_total.to_string(),
        report.gain_percent.to_string(),
    ])?;
    out.flush()?;
    Ok(())
}

pub fn write_cdf_csv<W: Write>(points: &[(f64, f64)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rate_sum", "cdf"])?;
    for (x, p) in points {
        out.write_record([x.to_string(), p.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per (RU, size) with pre- and post-correction counts; the
/// per-RU violation count is repeated on each of that RU's rows.
pub fn write_groupsize_csv<W: Write>(dist: &GroupSizeDistribution, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["ru", "group_size", "pre_count", "post_count", "violations"])?;
    for (l, (pre, post)) in dist.pre.iter().zip(&dist.post).enumerate() {
        for (g, (a, b)) in pre.iter().zip(post).enumerate() {
            out.write_record([
                l.to_string(),
                g.to_string(),
                a.to_string(),
                b.to_string(),
                dist.violations[l].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;

    fn chan() -> ChannelRealization {
        generate_channels(&WlanConfig::new(3, 2, 4, 2).with_seed(5)).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let c = chan();
        let mut buf = Vec::new();
        write_trace(&c, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"WISR");
        assert_eq!(buf.len(), 4 + 2 + 16 + 8 + 24 + 16 * 2 * 3 * 4 * 2 + 16 * 2 * 3);
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back.raw(), c.raw());
        assert_eq!(back.positions(), c.positions());
        assert_eq!(back.config().noise_power, c.config().noise_power);
        assert_eq!(back.config().rng_seed, 5);
    }

    #[test]
    fn binary_rejects_damage() {
        let mut buf = Vec::new();
        write_trace(&chan(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_trace(bad.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_trace(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(read_trace(long.as_slice()).is_err());
        let mut v2 = buf;
        v2[4] = 2;
        assert!(read_trace(v2.as_slice()).is_err());
    }

    #[test]
    fn text_export_is_lossless() {
        let c = chan();
        let mut buf = Vec::new();
        write_trace_text(&c, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 1 + 2);
        let back = read_trace_text(buf.as_slice()).unwrap();
        assert_eq!(back.raw(), c.raw());
        assert_eq!(back.positions(), c.positions());
    }

    #[test]
    fn cdf_csv_columns() {
        let mut buf = Vec::new();
        write_cdf_csv(&[(1.5, 0.5), (2.0, 1.0)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rate_sum,cdf\n1.5,0.5\n2,1\n");
    }
}

//! Dataset file formats.
//!
//! Bulk data is CSV with a one-line header; floats are written in shortest
//! round-trip decimal form so reading a file back reproduces the in-memory
//! values exactly. Every dataset directory carries a `manifest.json` holding
//! the full configuration, seed, tool version and file digests.
//!
//! | file | header |
//! |------|--------|
//! | `quadratures.csv` | `trial_id,x` |
//! | `traces.csv` | `trial_id,h0,h1,...` (one photocurrent value per time bin) |
//! | `clicks.csv` | `trial_id,n2,n3,times2,times3` (space-separated 10 ns bin indices) |
//! | `decay.csv` | `delay_s,efficiency,stderr` (`stderr` may be empty) |
//!
//! Outputs are staged as hidden temporary files and renamed into place only
//! once every file of a command has been written.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::counting::ClickRecord;
use crate::error::{Error, Result};
use crate::physics::DecayCurve;
use crate::temporal::{HomodyneTrace, TimeGrid};

pub const QUADRATURES_FILE: &str = "quadratures.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const CLICKS_FILE: &str = "clicks.csv";
pub const DECAY_FILE: &str = "decay.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// A group of output files that appear together or not at all.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    pending: Vec<(PathBuf, PathBuf)>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            pending: Vec::new(),
        })
    }

    /// Buffered writer to a temporary file that becomes `name` on commit.
    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let tmp = self.dir.join(format!(".{name}.tmp-{}", std::process::id()));
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        self.pending.push((tmp, self.dir.join(name)));
        Ok(BufWriter::new(file))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut w = self.create(name)?;
        let path = self.dir.join(name);
        w.write_all(bytes).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))
    }

    /// Path a file will have once committed.
    pub fn final_path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Path of the staged temporary for `name`, for hashing before commit.
    pub fn staged_path(&self, name: &str) -> Option<&Path> {
        let target = self.dir.join(name);
        self.pending
            .iter()
            .find(|(_, f)| *f == target)
            .map(|(t, _)| t.as_path())
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let pending = std::mem::take(&mut self.pending);
        let mut done = Vec::with_capacity(pending.len());
        for (tmp, target) in pending {
            std::fs::rename(&tmp, &target).map_err(io_err(&target))?;
            done.push(target);
        }
        Ok(done)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        for (tmp, _) in &self.pending {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => format_err(path, line, format!("{kind:?}")),
    }
}

fn open_csv(path: &Path, expected_header: &[&str]) -> Result<csv::Reader<File>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let ok = if expected_header.last() == Some(&"*") {
        let fixed = &expected_header[..expected_header.len() - 1];
        header.len() > fixed.len() && header.iter().zip(fixed).all(|(a, b)| a == *b)
    } else {
        header.iter().eq(expected_header.iter().copied())
    };
    if !ok {
        return Err(format_err(
            path,
            1,
            format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(reader)
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| format_err(path, line, format!("cannot parse {what} from `{field}`")))
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

// --- quadratures -----------------------------------------------------------

pub fn write_quadratures<W: Write>(w: W, values: &[f64]) -> Result<()> {
    let path = Path::new(QUADRATURES_FILE);
    let mut out = csv_writer(w);
    out.write_record(["trial_id", "x"]).map_err(|e| csv_err(path, e))?;
    for (i, x) in values.iter().enumerate() {
        out.write_record([i.to_string(), x.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_quadratures(path: &Path) -> Result<Vec<f64>> {
    let mut reader = open_csv(path, &["trial_id", "x"])?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec);
        let _: u64 = parse(path, line, &rec[0], "trial_id")?;
        let x: f64 = parse(path, line, &rec[1], "quadrature")?;
        if !x.is_finite() {
            return Err(format_err(path, line, "non-finite quadrature"));
        }
        out.push(x);
    }
    Ok(out)
}

// --- traces ----------------------------------------------------------------

pub fn write_traces<W: Write>(w: W, traces: &[HomodyneTrace], grid: &TimeGrid) -> Result<()> {
    let path = Path::new(TRACES_FILE);
    let mut out = csv_writer(w);
    let mut header = vec!["trial_id".to_string()];
    header.extend((0..grid.n_samples()).map(|i| format!("h{i}")));
    out.write_record(&header).map_err(|e| csv_err(path, e))?;
    append_traces(&mut out, traces)?;
    out.flush().map_err(io_err(path))
}

/// Rows for `traces`, without a header, for batched writing.
pub fn append_traces<W: Write>(out: &mut csv::Writer<W>, traces: &[HomodyneTrace]) -> Result<()> {
    let path = Path::new(TRACES_FILE);
    let mut row: Vec<String> = Vec::new();
    for t in traces {
        row.clear();
        row.push(t.trial_id().to_string());
        row.extend(t.samples().iter().map(f64::to_string));
        out.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    Ok(())
}

pub fn trace_writer<W: Write>(w: W, grid: &TimeGrid) -> Result<csv::Writer<W>> {
    let mut out = csv_writer(w);
    let mut header = vec!["trial_id".to_string()];
    header.extend((0..grid.n_samples()).map(|i| format!("h{i}")));
    out.write_record(&header)
        .map_err(|e| csv_err(Path::new(TRACES_FILE), e))?;
    Ok(out)
}

pub fn read_traces(path: &Path, grid: &TimeGrid) -> Result<Vec<HomodyneTrace>> {
    let mut reader = open_csv(path, &["trial_id", "*"])?;
    let width = reader.headers().map_err(|e| csv_err(path, e))?.len();
    if width != grid.n_samples() + 1 {
        return Err(format_err(
            path,
            1,
            format!("{} samples per trace, grid has {}", width - 1, grid.n_samples()),
        ));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec);
        let id: u64 = parse(path, line, &rec[0], "trial_id")?;
        let samples = rec
            .iter()
            .skip(1)
            .map(|f| parse::<f64>(path, line, f, "sample"))
            .collect::<Result<Vec<_>>>()?;
        out.push(HomodyneTrace::new(*grid, samples, id)?);
    }
    Ok(out)
}

// --- clicks ----------------------------------------------------------------

fn join_bins(bins: &[u32]) -> String {
    bins.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

pub fn click_writer<W: Write>(w: W) -> Result<csv::Writer<W>> {
    let mut out = csv_writer(w);
    out.write_record(["trial_id", "n2", "n3", "times2", "times3"])
        .map_err(|e| csv_err(Path::new(CLICKS_FILE), e))?;
    Ok(out)
}

pub fn append_clicks<W: Write>(out: &mut csv::Writer<W>, records: &[ClickRecord]) -> Result<()> {
    for r in records {
        out.write_record([
            r.trial_id.to_string(),
            r.n2().to_string(),
            r.n3().to_string(),
            join_bins(&r.times2),
            join_bins(&r.times3),
        ])
        .map_err(|e| csv_err(Path::new(CLICKS_FILE), e))?;
    }
    Ok(())
}

pub fn write_clicks<W: Write>(w: W, records: &[ClickRecord]) -> Result<()> {
    let mut out = click_writer(w)?;
    append_clicks(&mut out, records)?;
    out.flush().map_err(io_err(Path::new(CLICKS_FILE)))
}

/// Streaming reader over `clicks.csv`.
pub struct ClickReader {
    path: PathBuf,
    records: csv::StringRecordsIntoIter<File>,
}

impl ClickReader {
    pub fn open(path: &Path) -> Result<Self> {
        let reader = open_csv(path, &["trial_id", "n2", "n3", "times2", "times3"])?;
        Ok(Self {
            path: path.to_path_buf(),
            records: reader.into_records(),
        })
    }

    fn decode(&self, rec: &csv::StringRecord) -> Result<ClickRecord> {
        let path = &self.path;
        let line = line_of(rec);
        let bins = |field: &str| -> Result<Vec<u32>> {
            field
                .split_whitespace()
                .map(|b| parse::<u32>(path, line, b, "arrival bin"))
                .collect()
        };
        let record = ClickRecord {
            trial_id: parse(path, line, &rec[0], "trial_id")?,
            times2: bins(&rec[3])?,
            times3: bins(&rec[4])?,
        };
        let n2: u32 = parse(path, line, &rec[1], "n2")?;
        let n3: u32 = parse(path, line, &rec[2], "n3")?;
        if n2 != record.n2() || n3 != record.n3() {
            return Err(format_err(path, line, "counts disagree with arrival lists"));
        }
        Ok(record)
    }
}

impl Iterator for ClickReader {
    type Item = Result<ClickRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        Some(
            rec.map_err(|e| csv_err(&self.path, e))
                .and_then(|r| self.decode(&r)),
        )
    }
}

pub fn read_clicks(path: &Path) -> Result<Vec<ClickRecord>> {
    ClickReader::open(path)?.collect()
}

// --- decay -----------------------------------------------------------------

pub fn write_decay<W: Write>(w: W, curve: &DecayCurve) -> Result<()> {
    let path = Path::new(DECAY_FILE);
    let mut out = csv_writer(w);
    out.write_record(["delay_s", "efficiency", "stderr"])
        .map_err(|e| csv_err(path, e))?;
    for (i, (t, e)) in curve.delays.iter().zip(&curve.efficiencies).enumerate() {
        let s = curve
            .errors
            .as_ref()
            .map_or(String::new(), |v| v[i].to_string());
        out.write_record([t.to_string(), e.to_string(), s])
            .map_err(|e| csv_err(path, e))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_decay(path: &Path) -> Result<DecayCurve> {
    let mut reader = open_csv(path, &["delay_s", "efficiency", "stderr"])?;
    let (mut delays, mut eff, mut errs) = (Vec::new(), Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec);
        delays.push(parse::<f64>(path, line, &rec[0], "delay")?);
        eff.push(parse::<f64>(path, line, &rec[1], "efficiency")?);
        let s = rec[2].trim();
        errs.push(if s.is_empty() {
            None
        } else {
            Some(parse::<f64>(path, line, s, "stderr")?)
        });
    }
    let errors = if errs.iter().all(Option::is_some) && !errs.is_empty() {
        Some(errs.into_iter().flatten().collect())
    } else if errs.iter().all(Option::is_none) {
        None
    } else {
        return Err(format_err(path, 0, "stderr must be given for all rows or none"));
    };
    DecayCurve::new(delays, eff, errors).map_err(|e| format_err(path, 0, e.to_string()))
}

// --- manifest --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heralded_trials: Option<u64>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| format_err(&path, e.line(), e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

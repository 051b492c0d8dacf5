//! On-disk record formats.
//!
//! Run and summary files are UTF-8 CSV with LF line endings and a fixed
//! header. Floats are written with 17 significant digits (C `%.17g`), which
//! round-trips every `f64` exactly. Unbounded memory is written as `inf`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{PointOutput, SweepSink};
use crate::metrics::{AggregateStats, ConvergenceStats, RoundStats};
use crate::model::MemoryWindow;
use crate::schedule::ConnectivityKind;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}, column '{column}': {message}")]
    Field { line: u64, column: &'static str, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Formats like C's `%.17g`.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };

    if !(-4..17).contains(&exp) {
        let digits = digits.trim_end_matches('0');
        let (head, tail) = digits.split_at(1);
        let frac = if tail.is_empty() { String::new() } else { format!(".{tail}") };
        let exp_sign = if exp < 0 { '-' } else { '+' };
        return format!("{sign}{head}{frac}e{exp_sign}{:02}", exp.abs());
    }
    let body = if exp >= 0 {
        let point = exp as usize + 1;
        let (int, frac) = digits.split_at(point);
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            int.to_string()
        } else {
            format!("{int}.{frac}")
        }
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("0.{zeros}{}", digits.trim_end_matches('0'))
    };
    format!("{sign}{body}")
}

/// Parameter values that identify a sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointKey {
    pub n_agents: usize,
    pub connectivity: ConnectivityKind,
    pub content_bias: f64,
    pub coordination_bias: f64,
    pub memory: MemoryWindow,
    pub mutation_rate: f64,
}

impl PointKey {
    /// Bit-level identity, for grouping.
    pub fn bits(&self) -> (usize, ConnectivityKind, u64, u64, MemoryWindow, u64) {
        (
            self.n_agents,
            self.connectivity,
            self.content_bias.to_bits(),
            self.coordination_bias.to_bits(),
            self.memory,
            self.mutation_rate.to_bits(),
        )
    }
}

/// One (run, round) row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub run_id: u64,
    pub run_seed: u64,
    pub key: PointKey,
    /// 0-based in memory, 1-based on disk.
    pub quality_owner: usize,
    pub round: u32,
    pub entropy: f64,
    pub entropy_norm: f64,
    pub adaptiveness: f64,
    pub delta_adaptiveness: f64,
    /// Whether H = 0 has been reached at or before this round.
    pub converged: bool,
}

impl RunRecord {
    pub fn stats(&self) -> RoundStats {
        RoundStats {
            round: self.round,
            entropy: self.entropy,
            entropy_norm: self.entropy_norm,
            adaptiveness: self.adaptiveness,
            delta_adaptiveness: self.delta_adaptiveness,
        }
    }
}

pub const RUN_HEADER: [&str; 15] = [
    "run_id",
    "run_seed",
    "n_agents",
    "connectivity",
    "content_bias",
    "coordination_bias",
    "memory",
    "mutation_rate",
    "quality_owner",
    "round",
    "entropy",
    "entropy_norm",
    "adaptiveness",
    "delta_adaptiveness",
    "converged_flag",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Entropy,
    EntropyNorm,
    Adaptiveness,
    DeltaAdaptiveness,
    TimeToConvergence,
}

impl Metric {
    pub const PER_ROUND: [Metric; 4] =
        [Metric::Entropy, Metric::EntropyNorm, Metric::Adaptiveness, Metric::DeltaAdaptiveness];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Entropy => "entropy",
            Metric::EntropyNorm => "entropy_norm",
            Metric::Adaptiveness => "adaptiveness",
            Metric::DeltaAdaptiveness => "delta_adaptiveness",
            Metric::TimeToConvergence => "time_to_convergence",
        }
    }

    /// Value of a per-round metric; `TimeToConvergence` is not per-round and yields NaN.
    pub fn of(self, s: &RoundStats) -> f64 {
        match self {
            Metric::Entropy => s.entropy,
            Metric::EntropyNorm => s.entropy_norm,
            Metric::Adaptiveness => s.adaptiveness,
            Metric::DeltaAdaptiveness => s.delta_adaptiveness,
            Metric::TimeToConvergence => f64::NAN,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entropy" => Ok(Metric::Entropy),
            "entropy_norm" => Ok(Metric::EntropyNorm),
            "adaptiveness" => Ok(Metric::Adaptiveness),
            "delta_adaptiveness" => Ok(Metric::DeltaAdaptiveness),
            "time_to_convergence" => Ok(Metric::TimeToConvergence),
            other => Err(format!(
                "unknown metric '{other}' (expected entropy, entropy_norm, adaptiveness, delta_adaptiveness or time_to_convergence)"
            )),
        }
    }
}

/// Aggregate of one metric at one point (and round, for per-round metrics).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRecord {
    pub point_index: usize,
    pub key: PointKey,
    /// `None` for time-to-convergence rows.
    pub round: Option<u32>,
    pub metric: Metric,
    pub mean: f64,
    pub sd: f64,
    pub ci95: f64,
    pub n: u64,
    /// Censored runs, time-to-convergence rows only.
    pub censored_n: Option<u64>,
}

impl SummaryRecord {
    pub fn per_round(point_index: usize, key: PointKey, round: u32, metric: Metric, agg: AggregateStats) -> Self {
        SummaryRecord {
            point_index,
            key,
            round: Some(round),
            metric,
            mean: agg.mean,
            sd: agg.sd,
            ci95: agg.ci95_half_width,
            n: agg.n,
            censored_n: None,
        }
    }

    /// Convergence row; statistics are NaN when fewer than two runs converged.
    pub fn convergence(point_index: usize, key: PointKey, tc: ConvergenceStats) -> Self {
        let (mean, sd, ci95) = match tc.converged {
            Some(a) => (a.mean, a.sd, a.ci95_half_width),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        SummaryRecord {
            point_index,
            key,
            round: None,
            metric: Metric::TimeToConvergence,
            mean,
            sd,
            ci95,
            n: tc.converged_n,
            censored_n: Some(tc.censored_n),
        }
    }

    /// Equality that treats NaN fields as equal to NaN.
    pub fn same_as(&self, other: &SummaryRecord) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.point_index == other.point_index
            && self.key == other.key
            && self.round == other.round
            && self.metric == other.metric
            && eq(self.mean, other.mean)
            && eq(self.sd, other.sd)
            && eq(self.ci95, other.ci95)
            && self.n == other.n
            && self.censored_n == other.censored_n
    }
}

pub const SUMMARY_HEADER: [&str; 14] = [
    "point_index",
    "n_agents",
    "connectivity",
    "content_bias",
    "coordination_bias",
    "memory",
    "mutation_rate",
    "round",
    "metric",
    "mean",
    "sd",
    "ci95",
    "n",
    "censored_n",
];

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Streaming run-record writer.
pub struct RunWriter<W: Write> {
    inner: csv::Writer<W>,
    header_pending: bool,
}

impl<W: Write> RunWriter<W> {
    pub fn new(w: W, with_header: bool) -> Self {
        RunWriter { inner: csv_writer(w), header_pending: with_header }
    }

    pub fn write(&mut self, r: &RunRecord) -> Result<(), OutputError> {
        if self.header_pending {
            self.inner.write_record(RUN_HEADER)?;
            self.header_pending = false;
        }
        self.inner.write_record([
            r.run_id.to_string(),
            r.run_seed.to_string(),
            r.key.n_agents.to_string(),
            r.key.connectivity.to_string(),
            format_g17(r.key.content_bias),
            format_g17(r.key.coordination_bias),
            r.key.memory.to_string(),
            format_g17(r.key.mutation_rate),
            (r.quality_owner + 1).to_string(),
            r.round.to_string(),
            format_g17(r.entropy),
            format_g17(r.entropy_norm),
            format_g17(r.adaptiveness),
            format_g17(r.delta_adaptiveness),
            u8::from(r.converged).to_string(),
        ])?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W, OutputError> {
        if self.header_pending {
            self.inner.write_record(RUN_HEADER)?;
        }
        self.inner.into_inner().map_err(|e| OutputError::Io(e.into_error()))
    }
}

pub fn write_runs_to<W: Write>(records: &[RunRecord], w: W) -> Result<W, OutputError> {
    let mut writer = RunWriter::new(w, true);
    for r in records {
        writer.write(r)?;
    }
    writer.into_inner()
}

pub fn write_runs(records: &[RunRecord], path: impl AsRef<Path>) -> Result<(), OutputError> {
    let file = BufWriter::new(File::create(path)?);
    write_runs_to(records, file)?.flush()?;
    Ok(())
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), OutputError> {
    let found: Vec<&str> = found.iter().collect();
    if found == expected {
        return Ok(());
    }
    let missing: Vec<&str> = expected.iter().filter(|c| !found.contains(c)).copied().collect();
    let unknown: Vec<&str> = found.iter().filter(|c| !expected.contains(c)).copied().collect();
    let mut msg = Vec::new();
    if !missing.is_empty() {
        msg.push(format!("missing columns [{}]", missing.join(", ")));
    }
    if !unknown.is_empty() {
        msg.push(format!("unknown columns [{}]", unknown.join(", ")));
    }
    if msg.is_empty() {
        msg.push(format!("columns out of order, expected [{}]", expected.join(", ")));
    }
    Err(OutputError::Schema(msg.join("; ")))
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(r)
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn get<T: std::str::FromStr>(&self, idx: usize, column: &'static str) -> Result<T, OutputError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.rec.get(idx).unwrap_or("");
        raw.parse::<T>().map_err(|e| OutputError::Field { line: self.line, column, message: format!("'{raw}': {e}") })
    }

    fn float(&self, idx: usize, column: &'static str) -> Result<f64, OutputError> {
        let raw = self.rec.get(idx).unwrap_or("");
        match raw {
            "NaN" | "nan" => Ok(f64::NAN),
            _ => self.get(idx, column),
        }
    }

    fn opt<T: std::str::FromStr>(&self, idx: usize, column: &'static str) -> Result<Option<T>, OutputError>
    where
        T::Err: std::fmt::Display,
    {
        if self.rec.get(idx).unwrap_or("").is_empty() {
            Ok(None)
        } else {
            self.get(idx, column).map(Some)
        }
    }
}

fn read_key(row: &Row<'_>, first: usize) -> Result<PointKey, OutputError> {
    Ok(PointKey {
        n_agents: row.get(first, "n_agents")?,
        connectivity: row.get(first + 1, "connectivity")?,
        content_bias: row.float(first + 2, "content_bias")?,
        coordination_bias: row.float(first + 3, "coordination_bias")?,
        memory: row.get(first + 4, "memory")?,
        mutation_rate: row.float(first + 5, "mutation_rate")?,
    })
}

pub fn read_runs_from<R: Read>(r: R) -> Result<Vec<RunRecord>, OutputError> {
    let mut reader = csv_reader(r);
    check_header(reader.headers()?, &RUN_HEADER)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = Row { rec: &rec, line: rec.position().map_or(0, |p| p.line()) };
        let owner: usize = row.get(8, "quality_owner")?;
        if owner == 0 {
            return Err(OutputError::Field {
                line: row.line,
                column: "quality_owner",
                message: "agent ids are 1-based".into(),
            });
        }
        let converged = match rec.get(14).unwrap_or("") {
            "1" => true,
            "0" => false,
            other => {
                return Err(OutputError::Field {
                    line: row.line,
                    column: "converged_flag",
                    message: format!("'{other}' is not 0 or 1"),
                })
            }
        };
        out.push(RunRecord {
            run_id: row.get(0, "run_id")?,
            run_seed: row.get(1, "run_seed")?,
            key: read_key(&row, 2)?,
            quality_owner: owner - 1,
            round: row.get(9, "round")?,
            entropy: row.float(10, "entropy")?,
            entropy_norm: row.float(11, "entropy_norm")?,
            adaptiveness: row.float(12, "adaptiveness")?,
            delta_adaptiveness: row.float(13, "delta_adaptiveness")?,
            converged,
        });
    }
    Ok(out)
}

pub fn read_runs(path: impl AsRef<Path>) -> Result<Vec<RunRecord>, OutputError> {
    read_runs_from(io::BufReader::new(File::open(path)?))
}

fn summary_fields(s: &SummaryRecord) -> [String; 14] {
    [
        s.point_index.to_string(),
        s.key.n_agents.to_string(),
        s.key.connectivity.to_string(),
        format_g17(s.key.content_bias),
        format_g17(s.key.coordination_bias),
        s.key.memory.to_string(),
        format_g17(s.key.mutation_rate),
        s.round.map(|r| r.to_string()).unwrap_or_default(),
        s.metric.as_str().to_string(),
        format_g17(s.mean),
        format_g17(s.sd),
        format_g17(s.ci95),
        s.n.to_string(),
        s.censored_n.map(|c| c.to_string()).unwrap_or_default(),
    ]
}

/// Writes summary rows (without header) to `w`.
pub fn write_summary_rows<W: Write>(summaries: &[SummaryRecord], w: W) -> Result<W, OutputError> {
    let mut writer = csv_writer(w);
    for s in summaries {
        writer.write_record(summary_fields(s))?;
    }
    writer.into_inner().map_err(|e| OutputError::Io(e.into_error()))
}

pub fn summary_header() -> Vec<u8> {
    let mut header = SUMMARY_HEADER.join(",");
    header.push('\n');
    header.into_bytes()
}

pub fn run_header() -> Vec<u8> {
    let mut header = RUN_HEADER.join(",");
    header.push('\n');
    header.into_bytes()
}

pub fn write_summary_to<W: Write>(summaries: &[SummaryRecord], mut w: W) -> Result<W, OutputError> {
    w.write_all(&summary_header())?;
    write_summary_rows(summaries, w)
}

pub fn write_summary(summaries: &[SummaryRecord], path: impl AsRef<Path>) -> Result<(), OutputError> {
    let file = BufWriter::new(File::create(path)?);
    write_summary_to(summaries, file)?.flush()?;
    Ok(())
}

pub fn read_summary_from<R: Read>(r: R) -> Result<Vec<SummaryRecord>, OutputError> {
    let mut reader = csv_reader(r);
    check_header(reader.headers()?, &SUMMARY_HEADER)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = Row { rec: &rec, line: rec.position().map_or(0, |p| p.line()) };
        out.push(SummaryRecord {
            point_index: row.get(0, "point_index")?,
            key: read_key(&row, 1)?,
            round: row.opt(7, "round")?,
            metric: row.get(8, "metric")?,
            mean: row.float(9, "mean")?,
            sd: row.float(10, "sd")?,
            ci95: row.float(11, "ci95")?,
            n: row.get(12, "n")?,
            censored_n: row.opt(13, "censored_n")?,
        });
    }
    Ok(out)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRecord>, OutputError> {
    read_summary_from(io::BufReader::new(File::open(path)?))
}

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const CHECKPOINT_FILE: &str = "sweep.checkpoint";

/// Resume marker: the next point to execute and the byte lengths of every
/// output file once all earlier points were written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub fingerprint: String,
    pub next_point: usize,
    pub runs_bytes: Option<u64>,
    pub summary_bytes: u64,
    pub convergence_bytes: u64,
}

/// Sweep output directory with a checkpoint after every point.
pub struct SweepFiles {
    dir: PathBuf,
    runs: Option<BufWriter<File>>,
    summary: BufWriter<File>,
    convergence: BufWriter<File>,
    checkpoint: Checkpoint,
}

impl SweepFiles {
    /// Starts a fresh sweep directory. `fingerprint` identifies the configuration.
    pub fn create(dir: impl AsRef<Path>, fingerprint: &str, include_runs: bool) -> Result<Self, OutputError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let runs = if include_runs {
            let mut f = BufWriter::new(File::create(dir.join(RUNS_FILE))?);
            f.write_all(&run_header())?;
            f.flush()?;
            Some(f)
        } else {
            let _ = fs::remove_file(dir.join(RUNS_FILE));
            None
        };
        let mut summary = BufWriter::new(File::create(dir.join(SUMMARY_FILE))?);
        summary.write_all(&summary_header())?;
        summary.flush()?;
        let mut convergence = BufWriter::new(File::create(dir.join(CONVERGENCE_FILE))?);
        convergence.write_all(&summary_header())?;
        convergence.flush()?;
        let header_len = |h: Vec<u8>| h.len() as u64;
        let checkpoint = Checkpoint {
            fingerprint: fingerprint.to_string(),
            next_point: 0,
            runs_bytes: include_runs.then(|| header_len(run_header())),
            summary_bytes: header_len(summary_header()),
            convergence_bytes: header_len(summary_header()),
        };
        let files = SweepFiles { dir, runs, summary, convergence, checkpoint };
        files.save_checkpoint()?;
        Ok(files)
    }

    /// Reopens an interrupted sweep, discarding anything written after the
    /// last checkpoint. Returns the sink and the next point to execute.
    pub fn resume(dir: impl AsRef<Path>, fingerprint: &str) -> Result<(Self, usize), OutputError> {
        let dir = dir.as_ref().to_path_buf();
        let text = fs::read_to_string(dir.join(CHECKPOINT_FILE))?;
        let checkpoint: Checkpoint = serde_json::from_str(&text).map_err(|e| OutputError::Checkpoint(e.to_string()))?;
        if checkpoint.fingerprint != fingerprint {
            return Err(OutputError::Checkpoint("configuration differs from the interrupted sweep".into()));
        }
        let reopen = |name: &str, len: u64| -> Result<BufWriter<File>, OutputError> {
            let f = OpenOptions::new().write(true).open(dir.join(name))?;
            if f.metadata()?.len() < len {
                return Err(OutputError::Checkpoint(format!("{name} is shorter than its checkpoint")));
            }
            f.set_len(len)?;
            let mut f = f;
            io::Seek::seek(&mut f, io::SeekFrom::End(0))?;
            Ok(BufWriter::new(f))
        };
        let runs = match checkpoint.runs_bytes {
            Some(len) => Some(reopen(RUNS_FILE, len)?),
            None => None,
        };
        let summary = reopen(SUMMARY_FILE, checkpoint.summary_bytes)?;
        let convergence = reopen(CONVERGENCE_FILE, checkpoint.convergence_bytes)?;
        let next = checkpoint.next_point;
        Ok((SweepFiles { dir, runs, summary, convergence, checkpoint }, next))
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    fn save_checkpoint(&self) -> io::Result<()> {
        let tmp = self.dir.join(format!("{CHECKPOINT_FILE}.tmp"));
        let body = serde_json::to_string_pretty(&self.checkpoint).map_err(io::Error::other)?;
        fs::write(&tmp, body + "\n")?;
        fs::rename(tmp, self.dir.join(CHECKPOINT_FILE))
    }
}

impl SweepSink for SweepFiles {
    fn wants_run_rows(&self) -> bool {
        self.runs.is_some()
    }

    fn accept(&mut self, output: &PointOutput) -> io::Result<()> {
        let to_io = |e: OutputError| match e {
            OutputError::Io(e) => e,
            other => io::Error::other(other.to_string()),
        };
        if let Some(runs) = self.runs.as_mut() {
            runs.write_all(&output.run_rows)?;
            runs.flush()?;
        }
        let summary_rows = write_summary_rows(&output.summaries, Vec::new()).map_err(to_io)?;
        self.summary.write_all(&summary_rows)?;
        self.summary.flush()?;
        let tc_rows = write_summary_rows(std::slice::from_ref(&output.convergence), Vec::new()).map_err(to_io)?;
        self.convergence.write_all(&tc_rows)?;
        self.convergence.flush()?;

        self.checkpoint.next_point = output.point_index + 1;
        if let Some(len) = self.checkpoint.runs_bytes.as_mut() {
            *len += output.run_rows.len() as u64;
        }
        self.checkpoint.summary_bytes += summary_rows.len() as u64;
        self.checkpoint.convergence_bytes += tc_rows.len() as u64;
        self.save_checkpoint()
    }
}

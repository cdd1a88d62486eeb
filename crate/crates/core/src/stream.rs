//! Stream and result formats.
//!
//! * Batches: JSON Lines, one `{"t", "l", "transition", "x"}` object per line,
//!   or a headerless CSV of observations plus a JSON sidecar mapping row ranges
//!   to `(t, l, transition)`.
//! * Results: JSON Lines of [`EpisodeRecord`], flushed after every line.
//! * Ground truth: a single JSON document.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::EpisodeRecord;
use crate::synth::GroundTruth;

/// One batch of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    /// System state, from 1.
    pub t: usize,
    /// Batch within the state, from 1.
    pub l: usize,
    /// First batch of a new state.
    pub transition: bool,
    /// `b x d` observations.
    pub x: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct BatchLine {
    t: usize,
    l: usize,
    #[serde(default)]
    transition: bool,
    x: Vec<Vec<f64>>,
}

fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let n = rows.len();
    if n == 0 {
        return Err("batch has no rows".into());
    }
    let d = rows[0].len();
    if d == 0 {
        return Err("batch has no columns".into());
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != d) {
        return Err(format!("row {bad} has {} values, expected {d}", rows[bad].len()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err("batch contains a non-finite value".into());
    }
    Ok(DMatrix::from_fn(n, d, |r, c| rows[r][c]))
}

impl Serialize for StreamBatch {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BatchLine { t: self.t, l: self.l, transition: self.transition, x: rows_of(&self.x) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StreamBatch {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let line = BatchLine::deserialize(de)?;
        let x = matrix_from_rows(&line.x).map_err(serde::de::Error::custom)?;
        Ok(StreamBatch { t: line.t, l: line.l, transition: line.transition, x })
    }
}

/// Tracks the `(t, l)` order and the stream width across batches.
#[derive(Debug, Default)]
struct Validator {
    prev: Option<(usize, usize, usize)>,
    d: Option<usize>,
}

impl Validator {
    fn check(&mut self, line: usize, b: &StreamBatch) -> Result<()> {
        if b.t == 0 || b.l == 0 {
            return Err(Error::Schema { line, message: "t and l start at 1".into() });
        }
        if let Some((prev_line, prev_t, prev_l)) = self.prev {
            if (b.t, b.l) <= (prev_t, prev_l) {
                return Err(Error::Ordering { prev_line, prev_t, prev_l, line, t: b.t, l: b.l });
            }
        }
        match self.d {
            Some(d) if d != b.x.ncols() => {
                return Err(Error::Schema { line, message: format!("batch has {} columns, stream has {d}", b.x.ncols()) })
            }
            _ => self.d = Some(b.x.ncols()),
        }
        self.prev = Some((line, b.t, b.l));
        Ok(())
    }
}

/// Lazy, validating JSON-Lines batch reader. Blank lines are skipped.
pub struct StreamReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    validator: Validator,
    failed: bool,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0, validator: Validator::default(), failed: false }
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<StreamBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let raw = self.lines.next()?;
            self.line_no += 1;
            let line = self.line_no;
            let text = match raw {
                Ok(t) => t,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::Io { context: format!("reading line {line}"), source: e }));
                }
            };
            if text.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<StreamBatch>(&text)
                .map_err(|e| Error::Schema { line, message: e.to_string() })
                .and_then(|b| self.validator.check(line, &b).map(|_| b));
            self.failed = parsed.is_err();
            return Some(parsed);
        }
    }
}

/// Opens a file, or standard input for `-`.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(BufReader::new(f)))
}

pub fn read_stream(path: &Path) -> Result<StreamReader<Box<dyn BufRead + Send>>> {
    Ok(StreamReader::new(open_input(path)?))
}

pub fn read_stream_from<R: Read>(reader: R) -> StreamReader<BufReader<R>> {
    StreamReader::new(BufReader::new(reader))
}

pub fn write_stream<'a, W: Write>(batches: impl IntoIterator<Item = &'a StreamBatch>, mut w: W) -> Result<()> {
    for b in batches {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n").map_err(|e| Error::Io { context: "writing stream".into(), source: e })?;
    }
    w.flush().map_err(|e| Error::Io { context: "writing stream".into(), source: e })
}

pub fn write_stream_file(batches: &[StreamBatch], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_stream(batches, BufWriter::new(f)).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// Sidecar entry for CSV streams: rows `start..end` form batch `(t, l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpan {
    pub t: usize,
    pub l: usize,
    #[serde(default)]
    pub transition: bool,
    pub start: usize,
    pub end: usize,
}

/// Reads a headerless CSV and its sidecar. Line numbers in errors refer to
/// sidecar entries (1-based) for ordering problems and to CSV lines otherwise.
pub fn read_csv_stream(csv_path: &Path, sidecar: &Path) -> Result<Vec<StreamBatch>> {
    let spans: Vec<BatchSpan> = {
        let f = File::open(sidecar).map_err(|e| Error::io(sidecar, e))?;
        serde_json::from_reader(BufReader::new(f))?
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(csv_path)
        .map_err(Error::Csv)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Schema { line: k + 1, message: e.to_string() })?;
        rows.push(row);
    }
    let mut validator = Validator::default();
    spans
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if s.start >= s.end || s.end > rows.len() {
                return Err(Error::Schema {
                    line: k + 1,
                    message: format!("row range {}..{} outside the {} CSV rows", s.start, s.end, rows.len()),
                });
            }
            let x = matrix_from_rows(&rows[s.start..s.end]).map_err(|message| Error::Schema { line: s.start + 1, message })?;
            let b = StreamBatch { t: s.t, l: s.l, transition: s.transition, x };
            validator.check(k + 1, &b)?;
            Ok(b)
        })
        .collect()
}

pub fn write_csv_stream(batches: &[StreamBatch], csv_path: &Path, sidecar: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(csv_path)?;
    let mut spans = Vec::with_capacity(batches.len());
    let mut row = 0;
    for b in batches {
        for r in b.x.row_iter() {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        spans.push(BatchSpan { t: b.t, l: b.l, transition: b.transition, start: row, end: row + b.x.nrows() });
        row += b.x.nrows();
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    write_json(&spans, sidecar)
}

/// Line-flushed JSON-Lines writer for episode records.
pub struct ResultsWriter<W: Write> {
    inner: W,
}

impl ResultsWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(BufWriter::new(f)))
    }
}

impl<W: Write> ResultsWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn write(&mut self, record: &EpisodeRecord) -> Result<()> {
        let io_err = |e| Error::Io { context: "writing results".into(), source: e };
        serde_json::to_writer(&mut self.inner, record)?;
        self.inner.write_all(b"\n").map_err(io_err)?;
        self.inner.flush().map_err(io_err)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub fn write_results<'a, W: Write>(records: impl IntoIterator<Item = &'a EpisodeRecord>, w: W) -> Result<()> {
    let mut out = ResultsWriter::new(w);
    records.into_iter().try_for_each(|r| out.write(r))
}

pub fn read_results(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let reader = open_input(path)?;
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Schema { line: k + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn write_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    write_json(truth, path)
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    read_json(path)
}

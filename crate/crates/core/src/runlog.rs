//! Append-only run logs.
//!
//! A log file is JSON lines: one header line holding the run configuration and
//! the search space, then one [`EvaluationRecord`] per line in candidate-id
//! order. Field order is fixed by the struct definitions, so two runs with the
//! same configuration produce identical files apart from the timing fields
//! `wall_seconds` and `worker_slot`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RunConfig;
use crate::protocol::NamedValues;
use crate::space::{ParamSpec, SearchSpace, SpaceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Failed,
    Timeout,
}

/// Outcome of evaluating one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub candidate_id: u64,
    pub generation: u64,
    pub gen_index: usize,
    pub genotype: Vec<f64>,
    pub phenotype: NamedValues,
    /// Present exactly when `status` is `ok`.
    pub objective: Option<f64>,
    pub status: EvalStatus,
    pub wall_seconds: f64,
    pub worker_slot: usize,
}

impl EvaluationRecord {
    pub fn is_ok(&self) -> bool {
        self.status == EvalStatus::Ok
    }

    /// Copy with the scheduling-dependent fields zeroed.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_seconds: 0.0,
            worker_slot: 0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_id: String,
    pub config: RunConfig,
    pub space: Vec<ParamSpec>,
}

impl RunHeader {
    pub fn new(config: &RunConfig, space: &SearchSpace) -> Self {
        Self {
            run_id: config.run_id.clone(),
            config: config.clone(),
            space: space.dims().to_vec(),
        }
    }

    pub fn search_space(&self) -> Result<SearchSpace, SpaceError> {
        SearchSpace::new(self.space.clone())
    }

    pub fn dim_names(&self) -> Vec<String> {
        self.space.iter().map(|p| p.name.clone()).collect()
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("log is empty")]
    Empty,
}

/// Complete run history.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub records: Vec<EvaluationRecord>,
}

impl RunLog {
    pub fn new(header: RunHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    /// Index of the best ok record (lowest objective, earliest on ties).
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.records.iter().enumerate() {
            if let Some(f) = r.objective.filter(|_| r.is_ok()) {
                if best.is_none_or(|(_, b)| f < b) {
                    best = Some((i, f));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn best(&self) -> Option<&EvaluationRecord> {
        self.best_index().map(|i| &self.records[i])
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Serialized log with timing fields zeroed, for reproducibility checks.
    pub fn to_jsonl_without_timing(&self) -> String {
        RunLog {
            header: self.header.clone(),
            records: self.records.iter().map(EvaluationRecord::without_timing).collect(),
        }
        .to_jsonl()
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(LogError::Empty)?;
        let header: RunHeader = serde_json::from_str(first).map_err(|e| LogError::Parse {
            line: 1,
            msg: format!("bad header: {e}"),
        })?;
        let mut log = RunLog::new(header);
        for (i, line) in lines {
            let rec = serde_json::from_str(line).map_err(|e| LogError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            log.records.push(rec);
        }
        Ok(log)
    }

    pub fn read(path: &Path) -> Result<Self, LogError> {
        let mut text = String::new();
        for line in BufReader::new(File::open(path)?).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::parse(&text)
    }
}

/// Destination for the log as it is produced.
pub trait LogSink {
    fn header(&mut self, header: &RunHeader) -> io::Result<()>;
    fn append(&mut self, record: &EvaluationRecord) -> io::Result<()>;
    /// Called at each generation barrier.
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl LogSink for NullSink {
    fn header(&mut self, _: &RunHeader) -> io::Result<()> {
        Ok(())
    }
    fn append(&mut self, _: &EvaluationRecord) -> io::Result<()> {
        Ok(())
    }
}

/// JSON-lines writer over any `Write`.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl JsonlSink<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }

    fn line<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n")
    }
}

impl<W: Write> LogSink for JsonlSink<W> {
    fn header(&mut self, header: &RunHeader) -> io::Result<()> {
        self.line(header)
    }
    fn append(&mut self, record: &EvaluationRecord) -> io::Result<()> {
        self.line(record)
    }
    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

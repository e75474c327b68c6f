//! Append-only JSON-lines campaign event log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evolver::{CampaignConfig, FinishReason};
use crate::genome::Genome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case", rename_all_fields = "camelCase")]
pub enum Event {
    CampaignCreated {
        config: CampaignConfig,
    },
    IndividualEvaluated {
        genome: Genome,
        fitness: f64,
        index: u64,
    },
    GenerationAdvanced {
        generation: u64,
        evaluations: u64,
        best_fitness: f64,
    },
    ModelRetrained {
        loss: f64,
        evaluations: u64,
    },
    CampaignFinished {
        evaluations: u64,
        best_fitness: f64,
        reason: FinishReason,
        evaluations_to_threshold: Option<u64>,
    },
    EvaluationRequested {
        request_id: String,
        genome: Genome,
        genome_hash: String,
    },
    MeasurementResolved {
        request_id: String,
        rpm: f64,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::CampaignCreated { .. } => "campaign_created",
            Event::IndividualEvaluated { .. } => "individual_evaluated",
            Event::GenerationAdvanced { .. } => "generation_advanced",
            Event::ModelRetrained { .. } => "model_retrained",
            Event::CampaignFinished { .. } => "campaign_finished",
            Event::EvaluationRequested { .. } => "evaluation_requested",
            Event::MeasurementResolved { .. } => "measurement_resolved",
        }
    }
}

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// Writer half of an event log file.
pub struct EventLog {
    path: PathBuf,
    writer: BufWriter<File>,
    next_seq: u64,
    durable: bool,
}

impl EventLog {
    /// Creates (truncating) a log.
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path)?;
        Ok(Self { path, writer: BufWriter::new(file), next_seq: 1, durable: false })
    }

    /// Opens an existing log for appending after `records`, which must be the
    /// log's parsed content. A torn trailing line is cut off first.
    pub fn append_to(path: impl AsRef<Path>, records: &[EventRecord]) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let valid_len = valid_prefix_len(&path)?;
        let file = OpenOptions::new().write(true).open(&path)?;
        file.set_len(valid_len)?;
        drop(file);
        let file = OpenOptions::new().append(true).open(&path)?;
        let next_seq = records.last().map_or(1, |r| r.seq + 1);
        Ok(Self { path, writer: BufWriter::new(file), next_seq, durable: false })
    }

    /// Flush and fsync after every append.
    pub fn durable(mut self, on: bool) -> Self {
        self.durable = on;
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn append(&mut self, event: Event, timestamp: Option<String>) -> std::io::Result<EventRecord> {
        let record = EventRecord { seq: self.next_seq, event, timestamp };
        serde_json::to_writer(&mut self.writer, &record)?;
        self.writer.write_all(b"\n")?;
        if self.durable {
            self.writer.flush()?;
            self.writer.get_ref().sync_data()?;
        }
        self.next_seq += 1;
        Ok(record)
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        let _ = self.writer.flush();
    }
}

fn valid_prefix_len(path: &Path) -> std::io::Result<u64> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut len = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 || !line.ends_with('\n') || serde_json::from_str::<EventRecord>(line.trim_end()).is_err() {
            return Ok(len);
        }
        len += n as u64;
    }
}

/// Reads every complete record. Parsing stops at the first torn or
/// unparsable line, which can only be the tail of an interrupted append.
pub fn read_events(path: impl AsRef<Path>) -> std::io::Result<Vec<EventRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EventRecord>(&line) {
            Ok(record) => out.push(record),
            Err(_) => break,
        }
    }
    Ok(out)
}

//! Couples a [`Campaign`] with its fitness source and turns every state
//! change into log events. Replaying a log is running a fresh driver and
//! feeding it the recorded measurements.

use vawt_core::evolver::Campaign;
use vawt_core::fitness::{FitnessOracle, ManualOracle, MeasurementRequest};
use vawt_core::{CampaignConfig, ConfigError, EngineError, Event, EventRecord, FitnessError};

enum Source {
    Computed(Box<dyn FitnessOracle + Send>),
    Manual { oracle: ManualOracle, batch: Vec<String> },
}

pub struct Driver {
    engine: Campaign,
    source: Source,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("event {seq} does not match the replayed campaign")]
    Divergence { seq: u64 },
    #[error("event {seq} ({kind}) cannot be replayed as an input")]
    UnexpectedInput { seq: u64, kind: &'static str },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
}

impl Driver {
    pub fn new(cfg: CampaignConfig) -> Result<Self, ConfigError> {
        let source = match cfg.computed_oracle() {
            Some(oracle) => Source::Computed(oracle),
            None => Source::Manual { oracle: ManualOracle::new(), batch: Vec::new() },
        };
        Ok(Self { engine: Campaign::new(cfg)?, source })
    }

    pub fn campaign(&self) -> &Campaign {
        &self.engine
    }

    pub fn is_manual(&self) -> bool {
        matches!(self.source, Source::Manual { .. })
    }

    /// Manual campaigns: requests still awaiting a measurement.
    pub fn pending(&self) -> Vec<MeasurementRequest> {
        match &self.source {
            Source::Manual { oracle, .. } => oracle.pending().cloned().collect(),
            Source::Computed(_) => Vec::new(),
        }
    }

    pub fn awaiting_measurement(&self) -> bool {
        match &self.source {
            Source::Manual { batch, .. } => !batch.is_empty(),
            Source::Computed(_) => false,
        }
    }

    /// Computed campaigns run one unit of work; manual campaigns issue the
    /// next batch of measurement requests if none is outstanding.
    pub fn advance(&mut self) -> Result<Vec<Event>, EngineError> {
        match &mut self.source {
            Source::Computed(oracle) => {
                self.engine.step(oracle.as_mut())?;
                Ok(self.engine.take_events())
            }
            Source::Manual { oracle, batch } => {
                if !batch.is_empty() {
                    return Ok(Vec::new());
                }
                let mut events = Vec::new();
                if let Some(genomes) = self.engine.next_batch()? {
                    events.extend(self.engine.take_events());
                    for genome in &genomes {
                        batch.push(oracle.request_measurement(genome).request_id);
                    }
                    events.extend(oracle.take_events());
                }
                Ok(events)
            }
        }
    }

    /// Records a measurement. Once the outstanding batch is complete the
    /// engine consumes it and the next batch is requested.
    pub fn submit(&mut self, request_id: &str, rpm: f64) -> Result<Vec<Event>, SubmitError> {
        let Source::Manual { oracle, batch } = &mut self.source else {
            return Err(SubmitError::NotManual);
        };
        oracle.resolve_measurement(request_id, rpm)?;
        let mut events = oracle.take_events();
        let complete = batch.iter().all(|id| oracle.get(id).is_some_and(|r| r.rpm.is_some()));
        if complete {
            let values: Vec<f64> = batch.iter().map(|id| oracle.get(id).and_then(|r| r.rpm).unwrap()).collect();
            batch.clear();
            self.engine.supply(&values)?;
            events.extend(self.engine.take_events());
            events.extend(self.advance()?);
        }
        Ok(events)
    }

    /// Rebuilds a driver from a recorded log. Returns the driver positioned
    /// at the end of the log plus any events the log is missing because the
    /// previous process stopped part-way through writing a unit of work.
    pub fn replay(cfg: CampaignConfig, records: &[EventRecord]) -> Result<(Self, Vec<Event>), ReplayError> {
        let mut driver = Self::new(cfg).map_err(EngineError::from)?;
        let mut cursor = Cursor { records, pos: 0, tail: Vec::new() };
        cursor.check(driver.advance()?)?;
        while cursor.pos < records.len() {
            let record = &records[cursor.pos];
            if driver.is_manual() {
                match &record.event {
                    Event::MeasurementResolved { request_id, rpm } => {
                        let events = driver.submit(request_id, *rpm).map_err(|e| match e {
                            SubmitError::Fitness(f) => ReplayError::Fitness(f),
                            SubmitError::Engine(e) => ReplayError::Engine(e),
                            SubmitError::NotManual => unreachable!(),
                        })?;
                        cursor.check(events)?;
                    }
                    other => return Err(ReplayError::UnexpectedInput { seq: record.seq, kind: other.kind() }),
                }
            } else {
                if driver.engine.is_finished() {
                    return Err(ReplayError::Divergence { seq: record.seq });
                }
                cursor.check(driver.advance()?)?;
            }
        }
        Ok((driver, cursor.tail))
    }
}

struct Cursor<'a> {
    records: &'a [EventRecord],
    pos: usize,
    tail: Vec<Event>,
}

impl Cursor<'_> {
    fn check(&mut self, produced: Vec<Event>) -> Result<(), ReplayError> {
        for event in produced {
            match self.records.get(self.pos) {
                Some(record) if record.event == event => self.pos += 1,
                Some(record) => return Err(ReplayError::Divergence { seq: record.seq }),
                None => self.tail.push(event),
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("campaign does not take manual measurements")]
    NotManual,
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

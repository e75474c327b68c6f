//! Campaign directories, engine threads and the read-side views they publish.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use tokio::sync::oneshot;
use vawt_core::evolver::{HistoryPoint, Individual};
use vawt_core::fitness::MeasurementRequest;
use vawt_core::{read_events, CampaignConfig, Event, EventLog, FinishReason, Genome};

use crate::driver::{Driver, ReplayError, SubmitError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Running,
    AwaitingMeasurement,
    Finished,
}

/// Read-side copy of a campaign, refreshed by its engine thread.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CampaignView {
    pub status: Status,
    pub generation: u64,
    pub evaluations: u64,
    pub best_fitness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluations_to_threshold: Option<u64>,
    pub history: Vec<HistoryPoint>,
    pub population: Vec<Individual>,
    pub pending: Vec<MeasurementRequest>,
    /// Every genome the campaign has produced, by hash.
    #[serde(skip)]
    pub genomes: HashMap<String, Genome>,
    #[serde(skip)]
    archive_seen: usize,
}

impl CampaignView {
    fn new() -> Self {
        Self {
            status: Status::Running,
            generation: 0,
            evaluations: 0,
            best_fitness: None,
            finish_reason: None,
            evaluations_to_threshold: None,
            history: Vec::new(),
            population: Vec::new(),
            pending: Vec::new(),
            genomes: HashMap::new(),
            archive_seen: 0,
        }
    }

    fn refresh(&mut self, driver: &Driver) {
        let c = driver.campaign();
        self.status = if c.is_finished() {
            Status::Finished
        } else if driver.awaiting_measurement() {
            Status::AwaitingMeasurement
        } else {
            Status::Running
        };
        self.generation = c.generation();
        self.evaluations = c.evaluations();
        self.best_fitness = c.best_fitness();
        self.finish_reason = c.finish_reason();
        self.evaluations_to_threshold = c.evaluations_to_threshold();
        let history = c.history_series();
        if history.len() < self.history.len() {
            self.history.clear();
        }
        self.history.extend_from_slice(&history[self.history.len()..]);
        self.population = c.population().to_vec();
        self.pending = driver.pending();
        for entry in &c.archive()[self.archive_seen..] {
            self.genomes.entry(entry.genome.hash_hex()).or_insert_with(|| entry.genome.clone());
        }
        self.archive_seen = c.archive().len();
        for g in self.population.iter().map(|i| &i.genome).chain(self.pending.iter().map(|r| &r.genome)) {
            self.genomes.entry(g.hash_hex()).or_insert_with(|| g.clone());
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SubmitAck {
    pub request_id: String,
    pub rpm: f64,
    pub evaluations: u64,
    pub generation: u64,
    pub status: Status,
    pub pending: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Submit(#[from] SubmitError),
    #[error("event log write failed: {0}")]
    Io(#[from] io::Error),
    #[error("campaign engine is not running")]
    Stopped,
}

enum Command {
    Submit { request_id: String, rpm: f64, reply: oneshot::Sender<Result<SubmitAck, CommandError>> },
    Shutdown,
}

pub struct CampaignHandle {
    pub id: String,
    pub created_at: String,
    pub config: CampaignConfig,
    dir: PathBuf,
    view: RwLock<CampaignView>,
    commands: Mutex<Option<mpsc::Sender<Command>>>,
    stop: AtomicBool,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl CampaignHandle {
    pub fn view(&self) -> std::sync::RwLockReadGuard<'_, CampaignView> {
        self.view.read().expect("view lock poisoned")
    }

    pub fn genome(&self, hash: &str) -> Option<Genome> {
        self.view().genomes.get(hash).cloned()
    }

    /// Sends a measurement to the engine thread and waits until it has been
    /// logged and the engine has moved on to its next wait.
    pub async fn submit(&self, request_id: String, rpm: f64) -> Result<SubmitAck, CommandError> {
        let (reply, rx) = oneshot::channel();
        let sent = self
            .commands
            .lock()
            .expect("command lock poisoned")
            .as_ref()
            .map(|tx| tx.send(Command::Submit { request_id, rpm, reply }).is_ok());
        if sent != Some(true) {
            return Err(CommandError::Stopped);
        }
        rx.await.unwrap_or(Err(CommandError::Stopped))
    }

    fn publish(&self, driver: &Driver) {
        self.view.write().expect("view lock poisoned").refresh(driver);
    }

    fn write_snapshot(&self) -> io::Result<()> {
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Snapshot<'a> {
            id: &'a str,
            created_at: &'a str,
            config: &'a CampaignConfig,
            #[serde(flatten)]
            view: &'a CampaignView,
        }
        let view = self.view();
        let snapshot = Snapshot { id: &self.id, created_at: &self.created_at, config: &self.config, view: &view };
        let tmp = self.dir.join("snapshot.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&snapshot)?)?;
        fs::rename(tmp, self.dir.join("snapshot.json"))
    }

    fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(tx) = self.commands.lock().expect("command lock poisoned").take() {
            let _ = tx.send(Command::Shutdown);
        }
        if let Some(thread) = self.thread.lock().expect("thread lock poisoned").take() {
            let _ = thread.join();
        }
        let _ = self.write_snapshot();
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn append(log: &mut EventLog, events: Vec<Event>) -> io::Result<()> {
    for event in events {
        log.append(event, Some(now()))?;
    }
    log.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("config.json: {0}")]
    Config(#[from] serde_json::Error),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// All campaigns under one data directory.
pub struct Registry {
    root: PathBuf,
    campaigns: RwLock<BTreeMap<String, Arc<CampaignHandle>>>,
}

impl Registry {
    /// Opens `data_dir`, replaying every campaign found there.
    pub fn open(data_dir: impl AsRef<Path>) -> io::Result<Self> {
        let root = data_dir.as_ref().join("campaigns");
        fs::create_dir_all(&root)?;
        let registry = Self { root, campaigns: RwLock::new(BTreeMap::new()) };
        let mut dirs: Vec<PathBuf> = fs::read_dir(&registry.root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("config.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            if let Err(e) = registry.load(&dir) {
                eprintln!("skipping campaign {}: {e}", dir.display());
            }
        }
        Ok(registry)
    }

    pub fn list(&self) -> Vec<Arc<CampaignHandle>> {
        let mut all: Vec<_> = self.campaigns.read().expect("registry lock poisoned").values().cloned().collect();
        all.sort_by(|a, b| (&a.created_at, &a.id).cmp(&(&b.created_at, &b.id)));
        all
    }

    pub fn get(&self, id: &str) -> Option<Arc<CampaignHandle>> {
        self.campaigns.read().expect("registry lock poisoned").get(id).cloned()
    }

    /// Creates and starts a campaign. `config` must already be valid.
    pub fn create(&self, config: CampaignConfig) -> Result<Arc<CampaignHandle>, LoadError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join(&id);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.json"), serde_json::to_vec_pretty(&config)?)?;
        let log = EventLog::create(dir.join("events.jsonl"))?;
        let driver = Driver::new(config.clone()).map_err(|e| ReplayError::Engine(e.into()))?;
        let handle = self.spawn(id, now(), config, dir, driver, log, Vec::new())?;
        Ok(handle)
    }

    fn load(&self, dir: &Path) -> Result<(), LoadError> {
        let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let config: CampaignConfig = serde_json::from_slice(&fs::read(dir.join("config.json"))?)?;
        let path = dir.join("events.jsonl");
        if !path.exists() {
            fs::write(&path, b"")?;
        }
        let records = read_events(&path)?;
        let created_at = records.first().and_then(|r| r.timestamp.clone()).unwrap_or_else(now);
        let log = EventLog::append_to(&path, &records)?;
        let (driver, tail) = Driver::replay(config.clone(), &records)?;
        self.spawn(id, created_at, config, dir.to_path_buf(), driver, log, tail)?;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn spawn(
        &self,
        id: String,
        created_at: String,
        config: CampaignConfig,
        dir: PathBuf,
        mut driver: Driver,
        mut log: EventLog,
        tail: Vec<Event>,
    ) -> Result<Arc<CampaignHandle>, LoadError> {
        let manual = driver.is_manual();
        log = log.durable(manual);
        append(&mut log, tail)?;
        if manual {
            // Issue the first measurement requests before anyone can read
            // the campaign, so a fresh campaign is listed with its batch.
            append(&mut log, driver.advance().map_err(ReplayError::from)?)?;
        }
        let (tx, rx) = mpsc::channel();
        let handle = Arc::new(CampaignHandle {
            id: id.clone(),
            created_at,
            config,
            dir,
            view: RwLock::new(CampaignView::new()),
            commands: Mutex::new(Some(tx)),
            stop: AtomicBool::new(false),
            thread: Mutex::new(None),
        });
        handle.publish(&driver);
        let _ = handle.write_snapshot();
        let worker = Arc::clone(&handle);
        let thread = std::thread::Builder::new().name(format!("campaign-{id}")).spawn(move || {
            if manual {
                run_manual(&worker, driver, log, rx)
            } else {
                run_computed(&worker, driver, log)
            }
        })?;
        *handle.thread.lock().expect("thread lock poisoned") = Some(thread);
        self.campaigns.write().expect("registry lock poisoned").insert(id, Arc::clone(&handle));
        Ok(handle)
    }

    /// Stops every engine thread and writes final snapshots.
    pub fn shutdown(&self) {
        for handle in self.list() {
            handle.shutdown();
        }
    }
}

const SNAPSHOT_EVERY: u64 = 500;

fn run_computed(handle: &CampaignHandle, mut driver: Driver, mut log: EventLog) {
    let mut last_snapshot = driver.campaign().evaluations();
    while !driver.campaign().is_finished() && !handle.stop.load(Ordering::SeqCst) {
        let events = match driver.advance() {
            Ok(events) => events,
            Err(e) => {
                eprintln!("campaign {} stopped: {e}", handle.id);
                break;
            }
        };
        if let Err(e) = append(&mut log, events) {
            eprintln!("campaign {} stopped: {e}", handle.id);
            break;
        }
        handle.publish(&driver);
        if driver.campaign().evaluations() >= last_snapshot + SNAPSHOT_EVERY {
            last_snapshot = driver.campaign().evaluations();
            let _ = handle.write_snapshot();
        }
    }
    let _ = log.flush();
    let _ = handle.write_snapshot();
}

fn run_manual(handle: &CampaignHandle, mut driver: Driver, mut log: EventLog, rx: mpsc::Receiver<Command>) {
    while let Ok(Command::Submit { request_id, rpm, reply }) = rx.recv() {
        let result = driver
            .submit(&request_id, rpm)
            .map_err(CommandError::from)
            .and_then(|events| append(&mut log, events).map_err(CommandError::from))
            .map(|()| {
                handle.publish(&driver);
                let _ = handle.write_snapshot();
                let c = driver.campaign();
                let view = handle.view();
                SubmitAck {
                    request_id,
                    rpm,
                    evaluations: c.evaluations(),
                    generation: c.generation(),
                    status: view.status,
                    pending: view.pending.len(),
                }
            });
        let _ = reply.send(result);
    }
    let _ = log.flush();
}

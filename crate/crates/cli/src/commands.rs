//! Single-campaign runs, STL export and design lookup.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use vawt_core::{
    build_phenotype, laplacian_smooth, read_events, voxels_to_mesh, write_stl, Campaign, CampaignConfig, ConfigError,
    EngineError, Event, EventLog, Genome, GenomeError, MeshError, OracleKind, StlFormat,
};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid genome: {0}")]
    Genome(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CommandError {
    /// 2 for bad input or I/O, 1 for anything that went wrong while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Config(_) | CommandError::Genome(_) | CommandError::Io(_) => 2,
            CommandError::Mesh(MeshError::Io(_)) => 2,
            CommandError::Engine(_) | CommandError::Mesh(_) => 1,
        }
    }
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e.to_string())
    }
}

impl From<csv::Error> for CommandError {
    fn from(e: csv::Error) -> Self {
        CommandError::Io(e.into())
    }
}

impl From<GenomeError> for CommandError {
    fn from(e: GenomeError) -> Self {
        CommandError::Genome(e.to_string())
    }
}

#[derive(Debug, Default, Clone)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub oracle: Option<OracleKind>,
    pub z_mode: bool,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
}

pub struct RunSummary {
    pub campaign: Campaign,
    pub history_csv: PathBuf,
    pub events: PathBuf,
}

pub fn load_config(opts: &RunOptions) -> Result<CampaignConfig, CommandError> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| CommandError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<CampaignConfig>(&text)
                .map_err(|e| CommandError::Config(format!("{}: {e}", path.display())))?
        }
        None => CampaignConfig::default(),
    };
    if let Some(oracle) = opts.oracle {
        cfg.oracle = oracle;
    }
    if opts.z_mode {
        cfg.z_mode = true;
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(budget) = opts.budget {
        cfg.evaluation_budget = budget;
    }
    if !cfg.oracle.is_computed() {
        return Err(CommandError::Config("oracle must be target or proxy; manual campaigns run in the service".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one campaign to completion, writing `history.csv` (one row per real
/// evaluation) and `events.jsonl` into `out_dir`.
pub fn run(opts: &RunOptions, out_dir: &Path) -> Result<RunSummary, CommandError> {
    let cfg = load_config(opts)?;
    let mut oracle = cfg.computed_oracle().expect("checked computed above");
    fs::create_dir_all(out_dir)?;
    let events_path = out_dir.join("events.jsonl");
    let mut log = EventLog::create(&events_path)?;
    let mut campaign = Campaign::new(cfg)?;
    loop {
        let more = campaign.step(oracle.as_mut())?;
        for event in campaign.take_events() {
            log.append(event, None)?;
        }
        if !more {
            break;
        }
    }
    log.flush()?;

    let history_path = out_dir.join("history.csv");
    let mut writer = csv::Writer::from_path(&history_path)?;
    writer.write_record(["evaluation", "fitness", "bestFitness", "genomeHash", "genome"])?;
    let mut best = f64::NEG_INFINITY;
    for entry in campaign.archive() {
        best = best.max(entry.fitness);
        writer.write_record([
            entry.index.to_string(),
            entry.fitness.to_string(),
            best.to_string(),
            entry.genome.hash_hex(),
            entry.genome.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(RunSummary { campaign, history_csv: history_path, events: events_path })
}

fn is_hash(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Parses a genome literal, or looks a genome hash up in the event logs
/// under `<data_dir>/campaigns/`.
pub fn resolve_genome(input: &str, data_dir: Option<&Path>) -> Result<Genome, CommandError> {
    let input = input.trim();
    if !is_hash(input) {
        return Ok(input.parse::<Genome>()?);
    }
    let hash = input.to_ascii_lowercase();
    let Some(dir) = data_dir else {
        return Err(CommandError::Genome(format!("{hash} looks like a genome hash; pass --data-dir to look it up")));
    };
    let campaigns = dir.join("campaigns");
    let entries = match fs::read_dir(&campaigns) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(CommandError::Genome(format!("no campaigns under {}", dir.display())))
        }
        Err(e) => return Err(e.into()),
    };
    let mut logs: Vec<PathBuf> =
        entries.filter_map(|e| e.ok()).map(|e| e.path().join("events.jsonl")).filter(|p| p.is_file()).collect();
    logs.sort();
    for path in logs {
        for record in read_events(&path)? {
            let genome = match record.event {
                Event::IndividualEvaluated { genome, .. } | Event::EvaluationRequested { genome, .. } => genome,
                _ => continue,
            };
            if genome.hash_hex() == hash {
                return Ok(genome);
            }
        }
    }
    Err(CommandError::Genome(format!("design {hash} not found under {}", dir.display())))
}

pub struct ExportSummary {
    pub triangles: usize,
    pub volume_mm3: f64,
    pub enabled_voxels: usize,
}

pub fn export_stl(genome: &Genome, smooth: u32, format: StlFormat, out: &Path) -> Result<ExportSummary, CommandError> {
    let grid = build_phenotype(genome);
    let mesh = laplacian_smooth(&voxels_to_mesh(&grid)?, i64::from(smooth))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut file = io::BufWriter::new(fs::File::create(out)?);
    write_stl(&mesh, format, &mut file)?;
    io::Write::flush(&mut file)?;
    Ok(ExportSummary {
        triangles: mesh.triangles.len(),
        volume_mm3: mesh.signed_volume(),
        enabled_voxels: grid.enabled_count(),
    })
}

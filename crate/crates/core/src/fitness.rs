//! Fitness oracles.
//!
//! * target: fraction of the 10⁶ voxels whose occupancy agrees with a target
//!   phenotype.
//! * proxy: a fixed synthetic score used to exercise the tip-speed loop
//!   without hardware. It has no aerodynamic meaning.
//! * manual: operator-entered tip-speed measurements, resolved
//!   asynchronously through request ids.

use serde::{Deserialize, Serialize};

use crate::error::FitnessError;
use crate::events::Event;
use crate::genome::{genome_hash, Genome};
use crate::morphology::{build_layer, build_phenotype, Layer, VoxelGrid, GRID_CELLS, LAYER_CELLS};

/// Target genome used by the target-matching experiment.
pub const REFERENCE_TARGET: [i16; 10] = [2, 2, 3, 4, 5, 8, 13, 20, 34, 40];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Target,
    Proxy,
    Manual,
}

impl OracleKind {
    /// Fitness units that map to a surrogate output of 1.
    pub fn default_fitness_scale(self) -> f64 {
        match self {
            OracleKind::Target => 1.0,
            OracleKind::Proxy => 10_000.0,
            OracleKind::Manual => 2000.0,
        }
    }

    pub fn is_computed(self) -> bool {
        self != OracleKind::Manual
    }
}

impl std::str::FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "target" => Ok(OracleKind::Target),
            "proxy" => Ok(OracleKind::Proxy),
            "manual" => Ok(OracleKind::Manual),
            other => Err(format!("unknown oracle {other:?}, expected target, proxy or manual")),
        }
    }
}

/// A synchronous real-fitness source.
pub trait FitnessOracle {
    fn kind(&self) -> OracleKind;
    fn evaluate(&mut self, genome: &Genome) -> Result<f64, FitnessError>;
    /// Completed real evaluations so far.
    fn evaluation_count(&self) -> u64;
}

/// Fraction of all voxels with equal occupancy in both grids.
pub fn grid_match_fraction(a: &VoxelGrid, b: &VoxelGrid) -> f64 {
    a.matching_voxels(b) as f64 / GRID_CELLS as f64
}

/// Fraction of the cells of one slice with equal occupancy.
pub fn layer_match_fraction(a: &Layer, b: &Layer) -> f64 {
    (LAYER_CELLS - a.mismatches(b)) as f64 / LAYER_CELLS as f64
}

fn fraction_against(genome: &Genome, target: &VoxelGrid, target_layer: Option<&Layer>) -> f64 {
    match target_layer {
        // Both z-uniform: the grid ratio (10⁶ - 100m) / 10⁶ and the slice
        // ratio (10⁴ - m) / 10⁴ are the same rational, so the quotient is
        // bit-identical.
        Some(layer) if !genome.is_z_mode() => {
            let candidate = build_layer(genome.base()).expect("validated genome");
            layer_match_fraction(&candidate, layer)
        }
        _ => grid_match_fraction(&build_phenotype(genome), target),
    }
}

/// Match fraction of `genome`'s phenotype against `target`, in `[0, 1]`.
pub fn target_fitness(genome: &Genome, target: &VoxelGrid) -> f64 {
    fraction_against(genome, target, target.uniform_layer())
}

#[derive(Debug, Clone)]
pub struct TargetOracle {
    target: VoxelGrid,
    uniform: Option<Layer>,
    evaluations: u64,
}

impl TargetOracle {
    pub fn new(target: VoxelGrid) -> Self {
        let uniform = target.uniform_layer().cloned();
        Self { target, uniform, evaluations: 0 }
    }

    pub fn from_genome(target: &Genome) -> Self {
        Self::new(build_phenotype(target))
    }

    pub fn target(&self) -> &VoxelGrid {
        &self.target
    }

    /// Fitness without counting an evaluation.
    pub fn score(&self, genome: &Genome) -> f64 {
        fraction_against(genome, &self.target, self.uniform.as_ref())
    }
}

impl FitnessOracle for TargetOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::Target
    }

    fn evaluate(&mut self, genome: &Genome) -> Result<f64, FitnessError> {
        let fitness = self.score(genome);
        self.evaluations += 1;
        Ok(fitness)
    }

    fn evaluation_count(&self) -> u64 {
        self.evaluations
    }
}

/// Synthetic rpm-like score: `4 Σ (i+1) a_i` over the base alleles plus
/// `Σ |v_j|` over the z-alleles. Monotone in every base allele.
pub fn proxy_tip_speed(genome: &Genome) -> f64 {
    let base: i64 = genome.base().iter().enumerate().map(|(i, &a)| (i as i64 + 1) * i64::from(a)).sum();
    let z: i64 = genome.z_alleles().map_or(0, |z| z.iter().map(|&v| i64::from(v).abs()).sum());
    (4 * base + z) as f64
}

#[derive(Debug, Clone, Default)]
pub struct ProxyOracle {
    evaluations: u64,
}

impl ProxyOracle {
    pub fn new() -> Self {
        Self::default()
    }
}

impl FitnessOracle for ProxyOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::Proxy
    }

    fn evaluate(&mut self, genome: &Genome) -> Result<f64, FitnessError> {
        self.evaluations += 1;
        Ok(proxy_tip_speed(genome))
    }

    fn evaluation_count(&self) -> u64 {
        self.evaluations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestStatus {
    Pending,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasurementRequest {
    pub request_id: String,
    pub genome: Genome,
    pub genome_hash: String,
    pub status: RequestStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedEvaluation {
    pub request_id: String,
    pub genome: Genome,
    pub fitness: f64,
}

/// An rpm reading as submitted: a JSON number or a decimal string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RpmValue {
    Number(f64),
    Text(String),
}

impl RpmValue {
    pub fn to_rpm(&self) -> Result<f64, FitnessError> {
        let value = match self {
            RpmValue::Number(v) => *v,
            RpmValue::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| FitnessError::Validation(format!("rpm {s:?} is not a decimal number")))?,
        };
        validate_rpm(value)
    }
}

pub fn validate_rpm(rpm: f64) -> Result<f64, FitnessError> {
    if !rpm.is_finite() {
        return Err(FitnessError::Validation(format!("rpm {rpm} is not finite")));
    }
    if rpm < 0.0 {
        return Err(FitnessError::Validation(format!("rpm {rpm} is negative")));
    }
    Ok(rpm)
}

/// Bookkeeping for operator-measured fitness.
///
/// Request ids are sequential (`req-000001`, ...) so a replayed campaign
/// reissues the same ids. Every state change is also queued as an [`Event`]
/// for the caller to persist.
#[derive(Debug, Clone, Default)]
pub struct ManualOracle {
    requests: Vec<MeasurementRequest>,
    evaluations: u64,
    events: Vec<Event>,
}

impl ManualOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn request_measurement(&mut self, genome: &Genome) -> MeasurementRequest {
        let request = MeasurementRequest {
            request_id: format!("req-{:06}", self.requests.len() + 1),
            genome: genome.clone(),
            genome_hash: genome_hash(genome),
            status: RequestStatus::Pending,
            rpm: None,
        };
        self.events.push(Event::EvaluationRequested {
            request_id: request.request_id.clone(),
            genome: request.genome.clone(),
            genome_hash: request.genome_hash.clone(),
        });
        self.requests.push(request.clone());
        request
    }

    pub fn resolve_measurement(&mut self, request_id: &str, rpm: f64) -> Result<CompletedEvaluation, FitnessError> {
        let request = self
            .requests
            .iter_mut()
            .find(|r| r.request_id == request_id)
            .ok_or_else(|| FitnessError::NotFound(request_id.to_string()))?;
        if request.status == RequestStatus::Resolved {
            return Err(FitnessError::Conflict(request_id.to_string()));
        }
        let rpm = validate_rpm(rpm)?;
        request.status = RequestStatus::Resolved;
        request.rpm = Some(rpm);
        self.evaluations += 1;
        self.events.push(Event::MeasurementResolved { request_id: request_id.to_string(), rpm });
        Ok(CompletedEvaluation { request_id: request_id.to_string(), genome: request.genome.clone(), fitness: rpm })
    }

    pub fn get(&self, request_id: &str) -> Option<&MeasurementRequest> {
        self.requests.iter().find(|r| r.request_id == request_id)
    }

    pub fn pending(&self) -> impl Iterator<Item = &MeasurementRequest> {
        self.requests.iter().filter(|r| r.status == RequestStatus::Pending)
    }

    pub fn requests(&self) -> &[MeasurementRequest] {
        &self.requests
    }

    pub fn evaluation_count(&self) -> u64 {
        self.evaluations
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }
}

//! Voxel-encoded vertical-axis turbine design: genomes, voxel phenotypes,
//! STL meshes, fitness oracles, an MLP surrogate and the steady-state GA
//! that ties them together.

pub mod error;
pub mod events;
pub mod evolver;
pub mod fitness;
pub mod genome;
pub mod mesh;
pub mod morphology;
pub mod stats;
pub mod surrogate;

pub use error::{ConfigError, EngineError, FieldError, FitnessError, GenomeError, MeshError, ModelError};
pub use events::{read_events, Event, EventLog, EventRecord};
pub use evolver::{init_campaign, run_campaign, Campaign, CampaignConfig, FinishReason, HistoryPoint, Mode};
pub use fitness::{FitnessOracle, ManualOracle, OracleKind, ProxyOracle, TargetOracle, REFERENCE_TARGET};
pub use genome::{genome_hash, Genome, MutationConfig};
pub use mesh::{laplacian_smooth, voxels_to_mesh, write_stl, StlFormat, TriangleMesh};
pub use morphology::{build_phenotype, VoxelGrid};
pub use stats::{welch_t_test, StatsSummary, WelchResult};
pub use surrogate::{SurrogateModel, TrainingConfig};

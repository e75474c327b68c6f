//! Steady-state GA with an optional MLP surrogate.
//!
//! [`Campaign`] is a resumable state machine. Callers pull the genomes that
//! need real evaluation with [`Campaign::next_batch`] and hand the fitness
//! values back with [`Campaign::supply`]. Computed oracles go through the
//! blocking wrappers ([`Campaign::step`], [`run_campaign`]); the service feeds
//! operator measurements through the same two calls, so a replayed log drives
//! the engine down exactly the same path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, EngineError, FieldError, GenomeError};
use crate::events::Event;
use crate::fitness::{FitnessOracle, OracleKind, ProxyOracle, TargetOracle, REFERENCE_TARGET};
use crate::genome::{mutate, random_genome, scale_for_model, Genome, MutationConfig, BASE_LEN, Z_LEN};
use crate::surrogate::{evaluate_loss, train_incremental, EvaluatedPair, SurrogateModel, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GaOnly,
    Surrogate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::GaOnly => "ga-only",
            Mode::Surrogate => "surrogate",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ga-only" | "ga" => Ok(Mode::GaOnly),
            "surrogate" => Ok(Mode::Surrogate),
            other => Err(format!("unknown mode {other:?}, expected ga-only or surrogate")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Predicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: f64,
    pub provenance: Provenance,
}

impl Individual {
    fn real(genome: Genome, fitness: f64) -> Self {
        Self { genome, fitness, provenance: Provenance::Real }
    }

    fn predicted(genome: Genome, fitness: f64) -> Self {
        Self { genome, fitness, provenance: Provenance::Predicted }
    }

    pub fn evaluated(&self) -> bool {
        self.provenance == Provenance::Real
    }
}

impl Serialize for Individual {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct View<'a> {
            genome: &'a Genome,
            genome_hash: String,
            fitness: f64,
            provenance: Provenance,
            evaluated: bool,
        }
        View {
            genome: &self.genome,
            genome_hash: self.genome.hash_hex(),
            fitness: self.fitness,
            provenance: self.provenance,
            evaluated: self.evaluated(),
        }
        .serialize(serializer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CampaignConfig {
    pub population_size: usize,
    pub mutation: MutationConfig,
    pub z_mode: bool,
    pub mode: Mode,
    pub warmup_generations: u64,
    pub evaluation_budget: u64,
    pub seed: u64,
    pub oracle: OracleKind,
    /// Defaults to the oracle's natural scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitness_scale: Option<f64>,
    /// Stop once the best real fitness reaches this value. Target campaigns
    /// default to 1.0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_threshold: Option<f64>,
    /// Target campaigns only; defaults to [`REFERENCE_TARGET`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Genome>,
    pub training: TrainingConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            population_size: 20,
            mutation: MutationConfig::default(),
            z_mode: false,
            mode: Mode::Surrogate,
            warmup_generations: 0,
            evaluation_budget: 10_000,
            seed: 0,
            oracle: OracleKind::Target,
            fitness_scale: None,
            stop_threshold: None,
            target: None,
            training: TrainingConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let mut reject = |field: &str, message: String| errors.push(FieldError { field: field.into(), message });
        if self.population_size < 2 {
            reject("populationSize", format!("must be at least 2, got {}", self.population_size));
        }
        if self.evaluation_budget < self.population_size as u64 {
            reject(
                "evaluationBudget",
                format!("must be at least populationSize ({}), got {}", self.population_size, self.evaluation_budget),
            );
        }
        match self.mutation.validate() {
            Ok(()) => {}
            Err(GenomeError::MutationRate(r)) => reject("mutation.perAlleleRate", format!("{r} outside [0, 1]")),
            Err(e) => reject("mutation.maxStep", e.to_string()),
        }
        if let Err(e) = self.training.validate() {
            reject("training", e.to_string());
        }
        if let Some(scale) = self.fitness_scale {
            if !(scale > 0.0 && scale.is_finite()) {
                reject("fitnessScale", format!("must be positive and finite, got {scale}"));
            }
        }
        if let Some(t) = self.stop_threshold {
            if !t.is_finite() {
                reject("stopThreshold", format!("must be finite, got {t}"));
            }
        }
        if self.target.is_some() && self.oracle != OracleKind::Target {
            reject("target", "only target campaigns take a target genome".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errors))
        }
    }

    pub fn effective_fitness_scale(&self) -> f64 {
        self.fitness_scale.unwrap_or_else(|| self.oracle.default_fitness_scale())
    }

    pub fn effective_threshold(&self) -> Option<f64> {
        self.stop_threshold.or((self.oracle == OracleKind::Target).then_some(1.0))
    }

    pub fn target_genome(&self) -> Genome {
        self.target.clone().unwrap_or_else(|| Genome::new(REFERENCE_TARGET, None).expect("reference target is valid"))
    }

    pub fn input_size(&self) -> usize {
        if self.z_mode {
            BASE_LEN + Z_LEN
        } else {
            BASE_LEN
        }
    }

    /// The oracle for computed campaigns; `None` for manual ones.
    pub fn computed_oracle(&self) -> Option<Box<dyn FitnessOracle + Send>> {
        match self.oracle {
            OracleKind::Target => Some(Box::new(TargetOracle::from_genome(&self.target_genome()))),
            OracleKind::Proxy => Some(Box::new(ProxyOracle::new())),
            OracleKind::Manual => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArchiveEntry {
    pub genome: Genome,
    pub fitness: f64,
    /// 1-based real-evaluation count.
    pub index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoryPoint {
    pub evaluations: u64,
    pub best_fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Budget,
    Threshold,
}

#[derive(Debug, Clone, PartialEq)]
enum Stage {
    Start,
    AwaitInit(Vec<Genome>),
    Idle,
    AwaitOffspring(Genome),
    AwaitRefresh(Vec<usize>),
    Finished,
}

/// Saved pieces of state that `next_batch` may touch.
struct Checkpoint {
    rng: ChaCha8Rng,
    stage: Stage,
    population: Vec<Individual>,
    events: usize,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    cfg: CampaignConfig,
    rng: ChaCha8Rng,
    stage: Stage,
    population: Vec<Individual>,
    archive: Vec<ArchiveEntry>,
    model: Option<SurrogateModel>,
    generation: u64,
    ga_steps: u64,
    history: Vec<HistoryPoint>,
    best: f64,
    threshold_reached_at: Option<u64>,
    finish_reason: Option<FinishReason>,
    events: Vec<Event>,
}

impl Campaign {
    pub fn new(cfg: CampaignConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            stage: Stage::Start,
            population: Vec::new(),
            archive: Vec::new(),
            model: None,
            generation: 0,
            ga_steps: 0,
            history: Vec::new(),
            best: f64::NEG_INFINITY,
            threshold_reached_at: None,
            finish_reason: None,
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.cfg
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn archive(&self) -> &[ArchiveEntry] {
        &self.archive
    }

    pub fn model(&self) -> Option<&SurrogateModel> {
        self.model.as_ref()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn evaluations(&self) -> u64 {
        self.archive.len() as u64
    }

    /// Best real fitness so far, `None` before initialization completes.
    pub fn best_fitness(&self) -> Option<f64> {
        (!self.archive.is_empty()).then_some(self.best)
    }

    pub fn best_entry(&self) -> Option<&ArchiveEntry> {
        self.archive.iter().fold(None, |acc: Option<&ArchiveEntry>, e| match acc {
            Some(b) if b.fitness >= e.fitness => Some(b),
            _ => Some(e),
        })
    }

    /// One point after initialization, then one per real evaluation.
    pub fn history_series(&self) -> &[HistoryPoint] {
        &self.history
    }

    /// Real evaluations spent when the best fitness first reached the
    /// threshold.
    pub fn evaluations_to_threshold(&self) -> Option<u64> {
        self.threshold_reached_at
    }

    pub fn finish_reason(&self) -> Option<FinishReason> {
        self.finish_reason
    }

    pub fn is_finished(&self) -> bool {
        self.stage == Stage::Finished
    }

    pub fn is_initialized(&self) -> bool {
        !matches!(self.stage, Stage::Start | Stage::AwaitInit(_))
    }

    /// Genomes awaiting real fitness, if a batch is outstanding.
    pub fn pending_batch(&self) -> Option<Vec<Genome>> {
        match &self.stage {
            Stage::AwaitInit(genomes) => Some(genomes.clone()),
            Stage::AwaitOffspring(child) => Some(vec![child.clone()]),
            Stage::AwaitRefresh(members) => Some(members.iter().map(|&m| self.population[m].genome.clone()).collect()),
            _ => None,
        }
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    /// Starts the next unit of work and returns the genomes it needs
    /// evaluated. An outstanding batch is returned again unchanged. `None`
    /// once the campaign has finished.
    pub fn next_batch(&mut self) -> Result<Option<Vec<Genome>>, EngineError> {
        match self.stage {
            Stage::Finished => Ok(None),
            Stage::Start => {
                self.events.push(Event::CampaignCreated { config: self.cfg.clone() });
                let genomes: Vec<Genome> =
                    (0..self.cfg.population_size).map(|_| random_genome(&mut self.rng, self.cfg.z_mode)).collect();
                self.stage = Stage::AwaitInit(genomes.clone());
                Ok(Some(genomes))
            }
            Stage::Idle => {
                if self.in_ga_phase() {
                    self.begin_ga_step()
                } else {
                    self.begin_surrogate_generation()
                }
            }
            _ => Ok(self.pending_batch()),
        }
    }

    /// Delivers real fitness for the outstanding batch, in batch order.
    pub fn supply(&mut self, values: &[f64]) -> Result<(), EngineError> {
        let expected = match &self.stage {
            Stage::AwaitInit(g) => g.len(),
            Stage::AwaitOffspring(_) => 1,
            Stage::AwaitRefresh(m) => m.len(),
            Stage::Finished => return Err(EngineError::Finished),
            _ => return Err(EngineError::NothingPending),
        };
        if values.len() != expected {
            return Err(EngineError::BatchSize { expected, got: values.len() });
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(EngineError::NonFinite(bad));
        }
        match std::mem::replace(&mut self.stage, Stage::Idle) {
            Stage::AwaitInit(genomes) => self.finish_init(genomes, values)?,
            Stage::AwaitOffspring(child) => self.finish_ga_step(child, values[0])?,
            Stage::AwaitRefresh(members) => self.finish_surrogate_generation(&members, values)?,
            _ => unreachable!(),
        }
        self.check_finish();
        Ok(())
    }

    /// Runs one unit of work (initialization, a GA step or a surrogate
    /// generation, as scheduled) against a computed oracle. Returns `false`
    /// once finished. On oracle failure the campaign is left unchanged.
    pub fn step<O: FitnessOracle + ?Sized>(&mut self, oracle: &mut O) -> Result<bool, EngineError> {
        let checkpoint = self.checkpoint();
        match self.next_batch()? {
            None => Ok(false),
            Some(batch) => {
                self.complete(checkpoint, &batch, oracle)?;
                Ok(true)
            }
        }
    }

    /// One steady-state reproduction event on the real oracle, regardless of
    /// the mode schedule.
    pub fn ga_step<O: FitnessOracle + ?Sized>(&mut self, oracle: &mut O) -> Result<(), EngineError> {
        self.require_idle()?;
        let checkpoint = self.checkpoint();
        let batch = self.begin_ga_step()?.expect("ga step yields a batch");
        self.complete(checkpoint, &batch, oracle)
    }

    /// One surrogate generation, regardless of the mode schedule.
    pub fn surrogate_generation<O: FitnessOracle + ?Sized>(&mut self, oracle: &mut O) -> Result<(), EngineError> {
        self.require_idle()?;
        let checkpoint = self.checkpoint();
        let batch = self.begin_surrogate_generation()?.expect("surrogate generation yields a batch");
        self.complete(checkpoint, &batch, oracle)
    }

    /// Steps until finished.
    pub fn run<O: FitnessOracle + ?Sized>(&mut self, oracle: &mut O) -> Result<(), EngineError> {
        while self.step(oracle)? {}
        Ok(())
    }

    fn require_idle(&self) -> Result<(), EngineError> {
        match self.stage {
            Stage::Idle => Ok(()),
            Stage::Finished => Err(EngineError::Finished),
            Stage::Start | Stage::AwaitInit(_) => Err(EngineError::NothingPending),
            _ => Err(EngineError::Busy),
        }
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            rng: self.rng.clone(),
            stage: self.stage.clone(),
            population: self.population.clone(),
            events: self.events.len(),
        }
    }

    fn restore(&mut self, c: Checkpoint) {
        self.rng = c.rng;
        self.stage = c.stage;
        self.population = c.population;
        self.events.truncate(c.events);
    }

    fn complete<O: FitnessOracle + ?Sized>(
        &mut self,
        checkpoint: Checkpoint,
        batch: &[Genome],
        oracle: &mut O,
    ) -> Result<(), EngineError> {
        let values: Result<Vec<f64>, _> = batch.iter().map(|g| oracle.evaluate(g)).collect();
        let result = values.map_err(EngineError::from).and_then(|v| self.supply(&v));
        if result.is_err() {
            self.restore(checkpoint);
        }
        result
    }

    fn in_ga_phase(&self) -> bool {
        self.cfg.mode == Mode::GaOnly || self.generation < self.cfg.warmup_generations
    }

    fn begin_ga_step(&mut self) -> Result<Option<Vec<Genome>>, EngineError> {
        let parent = select_parent(&self.population, &mut self.rng);
        let child = mutate(&self.population[parent].genome, &self.cfg.mutation, &mut self.rng);
        self.stage = Stage::AwaitOffspring(child.clone());
        Ok(Some(vec![child]))
    }

    fn begin_surrogate_generation(&mut self) -> Result<Option<Vec<Genome>>, EngineError> {
        let model = self.model.as_ref().ok_or(EngineError::NoModel)?;
        for _ in 0..self.cfg.population_size {
            let parent = select_parent(&self.population, &mut self.rng);
            let child = mutate(&self.population[parent].genome, &self.cfg.mutation, &mut self.rng);
            let predicted = model.predict(&scale_for_model(&child))?;
            let loser = select_loser(&self.population, &mut self.rng);
            self.population[loser] = Individual::predicted(child, predicted);
        }

        let remaining = self.cfg.evaluation_budget.saturating_sub(self.evaluations());
        let mut unevaluated: Vec<usize> =
            (0..self.population.len()).filter(|&i| !self.population[i].evaluated()).collect();
        let mut members = Vec::new();
        if remaining > 0 && !unevaluated.is_empty() {
            let mut fittest = 0;
            for k in 1..unevaluated.len() {
                if self.population[unevaluated[k]].fitness > self.population[unevaluated[fittest]].fitness {
                    fittest = k;
                }
            }
            members.push(unevaluated.remove(fittest));
            if remaining > 1 && !unevaluated.is_empty() {
                let k = self.rng.gen_range(0..unevaluated.len());
                members.push(unevaluated[k]);
            }
        }
        let batch = members.iter().map(|&m| self.population[m].genome.clone()).collect();
        self.stage = Stage::AwaitRefresh(members);
        Ok(Some(batch))
    }

    fn finish_init(&mut self, genomes: Vec<Genome>, values: &[f64]) -> Result<(), EngineError> {
        for (genome, &fitness) in genomes.into_iter().zip(values) {
            self.record_real(&genome, fitness);
            self.population.push(Individual::real(genome, fitness));
        }
        self.push_history();
        if self.cfg.mode == Mode::Surrogate {
            let model = SurrogateModel::init(
                self.cfg.input_size(),
                self.cfg.effective_fitness_scale(),
                self.cfg.training.initial_bias,
                &mut self.rng,
            )?;
            self.model = Some(model);
            self.retrain()?;
        }
        Ok(())
    }

    fn finish_ga_step(&mut self, child: Genome, fitness: f64) -> Result<(), EngineError> {
        let loser = select_loser(&self.population, &mut self.rng);
        self.record_real(&child, fitness);
        self.population[loser] = Individual::real(child, fitness);
        self.push_history();
        self.ga_steps += 1;
        if self.ga_steps % self.cfg.population_size as u64 == 0 {
            self.advance_generation();
            if self.cfg.mode == Mode::Surrogate
                && self.cfg.warmup_generations > 0
                && self.generation == self.cfg.warmup_generations
            {
                self.retrain()?;
            }
        }
        Ok(())
    }

    fn finish_surrogate_generation(&mut self, members: &[usize], values: &[f64]) -> Result<(), EngineError> {
        for (&m, &fitness) in members.iter().zip(values) {
            let genome = self.population[m].genome.clone();
            self.record_real(&genome, fitness);
            self.population[m] = Individual::real(genome, fitness);
            self.push_history();
        }
        self.retrain()?;
        let model = self.model.as_ref().expect("retrain leaves a model");
        for ind in self.population.iter_mut().filter(|i| !i.evaluated()) {
            ind.fitness = model.predict(&scale_for_model(&ind.genome))?;
        }
        self.advance_generation();
        Ok(())
    }

    fn record_real(&mut self, genome: &Genome, fitness: f64) {
        let index = self.archive.len() as u64 + 1;
        self.archive.push(ArchiveEntry { genome: genome.clone(), fitness, index });
        self.best = self.best.max(fitness);
        self.events.push(Event::IndividualEvaluated { genome: genome.clone(), fitness, index });
    }

    fn push_history(&mut self) {
        let evaluations = self.evaluations();
        self.history.push(HistoryPoint { evaluations, best_fitness: self.best });
        if let Some(t) = self.cfg.effective_threshold() {
            if self.threshold_reached_at.is_none() && self.best >= t {
                self.threshold_reached_at = Some(evaluations);
            }
        }
    }

    fn advance_generation(&mut self) {
        self.generation += 1;
        self.events.push(Event::GenerationAdvanced {
            generation: self.generation,
            evaluations: self.evaluations(),
            best_fitness: self.best,
        });
    }

    /// Continues training the current model on the whole archive.
    fn retrain(&mut self) -> Result<(), EngineError> {
        let dataset: Vec<EvaluatedPair> = self
            .archive
            .iter()
            .map(|e| EvaluatedPair { scaled_input: scale_for_model(&e.genome), real_fitness: e.fitness })
            .collect();
        let model = self.model.as_ref().ok_or(EngineError::NoModel)?;
        let trained = train_incremental(model, &dataset, &self.cfg.training, &mut self.rng)?;
        let loss = evaluate_loss(&trained, &dataset)?;
        self.model = Some(trained);
        self.events.push(Event::ModelRetrained { loss, evaluations: self.evaluations() });
        Ok(())
    }

    fn check_finish(&mut self) {
        if self.stage != Stage::Idle {
            return;
        }
        let reason = if self.threshold_reached_at.is_some() {
            Some(FinishReason::Threshold)
        } else if self.evaluations() >= self.cfg.evaluation_budget {
            Some(FinishReason::Budget)
        } else {
            None
        };
        if let Some(reason) = reason {
            self.finish_reason = Some(reason);
            self.stage = Stage::Finished;
            self.events.push(Event::CampaignFinished {
                evaluations: self.evaluations(),
                best_fitness: self.best,
                reason,
                evaluations_to_threshold: self.threshold_reached_at,
            });
        }
    }
}

fn distinct_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let first = rng.gen_range(0..n);
    let mut second = rng.gen_range(0..n - 1);
    if second >= first {
        second += 1;
    }
    (first, second)
}

/// Binary tournament; the first drawn wins ties.
fn select_parent<R: Rng + ?Sized>(population: &[Individual], rng: &mut R) -> usize {
    let (a, b) = distinct_pair(population.len(), rng);
    if population[b].fitness > population[a].fitness {
        b
    } else {
        a
    }
}

/// Binary tournament for replacement; the second drawn loses ties.
fn select_loser<R: Rng + ?Sized>(population: &[Individual], rng: &mut R) -> usize {
    let (a, b) = distinct_pair(population.len(), rng);
    if population[a].fitness < population[b].fitness {
        a
    } else {
        b
    }
}

pub fn init_campaign<O: FitnessOracle + ?Sized>(cfg: CampaignConfig, oracle: &mut O) -> Result<Campaign, EngineError> {
    let mut campaign = Campaign::new(cfg)?;
    campaign.step(oracle)?;
    Ok(campaign)
}

pub fn run_campaign<O: FitnessOracle + ?Sized>(cfg: CampaignConfig, oracle: &mut O) -> Result<Campaign, EngineError> {
    let mut campaign = Campaign::new(cfg)?;
    campaign.run(oracle)?;
    Ok(campaign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::FitnessError;

    /// Σ alleles / 420 over the base alleles.
    #[derive(Default)]
    struct SumOracle {
        calls: u64,
    }

    impl FitnessOracle for SumOracle {
        fn kind(&self) -> OracleKind {
            OracleKind::Proxy
        }
        fn evaluate(&mut self, g: &Genome) -> Result<f64, FitnessError> {
            self.calls += 1;
            Ok(g.base().iter().map(|&a| f64::from(a)).sum::<f64>() / 420.0)
        }
        fn evaluation_count(&self) -> u64 {
            self.calls
        }
    }

    struct Constant;

    impl FitnessOracle for Constant {
        fn kind(&self) -> OracleKind {
            OracleKind::Proxy
        }
        fn evaluate(&mut self, _: &Genome) -> Result<f64, FitnessError> {
            Ok(1.0)
        }
        fn evaluation_count(&self) -> u64 {
            0
        }
    }

    /// Fails on the n-th call.
    struct Flaky {
        inner: SumOracle,
        fail_at: u64,
    }

    impl FitnessOracle for Flaky {
        fn kind(&self) -> OracleKind {
            OracleKind::Proxy
        }
        fn evaluate(&mut self, g: &Genome) -> Result<f64, FitnessError> {
            if self.inner.calls + 1 == self.fail_at {
                self.fail_at = 0;
                return Err(FitnessError::Oracle("rig offline".into()));
            }
            self.inner.evaluate(g)
        }
        fn evaluation_count(&self) -> u64 {
            self.inner.calls
        }
    }

    fn cfg(mode: Mode, budget: u64, seed: u64) -> CampaignConfig {
        CampaignConfig {
            mode,
            evaluation_budget: budget,
            seed,
            oracle: OracleKind::Proxy,
            fitness_scale: Some(1.0),
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn init_evaluates_whole_population() {
        let mut oracle = SumOracle::default();
        let c = init_campaign(cfg(Mode::GaOnly, 100, 1), &mut oracle).unwrap();
        assert_eq!(c.archive().len(), 20);
        assert_eq!(oracle.calls, 20);
        assert!(c.population().iter().all(Individual::evaluated));
        assert_eq!(c.history_series().len(), 1);
        assert_eq!(c.history_series()[0].evaluations, 20);
        assert!(c.model().is_none());

        let again = init_campaign(cfg(Mode::GaOnly, 100, 1), &mut SumOracle::default()).unwrap();
        assert_eq!(c.archive(), again.archive());
        let other = init_campaign(cfg(Mode::GaOnly, 100, 2), &mut SumOracle::default()).unwrap();
        assert_ne!(c.archive(), other.archive());
    }

    #[test]
    fn surrogate_init_trains_model() {
        let mut c = init_campaign(cfg(Mode::Surrogate, 100, 1), &mut SumOracle::default()).unwrap();
        assert!(c.model().is_some());
        let kinds: Vec<_> = c.take_events().iter().map(|e| e.kind()).collect();
        assert_eq!(kinds[0], "campaign_created");
        assert_eq!(kinds.iter().filter(|k| **k == "individual_evaluated").count(), 20);
        assert_eq!(*kinds.last().unwrap(), "model_retrained");
    }

    #[test]
    fn twenty_steps_make_a_generation() {
        let mut oracle = SumOracle::default();
        let mut c = init_campaign(cfg(Mode::GaOnly, 1000, 3), &mut oracle).unwrap();
        for i in 0..20 {
            assert_eq!(c.generation(), 0, "step {i}");
            c.ga_step(&mut oracle).unwrap();
        }
        assert_eq!(c.generation(), 1);
        assert_eq!(c.archive().len(), 40);
        assert_eq!(c.history_series().len(), 21);
    }

    #[test]
    fn all_equal_fitness_still_replaces() {
        let mut c = init_campaign(cfg(Mode::GaOnly, 1000, 4), &mut Constant).unwrap();
        let mut replaced = 0;
        for _ in 0..50 {
            let before = c.population().to_vec();
            c.ga_step(&mut Constant).unwrap();
            let newest = &c.archive().last().unwrap().genome;
            let changed = before.iter().zip(c.population()).filter(|(a, b)| a != b).count();
            assert!(changed <= 1);
            if changed == 1 {
                replaced += 1;
            }
            assert!(c.population().iter().any(|i| &i.genome == newest));
        }
        assert!(replaced > 40);
    }

    #[test]
    fn tie_rules() {
        let pop: Vec<Individual> =
            (0..2i16).map(|i| Individual::real(Genome::new([i + 1; 10], None).unwrap(), 0.5)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let mut probe = rng.clone();
            let (a, b) = distinct_pair(2, &mut probe);
            assert_eq!(select_parent(&pop, &mut rng.clone()), a);
            assert_eq!(select_loser(&pop, &mut rng.clone()), b);
            rng.gen::<u64>();
        }
    }

    #[test]
    fn best_member_is_never_replaced() {
        let mut oracle = SumOracle::default();
        let mut c = init_campaign(cfg(Mode::GaOnly, 2000, 5), &mut oracle).unwrap();
        let mut max = c.population().iter().map(|i| i.fitness).fold(f64::MIN, f64::max);
        while !c.is_finished() {
            c.step(&mut oracle).unwrap();
            let now = c.population().iter().map(|i| i.fitness).fold(f64::MIN, f64::max);
            assert!(now >= max);
            max = now;
        }
    }

    #[test]
    fn surrogate_generation_spends_two_evaluations() {
        let mut oracle = SumOracle::default();
        let mut c = init_campaign(cfg(Mode::Surrogate, 1000, 6), &mut oracle).unwrap();
        for g in 1..=5u64 {
            c.step(&mut oracle).unwrap();
            assert_eq!(c.archive().len() as u64, 20 + 2 * g);
            assert_eq!(c.generation(), g);
            assert_eq!(oracle.calls, c.evaluations());
        }
    }

    #[test]
    fn surrogate_generation_requires_model() {
        let mut oracle = SumOracle::default();
        let mut c = init_campaign(cfg(Mode::GaOnly, 100, 6), &mut oracle).unwrap();
        assert_eq!(c.surrogate_generation(&mut oracle), Err(EngineError::NoModel));
        assert_eq!(c.archive().len(), 20);
    }

    #[test]
    fn warmup_runs_ga_generations_first() {
        let mut oracle = SumOracle::default();
        let config = CampaignConfig { warmup_generations: 2, ..cfg(Mode::Surrogate, 1000, 7) };
        let mut c = init_campaign(config, &mut oracle).unwrap();
        for _ in 0..40 {
            c.step(&mut oracle).unwrap();
        }
        assert_eq!(c.generation(), 2);
        assert_eq!(c.evaluations(), 60);
        c.step(&mut oracle).unwrap();
        assert_eq!(c.generation(), 3);
        assert_eq!(c.evaluations(), 62);
    }

    #[test]
    fn budget_equal_to_population_stops_after_init() {
        let mut oracle = SumOracle::default();
        let c = run_campaign(cfg(Mode::Surrogate, 20, 8), &mut oracle).unwrap();
        assert!(c.is_finished());
        assert_eq!(c.evaluations(), 20);
        assert_eq!(c.finish_reason(), Some(FinishReason::Budget));
    }

    #[test]
    fn budget_is_exact_in_both_modes() {
        for mode in [Mode::GaOnly, Mode::Surrogate] {
            for budget in [21, 57, 120] {
                let mut oracle = SumOracle::default();
                let c = run_campaign(cfg(mode, budget, 9), &mut oracle).unwrap();
                assert_eq!(c.evaluations(), budget);
                assert_eq!(oracle.calls, budget);
                let xs: Vec<u64> = c.history_series().iter().map(|p| p.evaluations).collect();
                assert_eq!(xs.len() as u64, budget - 19);
                assert!(xs.windows(2).all(|w| w[0] < w[1]));
                assert!(c.history_series().windows(2).all(|w| w[0].best_fitness <= w[1].best_fitness));
            }
        }
    }

    #[test]
    fn threshold_stops_early() {
        let config = CampaignConfig { stop_threshold: Some(0.6), ..cfg(Mode::GaOnly, 5000, 10) };
        let c = run_campaign(config, &mut SumOracle::default()).unwrap();
        assert_eq!(c.finish_reason(), Some(FinishReason::Threshold));
        let hit = c.evaluations_to_threshold().unwrap();
        assert_eq!(hit, c.evaluations());
        let first = c.history_series().iter().find(|p| p.best_fitness >= 0.6).unwrap();
        assert_eq!(first.evaluations, hit);
    }

    #[test]
    fn sanity_optimization() {
        for seed in 0..10 {
            let config = CampaignConfig { stop_threshold: Some(0.95), ..cfg(Mode::GaOnly, 2000, seed) };
            let c = run_campaign(config, &mut SumOracle::default()).unwrap();
            assert!(c.best_fitness().unwrap() >= 0.95, "seed {seed}: {:?}", c.best_fitness());
        }
    }

    #[test]
    fn oracle_failure_leaves_state_unchanged() {
        for mode in [Mode::GaOnly, Mode::Surrogate] {
            let mut oracle = Flaky { inner: SumOracle::default(), fail_at: 0 };
            let mut c = init_campaign(cfg(mode, 500, 11), &mut oracle).unwrap();
            c.step(&mut oracle).unwrap();
            let reference = c.clone();
            oracle.fail_at = oracle.inner.calls + 1;
            assert!(matches!(c.step(&mut oracle), Err(EngineError::Fitness(_))));
            assert_eq!(c.archive(), reference.archive());
            assert_eq!(c.population(), reference.population());
            assert_eq!(c.events.len(), reference.events.len());

            // The retry continues exactly as an uninterrupted run would.
            let mut clean = reference.clone();
            c.step(&mut oracle).unwrap();
            clean.step(&mut SumOracle { calls: 0 }).unwrap();
            assert_eq!(c.archive(), clean.archive());
        }
    }

    #[test]
    fn batch_protocol() {
        let mut c = Campaign::new(cfg(Mode::Surrogate, 100, 12)).unwrap();
        assert_eq!(c.supply(&[1.0]), Err(EngineError::NothingPending));
        let batch = c.next_batch().unwrap().unwrap();
        assert_eq!(batch.len(), 20);
        assert_eq!(c.next_batch().unwrap().unwrap(), batch);
        assert_eq!(c.supply(&[1.0]), Err(EngineError::BatchSize { expected: 20, got: 1 }));
        let mut values = vec![0.5; 20];
        values[3] = f64::NAN;
        assert!(matches!(c.supply(&values), Err(EngineError::NonFinite(_))));
        values[3] = 0.5;
        c.supply(&values).unwrap();
        let next = c.next_batch().unwrap().unwrap();
        assert_eq!(next.len(), 2);
        assert_eq!(c.pending_batch().unwrap(), next);
        assert_eq!(c.ga_step(&mut SumOracle::default()), Err(EngineError::Busy));
    }

    #[test]
    fn identical_seeds_give_identical_events() {
        let run = |seed| {
            let mut c = run_campaign(cfg(Mode::Surrogate, 80, seed), &mut SumOracle::default()).unwrap();
            serde_json::to_string(&c.take_events()).unwrap()
        };
        assert_eq!(run(13), run(13));
        assert_ne!(run(13), run(14));
    }

    #[test]
    fn z_mode_genomes() {
        let config = CampaignConfig { z_mode: true, ..cfg(Mode::Surrogate, 30, 15) };
        let c = run_campaign(config, &mut SumOracle::default()).unwrap();
        assert!(c.archive().iter().all(|e| e.genome.len() == 15));
        assert_eq!(c.model().unwrap().input_size(), 15);
    }

    #[test]
    fn config_validation() {
        let bad = CampaignConfig { population_size: 1, evaluation_budget: 0, ..CampaignConfig::default() };
        let err = bad.validate().unwrap_err();
        let fields: Vec<_> = err.0.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["populationSize", "evaluationBudget"]);
        let parsed: CampaignConfig = serde_json::from_str(r#"{"mode":"ga-only","evaluationBudget":200}"#).unwrap();
        assert_eq!(parsed.population_size, 20);
        assert_eq!(parsed.mode, Mode::GaOnly);
        assert_eq!(parsed.effective_threshold(), Some(1.0));
        assert_eq!(parsed.target_genome().base(), &REFERENCE_TARGET);
        let json = serde_json::to_string(&parsed).unwrap();
        assert_eq!(serde_json::from_str::<CampaignConfig>(&json).unwrap(), parsed);
    }
}

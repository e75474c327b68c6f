//! Repeated target-matching runs in both modes and their comparison.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use vawt_core::fitness::REFERENCE_TARGET;
use vawt_core::{run_campaign, welch_t_test, CampaignConfig, EngineError, Mode, OracleKind, StatsSummary, WelchResult};

/// Summaries of the original GA-only and surrogate experiments.
pub const REFERENCE_GA_ONLY: StatsSummary = StatsSummary { mean: 3735.0, sd: 3922.0, n: 20 };
pub const REFERENCE_SURROGATE: StatsSummary = StatsSummary { mean: 770.0, sd: 215.0, n: 20 };

/// Accepted range for the surrogate mean evaluations-to-threshold.
pub const SURROGATE_MEAN_RANGE: (f64, f64) = (400.0, 1500.0);
/// GA-only mean must be at least this multiple of the surrogate mean.
pub const MIN_SPEEDUP: f64 = 2.0;
pub const MAX_P_VALUE: f64 = 0.05;

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub runs: usize,
    pub seed: u64,
    pub threshold: f64,
    pub budget: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { runs: 20, seed: 0, threshold: 0.99, budget: 10_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunResult {
    pub run: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Evaluations spent when the threshold was first met, or the budget
    /// when it never was.
    pub evaluations_to_threshold: u64,
    pub reached: bool,
    pub best_fitness: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub target: Vec<i16>,
    pub runs: Vec<RunResult>,
    pub ga_only: Option<StatsSummary>,
    pub surrogate: Option<StatsSummary>,
    pub welch: Option<WelchResult>,
    pub reference_welch: WelchResult,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl ExperimentReport {
    pub fn mode_runs(&self, mode: Mode) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.mode == mode)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Seed of run `run`; both modes share it so each pair starts from the
/// same initial population.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng.next_u64()
}

pub fn run_once(cfg: &ExperimentConfig, mode: Mode, run: usize) -> Result<RunResult, EngineError> {
    let seed = run_seed(cfg.seed, run);
    let campaign_cfg = CampaignConfig {
        mode,
        seed,
        oracle: OracleKind::Target,
        evaluation_budget: cfg.budget,
        stop_threshold: Some(cfg.threshold),
        ..CampaignConfig::default()
    };
    let mut oracle = campaign_cfg.computed_oracle().expect("target oracle is computed");
    let campaign = run_campaign(campaign_cfg, oracle.as_mut())?;
    let reached = campaign.evaluations_to_threshold();
    Ok(RunResult {
        run,
        mode,
        seed,
        evaluations_to_threshold: reached.unwrap_or(cfg.budget),
        reached: reached.is_some(),
        best_fitness: campaign.best_fitness().unwrap_or(0.0),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, EngineError> {
    let jobs: Vec<(Mode, usize)> =
        [Mode::GaOnly, Mode::Surrogate].into_iter().flat_map(|m| (0..cfg.runs).map(move |r| (m, r))).collect();
    let runs = jobs.par_iter().map(|&(mode, run)| run_once(cfg, mode, run)).collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(*cfg, runs))
}

/// Builds the report from raw runs; summaries are always recomputed here.
pub fn summarize(config: ExperimentConfig, runs: Vec<RunResult>) -> ExperimentReport {
    let samples = |mode: Mode| -> Vec<f64> {
        runs.iter().filter(|r| r.mode == mode).map(|r| r.evaluations_to_threshold as f64).collect()
    };
    let ga_only = StatsSummary::from_samples(&samples(Mode::GaOnly));
    let surrogate = StatsSummary::from_samples(&samples(Mode::Surrogate));
    let welch = ga_only.zip(surrogate).map(|(g, s)| welch_t_test(&g, &s));
    let reference_welch = welch_t_test(&REFERENCE_GA_ONLY, &REFERENCE_SURROGATE);

    let mut checks = Vec::new();
    let unreached = runs.iter().filter(|r| r.mode == Mode::Surrogate && !r.reached).count();
    checks.push(Check {
        name: "surrogate_runs_reach_threshold",
        pass: unreached == 0 && surrogate.is_some(),
        detail: format!("{unreached} surrogate runs missed {}", config.threshold),
    });
    checks.push(match surrogate {
        Some(s) => Check {
            name: "surrogate_mean_in_range",
            pass: (SURROGATE_MEAN_RANGE.0..=SURROGATE_MEAN_RANGE.1).contains(&s.mean),
            detail: format!("M = {:.1}, SD = {:.1}", s.mean, s.sd),
        },
        None => Check { name: "surrogate_mean_in_range", pass: false, detail: "fewer than 2 runs".into() },
    });
    checks.push(match ga_only.zip(surrogate) {
        Some((g, s)) => Check {
            name: "ga_only_at_least_twice_surrogate",
            pass: g.mean >= MIN_SPEEDUP * s.mean,
            detail: format!("GA-only M = {:.1}, ratio {:.2}", g.mean, g.mean / s.mean),
        },
        None => Check { name: "ga_only_at_least_twice_surrogate", pass: false, detail: "fewer than 2 runs".into() },
    });
    checks.push(match welch {
        Some(w) => Check {
            name: "modes_differ_significantly",
            pass: w.p <= MAX_P_VALUE,
            detail: format!("t({:.1}) = {:.3}, p = {:.4}", w.df, w.t, w.p),
        },
        None => Check { name: "modes_differ_significantly", pass: false, detail: "fewer than 2 runs".into() },
    });
    let pass = checks.iter().all(|c| c.pass);
    ExperimentReport {
        config,
        target: REFERENCE_TARGET.to_vec(),
        runs,
        ga_only,
        surrogate,
        welch,
        reference_welch,
        checks,
        pass,
    }
}

/// Writes the JSON report to `out` and the per-run table next to it with a
/// `.csv` extension. Returns the CSV path.
pub fn write_report(report: &ExperimentReport, out: &Path) -> io::Result<PathBuf> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, serde_json::to_vec_pretty(report)?)?;
    let csv_path = out.with_extension("csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    writer.write_record(["run", "mode", "evaluationsToThreshold", "bestFitness"])?;
    for r in &report.runs {
        writer.write_record([
            r.run.to_string(),
            r.mode.as_str().to_string(),
            r.evaluations_to_threshold.to_string(),
            r.best_fitness.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(run: usize, mode: Mode, evals: u64, reached: bool) -> RunResult {
        RunResult { run, mode, seed: 0, evaluations_to_threshold: evals, reached, best_fitness: 0.99 }
    }

    #[test]
    fn seeds_differ_per_run_and_repeat() {
        let seeds: Vec<u64> = (0..50).map(|r| run_seed(7, r)).collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), 50);
        assert_eq!(seeds[3], run_seed(7, 3));
        assert_ne!(run_seed(7, 3), run_seed(8, 3));
    }

    #[test]
    fn reference_welch_in_report() {
        let report = summarize(ExperimentConfig::default(), Vec::new());
        assert!((report.reference_welch.t - 3.376).abs() <= 0.005);
        assert_eq!(report.reference_welch.df.round(), 19.0);
        assert!(!report.pass);
    }

    #[test]
    fn checks_follow_the_raw_runs() {
        let mut runs = Vec::new();
        for i in 0..5 {
            runs.push(result(i, Mode::GaOnly, 3000 + 100 * i as u64, true));
            runs.push(result(i, Mode::Surrogate, 700 + 10 * i as u64, true));
        }
        let report = summarize(ExperimentConfig { runs: 5, ..ExperimentConfig::default() }, runs.clone());
        assert!(report.pass, "{:?}", report.checks);
        let s = report.surrogate.unwrap();
        assert!((s.mean - 720.0).abs() < 1e-9);

        runs[1].reached = false;
        runs[1].evaluations_to_threshold = 10_000;
        let report = summarize(ExperimentConfig { runs: 5, ..ExperimentConfig::default() }, runs);
        assert!(!report.check("surrogate_runs_reach_threshold").unwrap().pass);
        assert!(!report.pass);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![result(0, Mode::GaOnly, 10_000, false), result(0, Mode::Surrogate, 812, true)];
        let report = summarize(ExperimentConfig { runs: 1, ..ExperimentConfig::default() }, runs);
        let csv_path = write_report(&report, &dir.path().join("out/report.json")).unwrap();
        let text = std::fs::read_to_string(csv_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "run,mode,evaluationsToThreshold,bestFitness");
        assert_eq!(lines[1], "0,ga-only,10000,0.99");
        assert_eq!(lines[2], "0,surrogate,812,0.99");
    }
}

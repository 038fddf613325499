//! Experiment execution: environment construction, seed sweeps (with
//! baselines), output emission, and re-derivation of the diagnostics
//! from stored artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use lsvi_core::agent::{run_episodic, PolicyKind, RunArtifacts, RunMetadata, RunOutput};
use lsvi_core::diagnostics::{
    build_report, closure_residual, decomposition_gap_from_artifacts, DiagnosticsReport,
};
use lsvi_core::envs::{
    make_chain, make_counterexample, make_linear_mdp, make_tabular_random, ChainMdp,
    CounterexampleMdp, LinearMdp, TabularMdp,
};
use lsvi_core::mdp::EpisodicMdp;
use lsvi_core::rng::construction_rng;

use crate::config::{BaselineKind, EnvFamily, ExperimentConfig};
use crate::csvio::{aggregate, format_aggregated_csv, format_seed_csv, AggSeries};
use crate::error::HarnessError;

/// A constructed environment instance.
pub enum Environment {
    Tabular(TabularMdp),
    Linear(LinearMdp),
    Counterexample(CounterexampleMdp),
    Chain(ChainMdp),
}

impl Environment {
    pub fn as_dyn(&self) -> &dyn EpisodicMdp {
        match self {
            Environment::Tabular(env) => env,
            Environment::Linear(env) => env,
            Environment::Counterexample(env) => env,
            Environment::Chain(env) => env,
        }
    }

    pub fn counterexample(&self) -> Option<&CounterexampleMdp> {
        match self {
            Environment::Counterexample(env) => Some(env),
            _ => None,
        }
    }
}

pub fn build_env(config: &ExperimentConfig) -> Result<Environment, HarnessError> {
    let mut rng = construction_rng(config.env_seed);
    let env = match config.env {
        EnvFamily::Tabular => Environment::Tabular(make_tabular_random(
            config.states,
            config.actions,
            config.horizon,
            &mut rng,
        )?),
        EnvFamily::Linear => Environment::Linear(make_linear_mdp(
            config.dim,
            config.states,
            config.actions,
            config.horizon,
            &mut rng,
        )?),
        EnvFamily::Counterexample => {
            Environment::Counterexample(make_counterexample(config.cap)?)
        }
        EnvFamily::Chain => Environment::Chain(make_chain(config.states, config.horizon)?),
    };
    Ok(env)
}

/// All runs of one agent across the configured seeds.
pub struct AgentRuns {
    pub name: String,
    pub policy: PolicyKind,
    pub runs: Vec<RunOutput>,
}

fn agent_roster(config: &ExperimentConfig) -> Vec<(String, PolicyKind)> {
    let mut roster = vec![("lsvi_ucb".to_string(), PolicyKind::OptimisticGreedy)];
    for baseline in &config.baselines {
        let policy = match baseline {
            BaselineKind::Random => PolicyKind::UniformRandom,
            BaselineKind::EpsGreedy => PolicyKind::EpsGreedy {
                epsilon: config.epsilon,
            },
        };
        roster.push((baseline.name().to_string(), policy));
    }
    roster
}

/// Runs every configured agent over every seed. Seeds are dispatched
/// to the rayon worker pool; results come back in seed order, so the
/// outputs are independent of scheduling.
pub fn run_all(
    config: &ExperimentConfig,
    env: &Environment,
) -> Result<Vec<AgentRuns>, HarnessError> {
    let mut all = Vec::new();
    for (name, policy) in agent_roster(config) {
        let agent_config = config.agent_config(policy)?;
        let runs: Result<Vec<RunOutput>, _> = config
            .seeds
            .par_iter()
            .map(|seed| run_episodic(env.as_dyn(), &agent_config, *seed))
            .collect();
        all.push(AgentRuns {
            name,
            policy,
            runs: runs?,
        });
    }
    Ok(all)
}

/// Final cumulative regret per agent, mean ± std over seeds.
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

pub struct ComparisonRow {
    pub agent: String,
    pub mean_final_regret: f64,
    pub std_final_regret: f64,
}

pub fn comparison_from_runs(all: &[AgentRuns]) -> Comparison {
    let rows = all
        .iter()
        .map(|agent| {
            let finals: Vec<Vec<f64>> = agent
                .runs
                .iter()
                .map(|r| vec![r.regret.final_regret()])
                .collect();
            let (mean, std) = aggregate(&finals);
            ComparisonRow {
                agent: agent.name.clone(),
                mean_final_regret: mean[0],
                std_final_regret: std[0],
            }
        })
        .collect();
    Comparison { rows }
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut out = String::from("agent            final regret (mean ± std over seeds)\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{:<16} {:.3} ± {:.3}\n",
                row.agent, row.mean_final_regret, row.std_final_regret
            ));
        }
        out
    }
}

/// Runs baselines alongside the agent and tabulates final regret.
pub fn compare_baselines(config: &ExperimentConfig) -> Result<Comparison, HarnessError> {
    if config.baselines.is_empty() {
        return Err(HarnessError::Config(
            "compare requires at least one baseline (random | eps_greedy)".into(),
        ));
    }
    let env = build_env(config)?;
    let all = run_all(config, &env)?;
    Ok(comparison_from_runs(&all))
}

fn compute_diagnostics(
    env: &Environment,
    lsvi_artifacts: &[RunArtifacts],
) -> Result<DiagnosticsReport, HarnessError> {
    let closure = match env.counterexample() {
        Some(ce) => Some(closure_residual(ce, 100, 101, 0)?),
        None => None,
    };
    let gap = decomposition_gap_from_artifacts(lsvi_artifacts);
    Ok(build_report(env.as_dyn(), lsvi_artifacts, closure, gap)?)
}

fn seed_csv_name(agent: &str, seed: u64) -> String {
    format!("{agent}_seed{seed}.csv")
}

fn artifacts_name(seed: u64) -> String {
    format!("artifacts_seed{seed}.json")
}

/// Everything `run` leaves on disk, reported back for printing.
pub struct ExperimentSummary {
    pub comparison: Comparison,
    pub diagnostics: DiagnosticsReport,
    pub out_dir: std::path::PathBuf,
}

/// Executes the configured experiment and writes, into `config.out`:
/// per-seed CSVs for every agent, the aggregated CSV, run metadata,
/// per-seed artifacts, and the diagnostics report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, HarnessError> {
    // claim the output directory before any computation
    fs::create_dir_all(&config.out)?;
    fs::write(
        config.out.join("resolved_config.txt"),
        config.to_flat_string(),
    )?;

    let env = build_env(config)?;
    let all = run_all(config, &env)?;

    for agent in &all {
        for (seed, run) in config.seeds.iter().zip(&agent.runs) {
            fs::write(
                config.out.join(seed_csv_name(&agent.name, *seed)),
                format_seed_csv(run),
            )?;
        }
    }

    let series: Vec<AggSeries> = all
        .iter()
        .map(|agent| {
            let regrets: Vec<Vec<f64>> = agent
                .runs
                .iter()
                .map(|r| r.regret.cumulative_regret.clone())
                .collect();
            let (mean, std) = aggregate(&regrets);
            AggSeries {
                name: agent.name.clone(),
                mean,
                std,
            }
        })
        .collect();
    fs::write(
        config.out.join("aggregated.csv"),
        format_aggregated_csv(&series),
    )?;

    let metadata: BTreeMap<String, Vec<&RunMetadata>> = all
        .iter()
        .map(|agent| {
            (
                agent.name.clone(),
                agent.runs.iter().map(|r| &r.metadata).collect(),
            )
        })
        .collect();
    fs::write(
        config.out.join("metadata.json"),
        serde_json::to_string_pretty(&metadata).expect("metadata serializes"),
    )?;

    let lsvi_artifacts: Vec<RunArtifacts> = all[0]
        .runs
        .iter()
        .map(|r| r.artifacts.clone())
        .collect();
    for (seed, artifacts) in config.seeds.iter().zip(&lsvi_artifacts) {
        fs::write(
            config.out.join(artifacts_name(*seed)),
            serde_json::to_string(artifacts).expect("artifacts serialize"),
        )?;
    }

    let diagnostics = compute_diagnostics(&env, &lsvi_artifacts)?;
    fs::write(
        config.out.join("diagnostics.json"),
        serde_json::to_string_pretty(&diagnostics).expect("report serializes"),
    )?;

    Ok(ExperimentSummary {
        comparison: comparison_from_runs(&all),
        diagnostics,
        out_dir: config.out.clone(),
    })
}

/// Re-derives the diagnostics report for a stored run directory from
/// its resolved config and per-seed artifacts, and rewrites
/// `diagnostics.json`.
pub fn diagnose(run_dir: &Path) -> Result<DiagnosticsReport, HarnessError> {
    let config_path = run_dir.join("resolved_config.txt");
    let overrides = crate::config::parse_config_file(&config_path)?;
    let config = ExperimentConfig::resolve(None, overrides)?;
    let env = build_env(&config)?;
    let mut artifacts = Vec::with_capacity(config.seeds.len());
    for seed in &config.seeds {
        let path = run_dir.join(artifacts_name(*seed));
        let text = fs::read_to_string(&path)?;
        let run: RunArtifacts = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        artifacts.push(run);
    }
    let report = compute_diagnostics(&env, &artifacts)?;
    fs::write(
        run_dir.join("diagnostics.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}

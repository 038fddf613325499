//! Experiment configuration: a flat key = value file plus full CLI
//! overrides, precedence CLI > file > defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lsvi_core::agent::{AgentConfig, PolicyKind};
use lsvi_core::links::LinkSpec;
use lsvi_core::regression::SolverOpts;

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvFamily {
    Tabular,
    Linear,
    Counterexample,
    Chain,
}

impl EnvFamily {
    fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "tabular" => Ok(EnvFamily::Tabular),
            "linear" => Ok(EnvFamily::Linear),
            "counterexample" => Ok(EnvFamily::Counterexample),
            "chain" => Ok(EnvFamily::Chain),
            other => Err(HarnessError::Config(format!(
                "unknown env '{other}' (expected tabular | linear | counterexample | chain)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvFamily::Tabular => "tabular",
            EnvFamily::Linear => "linear",
            EnvFamily::Counterexample => "counterexample",
            EnvFamily::Chain => "chain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Random,
    EpsGreedy,
}

impl BaselineKind {
    fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "random" => Ok(BaselineKind::Random),
            "eps_greedy" => Ok(BaselineKind::EpsGreedy),
            other => Err(HarnessError::Config(format!(
                "unknown baseline '{other}' (expected random | eps_greedy)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::EpsGreedy => "eps_greedy",
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: EnvFamily,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub dim: usize,
    /// Bonus cap parameter of the counterexample construction.
    pub cap: f64,
    /// Seed for random environment construction.
    pub env_seed: u64,
    pub episodes: usize,
    pub link: String,
    /// Declared curvature bound for the identity link (0 is the true
    /// bound; 1 reproduces the looser literature constant).
    pub identity_big_m: f64,
    /// The universal-constant knob in the bonus formula.
    pub gamma_scale: f64,
    pub gamma_cap: Option<f64>,
    pub ball_radius: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub refresh_period: usize,
    pub refit_period: usize,
    /// Exploration probability of the eps_greedy baseline.
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub baselines: Vec<BaselineKind>,
    pub out: PathBuf,
}

/// Partial configuration collected from a file or the CLI.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub env: Option<String>,
    pub states: Option<usize>,
    pub actions: Option<usize>,
    pub horizon: Option<usize>,
    pub dim: Option<usize>,
    pub cap: Option<f64>,
    pub env_seed: Option<u64>,
    pub episodes: Option<usize>,
    pub link: Option<String>,
    pub identity_big_m: Option<f64>,
    pub gamma_scale: Option<f64>,
    pub gamma_cap: Option<f64>,
    pub ball_radius: Option<f64>,
    pub max_iters: Option<usize>,
    pub tolerance: Option<f64>,
    pub refresh_period: Option<usize>,
    pub refit_period: Option<usize>,
    pub epsilon: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub baselines: Option<Vec<BaselineKind>>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Applies one `key = value` assignment; both the config-file
    /// parser and the CLI flags funnel through here.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
            value.parse().map_err(|_| {
                HarnessError::Config(format!("cannot parse '{value}' for key '{key}'"))
            })
        }
        match key {
            "env" => self.env = Some(value.to_string()),
            "states" => self.states = Some(num(key, value)?),
            "actions" => self.actions = Some(num(key, value)?),
            "horizon" => self.horizon = Some(num(key, value)?),
            "dim" => self.dim = Some(num(key, value)?),
            "cap" => self.cap = Some(num(key, value)?),
            "env-seed" => self.env_seed = Some(num(key, value)?),
            "episodes" => self.episodes = Some(num(key, value)?),
            "link" => self.link = Some(value.to_string()),
            "identity-big-m" => self.identity_big_m = Some(num(key, value)?),
            "gamma-scale" => self.gamma_scale = Some(num(key, value)?),
            "gamma-cap" => self.gamma_cap = Some(num(key, value)?),
            "ball-radius" => self.ball_radius = Some(num(key, value)?),
            "max-iters" => self.max_iters = Some(num(key, value)?),
            "tolerance" => self.tolerance = Some(num(key, value)?),
            "refresh-period" => self.refresh_period = Some(num(key, value)?),
            "refit-period" => self.refit_period = Some(num(key, value)?),
            "epsilon" => self.epsilon = Some(num(key, value)?),
            "seeds" => self.seeds = Some(parse_seeds(value)?),
            "baselines" => self.baselines = Some(parse_baselines(value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            other => {
                return Err(HarnessError::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    fn merge_from(&mut self, weaker: Overrides) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if self.$field.is_none() { self.$field = weaker.$field; })*
            };
        }
        take!(
            env, states, actions, horizon, dim, cap, env_seed, episodes, link, identity_big_m,
            gamma_scale, gamma_cap, ball_radius, max_iters, tolerance, refresh_period,
            refit_period, epsilon, seeds, baselines, out
        );
    }
}

/// Seed lists accept `5`, `1,2,7`, and half-open ranges `0..10`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = |v: &str| HarnessError::Config(format!("cannot parse seed list '{v}'"));
    if let Some((lo, hi)) = value.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad(value))?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad(value))?;
        if hi <= lo {
            return Err(bad(value));
        }
        return Ok((lo..hi).collect());
    }
    value
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(value)))
        .collect()
}

fn parse_baselines(value: &str) -> Result<Vec<BaselineKind>, HarnessError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| BaselineKind::parse(s.trim()))
        .collect()
}

/// Parses the flat key = value config format. `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<Overrides, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut overrides = Overrides::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: "expected 'key = value'".to_string(),
        })?;
        overrides.set(key.trim(), value.trim()).map_err(|e| {
            HarnessError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            }
        })?;
    }
    Ok(overrides)
}

impl ExperimentConfig {
    /// Resolves (CLI overrides) > (config file) > (family defaults).
    pub fn resolve(file: Option<&Path>, cli: Overrides) -> Result<Self, HarnessError> {
        let mut merged = cli;
        if let Some(path) = file {
            merged.merge_from(parse_config_file(path)?);
        }
        let env = EnvFamily::parse(merged.env.as_deref().unwrap_or("chain"))?;
        let (def_states, def_actions, def_horizon, def_dim) = match env {
            EnvFamily::Tabular => (3, 2, 3, 0),
            EnvFamily::Linear => (6, 2, 3, 4),
            EnvFamily::Counterexample => (0, 2, 2, 2),
            EnvFamily::Chain => (4, 2, 6, 0),
        };
        let config = ExperimentConfig {
            env,
            states: merged.states.unwrap_or(def_states),
            actions: merged.actions.unwrap_or(def_actions),
            horizon: merged.horizon.unwrap_or(def_horizon),
            dim: merged.dim.unwrap_or(def_dim),
            cap: merged.cap.unwrap_or(1.0),
            env_seed: merged.env_seed.unwrap_or(0),
            episodes: merged.episodes.unwrap_or(500),
            link: merged.link.unwrap_or_else(|| "identity".to_string()),
            identity_big_m: merged.identity_big_m.unwrap_or(0.0),
            gamma_scale: merged.gamma_scale.unwrap_or(1.0),
            gamma_cap: merged.gamma_cap,
            ball_radius: merged.ball_radius.unwrap_or(1.0),
            max_iters: merged.max_iters.unwrap_or(500),
            tolerance: merged.tolerance.unwrap_or(1e-8),
            refresh_period: merged.refresh_period.unwrap_or(1000),
            refit_period: merged.refit_period.unwrap_or(1),
            epsilon: merged.epsilon.unwrap_or(0.1),
            seeds: merged.seeds.unwrap_or_else(|| vec![0]),
            baselines: merged.baselines.unwrap_or_default(),
            out: merged.out.unwrap_or_else(|| PathBuf::from("runs/out")),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(HarnessError::Config("episodes must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        if self.env == EnvFamily::Counterexample && self.horizon != 2 {
            return Err(HarnessError::Config(
                "the counterexample has a fixed horizon of 2".into(),
            ));
        }
        if !(self.ball_radius.is_finite() && self.ball_radius > 0.0) {
            return Err(HarnessError::Config("ball-radius must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(HarnessError::Config("epsilon must lie in [0, 1]".into()));
        }
        // link resolvable?
        self.link_spec().map(|_| ())
    }

    /// The configured link with its declared constants.
    pub fn link_spec(&self) -> Result<LinkSpec, HarnessError> {
        match self.link.as_str() {
            "identity" => Ok(LinkSpec::identity_with_big_m(self.identity_big_m)),
            "logistic" => Ok(LinkSpec::logistic()),
            other => Err(HarnessError::Config(format!(
                "unknown link '{other}' (expected identity | logistic)"
            ))),
        }
    }

    pub fn solver_opts(&self) -> SolverOpts {
        SolverOpts {
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            refresh_period: self.refresh_period,
        }
    }

    pub fn agent_config(&self, policy: PolicyKind) -> Result<AgentConfig, HarnessError> {
        Ok(AgentConfig {
            episodes: self.episodes,
            link: self.link_spec()?,
            gamma_scale: self.gamma_scale,
            gamma_cap: self.gamma_cap,
            ball_radius: self.ball_radius,
            solver: self.solver_opts(),
            refit_period: self.refit_period,
            policy,
        })
    }

    /// Renders the resolved configuration back into the flat file
    /// format, so a run directory is self-describing and `diagnose`
    /// can rebuild the environment.
    pub fn to_flat_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "env = {}", self.env.name());
        let _ = writeln!(s, "states = {}", self.states);
        let _ = writeln!(s, "actions = {}", self.actions);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "cap = {}", self.cap);
        let _ = writeln!(s, "env-seed = {}", self.env_seed);
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let _ = writeln!(s, "link = {}", self.link);
        let _ = writeln!(s, "identity-big-m = {}", self.identity_big_m);
        let _ = writeln!(s, "gamma-scale = {}", self.gamma_scale);
        if let Some(cap) = self.gamma_cap {
            let _ = writeln!(s, "gamma-cap = {cap}");
        }
        let _ = writeln!(s, "ball-radius = {}", self.ball_radius);
        let _ = writeln!(s, "max-iters = {}", self.max_iters);
        let _ = writeln!(s, "tolerance = {}", self.tolerance);
        let _ = writeln!(s, "refresh-period = {}", self.refresh_period);
        let _ = writeln!(s, "refit-period = {}", self.refit_period);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(","));
        if !self.baselines.is_empty() {
            let names: Vec<&str> = self.baselines.iter().map(|b| b.name()).collect();
            let _ = writeln!(s, "baselines = {}", names.join(","));
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

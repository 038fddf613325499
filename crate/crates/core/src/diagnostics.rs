//! Executable diagnostics: optimism checks against the exact oracle,
//! the elliptical-potential inequality, the link sandwich bound, the
//! optimistic-closure residual on the counterexample, and the regret
//! decomposition. Each one turns a statement from the analysis into a
//! measurement over run artifacts or sampled instances.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::agent::{run_episodic, AgentConfig, AgentState, RunArtifacts};
use crate::envs::CounterexampleMdp;
use crate::error::CoreError;
use crate::linalg;
use crate::links::LinkSpec;
use crate::mdp::{EpisodicMdp, State};

/// Optimism bookkeeping over a run's visited pairs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimismReport {
    pub checks: u64,
    pub violations: u64,
    pub max_violation_magnitude: f64,
}

impl OptimismReport {
    pub fn violation_rate(&self) -> f64 {
        if self.checks == 0 {
            0.0
        } else {
            self.violations as f64 / self.checks as f64
        }
    }
}

/// Per-step confidence-sum potentials against the deterministic bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialReport {
    /// `sum_t ||phi_{h,t}||^2` under the pre-episode covariance, per h.
    pub sums: Vec<f64>,
    /// `2 d ln(1 + T / d)`.
    pub bound: f64,
}

/// Worst slack seen by the sandwich check. Positive slack means a
/// violation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeltaReport {
    pub samples: usize,
    pub worst_lower_slack: f64,
    pub worst_upper_slack: f64,
    pub violations: u64,
}

/// Mean decomposition gap with its standard error across seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub num_seeds: usize,
    pub per_seed: Vec<f64>,
}

/// Everything the diagnostics produce for one experiment, serialized
/// alongside the run outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub optimism_checks: u64,
    pub optimism_violations: u64,
    pub max_violation_magnitude: f64,
    /// Per step: the largest potential sum seen across seeds.
    pub potential_sums: Vec<f64>,
    pub potential_bound: f64,
    pub closure_max_residual: Option<f64>,
    pub decomposition_gap: Option<GapEstimate>,
}

/// Compares the recorded pre-update optimistic values against the
/// exact `Q*` at every visited pair. Violations are counted beyond a
/// `1e-9` magnitude.
pub fn check_optimism(
    artifacts: &RunArtifacts,
    env: &dyn EpisodicMdp,
) -> Result<OptimismReport, CoreError> {
    if !artifacts.has_learning_artifacts() {
        return Err(CoreError::UnsupportedOracle(
            "run recorded no learning artifacts".into(),
        ));
    }
    let mut checks = 0u64;
    let mut violations = 0u64;
    let mut max_violation = 0.0f64;
    let mut any_oracle = false;
    for h in 0..artifacts.horizon {
        for (t, pair) in artifacts.visited[h].iter().enumerate() {
            if let Some(q_star) = env.q_star(h, &pair.state, pair.action) {
                any_oracle = true;
                checks += 1;
                let qbar = artifacts.qbar[h][t];
                if qbar < q_star - 1e-9 {
                    violations += 1;
                    max_violation = max_violation.max(q_star - qbar);
                }
            }
        }
    }
    if !any_oracle {
        return Err(CoreError::UnsupportedOracle(
            "environment exposes no exact Q values".into(),
        ));
    }
    Ok(OptimismReport {
        checks,
        violations,
        max_violation_magnitude: max_violation,
    })
}

/// Exhaustive optimism sweep over every `(h, s, a)` triple of a small
/// finite environment against the agent's current estimates. The
/// artifact-driven [`check_optimism`] covers visited pairs only (those
/// feed the regret bound); this covers the whole table.
pub fn check_optimism_exhaustive(
    agent: &AgentState,
    env: &dyn EpisodicMdp,
) -> Result<OptimismReport, CoreError> {
    let num_states = env.num_states().ok_or_else(|| {
        CoreError::UnsupportedOracle("exhaustive sweep needs a finite state space".into())
    })?;
    let mut checks = 0u64;
    let mut violations = 0u64;
    let mut max_violation = 0.0f64;
    for h in 0..agent.horizon() {
        for s in 0..num_states {
            let state = State::Id(s);
            for a in 0..env.num_actions() {
                let q_star = env.q_star(h, &state, a).ok_or_else(|| {
                    CoreError::UnsupportedOracle(
                        "environment exposes no exact Q values".into(),
                    )
                })?;
                checks += 1;
                let qbar = agent.q_value(h, &state, a, env);
                if qbar < q_star - 1e-9 {
                    violations += 1;
                    max_violation = max_violation.max(q_star - qbar);
                }
            }
        }
    }
    Ok(OptimismReport {
        checks,
        violations,
        max_violation_magnitude: max_violation,
    })
}

/// Sums the squared Mahalanobis norms of the visited features under
/// the pre-episode covariances and asserts the deterministic bound
/// `2 d ln(1 + T / d)` for every step.
pub fn elliptical_potential_sum(artifacts: &RunArtifacts) -> Result<PotentialReport, CoreError> {
    if !artifacts.has_learning_artifacts() {
        return Err(CoreError::UnsupportedOracle(
            "run recorded no learning artifacts".into(),
        ));
    }
    let d = artifacts.feature_dim as f64;
    let t = artifacts.episodes as f64;
    let bound = 2.0 * d * (1.0 + t / d).ln();
    let sums: Vec<f64> = artifacts
        .bonus_sq
        .iter()
        .map(|per_t| per_t.iter().sum())
        .collect();
    for (h, sum) in sums.iter().enumerate() {
        if *sum > bound + 1e-9 {
            return Err(CoreError::InvariantBreach(format!(
                "elliptical potential at step {h}: sum {sum} exceeds bound {bound}"
            )));
        }
    }
    Ok(PotentialReport { sums, bound })
}

/// Samples random `(theta, theta', x)` triples in the unit ball and
/// verifies the derivative sandwich
/// `kappa^2 <x, theta'-theta>^2 <= (f(<x,theta'>) - f(<x,theta>))^2
///  <= K^2 ||theta'-theta||^2`.
/// Any violation beyond `1e-10` slack signals a bad declared constant
/// and is an error.
pub fn lemma_delta_check(
    link: &LinkSpec,
    num_samples: usize,
    dim: usize,
    seed: u64,
) -> Result<DeltaReport, CoreError> {
    if num_samples == 0 {
        return Err(CoreError::InputDomain("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kappa_sq = link.kappa() * link.kappa();
    let big_k_sq = link.big_k() * link.big_k();
    let mut worst_lower = f64::NEG_INFINITY;
    let mut worst_upper = f64::NEG_INFINITY;
    let mut violations = 0u64;
    for _ in 0..num_samples {
        let theta = sample_unit_ball(dim, &mut rng);
        let theta_prime = sample_unit_ball(dim, &mut rng);
        let x = sample_unit_ball(dim, &mut rng);
        let z = linalg::dot(&x, &theta);
        let z_prime = linalg::dot(&x, &theta_prime);
        let diff_sq = {
            let d = link.eval_clamped(z_prime) - link.eval_clamped(z);
            d * d
        };
        let gap: f64 = z_prime - z;
        let lower = kappa_sq * gap * gap;
        let upper: f64 = big_k_sq
            * theta_prime
                .iter()
                .zip(&theta)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        let lower_slack = lower - diff_sq;
        let upper_slack = diff_sq - upper;
        worst_lower = worst_lower.max(lower_slack);
        worst_upper = worst_upper.max(upper_slack);
        if lower_slack > 1e-10 || upper_slack > 1e-10 {
            violations += 1;
        }
    }
    let report = DeltaReport {
        samples: num_samples,
        worst_lower_slack: worst_lower,
        worst_upper_slack: worst_upper,
        violations,
    };
    if violations > 0 {
        return Err(CoreError::AssumptionViolation(format!(
            "sandwich bound violated {violations} times for link '{}' \
             (worst slacks {worst_lower:.3e} / {worst_upper:.3e})",
            link.name()
        )));
    }
    Ok(report)
}

/// Exact Bellman backup of the clipped confidence function
/// `g = min{1, <phi, theta> + gamma ||phi||_A}` on the counterexample,
/// at a first state with mixing coefficient `alpha`. Transitions are
/// deterministic, so the backup is the stage-two reward plus `g`
/// evaluated at the stage-two features `alpha * x`.
pub fn counterexample_backup(
    env: &CounterexampleMdp,
    theta: &[f64],
    gamma: f64,
    a_matrix: &Array2<f64>,
    alpha: f64,
) -> f64 {
    let x = env.x();
    let phi = [alpha * x[0], alpha * x[1]];
    let mean = linalg::dot(&phi, theta);
    let bonus = gamma * linalg::quad_form(a_matrix, &phi).max(0.0).sqrt();
    0.1 * alpha / env.cap() + (mean + bonus).min(1.0)
}

/// Draws random elements of the enlarged confidence class and measures
/// how far their exact backups deviate from a function linear in the
/// first-stage features. Anything beyond `1e-9` is a closure violation.
pub fn closure_residual(
    env: &CounterexampleMdp,
    num_test_functions: usize,
    alpha_grid_size: usize,
    seed: u64,
) -> Result<f64, CoreError> {
    if alpha_grid_size < 2 {
        return Err(CoreError::InputDomain("alpha grid needs >= 2 points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_residual = 0.0f64;
    for _ in 0..num_test_functions {
        let theta = sample_unit_ball(2, &mut rng);
        let gamma = rng.random::<f64>() * env.cap();
        let a_matrix = sample_psd_contraction(2, &mut rng);
        // backups on the alpha grid, then the best through-origin line
        let mut sum_ay = 0.0;
        let mut sum_aa = 0.0;
        let mut values = Vec::with_capacity(alpha_grid_size);
        for i in 0..alpha_grid_size {
            let alpha = i as f64 / (alpha_grid_size - 1) as f64;
            let y = counterexample_backup(env, &theta, gamma, &a_matrix, alpha);
            sum_ay += alpha * y;
            sum_aa += alpha * alpha;
            values.push((alpha, y));
        }
        let slope = sum_ay / sum_aa;
        for (alpha, y) in values {
            max_residual = max_residual.max((y - slope * alpha).abs());
        }
    }
    if max_residual > 1e-9 {
        return Err(CoreError::InvariantBreach(format!(
            "closure residual {max_residual} exceeds 1e-9"
        )));
    }
    Ok(max_residual)
}

/// Runs the configured agent over several seeds and estimates the mean
/// per-episode gap `(V* - reward_t) - sum_h conf_{h,t-1}`. Under
/// optimism the mean should not be significantly positive.
pub fn regret_decomposition_check(
    env: &dyn EpisodicMdp,
    config: &AgentConfig,
    num_seeds: usize,
    base_seed: u64,
) -> Result<GapEstimate, CoreError> {
    let v_star = env.optimal_value().ok_or_else(|| {
        CoreError::UnsupportedOracle("environment exposes no optimal value".into())
    })?;
    if num_seeds == 0 {
        return Err(CoreError::InputDomain("need at least one seed".into()));
    }
    let mut per_seed = Vec::with_capacity(num_seeds);
    for s in 0..num_seeds {
        let out = run_episodic(env, config, base_seed + s as u64)?;
        let episodes = out.artifacts.episodes;
        let mut total = 0.0;
        for t in 0..episodes {
            let conf_sum = out.artifacts.bonus_sum(t);
            total += (v_star - out.artifacts.rewards[t]) - conf_sum;
        }
        per_seed.push(total / episodes as f64);
    }
    Ok(gap_estimate(per_seed))
}

/// The same gap estimate computed from artifacts already on hand (one
/// entry per seed), instead of re-running the agent. Returns `None`
/// when any run lacks an exact optimal value or learning artifacts.
pub fn decomposition_gap_from_artifacts(artifacts: &[RunArtifacts]) -> Option<GapEstimate> {
    if artifacts.is_empty() {
        return None;
    }
    let mut per_seed = Vec::with_capacity(artifacts.len());
    for run in artifacts {
        let v_star = run.v_star?;
        if !run.has_learning_artifacts() {
            return None;
        }
        let mut total = 0.0;
        for t in 0..run.episodes {
            total += (v_star - run.rewards[t]) - run.bonus_sum(t);
        }
        per_seed.push(total / run.episodes as f64);
    }
    Some(gap_estimate(per_seed))
}

fn gap_estimate(per_seed: Vec<f64>) -> GapEstimate {
    let n = per_seed.len();
    let mean = per_seed.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = per_seed.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    GapEstimate {
        mean,
        std_error,
        num_seeds: n,
        per_seed,
    }
}

/// Assembles the full report for one experiment from its per-seed
/// artifacts. The potential bound is asserted for every seed; the
/// optimism counters aggregate across seeds.
pub fn build_report(
    env: &dyn EpisodicMdp,
    artifacts: &[RunArtifacts],
    closure: Option<f64>,
    decomposition: Option<GapEstimate>,
) -> Result<DiagnosticsReport, CoreError> {
    let mut checks = 0u64;
    let mut violations = 0u64;
    let mut max_violation = 0.0f64;
    let mut potential_sums: Vec<f64> = Vec::new();
    let mut potential_bound = 0.0f64;
    for run in artifacts {
        if let Ok(report) = check_optimism(run, env) {
            checks += report.checks;
            violations += report.violations;
            max_violation = max_violation.max(report.max_violation_magnitude);
        }
        if run.has_learning_artifacts() {
            let potential = elliptical_potential_sum(run)?;
            potential_bound = potential.bound;
            if potential_sums.is_empty() {
                potential_sums = potential.sums;
            } else {
                for (acc, s) in potential_sums.iter_mut().zip(&potential.sums) {
                    *acc = acc.max(*s);
                }
            }
        }
    }
    Ok(DiagnosticsReport {
        optimism_checks: checks,
        optimism_violations: violations,
        max_violation_magnitude: max_violation,
        potential_sums,
        potential_bound,
        closure_max_residual: closure,
        decomposition_gap: decomposition,
    })
}

/// Uniform sample from the unit ball: Gaussian direction scaled by a
/// radius with the right density.
pub fn sample_unit_ball(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let norm = linalg::norm2(&v);
    if norm == 0.0 {
        return v;
    }
    let radius: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
    let scale = radius / norm;
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

/// Random positive semi-definite matrix with operator norm at most one:
/// `U^T D U` with `U` random orthogonal and diagonal `D` in `[0, 1]`.
pub fn sample_psd_contraction(dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let u = random_orthogonal(dim, rng);
    let diag: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut out = Array2::<f64>::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = 0.0;
            for (k, dk) in diag.iter().enumerate() {
                acc += u[[k, i]] * dk * u[[k, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut u = Array2::<f64>::zeros((dim, dim));
    for i in 0..dim {
        let mut row: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for k in 0..i {
            let proj: f64 = (0..dim).map(|j| u[[k, j]] * row[j]).sum();
            for j in 0..dim {
                row[j] -= proj * u[[k, j]];
            }
        }
        let norm = linalg::norm2(&row);
        for j in 0..dim {
            u[[i, j]] = row[j] / norm;
        }
    }
    u
}

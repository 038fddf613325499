//! Episodic MDP abstraction, trajectory collection, the exact
//! dynamic-programming oracle, and regret bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::rng::EpisodeRng;

/// Environment state. The agent itself never inspects this — it only
/// sees feature vectors — but environments, the DP oracle, and the
/// diagnostics need a concrete representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum State {
    /// Dense index into a finite state space.
    Id(usize),
    /// Counterexample state: the stage within the two-step episode and
    /// the mixing coefficient drawn at the start of the episode.
    Stage { stage: u8, alpha: f64 },
}

/// A finite-horizon environment reset from its initial distribution at
/// the start of every episode.
///
/// Step indices are 0-based: an episode visits steps `0..horizon()`.
/// Environments are immutable descriptions; all randomness flows
/// through the explicit RNG, so rollouts are reproducible and safe to
/// run in parallel across seeds.
pub trait EpisodicMdp: Send + Sync {
    fn horizon(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn feature_dim(&self) -> usize;

    /// Draws the episode's first state.
    fn sample_initial(&self, rng: &mut EpisodeRng) -> State;

    /// Advances one step. The successor state is unused when
    /// `h == horizon() - 1` (the episode ends there).
    fn step(&self, h: usize, state: &State, action: usize, rng: &mut EpisodeRng) -> (State, f64);

    /// Writes the feature vector of `(state, action)` into `out`
    /// (length `feature_dim()`). Always lands in the unit ball.
    fn features_into(&self, state: &State, action: usize, out: &mut [f64]);

    fn features(&self, state: &State, action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim()];
        self.features_into(state, action, &mut out);
        out
    }

    /// Dense index of a state when the state space is finite. Enables
    /// per-episode memoization of Q evaluations and oracle lookups.
    fn state_index(&self, _state: &State) -> Option<usize> {
        None
    }

    /// Number of states when finite.
    fn num_states(&self) -> Option<usize> {
        None
    }

    /// Exact `Q*` at step `h` when the environment can compute it.
    fn q_star(&self, _h: usize, _state: &State, _action: usize) -> Option<f64> {
        None
    }

    /// Exact optimal value `V*` when the environment can compute it.
    fn optimal_value(&self) -> Option<f64> {
        None
    }

    /// Enumerable view for the DP oracle, when supported.
    fn as_enumerable(&self) -> Option<&dyn EnumerableMdp> {
        None
    }
}

/// Exact-table access for environments with finitely many states.
pub trait EnumerableMdp: EpisodicMdp {
    fn state_count(&self) -> usize;
    fn initial_distribution(&self) -> Vec<f64>;
    /// `P(s' | s, a)` at step `h`, as a probability vector over `s'`.
    fn transition_probs(&self, h: usize, state: usize, action: usize) -> Vec<f64>;
    /// Expected immediate reward at `(h, s, a)`.
    fn mean_reward(&self, h: usize, state: usize, action: usize) -> f64;
}

/// One step of a realized episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub state: State,
    pub action: usize,
    pub reward: f64,
}

/// A realized episode: exactly `horizon` steps whose rewards sum into
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Collects one episode under the given policy.
///
/// Fails fast on invalid actions, non-finite rewards, or a per-episode
/// reward sum outside `[0, 1]` — those are environment-construction
/// bugs, not conditions to tolerate silently.
pub fn rollout_episode(
    env: &dyn EpisodicMdp,
    mut policy: impl FnMut(usize, &State) -> usize,
    rng: &mut EpisodeRng,
) -> Result<Trajectory, CoreError> {
    let horizon = env.horizon();
    let mut steps = Vec::with_capacity(horizon);
    let mut state = env.sample_initial(rng);
    let mut total = 0.0;
    for h in 0..horizon {
        let action = policy(h, &state);
        if action >= env.num_actions() {
            return Err(CoreError::InputDomain(format!(
                "policy returned action {action} but the environment has {} actions",
                env.num_actions()
            )));
        }
        #[cfg(debug_assertions)]
        {
            let phi = env.features(&state, action);
            let norm: f64 = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
            debug_assert!(norm <= 1.0 + 1e-9, "feature norm {norm} > 1 at step {h}");
        }
        let (next, reward) = env.step(h, &state, action, rng);
        if !reward.is_finite() {
            return Err(CoreError::EnvironmentFault(format!(
                "non-finite reward {reward} at step {h}"
            )));
        }
        total += reward;
        steps.push(TrajectoryStep {
            state,
            action,
            reward,
        });
        state = next;
    }
    if !(-1e-9..=1.0 + 1e-9).contains(&total) {
        return Err(CoreError::NormalizationViolation(format!(
            "episode reward sum {total} outside [0, 1]"
        )));
    }
    Ok(Trajectory { steps })
}

/// Per-episode rewards against the optimal value `V*`, with cumulative
/// regret maintained by definition: after `t` episodes,
/// `regret[t-1] = t * v_star - sum of rewards`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLog {
    pub v_star: f64,
    pub per_episode_reward: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
}

impl RegretLog {
    pub fn new(v_star: f64) -> Self {
        RegretLog {
            v_star,
            per_episode_reward: Vec::new(),
            cumulative_regret: Vec::new(),
        }
    }

    /// Appends one episode's reward and extends the cumulative regret.
    pub fn update(&mut self, episode_reward: f64) -> Result<(), CoreError> {
        if !episode_reward.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&episode_reward) {
            return Err(CoreError::NormalizationViolation(format!(
                "episode reward {episode_reward} outside [0, 1]"
            )));
        }
        let prev = self.cumulative_regret.last().copied().unwrap_or(0.0);
        self.per_episode_reward.push(episode_reward);
        self.cumulative_regret
            .push(prev + self.v_star - episode_reward);
        Ok(())
    }

    pub fn episodes(&self) -> usize {
        self.per_episode_reward.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

/// Exact `Q*` and `V*` tables from backward induction.
#[derive(Debug, Clone)]
pub struct DpTables {
    /// `q[h][s][a]`.
    pub q: Vec<Vec<Vec<f64>>>,
    /// `v[h][s] = max_a q[h][s][a]`.
    pub v: Vec<Vec<f64>>,
    /// `E_{s ~ mu}[ v[0][s] ]`.
    pub v_star: f64,
}

impl DpTables {
    pub fn q_star(&self, h: usize, state: usize, action: usize) -> f64 {
        self.q[h][state][action]
    }
}

/// Backward-induction `Q*` oracle for enumerable environments.
pub fn exact_q_values(env: &dyn EpisodicMdp) -> Result<DpTables, CoreError> {
    let en = env.as_enumerable().ok_or_else(|| {
        CoreError::UnsupportedOracle(
            "environment does not expose exact transition tables".to_string(),
        )
    })?;
    Ok(solve_dp(en))
}

fn solve_dp(env: &dyn EnumerableMdp) -> DpTables {
    let horizon = env.horizon();
    let num_states = env.state_count();
    let num_actions = env.num_actions();
    let mut q = vec![vec![vec![0.0; num_actions]; num_states]; horizon];
    let mut v = vec![vec![0.0; num_states]; horizon];
    for h in (0..horizon).rev() {
        for s in 0..num_states {
            for (a, q_sa) in q[h][s].iter_mut().enumerate() {
                let mut val = env.mean_reward(h, s, a);
                if h + 1 < horizon {
                    let probs = env.transition_probs(h, s, a);
                    val += probs
                        .iter()
                        .zip(&v[h + 1])
                        .map(|(p, vn)| p * vn)
                        .sum::<f64>();
                }
                *q_sa = val;
            }
            v[h][s] = q[h][s]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let v_star = env
        .initial_distribution()
        .iter()
        .zip(&v[0])
        .map(|(p, val)| p * val)
        .sum();
    DpTables { q, v, v_star }
}

/// Exact value of a deterministic policy `(h, s) -> a` on an enumerable
/// environment, by propagating the state distribution forward.
pub fn evaluate_deterministic_policy(
    env: &dyn EnumerableMdp,
    policy: impl Fn(usize, usize) -> usize,
) -> f64 {
    evaluate_stochastic_policy(env, |h, s| {
        let mut probs = vec![0.0; env.num_actions()];
        probs[policy(h, s)] = 1.0;
        probs
    })
}

/// Exact value of a stochastic policy `(h, s) -> action distribution`.
pub fn evaluate_stochastic_policy(
    env: &dyn EnumerableMdp,
    policy: impl Fn(usize, usize) -> Vec<f64>,
) -> f64 {
    let horizon = env.horizon();
    let num_states = env.state_count();
    let num_actions = env.num_actions();
    let mut dist = env.initial_distribution();
    let mut value = 0.0;
    for h in 0..horizon {
        let mut next = vec![0.0; num_states];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let action_probs = policy(h, s);
            debug_assert_eq!(action_probs.len(), num_actions);
            for (a, &p_a) in action_probs.iter().enumerate() {
                let w = mass * p_a;
                if w == 0.0 {
                    continue;
                }
                value += w * env.mean_reward(h, s, a);
                if h + 1 < horizon {
                    for (sn, p) in env.transition_probs(h, s, a).iter().enumerate() {
                        next[sn] += w * p;
                    }
                }
            }
        }
        dist = next;
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::episode_rng;
    use approx::assert_abs_diff_eq;

    /// One state, one action, deterministic reward 1/H per step.
    struct ConstantEnv {
        horizon: usize,
    }

    impl EpisodicMdp for ConstantEnv {
        fn horizon(&self) -> usize {
            self.horizon
        }
        fn num_actions(&self) -> usize {
            1
        }
        fn feature_dim(&self) -> usize {
            1
        }
        fn sample_initial(&self, _rng: &mut EpisodeRng) -> State {
            State::Id(0)
        }
        fn step(&self, _h: usize, _s: &State, _a: usize, _rng: &mut EpisodeRng) -> (State, f64) {
            (State::Id(0), 1.0 / self.horizon as f64)
        }
        fn features_into(&self, _s: &State, _a: usize, out: &mut [f64]) {
            out[0] = 1.0;
        }
        fn state_index(&self, _s: &State) -> Option<usize> {
            Some(0)
        }
        fn num_states(&self) -> Option<usize> {
            Some(1)
        }
        fn as_enumerable(&self) -> Option<&dyn EnumerableMdp> {
            Some(self)
        }
    }

    impl EnumerableMdp for ConstantEnv {
        fn state_count(&self) -> usize {
            1
        }
        fn initial_distribution(&self) -> Vec<f64> {
            vec![1.0]
        }
        fn transition_probs(&self, _h: usize, _s: usize, _a: usize) -> Vec<f64> {
            vec![1.0]
        }
        fn mean_reward(&self, _h: usize, _s: usize, _a: usize) -> f64 {
            1.0 / self.horizon as f64
        }
    }

    /// Environment that emits an invalid reward, for the fault path.
    struct BrokenEnv;

    impl EpisodicMdp for BrokenEnv {
        fn horizon(&self) -> usize {
            1
        }
        fn num_actions(&self) -> usize {
            1
        }
        fn feature_dim(&self) -> usize {
            1
        }
        fn sample_initial(&self, _rng: &mut EpisodeRng) -> State {
            State::Id(0)
        }
        fn step(&self, _h: usize, _s: &State, _a: usize, _rng: &mut EpisodeRng) -> (State, f64) {
            (State::Id(0), f64::NAN)
        }
        fn features_into(&self, _s: &State, _a: usize, out: &mut [f64]) {
            out[0] = 0.0;
        }
    }

    #[test]
    fn constant_env_rollout_totals_one() {
        let env = ConstantEnv { horizon: 4 };
        let mut rng = episode_rng(0, 0);
        let traj = rollout_episode(&env, |_, _| 0, &mut rng).unwrap();
        assert_eq!(traj.steps.len(), 4);
        assert_abs_diff_eq!(traj.total_reward(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rollout_is_deterministic_under_fixed_seed() {
        let env = ConstantEnv { horizon: 3 };
        let t1 = rollout_episode(&env, |_, _| 0, &mut episode_rng(9, 5)).unwrap();
        let t2 = rollout_episode(&env, |_, _| 0, &mut episode_rng(9, 5)).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn rollout_rejects_bad_action() {
        let env = ConstantEnv { horizon: 2 };
        let err = rollout_episode(&env, |_, _| 3, &mut episode_rng(0, 0));
        assert!(matches!(err, Err(CoreError::InputDomain(_))));
    }

    #[test]
    fn rollout_surfaces_environment_fault() {
        let err = rollout_episode(&BrokenEnv, |_, _| 0, &mut episode_rng(0, 0));
        assert!(matches!(err, Err(CoreError::EnvironmentFault(_))));
    }

    #[test]
    fn dp_on_constant_env_telescopes() {
        let horizon = 5;
        let env = ConstantEnv { horizon };
        let tables = exact_q_values(&env).unwrap();
        for h in 0..horizon {
            // remaining steps each pay 1/H
            let expected = (horizon - h) as f64 / horizon as f64;
            assert_abs_diff_eq!(tables.q[h][0][0], expected, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(tables.v_star, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_rejects_non_enumerable_env() {
        assert!(matches!(
            exact_q_values(&BrokenEnv),
            Err(CoreError::UnsupportedOracle(_))
        ));
    }

    #[test]
    fn regret_log_optimal_play() {
        let mut log = RegretLog::new(0.5);
        log.update(0.5).unwrap();
        log.update(0.5).unwrap();
        assert_eq!(log.cumulative_regret, vec![0.0, 0.0]);
    }

    #[test]
    fn regret_log_definition() {
        let mut log = RegretLog::new(1.0);
        log.update(0.0).unwrap();
        assert_eq!(log.cumulative_regret, vec![1.0]);

        let mut log = RegretLog::new(0.3);
        log.update(0.1).unwrap();
        log.update(0.4).unwrap();
        assert_abs_diff_eq!(log.cumulative_regret[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(log.cumulative_regret[1], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn regret_log_rejects_out_of_range_reward() {
        let mut log = RegretLog::new(0.5);
        assert!(matches!(
            log.update(1.5),
            Err(CoreError::NormalizationViolation(_))
        ));
        assert!(log.update(-0.2).is_err());
    }

    #[test]
    fn policy_evaluation_matches_dp_on_trivial_env() {
        let env = ConstantEnv { horizon: 3 };
        let value = evaluate_deterministic_policy(&env, |_, _| 0);
        assert_abs_diff_eq!(value, 1.0, epsilon = 1e-12);
    }
}

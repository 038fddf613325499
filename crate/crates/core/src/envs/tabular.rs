//! Finite MDPs with standard-basis features `e_{s,a}` in dimension
//! `S * A`.

use rand::Rng;

use crate::error::CoreError;
use crate::mdp::{exact_q_values, DpTables, EnumerableMdp, EpisodicMdp, State};
use crate::rng::EpisodeRng;

/// A tabular MDP with per-step transition and reward tensors. Rewards
/// are deterministic and bounded by `1/H` per step, so episode totals
/// stay in `[0, 1]`.
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// `transitions[h][s][a]` is a probability vector over successors.
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rewards[h][s][a]` in `[0, 1/H]`.
    rewards: Vec<Vec<Vec<f64>>>,
    initial: Vec<f64>,
    dp: DpTables,
}

impl TabularMdp {
    pub fn new(
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        initial: Vec<f64>,
    ) -> Result<Self, CoreError> {
        let horizon = transitions.len();
        if horizon == 0 || rewards.len() != horizon {
            return Err(CoreError::Construction(
                "transition and reward tensors must cover the same nonzero horizon".into(),
            ));
        }
        let num_states = initial.len();
        let num_actions = transitions[0][0].len();
        if (initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(CoreError::Construction(
                "initial distribution does not sum to 1".into(),
            ));
        }
        let max_step_reward = 1.0 / horizon as f64;
        for h in 0..horizon {
            for s in 0..num_states {
                for a in 0..num_actions {
                    let row = &transitions[h][s][a];
                    let sum: f64 = row.iter().sum();
                    if row.len() != num_states || (sum - 1.0).abs() > 1e-12 {
                        return Err(CoreError::Construction(format!(
                            "transition row ({h}, {s}, {a}) sums to {sum}, expected 1"
                        )));
                    }
                    if row.iter().any(|p| *p < 0.0) {
                        return Err(CoreError::Construction(format!(
                            "negative transition probability at ({h}, {s}, {a})"
                        )));
                    }
                    let r = rewards[h][s][a];
                    if !(0.0..=max_step_reward + 1e-12).contains(&r) {
                        return Err(CoreError::Construction(format!(
                            "reward {r} at ({h}, {s}, {a}) outside [0, 1/H]"
                        )));
                    }
                }
            }
        }
        let mut env = TabularMdp {
            num_states,
            num_actions,
            horizon,
            transitions,
            rewards,
            initial,
            dp: DpTables {
                q: Vec::new(),
                v: Vec::new(),
                v_star: 0.0,
            },
        };
        env.dp = exact_q_values(&env).expect("tabular MDPs are enumerable");
        Ok(env)
    }

    pub fn dp_tables(&self) -> &DpTables {
        &self.dp
    }
}

/// Random tabular instance: Dirichlet(1, ..., 1) transitions and
/// uniform per-step rewards in `[0, 1/H]`.
pub fn make_tabular_random(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rng: &mut EpisodeRng,
) -> Result<TabularMdp, CoreError> {
    if num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(CoreError::Construction(
            "tabular MDP needs S, A, H >= 1".into(),
        ));
    }
    let max_step_reward = 1.0 / horizon as f64;
    let mut transitions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut t_h = Vec::with_capacity(num_states);
        let mut r_h = Vec::with_capacity(num_states);
        for _ in 0..num_states {
            let mut t_s = Vec::with_capacity(num_actions);
            let mut r_s = Vec::with_capacity(num_actions);
            for _ in 0..num_actions {
                t_s.push(dirichlet_uniform(num_states, rng));
                r_s.push(rng.random::<f64>() * max_step_reward);
            }
            t_h.push(t_s);
            r_h.push(r_s);
        }
        transitions.push(t_h);
        rewards.push(r_h);
    }
    let initial = dirichlet_uniform(num_states, rng);
    TabularMdp::new(transitions, rewards, initial)
}

/// Dirichlet(1, ..., 1) sample via normalized exponentials.
fn dirichlet_uniform(n: usize, rng: &mut EpisodeRng) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    // exact unit sum, accumulating the correction into the last entry
    let mut acc = 0.0;
    for v in raw.iter_mut().take(n - 1) {
        *v /= total;
        acc += *v;
    }
    raw[n - 1] = 1.0 - acc;
    raw
}

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut EpisodeRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl EpisodicMdp for TabularMdp {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn feature_dim(&self) -> usize {
        self.num_states * self.num_actions
    }
    fn sample_initial(&self, rng: &mut EpisodeRng) -> State {
        State::Id(sample_categorical(&self.initial, rng))
    }
    fn step(&self, h: usize, state: &State, action: usize, rng: &mut EpisodeRng) -> (State, f64) {
        let s = self.expect_id(state);
        let reward = self.rewards[h][s][action];
        let next = sample_categorical(&self.transitions[h][s][action], rng);
        (State::Id(next), reward)
    }
    fn features_into(&self, state: &State, action: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[self.expect_id(state) * self.num_actions + action] = 1.0;
    }
    fn state_index(&self, state: &State) -> Option<usize> {
        Some(self.expect_id(state))
    }
    fn num_states(&self) -> Option<usize> {
        Some(self.num_states)
    }
    fn q_star(&self, h: usize, state: &State, action: usize) -> Option<f64> {
        Some(self.dp.q_star(h, self.expect_id(state), action))
    }
    fn optimal_value(&self) -> Option<f64> {
        Some(self.dp.v_star)
    }
    fn as_enumerable(&self) -> Option<&dyn EnumerableMdp> {
        Some(self)
    }
}

impl TabularMdp {
    fn expect_id(&self, state: &State) -> usize {
        match state {
            State::Id(s) => *s,
            other => panic!("tabular MDP got foreign state {other:?}"),
        }
    }
}

impl EnumerableMdp for TabularMdp {
    fn state_count(&self) -> usize {
        self.num_states
    }
    fn initial_distribution(&self) -> Vec<f64> {
        self.initial.clone()
    }
    fn transition_probs(&self, h: usize, state: usize, action: usize) -> Vec<f64> {
        self.transitions[h][state][action].clone()
    }
    fn mean_reward(&self, h: usize, state: usize, action: usize) -> f64 {
        self.rewards[h][state][action]
    }
}

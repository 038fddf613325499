//! A hard-exploration combination lock. Only the all-"advance" action
//! sequence reaches the single rewarding state; one wrong action drops
//! the agent into an absorbing failure state. A uniformly random policy
//! therefore earns `2^-(S-1)` per episode in expectation, which makes
//! the chain a clean separator between directed and undirected
//! exploration.

use crate::error::CoreError;
use crate::mdp::{exact_q_values, DpTables, EnumerableMdp, EpisodicMdp, State};
use crate::rng::EpisodeRng;

/// Action indices. The tie-breaking default (lowest index) is the bad
/// action, so nothing is discovered for free.
pub const ACTION_FALL: usize = 0;
pub const ACTION_ADVANCE: usize = 1;

/// Chain positions `0 .. S-1` (0 = start, S-1 = absorbing goal) plus an
/// absorbing trap at index `S`. Reward 1 is paid on the final step if
/// the agent sits at the goal; all other rewards are zero. Features
/// are `e_{s,a}` in dimension `(S + 1) * 2`.
pub struct ChainMdp {
    positions: usize,
    horizon: usize,
    dp: DpTables,
}

pub fn make_chain(positions: usize, horizon: usize) -> Result<ChainMdp, CoreError> {
    if positions < 2 {
        return Err(CoreError::Construction(
            "chain needs at least 2 positions".into(),
        ));
    }
    if horizon < positions {
        return Err(CoreError::Construction(format!(
            "horizon {horizon} < chain length {positions}: the goal is unreachable"
        )));
    }
    let mut env = ChainMdp {
        positions,
        horizon,
        dp: DpTables {
            q: Vec::new(),
            v: Vec::new(),
            v_star: 0.0,
        },
    };
    env.dp = exact_q_values(&env).expect("chains are enumerable");
    Ok(env)
}

impl ChainMdp {
    fn goal(&self) -> usize {
        self.positions - 1
    }

    fn trap(&self) -> usize {
        self.positions
    }

    fn successor(&self, state: usize, action: usize) -> usize {
        if state == self.goal() {
            self.goal()
        } else if state == self.trap() || action == ACTION_FALL {
            self.trap()
        } else {
            state + 1
        }
    }

    fn reward(&self, h: usize, state: usize) -> f64 {
        if h + 1 == self.horizon && state == self.goal() {
            1.0
        } else {
            0.0
        }
    }

    fn expect_id(&self, state: &State) -> usize {
        match state {
            State::Id(s) => *s,
            other => panic!("chain got foreign state {other:?}"),
        }
    }

    pub fn dp_tables(&self) -> &DpTables {
        &self.dp
    }
}

impl EpisodicMdp for ChainMdp {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn num_actions(&self) -> usize {
        2
    }
    fn feature_dim(&self) -> usize {
        (self.positions + 1) * 2
    }
    fn sample_initial(&self, _rng: &mut EpisodeRng) -> State {
        State::Id(0)
    }
    fn step(&self, h: usize, state: &State, action: usize, _rng: &mut EpisodeRng) -> (State, f64) {
        let s = self.expect_id(state);
        (
            State::Id(self.successor(s, action)),
            self.reward(h, s),
        )
    }
    fn features_into(&self, state: &State, action: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[self.expect_id(state) * 2 + action] = 1.0;
    }
    fn state_index(&self, state: &State) -> Option<usize> {
        Some(self.expect_id(state))
    }
    fn num_states(&self) -> Option<usize> {
        Some(self.positions + 1)
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

impl EnumerableMdp for ChainMdp {
    fn state_count(&self) -> usize {
        self.positions + 1
    }
    fn initial_distribution(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.positions + 1];
        mu[0] = 1.0;
        mu
    }
    fn transition_probs(&self, _h: usize, state: usize, action: usize) -> Vec<f64> {
        let mut probs = vec![0.0; self.positions + 1];
        probs[self.successor(state, action)] = 1.0;
        probs
    }
    fn mean_reward(&self, h: usize, state: usize, _action: usize) -> f64 {
        self.reward(h, state)
    }
}

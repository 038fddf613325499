//! Synthetic linear MDPs: transitions and rewards factor through a
//! known feature map, `P(s'|s,a) = <psi(s,a), mu(s')>` and
//! `E[r|s,a] = <psi(s,a), eta>`.

use rand::Rng;

use crate::error::CoreError;
use crate::mdp::{exact_q_values, DpTables, EnumerableMdp, EpisodicMdp, State};
use crate::rng::EpisodeRng;

use super::tabular::sample_categorical;

const SAMPLE_ATTEMPTS: usize = 10_000;

/// A finite-state linear MDP. Features `psi(s,a)` live on the
/// probability simplex (hence inside the unit L2 ball), the next-state
/// measures are mixtures `mu(s')_j = nu_j(s')` of `d` factor
/// distributions, and rewards are `<psi, eta>` with `eta in [0, 1/H]^d`.
pub struct LinearMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    dim: usize,
    /// `psi[s * A + a]`, each a length-`d` simplex vector.
    psi: Vec<Vec<f64>>,
    /// `factors[j][s']`: distribution of the j-th latent factor.
    factors: Vec<Vec<f64>>,
    eta: Vec<f64>,
    initial: Vec<f64>,
    /// Dense `P(s'|s,a)` realized from the factorization.
    transitions: Vec<Vec<f64>>,
    dp: DpTables,
}

impl LinearMdp {
    pub fn new(
        psi: Vec<Vec<f64>>,
        factors: Vec<Vec<f64>>,
        eta: Vec<f64>,
        initial: Vec<f64>,
        num_actions: usize,
        horizon: usize,
    ) -> Result<Self, CoreError> {
        let dim = eta.len();
        let num_states = initial.len();
        if horizon == 0 || num_actions == 0 || num_states == 0 || dim == 0 {
            return Err(CoreError::Construction(
                "linear MDP needs d, S, A, H >= 1".into(),
            ));
        }
        if psi.len() != num_states * num_actions || factors.len() != dim {
            return Err(CoreError::Construction(
                "feature table or factor count does not match (S, A, d)".into(),
            ));
        }
        let max_step_reward = 1.0 / horizon as f64;
        for (i, row) in psi.iter().enumerate() {
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if row.len() != dim || norm > 1.0 + 1e-12 {
                return Err(CoreError::Construction(format!(
                    "feature row {i} leaves the unit ball (norm {norm})"
                )));
            }
            let reward: f64 = row.iter().zip(&eta).map(|(p, e)| p * e).sum();
            if !(-1e-12..=max_step_reward + 1e-12).contains(&reward) {
                return Err(CoreError::Construction(format!(
                    "reward {reward} at feature row {i} outside [0, 1/H]"
                )));
            }
        }
        // realize the dense transition table and check the simplex
        // constraints the factorization is supposed to guarantee
        let mut transitions = vec![vec![0.0; num_states]; num_states * num_actions];
        for (i, row) in psi.iter().enumerate() {
            let probs = &mut transitions[i];
            for (j, weight) in row.iter().enumerate() {
                for (sn, p) in factors[j].iter().enumerate() {
                    probs[sn] += weight * p;
                }
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || probs.iter().any(|p| *p < -1e-15 || *p > 1.0 + 1e-12) {
                return Err(CoreError::Construction(format!(
                    "factorized transition row {i} is not a probability vector (sum {sum})"
                )));
            }
        }
        let mut env = LinearMdp {
            num_states,
            num_actions,
            horizon,
            dim,
            psi,
            factors,
            eta,
            initial,
            transitions,
            dp: DpTables {
                q: Vec::new(),
                v: Vec::new(),
                v_star: 0.0,
            },
        };
        env.dp = exact_q_values(&env).expect("linear MDPs are enumerable");
        Ok(env)
    }

    pub fn dp_tables(&self) -> &DpTables {
        &self.dp
    }

    /// The next-state measure `mu(s')` as a length-`d` vector.
    pub fn next_state_measure(&self, next_state: usize) -> Vec<f64> {
        self.factors.iter().map(|nu| nu[next_state]).collect()
    }

    pub fn reward_vector(&self) -> &[f64] {
        &self.eta
    }

    fn expect_id(&self, state: &State) -> usize {
        match state {
            State::Id(s) => *s,
            other => panic!("linear MDP got foreign state {other:?}"),
        }
    }
}

/// Samples a random linear MDP. Features and factor distributions are
/// drawn from flat Dirichlets, which satisfies the simplex constraints
/// by construction; the validation loop retries (up to a budget) in
/// the unlikely event round-off pushes a row out of tolerance.
pub fn make_linear_mdp(
    dim: usize,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rng: &mut EpisodeRng,
) -> Result<LinearMdp, CoreError> {
    if dim == 0 || num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(CoreError::Construction(
            "linear MDP needs d, S, A, H >= 1".into(),
        ));
    }
    let max_step_reward = 1.0 / horizon as f64;
    for _ in 0..SAMPLE_ATTEMPTS {
        let psi: Vec<Vec<f64>> = (0..num_states * num_actions)
            .map(|_| dirichlet(dim, rng))
            .collect();
        let factors: Vec<Vec<f64>> = (0..dim).map(|_| dirichlet(num_states, rng)).collect();
        let eta: Vec<f64> = (0..dim)
            .map(|_| rng.random::<f64>() * max_step_reward)
            .collect();
        let initial = dirichlet(num_states, rng);
        match LinearMdp::new(psi, factors, eta, initial, num_actions, horizon) {
            Ok(env) => return Ok(env),
            Err(_) => continue,
        }
    }
    Err(CoreError::Construction(format!(
        "no valid linear MDP instance after {SAMPLE_ATTEMPTS} attempts"
    )))
}

fn dirichlet(n: usize, rng: &mut EpisodeRng) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let mut acc = 0.0;
    for v in raw.iter_mut().take(n - 1) {
        *v /= total;
        acc += *v;
    }
    raw[n - 1] = 1.0 - acc;
    raw
}

impl EpisodicMdp for LinearMdp {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn feature_dim(&self) -> usize {
        self.dim
    }
    fn sample_initial(&self, rng: &mut EpisodeRng) -> State {
        State::Id(sample_categorical(&self.initial, rng))
    }
    fn step(&self, _h: usize, state: &State, action: usize, rng: &mut EpisodeRng) -> (State, f64) {
        let s = self.expect_id(state);
        let idx = s * self.num_actions + action;
        let reward: f64 = self.psi[idx]
            .iter()
            .zip(&self.eta)
            .map(|(p, e)| p * e)
            .sum();
        let next = sample_categorical(&self.transitions[idx], rng);
        (State::Id(next), reward.max(0.0))
    }
    fn features_into(&self, state: &State, action: usize, out: &mut [f64]) {
        let idx = self.expect_id(state) * self.num_actions + action;
        out.copy_from_slice(&self.psi[idx]);
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

impl EnumerableMdp for LinearMdp {
    fn state_count(&self) -> usize {
        self.num_states
    }
    fn initial_distribution(&self) -> Vec<f64> {
        self.initial.clone()
    }
    fn transition_probs(&self, _h: usize, state: usize, action: usize) -> Vec<f64> {
        self.transitions[state * self.num_actions + action].clone()
    }
    fn mean_reward(&self, _h: usize, state: usize, action: usize) -> f64 {
        self.psi[state * self.num_actions + action]
            .iter()
            .zip(&self.eta)
            .map(|(p, e)| p * e)
            .sum()
    }
}

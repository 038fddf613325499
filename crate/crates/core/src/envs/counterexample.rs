//! The two-step MDP with deterministic transitions and a continuum of
//! first states. It is not a linear MDP, yet Bellman backups of every
//! clipped upper-confidence function stay linear in the features, which
//! is exactly what the closure diagnostics verify.
//!
//! Construction: the first state carries a mixing coefficient
//! `alpha ~ Uniform[0, 1]` with features `alpha * e1 + (1 - alpha) * e2`
//! (identical for both actions). The second state has features
//! `alpha * x` for the fixed vector `x = (0.1/cap, 0.1/cap)`, reward
//! `0.1 * alpha / cap`, and the first-stage reward is zero.

use rand::Rng;

use crate::error::CoreError;
use crate::mdp::{EpisodicMdp, State};
use crate::rng::EpisodeRng;

/// Smallest cap for which the stage-two features stay in the unit
/// ball: `||alpha * x|| <= sqrt(2) * 0.1 / cap <= 1`.
const MIN_CAP: f64 = 0.2_f64 * std::f64::consts::FRAC_1_SQRT_2; // 0.1 * sqrt(2)

pub struct CounterexampleMdp {
    cap: f64,
    /// The fixed stage-two direction `x = (0.1/cap, 0.1/cap)`.
    x: [f64; 2],
    /// When set, every episode reuses this alpha instead of sampling.
    fixed_alpha: Option<f64>,
}

/// Builds the counterexample for a given bonus cap. A fresh `alpha` is
/// drawn each episode.
pub fn make_counterexample(cap: f64) -> Result<CounterexampleMdp, CoreError> {
    if !cap.is_finite() || cap < MIN_CAP {
        return Err(CoreError::Construction(format!(
            "counterexample cap must be at least {MIN_CAP:.6} to keep features in the unit ball, got {cap}"
        )));
    }
    Ok(CounterexampleMdp {
        cap,
        x: [0.1 / cap, 0.1 / cap],
        fixed_alpha: None,
    })
}

impl CounterexampleMdp {
    /// Test variant where the per-episode `alpha` is pinned.
    pub fn with_fixed_alpha(cap: f64, alpha: f64) -> Result<Self, CoreError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CoreError::Construction(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        let mut env = make_counterexample(cap)?;
        env.fixed_alpha = Some(alpha);
        Ok(env)
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// The fixed stage-two direction.
    pub fn x(&self) -> [f64; 2] {
        self.x
    }

    fn alpha_of(&self, state: &State) -> (u8, f64) {
        match state {
            State::Stage { stage, alpha } => (*stage, *alpha),
            other => panic!("counterexample got foreign state {other:?}"),
        }
    }
}

impl EpisodicMdp for CounterexampleMdp {
    fn horizon(&self) -> usize {
        2
    }
    fn num_actions(&self) -> usize {
        2
    }
    fn feature_dim(&self) -> usize {
        2
    }
    fn sample_initial(&self, rng: &mut EpisodeRng) -> State {
        let alpha = self.fixed_alpha.unwrap_or_else(|| rng.random::<f64>());
        State::Stage { stage: 1, alpha }
    }
    fn step(&self, _h: usize, state: &State, _action: usize, _rng: &mut EpisodeRng) -> (State, f64) {
        let (stage, alpha) = self.alpha_of(state);
        if stage == 1 {
            (State::Stage { stage: 2, alpha }, 0.0)
        } else {
            (State::Stage { stage: 2, alpha }, 0.1 * alpha / self.cap)
        }
    }
    fn features_into(&self, state: &State, _action: usize, out: &mut [f64]) {
        let (stage, alpha) = self.alpha_of(state);
        if stage == 1 {
            out[0] = alpha;
            out[1] = 1.0 - alpha;
        } else {
            out[0] = alpha * self.x[0];
            out[1] = alpha * self.x[1];
        }
    }
    fn q_star(&self, _h: usize, state: &State, _action: usize) -> Option<f64> {
        // both actions are equivalent everywhere; the only reward is the
        // stage-two payout 0.1 * alpha / cap
        let (_, alpha) = self.alpha_of(state);
        Some(0.1 * alpha / self.cap)
    }
    fn optimal_value(&self) -> Option<f64> {
        match self.fixed_alpha {
            Some(alpha) => Some(0.1 * alpha / self.cap),
            None => Some(0.05 / self.cap), // E[0.1 * alpha / cap]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::rollout_episode;
    use crate::rng::episode_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_cap_direction() {
        let env = make_counterexample(1.0).unwrap();
        assert_eq!(env.x(), [0.1, 0.1]);
    }

    #[test]
    fn alpha_one_pays_fixed_reward_on_any_policy() {
        let env = CounterexampleMdp::with_fixed_alpha(1.0, 1.0).unwrap();
        for policy in [0usize, 1usize] {
            let traj =
                rollout_episode(&env, |_, _| policy, &mut episode_rng(0, policy as u64)).unwrap();
            assert_eq!(traj.steps[0].reward, 0.0);
            assert_abs_diff_eq!(traj.steps[1].reward, 0.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn alpha_zero_zeroes_stage_two() {
        let env = CounterexampleMdp::with_fixed_alpha(1.0, 0.0).unwrap();
        let traj = rollout_episode(&env, |_, _| 0, &mut episode_rng(0, 0)).unwrap();
        assert_eq!(traj.total_reward(), 0.0);
        let phi = env.features(&State::Stage { stage: 2, alpha: 0.0 }, 0);
        assert_eq!(phi, vec![0.0, 0.0]);
    }

    #[test]
    fn q_star_is_two_step_backup_of_the_construction() {
        let cap = 2.0;
        let env = make_counterexample(cap).unwrap();
        for alpha in [0.0, 0.25, 1.0] {
            let s1 = State::Stage { stage: 1, alpha };
            for a in 0..2 {
                // Q*_1 = 0 + Q*_2 = 0.1 * alpha / cap by hand
                assert_abs_diff_eq!(
                    env.q_star(0, &s1, a).unwrap(),
                    0.1 * alpha / cap,
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn features_stay_in_unit_ball_across_alpha() {
        let env = make_counterexample(MIN_CAP).unwrap();
        for i in 0..=100 {
            let alpha = i as f64 / 100.0;
            for stage in [1u8, 2u8] {
                let phi = env.features(&State::Stage { stage, alpha }, 0);
                let norm = (phi[0] * phi[0] + phi[1] * phi[1]).sqrt();
                assert!(norm <= 1.0 + 1e-12, "norm {norm} at alpha {alpha}");
            }
        }
    }

    #[test]
    fn tiny_cap_rejected() {
        assert!(make_counterexample(0.05).is_err());
    }
}

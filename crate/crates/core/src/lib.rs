//! Optimistic least-squares value iteration with generalized linear
//! function approximation, plus the environments and executable
//! diagnostics used to exercise it.
//!
//! The crate is organized around the algorithm's moving parts:
//!
//! - [`links`]: link functions with certified derivative bounds.
//! - [`mdp`]: the episodic MDP interface, trajectories, regret
//!   bookkeeping, and the exact dynamic-programming oracle.
//! - [`envs`]: concrete environment constructors (random tabular MDPs,
//!   synthetic linear MDPs, a deterministic-transition counterexample
//!   with continuous features, and a hard-exploration chain).
//! - [`regression`]: norm-ball constrained GLM least squares and the
//!   covariance / Mahalanobis-bonus machinery.
//! - [`agent`]: the episodic loop — greedy acting, trajectory
//!   collection, and backward optimistic dynamic-programming updates.
//! - [`diagnostics`]: optimism checks, the elliptical-potential sum,
//!   the link sandwich bound, optimistic-closure residuals on the
//!   counterexample, and the regret decomposition.

pub mod agent;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod linalg;
pub mod links;
pub mod mdp;
pub mod regression;
pub mod rng;

pub use agent::{run_episodic, AgentConfig, PolicyKind, RunMetadata, RunOutput};
pub use error::CoreError;
pub use links::LinkSpec;
pub use mdp::{EpisodicMdp, RegretLog, State, Trajectory};

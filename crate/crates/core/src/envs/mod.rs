//! Concrete environment constructors: random tabular MDPs, synthetic
//! linear MDPs, the deterministic-transition counterexample with
//! continuous features, and a hard-exploration chain.

pub mod chain;
pub mod counterexample;
pub mod linear;
pub mod tabular;

pub use chain::{make_chain, ChainMdp};
pub use counterexample::{make_counterexample, CounterexampleMdp};
pub use linear::{make_linear_mdp, LinearMdp};
pub use tabular::{make_tabular_random, TabularMdp};

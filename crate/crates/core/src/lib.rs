//! Tabular hierarchical reinforcement learning on gridworlds with multistep
//! hierarchical backups (1-step, Tree-Backup(n) and Q(λ)).
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: gridworld maps, transitions and the episode trace
//! * [`flat`]: single-level Q-learning, Tree-Backup(n) and Watkins Q(λ)
//! * [`hierarchy`]: goal-conditioned value tensors and the recursive executor
//! * [`backups`]: hierarchical 1-step, Tree-Backup and Q(λ) updates
//! * [`agent`]: learners that combine the above
//! * [`combinatorics`]: backup-path counting
//! * [`harness`]: experiment configs, seed sweeps and CSV output

pub mod agent;
pub mod backups;
pub mod combinatorics;
pub mod flat;
pub mod harness;
pub mod hierarchy;
pub mod mdp;
pub mod rng;

pub use agent::{Algorithm, AnyAgent, FlatAgent, HierAgent};
pub use hierarchy::{Agent, Behaviour, GoalQTensor, HierarchyConfig, LevelAction};
pub use mdp::{GridWorld, PrimitiveAction, StateId, TraceBuffer};

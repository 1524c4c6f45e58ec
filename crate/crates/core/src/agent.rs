//! Learners that plug into the episode executor.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backups::{hiertb_finish, hiertb_update, hierq_1step_update, hierq_lambda_update, EligibilityBank};
use crate::flat::{ties_max, BackupParams, FlatAlgorithm, FlatLearner};
use crate::hierarchy::{is_greedy_action, sample_level_action, Agent, GoalQTensor, GoalSet, HierarchyConfig, LevelAction};
use crate::mdp::{GridWorld, PrimitiveAction, StateId, TraceBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    HierQ1step,
    HierTB,
    HierQLambda,
    FlatQ,
    FlatTB,
    FlatQLambda,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::HierQ1step,
        Algorithm::HierTB,
        Algorithm::HierQLambda,
        Algorithm::FlatQ,
        Algorithm::FlatTB,
        Algorithm::FlatQLambda,
    ];

    pub fn is_flat(self) -> bool {
        matches!(self, Algorithm::FlatQ | Algorithm::FlatTB | Algorithm::FlatQLambda)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::HierQ1step => "HierQ1step",
            Algorithm::HierTB => "HierTB",
            Algorithm::HierQLambda => "HierQLambda",
            Algorithm::FlatQ => "FlatQ",
            Algorithm::FlatTB => "FlatTB",
            Algorithm::FlatQLambda => "FlatQLambda",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(name))
    }
}

/// Goal-conditioned learner with one tensor (and eligibility bank) per level.
#[derive(Debug, Clone)]
pub struct HierAgent {
    pub algorithm: Algorithm,
    pub params: BackupParams,
    tensors: Vec<GoalQTensor>,
    banks: Vec<EligibilityBank>,
}

impl HierAgent {
    /// Zero-initialised agent. Panics on a flat `algorithm` or an invalid config.
    pub fn new(algorithm: Algorithm, params: BackupParams, config: &HierarchyConfig, world: &GridWorld) -> Self {
        assert!(!algorithm.is_flat(), "{} is not a hierarchical algorithm", algorithm.name());
        let k = config.k();
        let mut tensors = Vec::with_capacity(k);
        let mut banks = Vec::with_capacity(k);
        for i in 0..k {
            let reach = config.atomic_horizon(i).expect("level in range");
            let goals = if i + 1 == k {
                GoalSet::Single(world.goal())
            } else {
                GoalSet::All(world.num_states())
            };
            tensors.push(GoalQTensor::new(world, i, reach, config.restricted_actions, goals));
            banks.push(EligibilityBank::new(reach));
        }
        HierAgent {
            algorithm,
            params,
            tensors,
            banks,
        }
    }

    pub fn tensor(&self, level: usize) -> &GoalQTensor {
        &self.tensors[level]
    }

    pub fn tensors(&self) -> &[GoalQTensor] {
        &self.tensors
    }

    pub fn bank(&self, level: usize) -> &EligibilityBank {
        &self.banks[level]
    }
}

impl Agent for HierAgent {
    fn num_levels(&self) -> usize {
        self.tensors.len()
    }

    fn select(&self, level: usize, state: StateId, goal: StateId, epsilon: f64, rng: &mut ChaCha8Rng) -> LevelAction {
        sample_level_action(&self.tensors[level], state, goal, epsilon, rng)
    }

    fn is_greedy(&self, level: usize, state: StateId, goal: StateId, candidate: LevelAction) -> bool {
        is_greedy_action(&self.tensors[level], state, goal, candidate)
    }

    fn observe(&mut self, trace: &TraceBuffer, t: usize) {
        let p = self.params;
        for (q, bank) in self.tensors.iter_mut().zip(&mut self.banks) {
            match self.algorithm {
                Algorithm::HierQ1step => {
                    hierq_1step_update(q, trace, t, &p);
                }
                Algorithm::HierTB => {
                    hiertb_update(q, trace, t, p.n, &p);
                }
                Algorithm::HierQLambda => {
                    hierq_lambda_update(q, bank, trace, t, &p);
                }
                _ => unreachable!("flat algorithm in a hierarchical agent"),
            }
        }
    }

    fn finish_episode(&mut self, trace: &TraceBuffer) {
        if self.algorithm == Algorithm::HierTB {
            let p = self.params;
            for q in &mut self.tensors {
                hiertb_finish(q, trace, p.n, &p);
            }
        }
    }

    fn reset_episode(&mut self) {
        self.banks.iter_mut().for_each(EligibilityBank::clear);
    }
}

/// Single-level learner on the environment reward.
#[derive(Debug, Clone)]
pub struct FlatAgent {
    pub learner: FlatLearner,
}

impl FlatAgent {
    pub fn new(algorithm: Algorithm, params: BackupParams, world: &GridWorld) -> Self {
        let algo = match algorithm {
            Algorithm::FlatQ => FlatAlgorithm::QLearning,
            Algorithm::FlatTB => FlatAlgorithm::TreeBackup,
            Algorithm::FlatQLambda => FlatAlgorithm::QLambda,
            other => panic!("{} is not a flat algorithm", other.name()),
        };
        FlatAgent {
            learner: FlatLearner::new(algo, params, world.num_states(), world.goal()),
        }
    }
}

impl Agent for FlatAgent {
    fn num_levels(&self) -> usize {
        1
    }

    fn select(&self, level: usize, state: StateId, _goal: StateId, epsilon: f64, rng: &mut ChaCha8Rng) -> LevelAction {
        assert_eq!(level, 0, "a flat agent has a single level");
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            return LevelAction::Primitive(PrimitiveAction::from_index(rng.gen_range(0..4)));
        }
        let q = &self.learner.q;
        let max = q.max(state);
        let ties: Vec<usize> = (0..4).filter(|&i| ties_max(q.row(state)[i], max)).collect();
        let i = if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.gen_range(0..ties.len())]
        };
        LevelAction::Primitive(PrimitiveAction::from_index(i))
    }

    fn is_greedy(&self, _level: usize, state: StateId, _goal: StateId, candidate: LevelAction) -> bool {
        let q = &self.learner.q;
        candidate
            .primitive()
            .is_some_and(|a| ties_max(q.get(state, a), q.max(state)))
    }

    fn observe(&mut self, trace: &TraceBuffer, t: usize) {
        self.learner.observe(trace, t);
    }

    fn finish_episode(&mut self, trace: &TraceBuffer) {
        self.learner.finish_episode(trace);
    }

    fn reset_episode(&mut self) {
        self.learner.reset_episode();
    }
}

/// Either learner, for code that picks the algorithm at run time.
#[derive(Debug, Clone)]
pub enum AnyAgent {
    Hier(HierAgent),
    Flat(FlatAgent),
}

impl AnyAgent {
    pub fn new(algorithm: Algorithm, params: BackupParams, config: &HierarchyConfig, world: &GridWorld) -> Self {
        if algorithm.is_flat() {
            assert_eq!(config.k(), 1, "flat algorithms need k = 1");
            AnyAgent::Flat(FlatAgent::new(algorithm, params, world))
        } else {
            AnyAgent::Hier(HierAgent::new(algorithm, params, config, world))
        }
    }

    /// Visits every stored value as `(level, state, action, goal, value)`.
    pub fn for_each_value(&self, world: &GridWorld, mut f: impl FnMut(usize, StateId, LevelAction, StateId, f64)) {
        match self {
            AnyAgent::Hier(h) => {
                for q in h.tensors() {
                    q.for_each_entry(|s, a, g, v| f(q.level(), s, a, g, v));
                }
            }
            AnyAgent::Flat(fl) => {
                for s in world.states() {
                    for (i, &v) in fl.learner.q.row(s).iter().enumerate() {
                        f(0, s, LevelAction::Primitive(PrimitiveAction::from_index(i)), world.goal(), v);
                    }
                }
            }
        }
    }
}

impl Agent for AnyAgent {
    fn num_levels(&self) -> usize {
        match self {
            AnyAgent::Hier(a) => a.num_levels(),
            AnyAgent::Flat(a) => a.num_levels(),
        }
    }

    fn select(&self, level: usize, state: StateId, goal: StateId, epsilon: f64, rng: &mut ChaCha8Rng) -> LevelAction {
        match self {
            AnyAgent::Hier(a) => a.select(level, state, goal, epsilon, rng),
            AnyAgent::Flat(a) => a.select(level, state, goal, epsilon, rng),
        }
    }

    fn is_greedy(&self, level: usize, state: StateId, goal: StateId, candidate: LevelAction) -> bool {
        match self {
            AnyAgent::Hier(a) => a.is_greedy(level, state, goal, candidate),
            AnyAgent::Flat(a) => a.is_greedy(level, state, goal, candidate),
        }
    }

    fn observe(&mut self, trace: &TraceBuffer, t: usize) {
        match self {
            AnyAgent::Hier(a) => a.observe(trace, t),
            AnyAgent::Flat(a) => a.observe(trace, t),
        }
    }

    fn finish_episode(&mut self, trace: &TraceBuffer) {
        match self {
            AnyAgent::Hier(a) => a.finish_episode(trace),
            AnyAgent::Flat(a) => a.finish_episode(trace),
        }
    }

    fn reset_episode(&mut self) {
        match self {
            AnyAgent::Hier(a) => a.reset_episode(),
            AnyAgent::Flat(a) => a.reset_episode(),
        }
    }
}

//! Hierarchy configuration, goal-conditioned value tensors and the recursive
//! episode executor.
//!
//! Level `i > 0` chooses goal states for level `i - 1`; level 0 chooses
//! primitive moves. Level `i` may only pick goals within `ℓ1 ≤ H^a_i` of the
//! current cell (never the cell itself), where `H^a_i` is the product of the
//! budgets below it.

use rand::Rng;
use thiserror::Error;

use crate::flat::{ties_max, RewardMode};
use crate::mdp::{GridWorld, PrimitiveAction, StateId, TraceBuffer};
use crate::rng::LevelRngs;

#[derive(Debug, Error, PartialEq)]
pub enum HierarchyError {
    #[error("a hierarchy needs at least one level")]
    NoLevels,
    #[error("level budgets must be at least 1 (level {0})")]
    ZeroBudget(usize),
    #[error("level {level} out of range for k = {k}")]
    LevelOutOfRange { level: usize, k: usize },
    #[error("exploration rate {0} outside [0, 1]")]
    Epsilon(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    /// `H_i` for each level; its length is `k`.
    pub budgets: Vec<usize>,
    pub epsilon_train: f64,
    pub epsilon_eval: f64,
    pub epsilon_upper: f64,
    pub restricted_actions: bool,
}

impl HierarchyConfig {
    pub fn new(budgets: Vec<usize>) -> Result<Self, HierarchyError> {
        let cfg = HierarchyConfig {
            budgets,
            epsilon_train: 0.25,
            epsilon_eval: 0.05,
            epsilon_upper: 0.0,
            restricted_actions: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `k` levels that all share budget `h`.
    pub fn uniform(k: usize, h: usize) -> Result<Self, HierarchyError> {
        Self::new(vec![h; k])
    }

    pub fn validate(&self) -> Result<(), HierarchyError> {
        if self.budgets.is_empty() {
            return Err(HierarchyError::NoLevels);
        }
        if let Some(i) = self.budgets.iter().position(|&h| h == 0) {
            return Err(HierarchyError::ZeroBudget(i));
        }
        for eps in [self.epsilon_train, self.epsilon_eval, self.epsilon_upper] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(HierarchyError::Epsilon(eps));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.budgets.len()
    }

    /// Longest span, in primitive steps, of one level-`i` action.
    pub fn atomic_horizon(&self, i: usize) -> Result<usize, HierarchyError> {
        if i >= self.k() {
            return Err(HierarchyError::LevelOutOfRange { level: i, k: self.k() });
        }
        Ok(self.budgets[..i].iter().product())
    }
}

/// An action at some level: a primitive move at level 0, a goal state above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelAction {
    Primitive(PrimitiveAction),
    Goal(StateId),
}

impl LevelAction {
    pub fn goal(self) -> Option<StateId> {
        match self {
            LevelAction::Goal(g) => Some(g),
            LevelAction::Primitive(_) => None,
        }
    }

    pub fn primitive(self) -> Option<PrimitiveAction> {
        match self {
            LevelAction::Primitive(a) => Some(a),
            LevelAction::Goal(_) => None,
        }
    }
}

/// Admissible goal-actions per state.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedActionSet {
    offsets: Vec<usize>,
    targets: Vec<StateId>,
}

impl RestrictedActionSet {
    /// Goals within `ℓ1 ≤ reach` of each state, excluding the state itself.
    /// With `restricted = false` every other walkable state is admissible.
    pub fn new(world: &GridWorld, reach: usize, restricted: bool) -> Self {
        let mut offsets = Vec::with_capacity(world.num_states() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for s in world.states() {
            for g in world.states() {
                if g != s && (!restricted || world.l1(s, g) <= reach) {
                    targets.push(g);
                }
            }
            offsets.push(targets.len());
        }
        RestrictedActionSet { offsets, targets }
    }

    #[inline]
    pub fn actions(&self, s: StateId) -> &[StateId] {
        &self.targets[self.offsets[s.index()]..self.offsets[s.index() + 1]]
    }

    #[inline]
    pub fn contains(&self, s: StateId, g: StateId) -> bool {
        self.slot_of(s, g).is_some()
    }

    #[inline]
    fn slot_of(&self, s: StateId, g: StateId) -> Option<usize> {
        self.actions(s).binary_search(&g).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ActionSpace {
    Primitive,
    Goals(RestrictedActionSet),
}

/// Which goal columns a tensor stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalSet {
    /// One column per walkable state.
    All(usize),
    /// A single column for one goal (the top level keeps only the environment goal).
    Single(StateId),
}

/// Dense `Q_i(s, a, g)`; the goal axis is innermost so one `(s, a)` entry is a
/// contiguous goal vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalQTensor {
    level: usize,
    reach: usize,
    goals: GoalSet,
    actions: ActionSpace,
    coords: Vec<(usize, usize)>,
    row_offsets: Vec<usize>,
    values: Vec<f64>,
}

impl GoalQTensor {
    /// Zero-initialised tensor for level `level` with atomic horizon `reach`.
    /// Level 0 acts with primitive moves; higher levels act with goals.
    pub fn new(world: &GridWorld, level: usize, reach: usize, restricted: bool, goals: GoalSet) -> Self {
        let actions = if level == 0 {
            ActionSpace::Primitive
        } else {
            ActionSpace::Goals(RestrictedActionSet::new(world, reach, restricted))
        };
        let mut row_offsets = Vec::with_capacity(world.num_states() + 1);
        row_offsets.push(0);
        for s in world.states() {
            let n = match &actions {
                ActionSpace::Primitive => 4,
                ActionSpace::Goals(set) => set.actions(s).len(),
            };
            row_offsets.push(row_offsets.last().unwrap() + n);
        }
        let n_goals = match goals {
            GoalSet::All(n) => n,
            GoalSet::Single(_) => 1,
        };
        let total = row_offsets.last().unwrap() * n_goals;
        GoalQTensor {
            level,
            reach,
            goals,
            actions,
            coords: world.states().map(|s| world.coords(s)).collect(),
            row_offsets,
            values: vec![0.0; total],
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Atomic horizon `H^a` of this level.
    pub fn reach(&self) -> usize {
        self.reach
    }

    pub fn goal_set(&self) -> GoalSet {
        self.goals
    }

    pub fn num_states(&self) -> usize {
        self.row_offsets.len() - 1
    }

    #[inline]
    pub fn num_goals(&self) -> usize {
        match self.goals {
            GoalSet::All(n) => n,
            GoalSet::Single(_) => 1,
        }
    }

    #[inline]
    pub fn goal_column(&self, g: StateId) -> Option<usize> {
        match self.goals {
            GoalSet::All(n) => (g.index() < n).then_some(g.index()),
            GoalSet::Single(only) => (only == g).then_some(0),
        }
    }

    #[inline]
    pub fn goal_state(&self, column: usize) -> StateId {
        match self.goals {
            GoalSet::All(_) => StateId(column as u32),
            GoalSet::Single(only) => only,
        }
    }

    pub fn is_primitive(&self) -> bool {
        matches!(self.actions, ActionSpace::Primitive)
    }

    #[inline]
    pub fn num_actions(&self, s: StateId) -> usize {
        self.row_offsets[s.index() + 1] - self.row_offsets[s.index()]
    }

    #[inline]
    pub fn action(&self, s: StateId, slot: usize) -> LevelAction {
        match &self.actions {
            ActionSpace::Primitive => LevelAction::Primitive(PrimitiveAction::from_index(slot)),
            ActionSpace::Goals(set) => LevelAction::Goal(set.actions(s)[slot]),
        }
    }

    /// Slot of `a` at `s`, or `None` when `a` is not admissible there.
    #[inline]
    pub fn slot_of(&self, s: StateId, a: LevelAction) -> Option<usize> {
        match (&self.actions, a) {
            (ActionSpace::Primitive, LevelAction::Primitive(p)) => Some(p.index()),
            (ActionSpace::Goals(set), LevelAction::Goal(g)) => set.slot_of(s, g),
            _ => None,
        }
    }

    pub fn admissible_goals(&self, s: StateId) -> Option<&[StateId]> {
        match &self.actions {
            ActionSpace::Primitive => None,
            ActionSpace::Goals(set) => Some(set.actions(s)),
        }
    }

    #[inline]
    pub fn l1(&self, a: StateId, b: StateId) -> usize {
        let (ra, ca) = self.coords[a.index()];
        let (rb, cb) = self.coords[b.index()];
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }

    #[inline]
    fn entry_start(&self, s: StateId, slot: usize) -> usize {
        (self.row_offsets[s.index()] + slot) * self.num_goals()
    }

    /// Goal vector `Q(s, a, ·)` of one state-action pair.
    #[inline]
    pub fn entry(&self, s: StateId, slot: usize) -> &[f64] {
        let start = self.entry_start(s, slot);
        &self.values[start..start + self.num_goals()]
    }

    #[inline]
    pub fn entry_mut(&mut self, s: StateId, slot: usize) -> &mut [f64] {
        let start = self.entry_start(s, slot);
        let n = self.num_goals();
        &mut self.values[start..start + n]
    }

    #[inline]
    pub fn value(&self, s: StateId, slot: usize, column: usize) -> f64 {
        self.values[self.entry_start(s, slot) + column]
    }

    /// Writes `max_a Q(s, a, g)` for every goal column into `out`.
    pub fn row_max_into(&self, s: StateId, out: &mut [f64]) {
        let n = self.num_goals();
        let first = self.entry_start(s, 0);
        let last = self.entry_start(s, self.num_actions(s));
        out.copy_from_slice(&self.values[first..first + n]);
        for chunk in self.values[first + n..last].chunks_exact(n) {
            for (o, &v) in out.iter_mut().zip(chunk) {
                if v > *o {
                    *o = v;
                }
            }
        }
    }

    pub fn max_for_goal(&self, s: StateId, column: usize) -> f64 {
        (0..self.num_actions(s))
            .map(|slot| self.value(s, slot, column))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// All slots tied with the maximum for one goal column.
    pub fn greedy_slots(&self, s: StateId, column: usize) -> Vec<usize> {
        let max = self.max_for_goal(s, column);
        (0..self.num_actions(s))
            .filter(|&slot| ties_max(self.value(s, slot, column), max))
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Visits every `(state, action, goal, value)` entry.
    pub fn for_each_entry(&self, mut f: impl FnMut(StateId, LevelAction, StateId, f64)) {
        for s in (0..self.num_states() as u32).map(StateId) {
            for slot in 0..self.num_actions(s) {
                let a = self.action(s, slot);
                for (c, &v) in self.entry(s, slot).iter().enumerate() {
                    f(s, a, self.goal_state(c), v);
                }
            }
        }
    }
}

/// Pseudo-reward vector `r_t`: an indicator on the goal column of `state`
/// (shifted by −1 under penalizing rewards).
pub fn goal_reward_vector(q: &GoalQTensor, state: StateId, mode: RewardMode) -> Vec<f64> {
    (0..q.num_goals())
        .map(|c| mode.reward(q.goal_state(c) == state))
        .collect()
}

/// Per-goal discount `γ_t`: zero on the goal column of `state`, `γ` elsewhere.
pub fn termination_vector(q: &GoalQTensor, state: StateId, gamma: f64) -> Vec<f64> {
    (0..q.num_goals())
        .map(|c| if q.goal_state(c) == state { 0.0 } else { gamma })
        .collect()
}

/// How a level action was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    /// The instructed goal was within reach and taken directly.
    Shortcut,
    Explored,
    Greedy,
}

/// ε-greedy choice with uniform tie-breaking. Above level 0, an instructed goal
/// within reach is returned directly.
pub fn sample_level_action<R: Rng + ?Sized>(
    q: &GoalQTensor,
    state: StateId,
    goal: StateId,
    epsilon: f64,
    rng: &mut R,
) -> LevelAction {
    sample_level_action_traced(q, state, goal, epsilon, rng).0
}

pub fn sample_level_action_traced<R: Rng + ?Sized>(
    q: &GoalQTensor,
    state: StateId,
    goal: StateId,
    epsilon: f64,
    rng: &mut R,
) -> (LevelAction, Choice) {
    if !q.is_primitive()
        && goal != state
        && q.l1(state, goal) <= q.reach()
        && q.slot_of(state, LevelAction::Goal(goal)).is_some()
    {
        return (LevelAction::Goal(goal), Choice::Shortcut);
    }
    let n = q.num_actions(state);
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return (q.action(state, rng.gen_range(0..n)), Choice::Explored);
    }
    let column = q
        .goal_column(goal)
        .expect("goal must be one of the tensor's goal columns");
    let ties = q.greedy_slots(state, column);
    let slot = if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.gen_range(0..ties.len())]
    };
    (q.action(state, slot), Choice::Greedy)
}

/// Whether `sample_level_action` with ε = 0 could return `a`.
pub fn is_greedy_action(q: &GoalQTensor, state: StateId, goal: StateId, a: LevelAction) -> bool {
    if !q.is_primitive()
        && goal != state
        && q.l1(state, goal) <= q.reach()
        && q.slot_of(state, LevelAction::Goal(goal)).is_some()
    {
        return a == LevelAction::Goal(goal);
    }
    let (Some(slot), Some(column)) = (q.slot_of(state, a), q.goal_column(goal)) else {
        return false;
    };
    ties_max(q.value(state, slot, column), q.max_for_goal(state, column))
}

/// The learner side of the episode executor.
pub trait Agent {
    fn num_levels(&self) -> usize;

    /// Picks an action at `level` for `goal` from `state`.
    fn select(
        &self,
        level: usize,
        state: StateId,
        goal: StateId,
        epsilon: f64,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> LevelAction;

    /// Whether `candidate` is a greedy choice at `level` (ties count).
    fn is_greedy(&self, level: usize, state: StateId, goal: StateId, candidate: LevelAction) -> bool;

    /// Updates every level from the shared trace after transition `t`.
    fn observe(&mut self, trace: &TraceBuffer, t: usize);

    /// Called once after the last transition of a training episode.
    fn finish_episode(&mut self, trace: &TraceBuffer);

    /// Clears per-episode state (eligibility traces).
    fn reset_episode(&mut self);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behaviour {
    /// Every level samples its own actions.
    #[default]
    FullHierarchy,
    /// Upper levels are pinned to the environment goal.
    FlatOnly,
}

/// A stretch of primitive steps during which one level pursued one goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoalSegment {
    pub level: usize,
    pub goal: StateId,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub steps: usize,
    pub truncated: bool,
    pub trace: TraceBuffer,
    /// Goal segments of levels `i > 0` (training episodes only).
    pub segments: Vec<GoalSegment>,
}

struct Executor<'a, A: Agent + ?Sized> {
    config: &'a HierarchyConfig,
    world: &'a GridWorld,
    agent: &'a mut A,
    rngs: &'a mut LevelRngs,
    behaviour: Behaviour,
    t_max: usize,
    goals: Vec<StateId>,
    trace: TraceBuffer,
    segments: Vec<GoalSegment>,
    stop: bool,
}

impl<A: Agent + ?Sized> Executor<'_, A> {
    fn goal_reached(&self, level: usize, s: StateId) -> bool {
        self.goals[level..].contains(&s)
    }

    fn recurse(&mut self, level: usize, mut state: StateId) -> StateId {
        let mut n = 0;
        while n < self.config.budgets[level] && !self.stop && !self.goal_reached(level, state) {
            if level > 0 {
                let sub = match self.behaviour {
                    Behaviour::FlatOnly => self.world.goal(),
                    Behaviour::FullHierarchy => self
                        .agent
                        .select(
                            level,
                            state,
                            self.goals[level],
                            self.config.epsilon_upper,
                            self.rngs.level(level),
                        )
                        .goal()
                        .expect("upper levels act with goals"),
                };
                self.goals[level - 1] = sub;
                let start = self.trace.len();
                state = self.recurse(level - 1, state);
                self.segments.push(GoalSegment {
                    level,
                    goal: sub,
                    start,
                    end: self.trace.len(),
                });
            } else {
                let a = self
                    .agent
                    .select(0, state, self.goals[0], self.config.epsilon_train, self.rngs.level(0))
                    .primitive()
                    .expect("level 0 acts with primitive moves");
                let tr = self.world.step(state, a);
                self.trace.record(a, tr.next_state);
                let t = self.trace.len() - 1;
                self.agent.observe(&self.trace, t);
                state = tr.next_state;
                if tr.terminal || self.trace.len() >= self.t_max {
                    self.stop = true;
                }
            }
            n += 1;
        }
        state
    }
}

/// Runs one training episode from the world's start state.
///
/// Each level pursues its goal for at most `H_i` actions and returns early as
/// soon as the agent stands on the goal of that level or of any level above.
/// After every primitive step all levels learn from the shared trace.
pub fn run_episode<A: Agent + ?Sized>(
    config: &HierarchyConfig,
    world: &GridWorld,
    agent: &mut A,
    behaviour: Behaviour,
    rngs: &mut LevelRngs,
    t_max: usize,
) -> EpisodeOutcome {
    assert_eq!(agent.num_levels(), config.k(), "agent and config disagree on k");
    assert!(t_max >= 1);
    agent.reset_episode();
    let k = config.k();
    let mut exec = Executor {
        config,
        world,
        agent,
        rngs,
        behaviour,
        t_max,
        goals: vec![world.goal(); k],
        trace: TraceBuffer::new(world.start()),
        segments: Vec::new(),
        stop: false,
    };
    let mut state = world.start();
    while state != world.goal() && !exec.stop {
        // Fresh budget for the top level on every outer call.
        exec.goals = vec![world.goal(); k];
        state = exec.recurse(k - 1, state);
    }
    exec.agent.finish_episode(&exec.trace);
    let steps = exec.trace.len();
    EpisodeOutcome {
        steps,
        truncated: state != world.goal(),
        trace: exec.trace,
        segments: exec.segments,
    }
}

/// Greedy goal re-selection at `state`, top-down; element `i` is the goal
/// handed to level `i`. A level keeps its `current` goal while that goal is
/// unreached, its own goal is unchanged and the goal still ties the greedy
/// value; otherwise it picks a fresh greedy goal.
pub fn greedy_goal_resample<A: Agent + ?Sized>(
    config: &HierarchyConfig,
    agent: &A,
    world: &GridWorld,
    state: StateId,
    current: Option<&[StateId]>,
    rngs: &mut LevelRngs,
) -> Vec<StateId> {
    let k = config.k();
    let mut goals = vec![world.goal(); k];
    let mut changed = current.is_none();
    for level in (1..k).rev() {
        if let Some(cur) = current.map(|c| c[level - 1]) {
            if !changed && cur != state && agent.is_greedy(level, state, goals[level], LevelAction::Goal(cur)) {
                goals[level - 1] = cur;
                continue;
            }
        }
        goals[level - 1] = agent
            .select(level, state, goals[level], config.epsilon_upper, rngs.level(level))
            .goal()
            .expect("upper levels act with goals");
        changed = changed || current.is_none_or(|c| c[level - 1] != goals[level - 1]);
    }
    goals
}

/// Evaluation episode: no learning, goals are re-checked after every primitive
/// step, level 0 explores with `epsilon_eval`.
pub fn run_eval_episode<A: Agent + ?Sized>(
    config: &HierarchyConfig,
    world: &GridWorld,
    agent: &A,
    rngs: &mut LevelRngs,
    t_max: usize,
) -> EpisodeOutcome {
    let mut trace = TraceBuffer::new(world.start());
    let mut state = world.start();
    let mut goals: Option<Vec<StateId>> = None;
    while state != world.goal() && trace.len() < t_max {
        let next = greedy_goal_resample(config, agent, world, state, goals.as_deref(), rngs);
        let a = agent
            .select(0, state, next[0], config.epsilon_eval, rngs.level(0))
            .primitive()
            .expect("level 0 acts with primitive moves");
        state = world.step(state, a).next_state;
        trace.record(a, state);
        goals = Some(next);
    }
    EpisodeOutcome {
        steps: trace.len(),
        truncated: state != world.goal(),
        trace,
        segments: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::parse_map;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn atomic_horizons() {
        let cfg = HierarchyConfig::uniform(3, 3).unwrap();
        assert_eq!(cfg.atomic_horizon(0), Ok(1));
        assert_eq!(cfg.atomic_horizon(1), Ok(3));
        assert_eq!(cfg.atomic_horizon(2), Ok(9));
        assert_eq!(
            cfg.atomic_horizon(3),
            Err(HierarchyError::LevelOutOfRange { level: 3, k: 3 })
        );
        let four = HierarchyConfig::uniform(3, 4).unwrap();
        assert_eq!(four.atomic_horizon(2), Ok(16));
    }

    #[test]
    fn config_validation() {
        assert_eq!(HierarchyConfig::new(vec![]), Err(HierarchyError::NoLevels));
        assert_eq!(HierarchyConfig::new(vec![3, 0]), Err(HierarchyError::ZeroBudget(1)));
        let mut cfg = HierarchyConfig::uniform(2, 3).unwrap();
        cfg.epsilon_train = 1.5;
        assert_eq!(cfg.validate(), Err(HierarchyError::Epsilon(1.5)));
    }

    fn open(n: usize) -> GridWorld {
        let mut rows = vec![".".repeat(n); n];
        rows[0].replace_range(0..1, "S");
        rows[n - 1].replace_range(n - 1..n, "G");
        parse_map(&rows.join("\n")).unwrap()
    }

    #[test]
    fn restricted_set_excludes_self_and_respects_l1() {
        let w = open(5);
        let set = RestrictedActionSet::new(&w, 2, true);
        for s in w.states() {
            let acts = set.actions(s);
            assert!(!acts.is_empty());
            assert!(!acts.contains(&s));
            assert!(acts.iter().all(|&g| w.l1(s, g) <= 2));
        }
        let centre = w.state_at(2, 2).unwrap();
        assert_eq!(set.actions(centre).len(), 12);
        let all = RestrictedActionSet::new(&w, 2, false);
        assert_eq!(all.actions(centre).len(), 24);
    }

    #[test]
    fn goal_vectors_identity() {
        let w = open(3);
        let q = GoalQTensor::new(&w, 1, 3, true, GoalSet::All(w.num_states()));
        let gamma = 0.95;
        for s in w.states() {
            let r = goal_reward_vector(&q, s, RewardMode::Binary);
            let term = termination_vector(&q, s, gamma);
            assert_eq!(r.iter().filter(|&&v| v != 0.0).count(), 1);
            for (rg, tg) in r.iter().zip(&term) {
                assert!(*tg == 0.0 || *tg == gamma);
                assert!((rg - (1.0 - tg / gamma)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn top_level_has_single_goal_column() {
        let w = open(4);
        let q = GoalQTensor::new(&w, 2, 9, true, GoalSet::Single(w.goal()));
        assert_eq!(q.num_goals(), 1);
        assert_eq!(q.goal_column(w.goal()), Some(0));
        assert_eq!(q.goal_column(w.start()), None);
    }

    #[test]
    fn shortcut_to_reachable_goal() {
        let w = open(5);
        let q = GoalQTensor::new(&w, 1, 3, true, GoalSet::All(w.num_states()));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = w.state_at(0, 0).unwrap();
        let g = w.state_at(1, 2).unwrap();
        for _ in 0..20 {
            assert_eq!(sample_level_action(&q, s, g, 1.0, &mut rng), LevelAction::Goal(g));
        }
    }

    #[test]
    fn uniform_over_ties_and_under_full_exploration() {
        let w = open(3);
        let q = GoalQTensor::new(&w, 0, 1, true, GoalSet::Single(w.goal()));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for eps in [0.0, 1.0] {
            let mut counts = [0usize; 4];
            for _ in 0..40_000 {
                let a = sample_level_action(&q, w.start(), w.goal(), eps, &mut rng);
                counts[a.primitive().unwrap().index()] += 1;
            }
            for c in counts {
                assert!((c as f64 - 10_000.0).abs() < 450.0, "{counts:?}");
            }
        }
    }

    #[test]
    fn greedy_picks_max() {
        let w = open(3);
        let mut q = GoalQTensor::new(&w, 0, 1, true, GoalSet::Single(w.goal()));
        q.entry_mut(w.start(), PrimitiveAction::Down.index())[0] = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(
                sample_level_action(&q, w.start(), w.goal(), 0.0, &mut rng),
                LevelAction::Primitive(PrimitiveAction::Down)
            );
        }
    }

    #[test]
    fn row_max() {
        let w = open(3);
        let mut q = GoalQTensor::new(&w, 1, 2, true, GoalSet::All(w.num_states()));
        let s = w.start();
        q.entry_mut(s, 0)[4] = 0.3;
        q.entry_mut(s, 1)[4] = 0.7;
        q.entry_mut(s, 2)[2] = 0.1;
        let mut out = vec![0.0; q.num_goals()];
        q.row_max_into(s, &mut out);
        assert_eq!(out[4], 0.7);
        assert_eq!(out[2], 0.1);
        assert_eq!(out[0], 0.0);
        assert_eq!(q.max_for_goal(s, 4), 0.7);
    }
}

//! Conventional single-level learners: 1-step Q-learning, Tree-Backup(n) and
//! Watkins Q(λ) with a replacing trace. The target policy is always greedy;
//! an action tied with the row maximum counts as greedy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{PrimitiveAction, StateId, TraceBuffer, Transition};

/// Relative tolerance under which two action values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[inline]
pub(crate) fn ties_max(value: f64, max: f64) -> bool {
    value >= max - TIE_TOLERANCE * max.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// 1 on reaching the goal, 0 otherwise.
    #[default]
    Binary,
    /// -1 per step, 0 on reaching the goal.
    Penalizing,
}

impl RewardMode {
    #[inline]
    pub fn reward(self, reached: bool) -> f64 {
        match (self, reached) {
            (RewardMode::Binary, true) => 1.0,
            (RewardMode::Binary, false) => 0.0,
            (RewardMode::Penalizing, true) => 0.0,
            (RewardMode::Penalizing, false) => -1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("gamma must lie in [0, 1) with binary rewards (got {0})")]
    GammaBinary(f64),
    #[error("gamma must lie in [0, 1] (got {0})")]
    Gamma(f64),
    #[error("alpha must lie in (0, 1] (got {0})")]
    Alpha(f64),
    #[error("lambda must lie in [0, 1] (got {0})")]
    Lambda(f64),
    #[error("backup depth n must be at least 1")]
    Depth,
    #[error("trace cutoff must be positive (got {0})")]
    Cutoff(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackupParams {
    pub gamma: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub n: usize,
    pub trace_cutoff: f64,
    pub reward_mode: RewardMode,
}

impl Default for BackupParams {
    fn default() -> Self {
        BackupParams {
            gamma: 0.95,
            alpha: 1.0,
            lambda: 0.0,
            n: 1,
            trace_cutoff: 1e-8,
            reward_mode: RewardMode::Binary,
        }
    }
}

impl BackupParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        match self.reward_mode {
            RewardMode::Binary if !(0.0..1.0).contains(&self.gamma) => {
                return Err(ParamError::GammaBinary(self.gamma))
            }
            RewardMode::Penalizing if !(0.0..=1.0).contains(&self.gamma) => {
                return Err(ParamError::Gamma(self.gamma))
            }
            _ => {}
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ParamError::Alpha(self.alpha));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ParamError::Lambda(self.lambda));
        }
        if self.n == 0 {
            return Err(ParamError::Depth);
        }
        if !(self.trace_cutoff > 0.0) {
            return Err(ParamError::Cutoff(self.trace_cutoff));
        }
        Ok(())
    }

    #[inline]
    fn reward(&self, tr: &Transition) -> f64 {
        self.reward_mode.reward(tr.terminal)
    }
}

/// Dense `Q(s, a)` over walkable states and the four primitive actions.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
}

impl QTable {
    pub fn new(num_states: usize) -> Self {
        QTable {
            values: vec![0.0; num_states * 4],
        }
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / 4
    }

    #[inline]
    pub fn get(&self, s: StateId, a: PrimitiveAction) -> f64 {
        self.values[s.index() * 4 + a.index()]
    }

    #[inline]
    pub fn set(&mut self, s: StateId, a: PrimitiveAction, v: f64) {
        self.values[s.index() * 4 + a.index()] = v;
    }

    #[inline]
    pub fn row(&self, s: StateId) -> &[f64] {
        &self.values[s.index() * 4..s.index() * 4 + 4]
    }

    #[inline]
    pub fn max(&self, s: StateId) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy target probability with ties counted as greedy.
    #[inline]
    pub fn greedy_prob(&self, s: StateId, a: PrimitiveAction) -> f64 {
        if ties_max(self.get(s, a), self.max(s)) {
            1.0
        } else {
            0.0
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[inline]
fn one_step_delta(q: &QTable, tr: &Transition, p: &BackupParams) -> f64 {
    let bootstrap = if tr.terminal {
        0.0
    } else {
        p.gamma * q.max(tr.next_state)
    };
    p.reward(tr) + bootstrap - q.get(tr.state, tr.action)
}

/// One-step Q-learning.
pub fn q_step(q: &mut QTable, tr: &Transition, p: &BackupParams) {
    let delta = one_step_delta(q, tr, p);
    let v = q.get(tr.state, tr.action) + p.alpha * delta;
    q.set(tr.state, tr.action, v);
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlatError {
    #[error("tree-backup window is empty")]
    EmptyWindow,
}

/// Tree-Backup error summed over `window` (transitions `t..t+m`, `m <= n`),
/// weighting each later one-step error by the product of `γ·π` along the way.
pub fn tb_n_delta(window: &[Transition], q: &QTable, p: &BackupParams) -> Result<f64, FlatError> {
    if window.is_empty() {
        return Err(FlatError::EmptyWindow);
    }
    let mut total = 0.0;
    let mut weight = 1.0;
    for (k, tr) in window.iter().enumerate() {
        if k > 0 {
            weight *= p.gamma * q.greedy_prob(tr.state, tr.action);
            if weight == 0.0 {
                break;
            }
        }
        total += weight * one_step_delta(q, tr, p);
    }
    Ok(total)
}

/// Replacing eligibility trace with a sparse list of live entries.
#[derive(Debug, Clone)]
pub struct ReplacingTrace {
    values: Vec<f64>,
    active: Vec<usize>,
}

impl ReplacingTrace {
    pub fn new(num_states: usize) -> Self {
        ReplacingTrace {
            values: vec![0.0; num_states * 4],
            active: Vec::new(),
        }
    }

    #[inline]
    pub fn get(&self, s: StateId, a: PrimitiveAction) -> f64 {
        self.values[s.index() * 4 + a.index()]
    }

    pub fn clear(&mut self) {
        for &i in &self.active {
            self.values[i] = 0.0;
        }
        self.active.clear();
    }

    /// Multiplies every entry by `factor`; entries falling under `cutoff` become zero.
    pub fn decay(&mut self, factor: f64, cutoff: f64) {
        let values = &mut self.values;
        self.active.retain(|&i| {
            values[i] *= factor;
            if values[i] < cutoff {
                values[i] = 0.0;
                false
            } else {
                true
            }
        });
    }

    pub fn visit(&mut self, s: StateId, a: PrimitiveAction) {
        let i = s.index() * 4 + a.index();
        if self.values[i] == 0.0 {
            self.active.push(i);
        }
        self.values[i] = 1.0;
    }

    pub fn live_entries(&self) -> usize {
        self.active.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Watkins Q(λ): decay by `γλπ(A_t|S_t)`, set `z(S_t, A_t) = 1`, then `Q += αδz`.
pub fn watkins_q_lambda_step(
    q: &mut QTable,
    z: &mut ReplacingTrace,
    tr: &Transition,
    p: &BackupParams,
) {
    let delta = one_step_delta(q, tr, p);
    let pi = q.greedy_prob(tr.state, tr.action);
    z.decay(p.gamma * p.lambda * pi, p.trace_cutoff);
    z.visit(tr.state, tr.action);
    let step = p.alpha * delta;
    for &i in &z.active {
        q.values[i] += step * z.values[i];
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlatAlgorithm {
    QLearning,
    TreeBackup,
    QLambda,
}

/// A flat learner driven from an episode trace, one call per environment step.
#[derive(Debug, Clone)]
pub struct FlatLearner {
    pub algorithm: FlatAlgorithm,
    pub params: BackupParams,
    pub q: QTable,
    trace: ReplacingTrace,
    goal: StateId,
}

impl FlatLearner {
    pub fn new(algorithm: FlatAlgorithm, params: BackupParams, num_states: usize, goal: StateId) -> Self {
        FlatLearner {
            algorithm,
            params,
            q: QTable::new(num_states),
            trace: ReplacingTrace::new(num_states),
            goal,
        }
    }

    fn transition(&self, trace: &TraceBuffer, j: usize) -> Transition {
        let next_state = trace.state(j + 1);
        let terminal = next_state == self.goal;
        Transition {
            state: trace.state(j),
            action: trace.action(j),
            next_state,
            env_reward: if terminal { 1.0 } else { 0.0 },
            terminal,
        }
    }

    fn tb_update(&mut self, trace: &TraceBuffer, from: usize, to: usize) {
        let window: Vec<Transition> = (from..=to).map(|j| self.transition(trace, j)).collect();
        let delta = tb_n_delta(&window, &self.q, &self.params).expect("window is non-empty");
        let first = &window[0];
        let v = self.q.get(first.state, first.action) + self.params.alpha * delta;
        self.q.set(first.state, first.action, v);
    }

    pub fn reset_episode(&mut self) {
        self.trace.clear();
    }

    /// Learns from transition `t` (the newest one in `trace`).
    pub fn observe(&mut self, trace: &TraceBuffer, t: usize) {
        match self.algorithm {
            FlatAlgorithm::QLearning => {
                let tr = self.transition(trace, t);
                q_step(&mut self.q, &tr, &self.params);
            }
            FlatAlgorithm::QLambda => {
                let tr = self.transition(trace, t);
                watkins_q_lambda_step(&mut self.q, &mut self.trace, &tr, &self.params);
            }
            FlatAlgorithm::TreeBackup => {
                let n = self.params.n;
                if t + 1 >= n {
                    self.tb_update(trace, t + 1 - n, t);
                }
            }
        }
    }

    /// Flushes the pairs Tree-Backup could not update yet, oldest first.
    pub fn finish_episode(&mut self, trace: &TraceBuffer) {
        if self.algorithm != FlatAlgorithm::TreeBackup || trace.is_empty() {
            return;
        }
        let len = trace.len();
        let first_pending = (len + 1).saturating_sub(self.params.n);
        for t_n in first_pending..len {
            self.tb_update(trace, t_n, len - 1);
        }
    }

    pub fn trace(&self) -> &ReplacingTrace {
        &self.trace
    }
}

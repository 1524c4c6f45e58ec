//! Hierarchical backups driven from the shared primitive trace.
//!
//! Level `i` with atomic horizon `H^a` relabels in hindsight: the state reached
//! after a primitive step is a valid goal-action for every trailing state up
//! to `H^a` steps back. Multi-step returns jump in strides of `H^a`, so a chain
//! of `n` backups touches `n` states plus a trailing window of at most `H^a`.

use crate::flat::{ties_max, BackupParams};
use crate::hierarchy::{GoalQTensor, LevelAction};
use crate::mdp::{StateId, TraceBuffer};

/// Bookkeeping returned by the update routines, for cost accounting in tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateStats {
    /// States visited along the backward chain (including the seed state).
    pub chain_steps: usize,
    /// `(state, action)` pairs whose values were written.
    pub pairs_updated: usize,
}

/// Action taken from chain state `S_k`: the state one full horizon later.
#[inline]
fn chain_action(q: &GoalQTensor, trace: &TraceBuffer, k: usize) -> LevelAction {
    if q.is_primitive() {
        LevelAction::Primitive(trace.action(k))
    } else {
        LevelAction::Goal(trace.state(k + q.reach()))
    }
}

/// Hindsight action shared by the trailing window of transition `t`.
#[inline]
fn trailing_action(q: &GoalQTensor, trace: &TraceBuffer, t: usize) -> LevelAction {
    if q.is_primitive() {
        LevelAction::Primitive(trace.action(t))
    } else {
        LevelAction::Goal(trace.state(t + 1))
    }
}

/// Writes `r(s) + γ(s)·bootstrap` into `out` for every goal column; the column
/// of `s` itself terminates.
#[inline]
fn apply_pseudo_reward(q: &GoalQTensor, s: StateId, params: &BackupParams, out: &mut [f64]) {
    let miss = params.reward_mode.reward(false);
    for v in out.iter_mut() {
        *v = miss + params.gamma * *v;
    }
    if let Some(c) = q.goal_column(s) {
        out[c] = params.reward_mode.reward(true);
    }
}

/// One-step return vector `G_g = r_g(s) + γ_g(s)·max_a Q(s, a, g)`.
pub fn hier_return(q: &GoalQTensor, next_state: StateId, params: &BackupParams) -> Vec<f64> {
    let mut g = vec![0.0; q.num_goals()];
    q.row_max_into(next_state, &mut g);
    apply_pseudo_reward(q, next_state, params, &mut g);
    g
}

/// Greedy indicator of `a` at `s` per goal column; all zeros if `a` is not
/// admissible at `s`.
fn greedy_indicator(q: &GoalQTensor, s: StateId, a: LevelAction, row_max: &[f64], out: &mut [f64]) {
    match q.slot_of(s, a) {
        None => out.fill(0.0),
        Some(slot) => {
            for ((o, &v), &m) in out.iter_mut().zip(q.entry(s, slot)).zip(row_max) {
                *o = if ties_max(v, m) { 1.0 } else { 0.0 };
            }
        }
    }
}

/// Moves `Q(s, a, ·)` towards `target` for each distinct trailing state.
fn overwrite_pairs(
    q: &mut GoalQTensor,
    states: impl Iterator<Item = StateId>,
    a: LevelAction,
    target: &[f64],
    alpha: f64,
) -> usize {
    let mut seen: Vec<StateId> = Vec::new();
    let mut written = 0;
    for s in states {
        if seen.contains(&s) {
            continue;
        }
        seen.push(s);
        let Some(slot) = q.slot_of(s, a) else { continue };
        for (v, &g) in q.entry_mut(s, slot).iter_mut().zip(target) {
            *v = if alpha == 1.0 { g } else { (1.0 - alpha) * *v + alpha * g };
        }
        written += 1;
    }
    written
}

/// Trailing states `S_{t-j}` for `j = 0..=min(H^a - 1, t)`.
fn trailing_window(trace: &TraceBuffer, t: usize, reach: usize) -> impl Iterator<Item = StateId> + '_ {
    (0..=t.min(reach - 1)).map(move |j| trace.state(t - j))
}

/// 1-step update: every trailing state moves towards the return at `S_{t+1}`.
pub fn hierq_1step_update(
    q: &mut GoalQTensor,
    trace: &TraceBuffer,
    t: usize,
    params: &BackupParams,
) -> UpdateStats {
    hiertb_update(q, trace, t, 1, params)
}

/// Tree-Backup with `n` strided backups ending at transition `t`.
///
/// The chain runs over `S_{t_n+1}, S_{t_n+1+H^a}, …, S_{t+1}` with
/// `t_n = t - H^a(n-1)`; the resulting return is written to the trailing
/// window of `t_n`. A no-op while `t_n < 0`.
pub fn hiertb_update(
    q: &mut GoalQTensor,
    trace: &TraceBuffer,
    t: usize,
    n: usize,
    params: &BackupParams,
) -> UpdateStats {
    assert!(n >= 1, "backup depth must be at least 1");
    assert!(t < trace.len(), "transition {t} not in trace");
    let ha = q.reach();
    let span = ha * (n - 1);
    if t < span {
        return UpdateStats::default();
    }
    let t_n = t - span;

    let goals = q.num_goals();
    let mut g = vec![0.0; goals];
    let mut row_max = vec![0.0; goals];
    let mut pi = vec![0.0; goals];

    q.row_max_into(trace.state(t + 1), &mut g);
    apply_pseudo_reward(q, trace.state(t + 1), params, &mut g);
    let mut chain_steps = 1;

    let mut k = t + 1;
    while k > t_n + ha {
        k -= ha;
        let s = trace.state(k);
        let a = chain_action(q, trace, k);
        q.row_max_into(s, &mut row_max);
        greedy_indicator(q, s, a, &row_max, &mut pi);
        for ((gv, &p), &m) in g.iter_mut().zip(&pi).zip(&row_max) {
            *gv = p * *gv + (1.0 - p) * m;
        }
        apply_pseudo_reward(q, s, params, &mut g);
        chain_steps += 1;
    }

    let a = trailing_action(q, trace, t_n);
    let pairs_updated = overwrite_pairs(q, trailing_window(trace, t_n, ha), a, &g, params.alpha);
    UpdateStats {
        chain_steps,
        pairs_updated,
    }
}

/// End-of-episode sweep for updates whose full `n`-step chain never became
/// available. Each pending `t_n` (oldest first) gets the longest stride-aligned
/// chain that fits in the trace.
pub fn hiertb_finish(q: &mut GoalQTensor, trace: &TraceBuffer, n: usize, params: &BackupParams) -> UpdateStats {
    let mut total = UpdateStats::default();
    let len = trace.len();
    if len == 0 || n <= 1 {
        return total;
    }
    let ha = q.reach();
    let first = len.saturating_sub(ha * (n - 1));
    for t_n in first..len {
        let hops = (len - 1 - t_n) / ha;
        let stats = hiertb_update(q, trace, t_n + ha * hops, hops + 1, params);
        total.chain_steps += stats.chain_steps;
        total.pairs_updated += stats.pairs_updated;
    }
    total
}

/// One eligibility row: a `(state, action)` pair and its per-goal traces.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub state: StateId,
    pub slot: usize,
    /// Transition index at which the pair was last set to 1.
    pub inserted_at: usize,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Matrix {
    rows: Vec<TraceRow>,
}

/// `H^a` sparse eligibility matrices; step `t` only touches matrix `t mod H^a`.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityBank {
    matrices: Vec<Matrix>,
}

impl EligibilityBank {
    pub fn new(reach: usize) -> Self {
        assert!(reach >= 1);
        EligibilityBank {
            matrices: vec![Matrix::default(); reach],
        }
    }

    pub fn num_matrices(&self) -> usize {
        self.matrices.len()
    }

    pub fn clear(&mut self) {
        self.matrices.iter_mut().for_each(|m| m.rows.clear());
    }

    pub fn rows(&self, h: usize) -> &[TraceRow] {
        &self.matrices[h].rows
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.iter().all(|m| m.rows.is_empty())
    }

    pub fn get(&self, h: usize, s: StateId, slot: usize, column: usize) -> f64 {
        self.matrices[h]
            .rows
            .iter()
            .find(|r| r.state == s && r.slot == slot)
            .map_or(0.0, |r| r.z[column])
    }
}

/// Hierarchical Watkins Q(λ) step for transition `t`.
///
/// The matrix `Z_h`, `h = t mod H^a`, holds pairs whose strided chains pass
/// through the window-opening state `S_{t - t_min}`. It is decayed by
/// `λ·γ·π` there, credited with the chain error `δ`, and then every trailing
/// pair `(S_{t-j}, A)` is reset to eligibility 1 and moved towards `G`.
pub fn hierq_lambda_update(
    q: &mut GoalQTensor,
    bank: &mut EligibilityBank,
    trace: &TraceBuffer,
    t: usize,
    params: &BackupParams,
) -> UpdateStats {
    assert!(t < trace.len(), "transition {t} not in trace");
    let ha = q.reach();
    assert_eq!(bank.num_matrices(), ha, "bank size must match the level's horizon");
    let h = t % ha;
    let t_min = t.min(ha - 1);
    let goals = q.num_goals();
    let a = trailing_action(q, trace, t);
    let g = hier_return(q, trace.state(t + 1), params);

    let anchor = trace.state(t - t_min);
    let mut delta = vec![0.0; goals];
    let mut decay = vec![0.0; goals];
    if let Some(slot) = q.slot_of(anchor, a) {
        for ((d, &gv), &qv) in delta.iter_mut().zip(&g).zip(q.entry(anchor, slot)) {
            *d = gv - qv;
        }
        let mut row_max = vec![0.0; goals];
        q.row_max_into(anchor, &mut row_max);
        greedy_indicator(q, anchor, a, &row_max, &mut decay);
        let anchor_column = q.goal_column(anchor);
        for (c, f) in decay.iter_mut().enumerate() {
            let gamma = if anchor_column == Some(c) { 0.0 } else { params.gamma };
            *f *= params.lambda * gamma;
        }
    }

    let mut new_pairs: Vec<(StateId, usize)> = Vec::with_capacity(t_min + 1);
    for s in trailing_window(trace, t, ha) {
        if let Some(slot) = q.slot_of(s, a) {
            if !new_pairs.contains(&(s, slot)) {
                new_pairs.push((s, slot));
            }
        }
    }

    let m = &mut bank.matrices[h];
    let cutoff = params.trace_cutoff;
    m.rows.retain_mut(|row| {
        if new_pairs.contains(&(row.state, row.slot)) {
            return false;
        }
        let mut live = false;
        for (z, &f) in row.z.iter_mut().zip(&decay) {
            *z *= f;
            if *z < cutoff {
                *z = 0.0;
            } else {
                live = true;
            }
        }
        live
    });
    for row in &m.rows {
        for ((v, &d), &z) in q.entry_mut(row.state, row.slot).iter_mut().zip(&delta).zip(&row.z) {
            *v += params.alpha * d * z;
        }
    }
    for &(s, slot) in &new_pairs {
        m.rows.push(TraceRow {
            state: s,
            slot,
            inserted_at: t,
            z: vec![1.0; goals],
        });
    }

    let pairs_updated = overwrite_pairs(q, new_pairs.iter().map(|&(s, _)| s), a, &g, params.alpha);
    UpdateStats {
        chain_steps: 1,
        pairs_updated: pairs_updated + m.rows.len() - new_pairs.len(),
    }
}

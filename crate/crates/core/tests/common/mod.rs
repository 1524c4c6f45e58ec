//! Fixtures and brute-force oracles shared by the integration tests.
//!
//! The oracle keeps its own sparse table keyed by `(state, action, goal)`,
//! decides admissibility from grid coordinates, and evaluates the strided
//! Tree-Backup error as an explicit forward sum of one-step errors. It never
//! calls into the crate's update code.

#![allow(dead_code)]

use std::collections::HashMap;

use hierq::hierarchy::{GoalQTensor, GoalSet};
use hierq::mdp::{parse_map, GridWorld, PrimitiveAction, StateId, TraceBuffer};
use hierq::LevelAction;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn corridor(len: usize) -> GridWorld {
    let row: String = (0..len)
        .map(|i| match i {
            0 => 'S',
            i if i == len - 1 => 'G',
            _ => '.',
        })
        .collect();
    parse_map(&row).unwrap()
}

pub fn open_room() -> GridWorld {
    parse_map("S....\n.....\n.....\n.....\n....G").unwrap()
}

pub fn walled_room() -> GridWorld {
    parse_map("S....\n.....\n.###.\n.....\n....G").unwrap()
}

pub fn fixture_worlds() -> Vec<GridWorld> {
    vec![corridor(4), corridor(6), corridor(8), open_room(), walled_room()]
}

/// Uniformly random walk from the start, stopping at the goal or after `len` moves.
pub fn random_walk<R: Rng>(world: &GridWorld, len: usize, rng: &mut R) -> TraceBuffer {
    let mut trace = TraceBuffer::new(world.start());
    let mut s = world.start();
    while trace.len() < len && s != world.goal() {
        let a = PrimitiveAction::ALL[rng.gen_range(0..4)];
        s = world.step(s, a).next_state;
        trace.record(a, s);
    }
    trace
}

/// Random walk that never revisits a state (and never bumps into walls).
pub fn self_avoiding_walk<R: Rng>(world: &GridWorld, max_len: usize, rng: &mut R) -> TraceBuffer {
    let mut trace = TraceBuffer::new(world.start());
    let mut s = world.start();
    let mut seen = vec![s];
    while trace.len() < max_len && s != world.goal() {
        let mut moves = PrimitiveAction::ALL.to_vec();
        moves.shuffle(rng);
        let Some((a, next)) = moves
            .into_iter()
            .map(|a| (a, world.step(s, a).next_state))
            .find(|(_, n)| !seen.contains(n))
        else {
            break;
        };
        s = next;
        seen.push(s);
        trace.record(a, s);
    }
    trace
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Act {
    Move(usize),
    Target(u32),
}

impl Act {
    pub fn from_level_action(a: LevelAction) -> Self {
        match a {
            LevelAction::Primitive(p) => Act::Move(p.index()),
            LevelAction::Goal(g) => Act::Target(g.0),
        }
    }
}

/// Brute-force goal-conditioned table for one level.
pub struct OracleTable {
    pub primitive: bool,
    pub reach: usize,
    pub goals: Vec<u32>,
    pub gamma: f64,
    pub alpha: f64,
    coords: Vec<(usize, usize)>,
    pub values: HashMap<(u32, Act, u32), f64>,
}

impl OracleTable {
    pub fn new(world: &GridWorld, primitive: bool, reach: usize, goals: Vec<u32>, gamma: f64, alpha: f64) -> Self {
        let coords = (0..world.num_states() as u32).map(|s| world.coords(StateId(s))).collect();
        OracleTable {
            primitive,
            reach,
            goals,
            gamma,
            alpha,
            coords,
            values: HashMap::new(),
        }
    }

    fn dist(&self, a: u32, b: u32) -> usize {
        let (ra, ca) = self.coords[a as usize];
        let (rb, cb) = self.coords[b as usize];
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }

    pub fn admissible(&self, s: u32, a: Act) -> bool {
        match a {
            Act::Move(i) => self.primitive && i < 4,
            Act::Target(g) => !self.primitive && g != s && self.dist(s, g) <= self.reach,
        }
    }

    pub fn actions(&self, s: u32) -> Vec<Act> {
        if self.primitive {
            (0..4).map(Act::Move).collect()
        } else {
            (0..self.coords.len() as u32)
                .map(Act::Target)
                .filter(|&a| self.admissible(s, a))
                .collect()
        }
    }

    pub fn q(&self, s: u32, a: Act, g: u32) -> f64 {
        *self.values.get(&(s, a, g)).unwrap_or(&0.0)
    }

    pub fn max(&self, s: u32, g: u32) -> f64 {
        self.actions(s)
            .into_iter()
            .map(|a| self.q(s, a, g))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn greedy(&self, s: u32, a: Act, g: u32) -> bool {
        self.admissible(s, a) && self.q(s, a, g) >= self.max(s, g) - 1e-9
    }

    /// Fills every admissible entry from `init`.
    pub fn fill(&mut self, init: impl Fn(u32, Act, u32) -> f64) {
        for s in 0..self.coords.len() as u32 {
            for a in self.actions(s) {
                for &g in &self.goals {
                    self.values.insert((s, a, g), init(s, a, g));
                }
            }
        }
    }

    fn reward(s: u32, g: u32) -> f64 {
        if s == g {
            1.0
        } else {
            0.0
        }
    }

    fn discount(&self, s: u32, g: u32) -> f64 {
        if s == g {
            0.0
        } else {
            self.gamma
        }
    }

    fn stride(&self) -> usize {
        if self.primitive {
            1
        } else {
            self.reach
        }
    }

    /// Action taken from trace index `c` along a chain of full-span jumps.
    fn chain_act(&self, trace: &TraceBuffer, c: usize) -> Act {
        if self.primitive {
            Act::Move(trace.action(c).index())
        } else {
            Act::Target(trace.state(c + self.reach).0)
        }
    }

    /// Forward-view error for `(s_ref, A)` where `A` leads to `S_{t_ref+1}`
    /// and the chain makes `links` strided jumps.
    fn forward_error(&self, trace: &TraceBuffer, t_ref: usize, links: usize, s_ref: u32, act: Act, g: u32) -> f64 {
        let h = self.stride();
        let st = |c: usize| trace.state(c).0;
        let c0 = t_ref + 1;
        let mut total = Self::reward(st(c0), g) + self.discount(st(c0), g) * self.max(st(c0), g) - self.q(s_ref, act, g);
        let mut weight = 1.0;
        for m in 1..links {
            let prev = c0 + (m - 1) * h;
            let cur = prev + h;
            let a_prev = self.chain_act(trace, prev);
            let pi = if self.greedy(st(prev), a_prev, g) { 1.0 } else { 0.0 };
            weight *= self.discount(st(prev), g) * pi;
            let delta = Self::reward(st(cur), g) + self.discount(st(cur), g) * self.max(st(cur), g)
                - self.q(st(prev), a_prev, g);
            total += weight * delta;
        }
        total
    }

    /// Applies the update anchored at reference index `t_ref` with `links` jumps.
    pub fn apply(&mut self, trace: &TraceBuffer, t_ref: usize, links: usize) {
        let act = if self.primitive {
            Act::Move(trace.action(t_ref).index())
        } else {
            Act::Target(trace.state(t_ref + 1).0)
        };
        let window = if self.primitive { 1 } else { self.reach };
        let mut refs: Vec<u32> = Vec::new();
        for j in 0..window.min(t_ref + 1) {
            let s = trace.state(t_ref - j).0;
            if !refs.contains(&s) && self.admissible(s, act) {
                refs.push(s);
            }
        }
        let mut pending = Vec::new();
        for &s in &refs {
            for &g in &self.goals {
                let err = self.forward_error(trace, t_ref, links, s, act, g);
                pending.push(((s, act, g), self.q(s, act, g) + self.alpha * err));
            }
        }
        for (key, v) in pending {
            self.values.insert(key, v);
        }
    }

    /// Every reference index gets exactly one update: online once `n` jumps
    /// fit behind the newest transition, otherwise at episode end (oldest
    /// first) with as many jumps as the trace still holds.
    pub fn run_tree_backup(&mut self, trace: &TraceBuffer, n: usize) {
        let len = trace.len();
        let h = self.stride();
        let span = h * (n - 1);
        for t in 0..len {
            if t >= span {
                self.apply(trace, t - span, n);
            }
        }
        for t_ref in 0..len {
            if t_ref + span >= len {
                self.apply(trace, t_ref, 1 + (len - 1 - t_ref) / h);
            }
        }
    }

    /// Largest absolute difference against an implementation tensor.
    pub fn max_abs_diff(&self, q: &GoalQTensor) -> f64 {
        let mut worst: f64 = 0.0;
        let mut seen = 0usize;
        q.for_each_entry(|s, a, g, v| {
            worst = worst.max((self.q(s.0, Act::from_level_action(a), g.0) - v).abs());
            seen += 1;
        });
        let expected: usize = (0..self.coords.len() as u32).map(|s| self.actions(s).len()).sum::<usize>() * self.goals.len();
        assert_eq!(seen, expected, "tensor and oracle disagree on the entry set");
        worst
    }
}

/// Deterministic quantized initial value in {0, 0.25, 0.5}.
pub fn quantized_init(seed: u64) -> impl Fn(u32, Act, u32) -> f64 {
    move |s, a, g| {
        let a = match a {
            Act::Move(i) => i as u64,
            Act::Target(t) => 1000 + t as u64,
        };
        let mut x = seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ a.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ (g as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
        x ^= x >> 29;
        x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x ^= x >> 32;
        [0.0, 0.25, 0.5][(x % 3) as usize]
    }
}

/// Copies an initializer into an implementation tensor.
pub fn fill_tensor(q: &mut GoalQTensor, init: &impl Fn(u32, Act, u32) -> f64) {
    for s in 0..q.num_states() as u32 {
        let s = StateId(s);
        for slot in 0..q.num_actions(s) {
            let a = Act::from_level_action(q.action(s, slot));
            let goals: Vec<u32> = (0..q.num_goals()).map(|c| q.goal_state(c).0).collect();
            for (c, v) in q.entry_mut(s, slot).iter_mut().enumerate() {
                *v = init(s.0, a, goals[c]);
            }
        }
    }
}

/// A level tensor plus the matching oracle, both initialised identically.
pub fn tensor_and_oracle(
    world: &GridWorld,
    primitive: bool,
    reach: usize,
    single_goal: bool,
    gamma: f64,
    init_seed: Option<u64>,
) -> (GoalQTensor, OracleTable) {
    let goals = if single_goal {
        GoalSet::Single(world.goal())
    } else {
        GoalSet::All(world.num_states())
    };
    let level = if primitive { 0 } else { 1 };
    let mut q = GoalQTensor::new(world, level, reach, true, goals);
    let goal_ids: Vec<u32> = (0..q.num_goals()).map(|c| q.goal_state(c).0).collect();
    let mut oracle = OracleTable::new(world, primitive, reach, goal_ids, gamma, 1.0);
    oracle.fill(|_, _, _| 0.0);
    if let Some(seed) = init_seed {
        let init = quantized_init(seed);
        fill_tensor(&mut q, &init);
        oracle.fill(init);
    }
    (q, oracle)
}

/// Wraps a hierarchical agent and checks the bank and range invariants after
/// every update. Violations are collected rather than panicking.
pub struct CheckedAgent {
    pub inner: hierq::HierAgent,
    pub violations: Vec<String>,
    pub updates: usize,
}

impl CheckedAgent {
    pub fn new(inner: hierq::HierAgent) -> Self {
        CheckedAgent {
            inner,
            violations: Vec::new(),
            updates: 0,
        }
    }

    fn check_ranges(&mut self, when: &str) {
        for q in self.inner.tensors() {
            if let Some(v) = q.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                self.violations.push(format!("{when}: level {} value {v} outside [0,1]", q.level()));
            }
        }
    }
}

impl hierq::Agent for CheckedAgent {
    fn num_levels(&self) -> usize {
        self.inner.num_levels()
    }

    fn select(&self, level: usize, state: StateId, goal: StateId, eps: f64, rng: &mut rand_chacha::ChaCha8Rng) -> LevelAction {
        self.inner.select(level, state, goal, eps, rng)
    }

    fn is_greedy(&self, level: usize, state: StateId, goal: StateId, candidate: LevelAction) -> bool {
        self.inner.is_greedy(level, state, goal, candidate)
    }

    fn observe(&mut self, trace: &TraceBuffer, t: usize) {
        let before: Vec<hierq::backups::EligibilityBank> =
            (0..self.inner.num_levels()).map(|l| self.inner.bank(l).clone()).collect();
        self.inner.observe(trace, t);
        self.updates += 1;
        for (level, old) in before.iter().enumerate() {
            let bank = self.inner.bank(level);
            let ha = bank.num_matrices();
            for h in 0..ha {
                if h != t % ha && old.rows(h) != bank.rows(h) {
                    self.violations.push(format!("t={t}: level {level} matrix {h} changed"));
                }
                for row in bank.rows(h) {
                    if row.inserted_at % ha != h || row.inserted_at > t {
                        self.violations
                            .push(format!("t={t}: level {level} row inserted at {} in matrix {h}", row.inserted_at));
                    }
                    if row.z.iter().any(|z| !(0.0..=1.0).contains(z)) {
                        self.violations.push(format!("t={t}: level {level} eligibility outside [0,1]"));
                    }
                }
            }
        }
        self.check_ranges(&format!("t={t}"));
    }

    fn finish_episode(&mut self, trace: &TraceBuffer) {
        self.inner.finish_episode(trace);
        self.check_ranges("finish");
    }

    fn reset_episode(&mut self) {
        self.inner.reset_episode();
        for level in 0..self.inner.num_levels() {
            if !self.inner.bank(level).is_empty() {
                self.violations.push(format!("level {level} bank not cleared on reset"));
            }
        }
    }
}

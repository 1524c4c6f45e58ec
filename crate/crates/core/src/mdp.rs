//! Deterministic gridworld environments.
//!
//! Maps are plain ASCII: `#` wall, `.` floor, `S` start, `G` goal. Only
//! walkable cells receive a [`StateId`], so value tensors never spend memory
//! on walls.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

/// Dense index into the walkable cells of a [`GridWorld`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u32);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimitiveAction {
    Up,
    Down,
    Left,
    Right,
}

impl PrimitiveAction {
    pub const ALL: [PrimitiveAction; 4] = [
        PrimitiveAction::Up,
        PrimitiveAction::Down,
        PrimitiveAction::Left,
        PrimitiveAction::Right,
    ];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            PrimitiveAction::Up => 0,
            PrimitiveAction::Down => 1,
            PrimitiveAction::Left => 2,
            PrimitiveAction::Right => 3,
        }
    }

    #[inline]
    pub fn from_index(idx: usize) -> Self {
        Self::ALL[idx]
    }

    fn delta(self) -> (isize, isize) {
        match self {
            PrimitiveAction::Up => (-1, 0),
            PrimitiveAction::Down => (1, 0),
            PrimitiveAction::Left => (0, -1),
            PrimitiveAction::Right => (0, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveAction::Up => "up",
            PrimitiveAction::Down => "down",
            PrimitiveAction::Left => "left",
            PrimitiveAction::Right => "right",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("row {row} has width {found}, expected {expected}")]
    NotRectangular {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unexpected character {ch:?} at row {row}, column {col}")]
    BadChar { ch: char, row: usize, col: usize },
    #[error("map has no start marker 'S'")]
    MissingStart,
    #[error("map has no goal marker 'G'")]
    MissingGoal,
    #[error("map has more than one start marker 'S'")]
    DuplicateStart,
    #[error("map has more than one goal marker 'G'")]
    DuplicateGoal,
    #[error("goal is unreachable from cell ({row}, {col})")]
    GoalUnreachable { row: usize, col: usize },
}

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: StateId,
    pub action: PrimitiveAction,
    pub next_state: StateId,
    /// 1 exactly when `next_state` is the goal.
    pub env_reward: f64,
    pub terminal: bool,
}

/// An immutable, validated gridworld.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    name: String,
    width: usize,
    height: usize,
    walkable: Vec<bool>,
    cell_state: Vec<Option<StateId>>,
    state_cell: Vec<(usize, usize)>,
    start: StateId,
    goal: StateId,
    successors: Vec<[StateId; 4]>,
}

/// Parses an ASCII map. The resulting world has an empty name.
pub fn parse_map(ascii_text: &str) -> Result<GridWorld, MapError> {
    GridWorld::parse("", ascii_text)
}

impl GridWorld {
    pub fn parse(name: &str, ascii_text: &str) -> Result<Self, MapError> {
        let rows: Vec<&str> = ascii_text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(MapError::Empty);
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walkable = Vec::with_capacity(width * height);
        let mut start = None;
        let mut goal = None;
        for (r, line) in rows.iter().enumerate() {
            let found = line.chars().count();
            if found != width {
                return Err(MapError::NotRectangular {
                    row: r,
                    expected: width,
                    found,
                });
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => walkable.push(false),
                    '.' => walkable.push(true),
                    'S' => {
                        if start.replace((r, c)).is_some() {
                            return Err(MapError::DuplicateStart);
                        }
                        walkable.push(true);
                    }
                    'G' => {
                        if goal.replace((r, c)).is_some() {
                            return Err(MapError::DuplicateGoal);
                        }
                        walkable.push(true);
                    }
                    other => {
                        return Err(MapError::BadChar {
                            ch: other,
                            row: r,
                            col: c,
                        })
                    }
                }
            }
        }
        let start = start.ok_or(MapError::MissingStart)?;
        let goal = goal.ok_or(MapError::MissingGoal)?;

        let mut cell_state = vec![None; width * height];
        let mut state_cell = Vec::new();
        for r in 0..height {
            for c in 0..width {
                if walkable[r * width + c] {
                    cell_state[r * width + c] = Some(StateId(state_cell.len() as u32));
                    state_cell.push((r, c));
                }
            }
        }

        let mut world = GridWorld {
            name: name.to_string(),
            width,
            height,
            start: cell_state[start.0 * width + start.1].unwrap(),
            goal: cell_state[goal.0 * width + goal.1].unwrap(),
            walkable,
            cell_state,
            state_cell,
            successors: Vec::new(),
        };
        world.successors = (0..world.num_states())
            .map(|s| {
                let mut out = [StateId(s as u32); 4];
                for a in PrimitiveAction::ALL {
                    out[a.index()] = world.move_from(StateId(s as u32), a);
                }
                out
            })
            .collect();
        world.check_connectivity()?;
        Ok(world)
    }

    fn move_from(&self, s: StateId, a: PrimitiveAction) -> StateId {
        let (r, c) = self.state_cell[s.index()];
        let (dr, dc) = a.delta();
        let nr = r as isize + dr;
        let nc = c as isize + dc;
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return s;
        }
        self.cell_state[nr as usize * self.width + nc as usize].unwrap_or(s)
    }

    fn check_connectivity(&self) -> Result<(), MapError> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([self.goal]);
        seen[self.goal.index()] = true;
        while let Some(s) = queue.pop_front() {
            for next in self.successors[s.index()] {
                if !seen[next.index()] {
                    seen[next.index()] = true;
                    queue.push_back(next);
                }
            }
        }
        // Moves are symmetric, so reachability from the goal is reachability to it.
        // Report the start first since that is the error users hit most often.
        if !seen[self.start.index()] {
            let (row, col) = self.coords(self.start);
            return Err(MapError::GoalUnreachable { row, col });
        }
        if let Some(s) = seen.iter().position(|&v| !v) {
            let (row, col) = self.state_cell[s];
            return Err(MapError::GoalUnreachable { row, col });
        }
        Ok(())
    }

    /// Deterministic transition. Moves into walls or off the map leave the agent in place.
    #[inline]
    pub fn step(&self, state: StateId, action: PrimitiveAction) -> Transition {
        let next_state = self.successors[state.index()][action.index()];
        let terminal = next_state == self.goal;
        Transition {
            state,
            action,
            next_state,
            env_reward: if terminal { 1.0 } else { 0.0 },
            terminal,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_states(&self) -> usize {
        self.state_cell.len()
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn goal(&self) -> StateId {
        self.goal
    }

    pub fn is_walkable(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width && self.walkable[row * self.width + col]
    }

    /// `(row, col)` of a state.
    #[inline]
    pub fn coords(&self, s: StateId) -> (usize, usize) {
        self.state_cell[s.index()]
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<StateId> {
        if row >= self.height || col >= self.width {
            return None;
        }
        self.cell_state[row * self.width + col]
    }

    /// Manhattan distance on grid coordinates, ignoring walls.
    #[inline]
    pub fn l1(&self, a: StateId, b: StateId) -> usize {
        let (ra, ca) = self.coords(a);
        let (rb, cb) = self.coords(b);
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.num_states() as u32).map(StateId)
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let ch = match self.cell_state[r * self.width + c] {
                    None => '#',
                    Some(s) if s == self.start => 'S',
                    Some(s) if s == self.goal => 'G',
                    Some(_) => '.',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Episode history `S_0, A_0, S_1, A_1, ...`.
///
/// After `t + 1` recorded transitions the buffer holds states `S_0..=S_{t+1}`
/// and actions `A_0..=A_t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceBuffer {
    states: Vec<StateId>,
    actions: Vec<PrimitiveAction>,
}

impl TraceBuffer {
    pub fn new(start: StateId) -> Self {
        TraceBuffer {
            states: vec![start],
            actions: Vec::new(),
        }
    }

    pub fn reset(&mut self, start: StateId) {
        self.states.clear();
        self.actions.clear();
        self.states.push(start);
    }

    pub fn record(&mut self, action: PrimitiveAction, next_state: StateId) {
        self.actions.push(action);
        self.states.push(next_state);
    }

    /// Number of recorded transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    #[inline]
    pub fn state(&self, j: usize) -> StateId {
        self.states[j]
    }

    #[inline]
    pub fn action(&self, j: usize) -> PrimitiveAction {
        self.actions[j]
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn actions(&self) -> &[PrimitiveAction] {
        &self.actions
    }

    /// Most recent state.
    pub fn head(&self) -> StateId {
        *self.states.last().expect("trace always holds a start state")
    }

    /// Rebuilds a buffer from a state sequence on `world`, inferring each action.
    /// Returns `None` if two consecutive states are not one move apart.
    pub fn from_states(world: &GridWorld, states: &[StateId]) -> Option<Self> {
        let mut buf = TraceBuffer::new(*states.first()?);
        for pair in states.windows(2) {
            let a = PrimitiveAction::ALL
                .into_iter()
                .find(|&a| world.step(pair[0], a).next_state == pair[1])?;
            buf.record(a, pair[1]);
        }
        Some(buf)
    }
}

const MAP_10X10_GRIDWORLD: &str = include_str!("../maps/10x10-gridworld.txt");
const MAP_20X20_GRIDWORLD: &str = include_str!("../maps/20x20-gridworld.txt");
const MAP_4_ROOMS: &str = include_str!("../maps/4-rooms-5-to-1.txt");
const MAP_9_ROOMS: &str = include_str!("../maps/9-rooms-5-to-1.txt");
const MAP_10X10_MAZE: &str = include_str!("../maps/10x10-maze.txt");
const MAP_20X20_MAZE: &str = include_str!("../maps/20x20-maze.txt");

/// `(display name, cli slug, ascii)` for every bundled map.
pub const BUILTIN_MAPS: [(&str, &str, &str); 6] = [
    ("10x10 Gridworld", "10x10-gridworld", MAP_10X10_GRIDWORLD),
    ("20x20 Gridworld", "20x20-gridworld", MAP_20X20_GRIDWORLD),
    ("4-rooms 5-to-1", "4-rooms-5-to-1", MAP_4_ROOMS),
    ("9-rooms 5-to-1", "9-rooms-5-to-1", MAP_9_ROOMS),
    ("10x10 Maze", "10x10-maze", MAP_10X10_MAZE),
    ("20x20 Maze", "20x20-maze", MAP_20X20_MAZE),
];

pub fn builtin_environments() -> Vec<GridWorld> {
    BUILTIN_MAPS
        .iter()
        .map(|(name, _, text)| GridWorld::parse(name, text).expect("bundled maps are valid"))
        .collect()
}

fn slug(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace([' ', '_'], "-")
}

/// Looks up a bundled map by display name or slug (`"20x20 Gridworld"`, `"20x20-gridworld"`).
pub fn builtin_environment(name: &str) -> Option<GridWorld> {
    let wanted = slug(name);
    BUILTIN_MAPS
        .iter()
        .find(|(display, s, _)| *s == wanted || slug(display) == wanted)
        .map(|(display, _, text)| GridWorld::parse(display, text).expect("bundled maps are valid"))
}

//! The `SimpleGrid` MDP family.
//!
//! A square grid whose outer ring of cells is wall. The agent moves in the
//! four cardinal directions, bumping into walls leaves it in place, and the
//! episode ends when it enters the goal. Every transition is rewarded with the
//! negative scaled Manhattan distance from the landing cell to the goal, so
//! the goal is the only zero-reward cell.
//!
//! Variants differ in goal cell, start cell and an optional action-slip
//! probability (with probability `slip_prob` the chosen action is replaced by
//! a uniformly random one).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_GRID_SIZE: i32 = 20;
pub const DEFAULT_DISCOUNT: f64 = 0.95;
pub const DEFAULT_HORIZON: usize = 100;

/// Grid coordinates; column `x`, row `y`. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    fn offset(self, (dx, dy): (i32, i32)) -> Cell {
        Cell::new(self.x + dx, self.y + dy)
    }
}

impl From<[i32; 2]> for Cell {
    fn from([x, y]: [i32; 2]) -> Self {
        Cell { x, y }
    }
}

impl From<Cell> for [i32; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    North = 0,
    South = 1,
    East = 2,
    West = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::North, Action::South, Action::East, Action::West];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Row 0 is the top wall, so North decreases `y`.
    fn delta(self) -> (i32, i32) {
        match self {
            Action::North => (0, -1),
            Action::South => (0, 1),
            Action::East => (1, 0),
            Action::West => (-1, 0),
        }
    }
}

/// How the reward scaling constant `C` is derived from a variant's positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardScale {
    /// `C = 1 / max_s d(s, goal)`: rewards span exactly `[-1, 0]`.
    #[default]
    GoalEccentricity,
    /// `C = 1 / max(1, d(start, goal))`: the reward at the start cell is `-1`.
    StartDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub grid_size: i32,
    pub reward_scale: RewardScale,
    pub discount: f64,
    pub horizon: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            grid_size: DEFAULT_GRID_SIZE,
            reward_scale: RewardScale::default(),
            discount: DEFAULT_DISCOUNT,
            horizon: DEFAULT_HORIZON,
        }
    }
}

/// One static `SimpleGrid` MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMdp {
    pub goal: Cell,
    pub start: Cell,
    pub grid_size: i32,
    pub slip_prob: f64,
    pub c_scale: f64,
    pub discount: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: Cell,
    pub action: Action,
    pub next_state: Cell,
    pub reward: f64,
    pub terminal: bool,
}

/// Builds a default-size variant. See [`GridMdp::with_options`].
pub fn make_variant(goal: Cell, start: Cell, slip_prob: f64) -> Result<GridMdp> {
    GridMdp::with_options(goal, start, slip_prob, &GridOptions::default())
}

impl GridMdp {
    pub fn with_options(goal: Cell, start: Cell, slip_prob: f64, opts: &GridOptions) -> Result<GridMdp> {
        if opts.grid_size < 3 {
            return Err(Error::Domain(format!("grid size {} leaves no passable cells", opts.grid_size)));
        }
        if !(0.0..=1.0).contains(&slip_prob) {
            return Err(Error::Domain(format!("slip probability {slip_prob} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&opts.discount) {
            return Err(Error::Domain(format!("discount {} outside [0, 1]", opts.discount)));
        }
        if opts.horizon == 0 {
            return Err(Error::Domain("horizon must be positive".into()));
        }
        let inner = 1..=opts.grid_size - 2;
        for (name, c) in [("goal", goal), ("start", start)] {
            if !inner.contains(&c.x) || !inner.contains(&c.y) {
                return Err(Error::Domain(format!("{name} {c} is not a passable cell")));
            }
        }
        if goal == start {
            return Err(Error::Domain(format!("start and goal coincide at {goal}")));
        }
        let c_scale = match opts.reward_scale {
            RewardScale::StartDistance => 1.0 / f64::from(start.manhattan(goal).max(1)),
            RewardScale::GoalEccentricity => {
                let hi = opts.grid_size - 2;
                let ecc = (goal.x - 1).max(hi - goal.x) + (goal.y - 1).max(hi - goal.y);
                1.0 / f64::from(ecc.max(1))
            }
        };
        Ok(GridMdp {
            goal,
            start,
            grid_size: opts.grid_size,
            slip_prob,
            c_scale,
            discount: opts.discount,
            horizon: opts.horizon,
        })
    }

    /// Short stable identifier, e.g. `g10-10_s1-1_p0`.
    pub fn id(&self) -> String {
        format!(
            "g{}-{}_s{}-{}_p{}",
            self.goal.x, self.goal.y, self.start.x, self.start.y, self.slip_prob
        )
    }

    /// Side length of the passable interior.
    pub fn inner_size(&self) -> i32 {
        self.grid_size - 2
    }

    pub fn n_cells(&self) -> usize {
        (self.inner_size() * self.inner_size()) as usize
    }

    pub fn is_passable(&self, c: Cell) -> bool {
        let hi = self.inner_size();
        (1..=hi).contains(&c.x) && (1..=hi).contains(&c.y)
    }

    /// Row-major index of a passable cell.
    pub fn cell_index(&self, c: Cell) -> usize {
        debug_assert!(self.is_passable(c));
        ((c.y - 1) * self.inner_size() + (c.x - 1)) as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        let n = self.inner_size() as usize;
        Cell::new((index % n) as i32 + 1, (index / n) as i32 + 1)
    }

    /// Passable cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_cells()).map(|i| self.cell_at(i))
    }

    pub fn reward(&self, next_state: Cell) -> f64 {
        -self.c_scale * f64::from(next_state.manhattan(self.goal))
    }

    /// Most negative reward any transition can produce.
    pub fn min_reward(&self) -> f64 {
        -self.c_scale * f64::from(2 * (self.grid_size - 2))
    }

    /// Landing cell for `action` without slip.
    pub fn move_from(&self, state: Cell, action: Action) -> Cell {
        if state == self.goal {
            return state;
        }
        let target = state.offset(action.delta());
        if self.is_passable(target) {
            target
        } else {
            state
        }
    }

    /// Outcome distribution of `(state, action)` under slip dynamics. Entries
    /// are distinct cells with positive probability, in action order of first
    /// appearance.
    pub fn outcomes(&self, state: Cell, action: Action) -> Vec<(Cell, f64)> {
        let mut out: Vec<(Cell, f64)> = Vec::with_capacity(5);
        let mut add = |c: Cell, p: f64| {
            if p <= 0.0 {
                return;
            }
            match out.iter_mut().find(|(cell, _)| *cell == c) {
                Some(entry) => entry.1 += p,
                None => out.push((c, p)),
            }
        };
        add(self.move_from(state, action), 1.0 - self.slip_prob);
        for a in Action::ALL {
            add(self.move_from(state, a), self.slip_prob / 4.0);
        }
        out
    }

    fn transition(&self, state: Cell, action: Action, executed: Action) -> Transition {
        let next_state = self.move_from(state, executed);
        Transition {
            state,
            action,
            next_state,
            reward: self.reward(next_state),
            terminal: next_state == self.goal,
        }
    }

    /// Samples one transition, drawing slip from `rng`. No randomness is
    /// consumed when `slip_prob` is zero.
    pub fn step_with<R: Rng + ?Sized>(&self, state: Cell, action: Action, rng: &mut R) -> Transition {
        let executed = if self.slip_prob > 0.0 && rng.gen::<f64>() < self.slip_prob {
            Action::ALL[rng.gen_range(0..Action::COUNT)]
        } else {
            action
        };
        self.transition(state, action, executed)
    }

    pub fn step(&self, state: Cell, action: Action, rng_seed: u64) -> Result<Transition> {
        if !self.is_passable(state) {
            return Err(Error::Domain(format!("state {state} is not a passable cell")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        Ok(self.step_with(state, action, &mut rng))
    }

    /// Validates that `state` can be used as an episode origin.
    pub fn reset_to(&self, state: Cell) -> Result<Cell> {
        if self.is_passable(state) {
            Ok(state)
        } else {
            Err(Error::Domain(format!("cannot reset to wall cell {state}")))
        }
    }

    /// Every passable cell paired with every action; cells row-major, actions
    /// in index order.
    pub fn enumerate_state_actions(&self) -> Vec<(Cell, Action)> {
        self.cells()
            .flat_map(|c| Action::ALL.into_iter().map(move |a| (c, a)))
            .collect()
    }

    /// Outcome feature vector `(x', y', goal_x, goal_y, r)`; coordinates are
    /// divided by `grid_size - 1`.
    pub fn encode_outcome(&self, next_state: Cell, reward: f64) -> [f64; 5] {
        let s = f64::from(self.grid_size - 1);
        [
            f64::from(next_state.x) / s,
            f64::from(next_state.y) / s,
            f64::from(self.goal.x) / s,
            f64::from(self.goal.y) / s,
            reward,
        ]
    }
}

/// One entry of a variant definition file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub goal: Cell,
    pub start: Cell,
    #[serde(default)]
    pub slip: f64,
}

impl VariantSpec {
    pub fn build(&self, opts: &GridOptions) -> Result<GridMdp> {
        GridMdp::with_options(self.goal, self.start, self.slip, opts)
    }
}

impl From<&GridMdp> for VariantSpec {
    fn from(m: &GridMdp) -> Self {
        VariantSpec { goal: m.goal, start: m.start, slip: m.slip_prob }
    }
}

/// Draws a variant with independent uniformly random distinct goal and start.
pub fn random_variant<R: Rng + ?Sized>(rng: &mut R, slip_prob: f64, opts: &GridOptions) -> Result<GridMdp> {
    let hi = opts.grid_size - 2;
    let goal = Cell::new(rng.gen_range(1..=hi), rng.gen_range(1..=hi));
    let start = loop {
        let c = Cell::new(rng.gen_range(1..=hi), rng.gen_range(1..=hi));
        if c != goal {
            break c;
        }
    };
    GridMdp::with_options(goal, start, slip_prob, opts)
}

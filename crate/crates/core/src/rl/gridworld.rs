use std::fmt;
use std::str::FromStr;

use crate::problems::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Floor,
    Wall,
    Goal,
    Pit,
}

/// Deterministic grid MDP. Cells are numbered row-major; moves into walls
/// or off the grid leave the agent in place. Entering the goal pays `+1`,
/// entering a pit `−1`, both terminal; every other move pays `step_reward`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gridworld {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    step_reward: f64,
    discount: f64,
}

/// One transition outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// Tabular action values, `q[s][a]`.
pub type QTable = Vec<[f64; Action::COUNT]>;

impl Gridworld {
    /// The 5×5 layout used throughout the examples and tests.
    pub const DEFAULT_MAP: &'static str = "\
....G
.##..
...#P
.#...
.....";

    /// Parses a map of `.` floor, `#` wall, `G` goal and `P` pit, one row
    /// per line. Requires a rectangular grid with a goal reachable from
    /// every floor cell.
    pub fn parse(map: &str, step_reward: f64, discount: f64) -> Result<Self, DataError> {
        let rows: Vec<&str> = map.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 {
            return Err(DataError::InvalidMap("empty map".into()));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(DataError::InvalidMap(format!("discount {discount} outside (0, 1]")));
        }
        let mut cells = Vec::with_capacity(width * height);
        for row in &rows {
            if row.chars().count() != width {
                return Err(DataError::InvalidMap("rows differ in length".into()));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '.' => Cell::Floor,
                    '#' => Cell::Wall,
                    'G' => Cell::Goal,
                    'P' => Cell::Pit,
                    other => return Err(DataError::InvalidMap(format!("unknown cell `{other}`"))),
                });
            }
        }
        let world = Self {
            width,
            height,
            cells,
            step_reward,
            discount,
        };
        world.check_reachable()?;
        Ok(world)
    }

    fn check_reachable(&self) -> Result<(), DataError> {
        let goals: Vec<usize> = (0..self.num_cells()).filter(|&c| self.cells[c] == Cell::Goal).collect();
        if goals.is_empty() {
            return Err(DataError::InvalidMap("no goal cell".into()));
        }
        // Backward search from the goals through non-terminal cells.
        let mut reached = vec![false; self.num_cells()];
        let mut stack = goals.clone();
        goals.iter().for_each(|&g| reached[g] = true);
        while let Some(c) = stack.pop() {
            for from in 0..self.num_cells() {
                if !reached[from]
                    && self.cells[from] == Cell::Floor
                    && Action::ALL.iter().any(|&a| self.step(from, a).next == c)
                {
                    reached[from] = true;
                    stack.push(from);
                }
            }
        }
        if let Some(c) = self.states().into_iter().find(|&c| !reached[c]) {
            return Err(DataError::InvalidMap(format!("goal unreachable from cell {c}")));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn is_terminal(&self, cell: usize) -> bool {
        matches!(self.cells[cell], Cell::Goal | Cell::Pit)
    }

    pub fn is_wall(&self, cell: usize) -> bool {
        self.cells[cell] == Cell::Wall
    }

    /// Floor cells: where the agent starts and acts.
    pub fn states(&self) -> Vec<usize> {
        (0..self.num_cells()).filter(|&c| self.cells[c] == Cell::Floor).collect()
    }

    pub fn step(&self, cell: usize, action: Action) -> Step {
        let (r, c) = ((cell / self.width) as isize, (cell % self.width) as isize);
        let (dr, dc) = action.delta();
        let (nr, nc) = (r + dr, c + dc);
        let inside = nr >= 0 && nc >= 0 && (nr as usize) < self.height && (nc as usize) < self.width;
        let mut next = cell;
        if inside {
            let candidate = nr as usize * self.width + nc as usize;
            if self.cells[candidate] != Cell::Wall {
                next = candidate;
            }
        }
        let (reward, terminal) = match self.cells[next] {
            Cell::Goal => (1.0, true),
            Cell::Pit => (-1.0, true),
            _ => (self.step_reward, false),
        };
        Step {
            next,
            reward,
            terminal,
        }
    }

    /// Optimal action values by value iteration until the sup-norm update
    /// falls below `tol`. Terminal and wall rows are zero.
    pub fn value_iteration(&self, tol: f64) -> QTable {
        let n = self.num_cells();
        let mut v = vec![0.0; n];
        let mut q: QTable = vec![[0.0; Action::COUNT]; n];
        loop {
            let mut change = 0.0f64;
            for s in self.states() {
                for a in Action::ALL {
                    let st = self.step(s, a);
                    let future = if st.terminal { 0.0 } else { v[st.next] };
                    q[s][a.index()] = st.reward + self.discount * future;
                }
                let best = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                change = change.max((best - v[s]).abs());
                v[s] = best;
            }
            if change < tol {
                return q;
            }
        }
    }
}

impl Default for Gridworld {
    /// [`DEFAULT_MAP`](Self::DEFAULT_MAP) with zero step reward and discount 0.95.
    fn default() -> Self {
        Self::parse(Self::DEFAULT_MAP, 0.0, 0.95).expect("default map is valid")
    }
}

impl FromStr for Gridworld {
    type Err = DataError;

    /// Parses with zero step reward and discount 0.95.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s, 0.0, 0.95)
    }
}

impl fmt::Display for Gridworld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.height {
            for c in 0..self.width {
                let ch = match self.cells[r * self.width + c] {
                    Cell::Floor => '.',
                    Cell::Wall => '#',
                    Cell::Goal => 'G',
                    Cell::Pit => 'P',
                };
                write!(f, "{ch}")?;
            }
            if r + 1 < self.height {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Actions attaining `max_a q[s][a]` within `tol`.
pub fn optimal_actions(q_row: &[f64], tol: f64) -> Vec<usize> {
    let best = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..q_row.len()).filter(|&a| q_row[a] >= best - tol).collect()
}

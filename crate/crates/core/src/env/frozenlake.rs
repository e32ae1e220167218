use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;

use super::{EnvError, MdpSpec, Outcome};
use crate::rng::SimRng;
use crate::scalar::Scalar;

/// left, down, right, up
pub const FROZENLAKE_ACTIONS: usize = 4;

const REJECTION_ATTEMPTS: usize = 10_000;

/// Safe corridor along the top row and right column.
pub const MAP_EASY: &str = "SFFF\nFHFF\nHFFF\nHHFG";

/// Moving right from the start falls into a hole; the safe route runs down
/// the left column and doubles back along the bottom.
pub const MAP_HARD: &str = "SHFF\nFHFH\nFFFH\nHFFG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Start,
    Frozen,
    Hole,
    Goal,
}

impl Cell {
    fn symbol(self) -> char {
        match self {
            Cell::Start => 'S',
            Cell::Frozen => 'F',
            Cell::Hole => 'H',
            Cell::Goal => 'G',
        }
    }
}

/// A rectangular FrozenLake map with exactly one start and one goal that are
/// connected through non-hole cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MapLayout {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
}

impl MapLayout {
    pub fn new(rows: usize, cols: usize, cells: Vec<Cell>) -> Result<Self, EnvError> {
        if rows == 0 || cols == 0 {
            return Err(EnvError::Layout("empty map".into()));
        }
        if cells.len() != rows * cols {
            return Err(EnvError::Layout(format!("expected {} cells, got {}", rows * cols, cells.len())));
        }
        let layout = Self { rows, cols, cells };
        let starts = layout.cells.iter().filter(|c| **c == Cell::Start).count();
        let goals = layout.cells.iter().filter(|c| **c == Cell::Goal).count();
        if starts != 1 || goals != 1 {
            return Err(EnvError::Layout(format!("need exactly one S and one G, found {starts} and {goals}")));
        }
        if !layout.goal_reachable() {
            return Err(EnvError::Layout("goal unreachable from start".into()));
        }
        Ok(layout)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, r: usize, c: usize) -> Cell {
        self.cells[r * self.cols + c]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn start(&self) -> usize {
        self.cells.iter().position(|c| *c == Cell::Start).expect("validated layout has a start")
    }

    pub fn n_holes(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Hole).count()
    }

    /// Row separator `/` instead of newlines, for single-line config values.
    pub fn to_compact(&self) -> String {
        self.to_string().replace('\n', "/")
    }

    fn goal_reachable(&self) -> bool {
        let start = self.start();
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            if self.cells[i] == Cell::Goal {
                return true;
            }
            for a in 0..FROZENLAKE_ACTIONS {
                let j = self.neighbor(i, a);
                if !seen[j] && self.cells[j] != Cell::Hole {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        false
    }

    fn neighbor(&self, idx: usize, action: usize) -> usize {
        let (r, c) = (idx / self.cols, idx % self.cols);
        let (r, c) = match action {
            0 => (r, c.saturating_sub(1)),
            1 => ((r + 1).min(self.rows - 1), c),
            2 => (r, (c + 1).min(self.cols - 1)),
            3 => (r.saturating_sub(1), c),
            _ => unreachable!("frozenlake has four actions"),
        };
        r * self.cols + c
    }
}

impl FromStr for MapLayout {
    type Err = EnvError;

    /// Rows separated by newlines or `/`; characters `S`, `F`, `H`, `G`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lines: Vec<&str> = s.split(['\n', '/']).map(str::trim).filter(|l| !l.is_empty()).collect();
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.chars().count());
        let mut cells = Vec::with_capacity(rows * cols);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(EnvError::Layout(format!("ragged row {}: expected {cols} cells", r + 1)));
            }
            for ch in line.chars() {
                cells.push(match ch {
                    'S' => Cell::Start,
                    'F' => Cell::Frozen,
                    'H' => Cell::Hole,
                    'G' => Cell::Goal,
                    other => return Err(EnvError::Layout(format!("invalid cell '{other}' in row {}", r + 1))),
                });
            }
        }
        MapLayout::new(rows, cols, cells)
    }
}

impl fmt::Display for MapLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            if r > 0 {
                writeln!(f)?;
            }
            for c in 0..self.cols {
                write!(f, "{}", self.cell(r, c).symbol())?;
            }
        }
        Ok(())
    }
}

pub fn map_easy() -> MapLayout {
    MAP_EASY.parse().expect("built-in easy map is valid")
}

pub fn map_hard() -> MapLayout {
    MAP_HARD.parse().expect("built-in hard map is valid")
}

/// FrozenLake dynamics over `layout`: cells in row-major order, actions
/// left/down/right/up, off-grid moves stay put, holes and goal absorb, and
/// +1 is paid only on entering the goal. Slippery moves go to the intended
/// direction or either perpendicular with probability 1/3 each.
pub fn build_frozenlake<T: Scalar>(
    layout: &MapLayout,
    step_limit: usize,
    slippery: bool,
    gamma: T,
) -> Result<MdpSpec<T>, EnvError> {
    let n = layout.cells.len();
    let mut transitions = Vec::with_capacity(n * FROZENLAKE_ACTIONS);
    let terminal: Vec<bool> = layout.cells.iter().map(|c| matches!(c, Cell::Hole | Cell::Goal)).collect();
    let third = T::one() / T::lit(3.0);
    for (s, &is_terminal) in terminal.iter().enumerate() {
        for a in 0..FROZENLAKE_ACTIONS {
            if is_terminal {
                transitions.push(vec![Outcome { next: s, prob: T::one(), reward: T::zero() }]);
                continue;
            }
            let moves: Vec<(usize, T)> = if slippery {
                vec![((a + 3) % 4, third), (a, third), ((a + 1) % 4, third)]
            } else {
                vec![(a, T::one())]
            };
            let mut row: Vec<Outcome<T>> = Vec::with_capacity(moves.len());
            for (dir, prob) in moves {
                let next = layout.neighbor(s, dir);
                let reward = if layout.cells[next] == Cell::Goal { T::one() } else { T::zero() };
                match row.iter_mut().find(|o| o.next == next) {
                    Some(o) => o.prob = o.prob + prob,
                    None => row.push(Outcome { next, prob, reward }),
                }
            }
            transitions.push(row);
        }
    }
    MdpSpec::new(
        n,
        FROZENLAKE_ACTIONS,
        transitions,
        terminal,
        vec![(layout.start(), T::one())],
        gamma,
        Some(step_limit),
    )
}

/// Random `rows x cols` map with start top-left, goal bottom-right and
/// exactly `n_holes` holes, resampled until the goal is reachable.
pub fn generate_random_map(rows: usize, cols: usize, n_holes: usize, rng: &mut SimRng) -> Result<MapLayout, EnvError> {
    let n = rows * cols;
    let infeasible = EnvError::InfeasibleMap { rows, cols, n_holes, attempts: 0 };
    if n < 2 || n_holes + 2 >= n {
        return Err(infeasible);
    }
    let interior = n - 2;
    for _ in 0..REJECTION_ATTEMPTS {
        let mut cells = vec![Cell::Frozen; n];
        cells[0] = Cell::Start;
        cells[n - 1] = Cell::Goal;
        for k in sample(rng, interior, n_holes).iter() {
            cells[k + 1] = Cell::Hole;
        }
        if let Ok(layout) = MapLayout::new(rows, cols, cells) {
            return Ok(layout);
        }
    }
    Err(EnvError::InfeasibleMap { rows, cols, n_holes, attempts: REJECTION_ATTEMPTS })
}

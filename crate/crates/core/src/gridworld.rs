//! Rectangular gridworlds with optional slip and indicator feature channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{FeatureMap, Mdp, Trajectory};

/// Actions, in index order.
pub const ACTIONS: [Move; 5] = [Move::Stay, Move::Up, Move::Down, Move::Left, Move::Right];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Stay,
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    fn delta(self) -> (i64, i64) {
        match self {
            Move::Stay => (0, 0),
            Move::Up => (0, -1),
            Move::Down => (0, 1),
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
        }
    }

    fn glyph(self) -> char {
        match self {
            Move::Stay => 'o',
            Move::Up => '^',
            Move::Down => 'v',
            Move::Left => '<',
            Move::Right => '>',
        }
    }
}

/// A feature channel: value `value` on each listed `[x, y]` cell, zero elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureChannel {
    pub name: String,
    pub cells: Vec<[usize; 2]>,
    #[serde(default = "one")]
    pub value: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    /// Probability that the intended move is replaced by a uniformly random one.
    #[serde(default)]
    pub slip: f64,
    pub horizon: usize,
    pub start: [usize; 2],
    pub channels: Vec<FeatureChannel>,
}

impl GridWorld {
    pub fn state(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("gridworld needs positive width and height"));
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(Error::invalid(format!("slip {} outside [0, 1]", self.slip)));
        }
        if self.channels.is_empty() {
            return Err(Error::invalid("gridworld needs at least one feature channel"));
        }
        let in_grid = |c: &[usize; 2]| c[0] < self.width && c[1] < self.height;
        if !in_grid(&self.start) {
            return Err(Error::invalid("start cell outside grid"));
        }
        for ch in &self.channels {
            if let Some(c) = ch.cells.iter().find(|c| !in_grid(c)) {
                return Err(Error::invalid(format!("channel {} cell {c:?} outside grid", ch.name)));
            }
        }
        Ok(())
    }

    fn target(&self, s: usize, mv: Move) -> usize {
        let (x, y) = self.cell(s);
        let (dx, dy) = mv.delta();
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            s
        } else {
            self.state(nx as usize, ny as usize)
        }
    }

    pub fn build_mdp(&self) -> Result<Mdp> {
        self.check()?;
        let ns = self.width * self.height;
        let na = ACTIONS.len();
        let mut p = vec![0.0; ns * na * ns];
        for s in 0..ns {
            for (a, &mv) in ACTIONS.iter().enumerate() {
                let row = &mut p[(s * na + a) * ns..(s * na + a + 1) * ns];
                row[self.target(s, mv)] += 1.0 - self.slip;
                if self.slip > 0.0 {
                    for &other in &ACTIONS {
                        row[self.target(s, other)] += self.slip / na as f64;
                    }
                }
            }
        }
        let mut initial = vec![0.0; ns];
        initial[self.state(self.start[0], self.start[1])] = 1.0;
        Mdp::new(ns, na, p, initial, self.horizon)?.validated()
    }

    pub fn build_features(&self) -> Result<FeatureMap> {
        self.check()?;
        let ns = self.width * self.height;
        let mut features = vec![vec![0.0; self.channels.len()]; ns];
        for (k, ch) in self.channels.iter().enumerate() {
            for c in &ch.cells {
                features[self.state(c[0], c[1])][k] = ch.value;
            }
        }
        FeatureMap::new(features)
    }

    /// Text rendering: path cells show the move taken, repeated visits show a digit count.
    pub fn render_trajectory(&self, traj: &Trajectory) -> String {
        let mut grid = vec![vec!['.'; self.width]; self.height];
        let mut visits = vec![0usize; self.width * self.height];
        for st in traj.steps() {
            visits[st.state] += 1;
            let (x, y) = self.cell(st.state);
            grid[y][x] = ACTIONS[st.action].glyph();
        }
        for (s, &v) in visits.iter().enumerate() {
            if v > 1 {
                let (x, y) = self.cell(s);
                grid[y][x] = if v < 10 { char::from_digit(v as u32, 10).unwrap() } else { '+' };
            }
        }
        let (sx, sy) = (self.start[0], self.start[1]);
        if visits[self.state(sx, sy)] <= 1 {
            grid[sy][sx] = 'S';
        }
        grid.into_iter().map(|row| row.into_iter().collect::<String>()).collect::<Vec<_>>().join("\n")
    }

    /// Per-state values laid out as `height` rows of `width` columns.
    pub fn to_rows(&self, values: &[f64]) -> Vec<Vec<f64>> {
        values.chunks(self.width).map(|r| r.to_vec()).collect()
    }
}

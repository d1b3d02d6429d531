use super::tabular::TabularMdp;
use crate::{Error, Result};

pub const NORTH: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const WEST: usize = 3;
pub const N_MOVES: usize = 4;

/// Where episodes start. `Uniform` covers every cell, the goal included.
#[derive(Debug, Clone, PartialEq)]
pub enum GridStart {
    Cell(usize, usize),
    Uniform,
}

/// Slippery gridworld. Cells are `(x, y)` with `y` growing northward.
///
/// With probability `slip_prob` the move is replaced by a uniformly random
/// one (which may coincide with the intended move); moves into the wall
/// leave the agent in place. Entering the goal ends the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    pub start: GridStart,
    pub goal: (usize, usize),
    pub hazards: Vec<(usize, usize)>,
    pub slip_prob: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub hazard_penalty: f64,
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for GridWorldSpec {
    /// `grid5`: a 5x5 board where the straight route to the goal runs
    /// between two hazards and the safe route goes around them.
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            start: GridStart::Cell(2, 0),
            goal: (2, 4),
            hazards: vec![(1, 2), (3, 2)],
            slip_prob: 0.1,
            step_reward: -0.01,
            goal_reward: 1.0,
            hazard_penalty: -1.0,
            gamma: 0.95,
            horizon: 50,
        }
    }
}

impl GridWorldSpec {
    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    pub fn is_hazard(&self, s: usize) -> bool {
        let c = self.cell(s);
        self.hazards.contains(&c)
    }

    pub fn is_goal(&self, s: usize) -> bool {
        self.cell(s) == self.goal
    }

    /// Cell reached by moving `dir` from `s` (deterministic part of the dynamics).
    pub fn move_target(&self, s: usize, dir: usize) -> usize {
        let (x, y) = self.cell(s);
        let (nx, ny) = match dir {
            NORTH if y + 1 < self.height => (x, y + 1),
            EAST if x + 1 < self.width => (x + 1, y),
            SOUTH if y > 0 => (x, y - 1),
            WEST if x > 0 => (x - 1, y),
            _ => (x, y),
        };
        self.index(nx, ny)
    }

    fn entry_reward(&self, s: usize) -> f64 {
        if self.is_goal(s) {
            self.goal_reward
        } else if self.is_hazard(s) {
            self.hazard_penalty
        } else {
            self.step_reward
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_bounds = |&(x, y): &(usize, usize)| x < self.width && y < self.height;
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec("grid must be non-empty".into()));
        }
        if !in_bounds(&self.goal) || !self.hazards.iter().all(in_bounds) {
            return Err(Error::InvalidSpec("goal and hazards must lie on the grid".into()));
        }
        if self.hazards.contains(&self.goal) {
            return Err(Error::InvalidSpec("goal cannot be a hazard".into()));
        }
        if let GridStart::Cell(x, y) = self.start {
            if !in_bounds(&(x, y)) || (x, y) == self.goal {
                return Err(Error::InvalidSpec("start cell must be on the grid and not the goal".into()));
            }
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(Error::InvalidSpec(format!("slip_prob {} not in [0, 1)", self.slip_prob)));
        }
        Ok(())
    }

    /// Compiles the gridworld into an explicit kernel. The reward of `(s, a)`
    /// is the expected entry reward of the next cell.
    pub fn build(&self) -> Result<TabularMdp> {
        self.validate()?;
        let n = self.n_cells();
        let mut transitions = Vec::with_capacity(n * N_MOVES);
        let mut rewards = Vec::with_capacity(n * N_MOVES);
        for s in 0..n {
            for a in 0..N_MOVES {
                if self.is_goal(s) {
                    transitions.push(vec![(s, 1.0)]);
                    rewards.push(0.0);
                    continue;
                }
                let mut probs = vec![0.0; n];
                for dir in 0..N_MOVES {
                    let p = self.slip_prob / N_MOVES as f64 + if dir == a { 1.0 - self.slip_prob } else { 0.0 };
                    probs[self.move_target(s, dir)] += p;
                }
                let row: Vec<(usize, f64)> = probs.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect();
                rewards.push(row.iter().map(|&(s2, p)| p * self.entry_reward(s2)).sum());
                transitions.push(row);
            }
        }
        let terminal = (0..n).map(|s| self.is_goal(s)).collect();
        let initial = match self.start {
            GridStart::Cell(x, y) => {
                let mut v = vec![0.0; n];
                v[self.index(x, y)] = 1.0;
                v
            }
            GridStart::Uniform => vec![1.0 / n as f64; n],
        };
        let mdp = TabularMdp {
            n_states: n,
            n_actions: N_MOVES,
            transitions,
            rewards,
            terminal,
            initial,
            gamma: self.gamma,
            horizon: self.horizon,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Probability that `(s, a)` lands on a hazard.
    pub fn hazard_probability(&self, mdp: &TabularMdp, s: usize, a: usize) -> f64 {
        mdp.next(s, a)
            .iter()
            .filter(|&&(s2, _)| self.is_hazard(s2))
            .map(|&(_, p)| p)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_distributions() {
        let mdp = GridWorldSpec::default().build().unwrap();
        for row in &mdp.transitions {
            let s: f64 = row.iter().map(|p| p.1).sum();
            assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn deterministic_move_right() {
        let spec = GridWorldSpec {
            slip_prob: 0.0,
            start: GridStart::Cell(0, 0),
            ..GridWorldSpec::default()
        };
        let mdp = spec.build().unwrap();
        assert_eq!(mdp.next(spec.index(0, 0), EAST), &[(spec.index(1, 0), 1.0)]);
        // walls keep the agent in place
        assert_eq!(mdp.next(spec.index(0, 0), WEST), &[(spec.index(0, 0), 1.0)]);
    }

    #[test]
    fn invalid_layouts_are_rejected() {
        let mut spec = GridWorldSpec::default();
        spec.hazards.push(spec.goal);
        assert!(spec.build().is_err());
        let spec = GridWorldSpec {
            slip_prob: 1.0,
            ..GridWorldSpec::default()
        };
        assert!(spec.build().is_err());
        let spec = GridWorldSpec {
            hazards: vec![(7, 1)],
            ..GridWorldSpec::default()
        };
        assert!(spec.build().is_err());
    }
}

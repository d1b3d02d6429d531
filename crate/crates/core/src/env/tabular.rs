use rand::Rng;

use crate::approx::TabularQ;
use crate::{Error, Result, Scalar};

/// Tolerance on row sums of the transition kernel.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Stopping tolerance of value iteration (sup-norm Bellman residual).
pub const VI_TOL: f64 = 1e-8;
pub const VI_MAX_SWEEPS: usize = 100_000;

/// Finite MDP with an explicit kernel.
///
/// Rewards are the expected immediate reward `r(s, a)`. Entering a terminal
/// state ends the episode; its continuation value is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transitions[s * n_actions + a]` lists `(s', p(s'|s,a))`.
    pub transitions: Vec<Vec<(usize, f64)>>,
    pub rewards: Vec<f64>,
    pub terminal: Vec<bool>,
    pub initial: Vec<f64>,
    pub gamma: f64,
    pub horizon: usize,
}

fn sample_categorical<R: Rng + ?Sized>(items: impl Iterator<Item = (usize, f64)>, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in items {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the last cumulative sum
    last
}

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        let sa = self.n_states * self.n_actions;
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::InvalidSpec("empty state or action set".into()));
        }
        if self.transitions.len() != sa || self.rewards.len() != sa {
            return Err(Error::InvalidSpec("kernel/reward tables have the wrong shape".into()));
        }
        if self.terminal.len() != self.n_states || self.initial.len() != self.n_states {
            return Err(Error::InvalidSpec("per-state tables have the wrong length".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidSpec(format!("gamma {} not in (0, 1)", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidSpec("horizon must be at least 1".into()));
        }
        if let Some(i) = self.rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "non-finite reward at state {} action {}",
                i / self.n_actions,
                i % self.n_actions
            )));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&(s, p)| s >= self.n_states || p < 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "transition row for state {} action {} is not a distribution (sum {sum})",
                    i / self.n_actions,
                    i % self.n_actions
                )));
            }
        }
        let init: f64 = self.initial.iter().sum();
        if (init - 1.0).abs() > ROW_SUM_TOL || self.initial.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidSpec("initial distribution does not sum to 1".into()));
        }
        Ok(())
    }

    pub fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::InvalidState {
                index: s,
                n_states: self.n_states,
            });
        }
        Ok(())
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn next(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.n_actions + a]
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(self.initial.iter().copied().enumerate(), rng)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(self.next(s, a).iter().copied(), rng)
    }

    /// Copy with `shaping(s, a)` added to every reward.
    pub fn with_shaping(&self, shaping: impl Fn(usize, usize) -> f64) -> TabularMdp {
        let mut out = self.clone();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                out.rewards[s * self.n_actions + a] += shaping(s, a);
            }
        }
        out
    }

    fn continuation<T: Scalar>(&self, q: &TabularQ<T>, s: usize, a: usize) -> T {
        self.next(s, a)
            .iter()
            .filter(|&&(s2, _)| !self.terminal[s2])
            .map(|&(s2, p)| T::lit(p) * q.max(s2))
            .sum()
    }

    /// `max_{s,a} |Q(s,a) - (r(s,a) + gamma * E max_a' Q(s',a'))|`.
    pub fn bellman_residual<T: Scalar>(&self, q: &TabularQ<T>) -> T {
        let gamma = T::lit(self.gamma);
        let mut worst = T::zero();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let target = T::lit(self.reward(s, a)) + gamma * self.continuation(q, s, a);
                worst = worst.max((q.get(s, a) - target).abs());
            }
        }
        worst
    }

    /// Gauss-Seidel value iteration on Q until the residual is at most `tol`.
    pub fn value_iteration<T: Scalar>(&self, tol: T, max_sweeps: usize) -> Result<TabularQ<T>> {
        self.validate()?;
        let gamma = T::lit(self.gamma);
        let mut q = TabularQ::zeros(self.n_states, self.n_actions);
        for _ in 0..max_sweeps {
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    let v = T::lit(self.reward(s, a)) + gamma * self.continuation(&q, s, a);
                    q.set(s, a, v);
                }
            }
            if self.bellman_residual(&q) <= tol {
                return Ok(q);
            }
        }
        Err(Error::Invariant(format!(
            "value iteration did not reach residual {tol} in {max_sweeps} sweeps"
        )))
    }

    /// Optimal Q-function to the default tolerance.
    pub fn solve_optimal_q(&self) -> Result<TabularQ<f64>> {
        self.value_iteration(VI_TOL, VI_MAX_SWEEPS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from_seed;

    pub(crate) fn single_state(r: f64, gamma: f64) -> TabularMdp {
        TabularMdp {
            n_states: 1,
            n_actions: 1,
            transitions: vec![vec![(0, 1.0)]],
            rewards: vec![r],
            terminal: vec![false],
            initial: vec![1.0],
            gamma,
            horizon: 10,
        }
    }

    #[test]
    fn geometric_series_fixed_point() {
        let q = single_state(1.0, 0.5).solve_optimal_q().unwrap();
        // residual 1e-8 bounds the error by 1e-8 / (1 - gamma)
        assert!((q.get(0, 0) - 2.0).abs() <= 2e-8);
    }

    #[test]
    fn two_state_chain_matches_truncated_rollout() {
        // s0 --go--> s1 (reward 0), s0 --stay--> s0 (reward 0); s1 loops with reward 1
        let mdp = TabularMdp {
            n_states: 2,
            n_actions: 2,
            transitions: vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]],
            rewards: vec![0.0, 0.0, 1.0, 1.0],
            terminal: vec![false, false],
            initial: vec![1.0, 0.0],
            gamma: 0.9,
            horizon: 50,
        };
        let q = mdp.solve_optimal_q().unwrap();
        // 50-step rollout of the greedy policy from (s0, go)
        let mut s = mdp.next(0, 1)[0].0;
        let mut ret = mdp.reward(0, 1);
        let mut disc = 1.0;
        for _ in 1..50 {
            disc *= 0.9;
            let a = q.greedy(s);
            ret += disc * mdp.reward(s, a);
            s = mdp.next(s, a)[0].0;
        }
        let truncation = 0.9f64.powi(50) * 1.0 / (1.0 - 0.9);
        assert!((q.get(0, 1) - ret).abs() <= truncation + 1e-8);
        assert!((q.get(0, 1) - 9.0).abs() < 1e-7);
    }

    #[test]
    fn bad_rows_are_rejected() {
        let mut mdp = single_state(1.0, 0.5);
        mdp.transitions[0] = vec![(0, 0.7)];
        assert!(mdp.validate().is_err());
        let mut mdp = single_state(1.0, 1.0);
        assert!(mdp.validate().is_err());
        mdp.gamma = 0.5;
        mdp.rewards[0] = f64::INFINITY;
        assert!(mdp.validate().is_err());
    }

    #[test]
    fn sampling_respects_the_kernel() {
        let mdp = TabularMdp {
            n_states: 2,
            n_actions: 1,
            transitions: vec![vec![(0, 0.25), (1, 0.75)], vec![(1, 1.0)]],
            rewards: vec![0.0, 0.0],
            terminal: vec![false, false],
            initial: vec![1.0, 0.0],
            gamma: 0.5,
            horizon: 1,
        };
        let mut rng = rng_from_seed(4);
        let n = 40_000;
        let ones = (0..n).filter(|_| mdp.sample_next(0, 0, &mut rng) == 1).count();
        let p = ones as f64 / n as f64;
        let sigma = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 4.0 * sigma);
    }
}

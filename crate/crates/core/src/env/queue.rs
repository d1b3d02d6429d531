use super::tabular::TabularMdp;
use crate::{Error, Result};

pub const GREEN_NS: usize = 0;
pub const GREEN_EW: usize = 1;

/// Queue lengths and the current green phase at a single intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QueueState {
    pub q_ns: usize,
    pub q_ew: usize,
    pub phase: usize,
}

/// Two-approach signalized intersection.
///
/// Each step the controller picks which direction gets green. The green
/// queue discharges up to `discharge_rate` vehicles, then Bernoulli
/// arrivals join both queues, which are capped at `max_queue`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueTrafficSpec {
    pub arrival_rates: [f64; 2],
    pub max_queue: usize,
    pub discharge_rate: usize,
    pub switch_cost: f64,
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for QueueTrafficSpec {
    fn default() -> Self {
        Self {
            arrival_rates: [0.3, 0.3],
            max_queue: 20,
            discharge_rate: 2,
            switch_cost: 0.0,
            gamma: 0.95,
            horizon: 200,
        }
    }
}

impl QueueTrafficSpec {
    pub fn n_states(&self) -> usize {
        (self.max_queue + 1) * (self.max_queue + 1) * 2
    }

    pub fn index(&self, st: QueueState) -> usize {
        (st.q_ns * (self.max_queue + 1) + st.q_ew) * 2 + st.phase
    }

    pub fn state(&self, s: usize) -> QueueState {
        let phase = s % 2;
        let rest = s / 2;
        QueueState {
            q_ns: rest / (self.max_queue + 1),
            q_ew: rest % (self.max_queue + 1),
            phase,
        }
    }

    /// One step of the queue recursion with the given per-direction arrivals.
    pub fn apply(&self, st: QueueState, action: usize, arrivals: [usize; 2]) -> QueueState {
        let m = self.max_queue;
        let next = |q: usize, green: bool, arr: usize| {
            let served = if green { q.saturating_sub(self.discharge_rate) } else { q };
            (served + arr).min(m)
        };
        QueueState {
            q_ns: next(st.q_ns, action == GREEN_NS, arrivals[0]),
            q_ew: next(st.q_ew, action == GREEN_EW, arrivals[1]),
            phase: action,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arrival_rates.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidSpec("arrival rates must lie in [0, 1]".into()));
        }
        if self.max_queue == 0 {
            return Err(Error::InvalidSpec("max_queue must be positive".into()));
        }
        if !self.switch_cost.is_finite() {
            return Err(Error::InvalidSpec("switch_cost must be finite".into()));
        }
        Ok(())
    }

    /// Per-step reward: minus the expected total queue after the step, scaled
    /// by `max_queue`, minus the switching cost.
    pub fn build(&self) -> Result<TabularMdp> {
        self.validate()?;
        let n = self.n_states();
        let [p_ns, p_ew] = self.arrival_rates;
        let outcomes = [
            ([0, 0], (1.0 - p_ns) * (1.0 - p_ew)),
            ([1, 0], p_ns * (1.0 - p_ew)),
            ([0, 1], (1.0 - p_ns) * p_ew),
            ([1, 1], p_ns * p_ew),
        ];
        let mut transitions = Vec::with_capacity(n * 2);
        let mut rewards = Vec::with_capacity(n * 2);
        for s in 0..n {
            let st = self.state(s);
            for a in [GREEN_NS, GREEN_EW] {
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
                let mut expected_queue = 0.0;
                for (arr, p) in outcomes {
                    if p <= 0.0 {
                        continue;
                    }
                    let nx = self.apply(st, a, arr);
                    expected_queue += p * (nx.q_ns + nx.q_ew) as f64;
                    let idx = self.index(nx);
                    match row.iter_mut().find(|e| e.0 == idx) {
                        Some(e) => e.1 += p,
                        None => row.push((idx, p)),
                    }
                }
                let switch = if a != st.phase { self.switch_cost } else { 0.0 };
                rewards.push(-expected_queue / self.max_queue as f64 - switch);
                transitions.push(row);
            }
        }
        let mut initial = vec![0.0; n];
        initial[self.index(QueueState {
            q_ns: 0,
            q_ew: 0,
            phase: GREEN_NS,
        })] = 1.0;
        let mdp = TabularMdp {
            n_states: n,
            n_actions: 2,
            transitions,
            rewards,
            terminal: vec![false; n],
            initial,
            gamma: self.gamma,
            horizon: self.horizon,
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discharge_without_arrivals() {
        let spec = QueueTrafficSpec::default();
        let st = QueueState {
            q_ns: 4,
            q_ew: 5,
            phase: GREEN_EW,
        };
        let nx = spec.apply(st, GREEN_EW, [0, 0]);
        assert_eq!((nx.q_ns, nx.q_ew, nx.phase), (4, 3, GREEN_EW));
    }

    #[test]
    fn queues_stay_capped() {
        let spec = QueueTrafficSpec::default();
        let full = QueueState {
            q_ns: 20,
            q_ew: 20,
            phase: GREEN_NS,
        };
        let nx = spec.apply(full, GREEN_NS, [1, 1]);
        assert_eq!((nx.q_ns, nx.q_ew), (19, 20));
        let empty = QueueState {
            q_ns: 0,
            q_ew: 1,
            phase: GREEN_EW,
        };
        assert_eq!(spec.apply(empty, GREEN_EW, [0, 0]).q_ew, 0);
    }

    #[test]
    fn index_round_trips() {
        let spec = QueueTrafficSpec::default();
        for s in 0..spec.n_states() {
            assert_eq!(spec.index(spec.state(s)), s);
        }
    }

    #[test]
    fn kernel_is_valid_and_starts_empty() {
        let spec = QueueTrafficSpec::default();
        let mdp = spec.build().unwrap();
        let s0 = mdp.initial.iter().position(|&p| p == 1.0).unwrap();
        assert_eq!(
            spec.state(s0),
            QueueState {
                q_ns: 0,
                q_ew: 0,
                phase: GREEN_NS
            }
        );
    }
}

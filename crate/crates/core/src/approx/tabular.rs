use super::Parameterized;
use crate::scalar::argmax;
use crate::{Error, Result, Scalar};

/// Dense `(state, action)` table, row-major by state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ<T> {
    n_states: usize,
    n_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> TabularQ<T> {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![T::zero(); n_states * n_actions],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Dimension {
                expected: n_states * n_actions,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("table entries must be finite".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn check(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::InvalidState {
                index: s,
                n_states: self.n_states,
            });
        }
        Ok(())
    }

    pub fn forward(&self, s: usize) -> Result<&[T]> {
        self.check(s)?;
        Ok(self.row(s))
    }

    /// Unchecked row access; panics on an out-of-range state.
    pub fn row(&self, s: usize) -> &[T] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [T] {
        &mut self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: T) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn max(&self, s: usize) -> T {
        self.row(s).iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| self.greedy(s)).collect()
    }

    pub(crate) fn accumulate_grad(&self, s: usize, d_row: &[T], grad: &mut [T]) -> Result<()> {
        self.check(s)?;
        if d_row.len() != self.n_actions {
            return Err(Error::Dimension {
                expected: self.n_actions,
                got: d_row.len(),
            });
        }
        let base = s * self.n_actions;
        for (g, &d) in grad[base..base + self.n_actions].iter_mut().zip(d_row) {
            *g = *g + d;
        }
        Ok(())
    }
}

impl<T: Scalar> Parameterized<T> for TabularQ<T> {
    fn params(&self) -> &[T] {
        &self.values
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.values
    }
}

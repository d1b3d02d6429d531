//! Parameterized value functions and actors, plus the optimizer and
//! gradient-checking machinery used to train them.

mod gradcheck;
pub mod loss;
mod mlp;
mod optim;
mod tabular;

pub use gradcheck::{finite_diff_check, FdReport, REL_ERROR_FLOOR};
pub use mlp::{Mlp, MlpActor, MlpQ, Trace, HIDDEN_SIZES};
pub use optim::OptimState;
pub use tabular::TabularQ;

use crate::{Error, Result, Scalar};

/// Flat view over every trainable parameter of a model.
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> &[T];
    fn params_mut(&mut self) -> &mut [T];

    fn n_params(&self) -> usize {
        self.params().len()
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

/// How a state is presented to a discrete-action Q-model.
#[derive(Debug, Clone, PartialEq)]
pub enum QInput<T> {
    /// Row index into a tabular model.
    Index(usize),
    /// Encoded features for an MLP.
    Features(Vec<T>),
}

/// Discrete-action value function: one Q-value per action.
#[derive(Debug, Clone, PartialEq)]
pub enum QModel<T> {
    Tabular(TabularQ<T>),
    Mlp(MlpQ<T>),
}

impl<T: Scalar> QModel<T> {
    pub fn n_actions(&self) -> usize {
        match self {
            QModel::Tabular(t) => t.n_actions(),
            QModel::Mlp(m) => m.net().output_dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            QModel::Tabular(_) => "tabular-q",
            QModel::Mlp(_) => "mlp-q",
        }
    }

    /// Q-values of every action at `input`.
    pub fn q_row(&self, input: &QInput<T>) -> Result<Vec<T>> {
        match (self, input) {
            (QModel::Tabular(t), QInput::Index(s)) => Ok(t.forward(*s)?.to_vec()),
            (QModel::Mlp(m), QInput::Features(x)) => m.net().forward(x),
            (QModel::Tabular(_), QInput::Features(_)) => Err(Error::Unsupported(
                "tabular model needs a state index, got features".into(),
            )),
            (QModel::Mlp(_), QInput::Index(_)) => Err(Error::Unsupported(
                "MLP model needs encoded features, got a state index".into(),
            )),
        }
    }

    /// Adds `d_row` (dLoss/dQ(input, ·)) pulled back to the parameters into `grad`.
    pub fn accumulate_grad(&self, input: &QInput<T>, d_row: &[T], grad: &mut [T]) -> Result<()> {
        match (self, input) {
            (QModel::Tabular(t), QInput::Index(s)) => t.accumulate_grad(*s, d_row, grad),
            (QModel::Mlp(m), QInput::Features(x)) => {
                let trace = m.net().forward_trace(x)?;
                m.net().backward(&trace, d_row, grad)?;
                Ok(())
            }
            _ => Err(Error::Unsupported("input kind does not match model".into())),
        }
    }
}

impl<T: Scalar> Parameterized<T> for QModel<T> {
    fn params(&self) -> &[T] {
        match self {
            QModel::Tabular(t) => t.params(),
            QModel::Mlp(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut [T] {
        match self {
            QModel::Tabular(t) => t.params_mut(),
            QModel::Mlp(m) => m.params_mut(),
        }
    }
}

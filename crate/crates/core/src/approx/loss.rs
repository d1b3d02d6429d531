//! Minibatch losses with exact gradients.
//!
//! Every loss is a mean over the batch. Bootstrap targets arrive
//! precomputed in the rows, so no gradient flows through them. Max terms
//! route their subgradient through the maximizing index, lowest index on
//! ties.

use super::{MlpActor, MlpQ, Parameterized, QInput, QModel};
use crate::scalar::{argmax, logsumexp, softmax};
use crate::{Error, Result, Scalar};

/// Loss value and its gradient with respect to the model parameters.
#[derive(Debug, Clone)]
pub struct LossGrad<T> {
    pub loss: T,
    pub grad: Vec<T>,
}

impl<T: Scalar> LossGrad<T> {
    /// Errors with the minibatch index if the loss or its gradient is not finite.
    pub fn ensure_finite(&self, batch: usize) -> Result<()> {
        if !self.loss.is_finite() || self.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { batch });
        }
        Ok(())
    }
}

fn non_empty<R>(batch: &[R]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// One discrete-action sample with its (constant) Bellman target.
#[derive(Debug, Clone)]
pub struct DiscreteRow<T> {
    pub input: QInput<T>,
    pub action: usize,
    pub target: T,
}

/// Mean squared Bellman error plus `lambda * mean[logsumexp_a Q(s,a) - Q(s,a_data)]`.
pub fn conservative_bellman<T: Scalar>(
    model: &QModel<T>,
    batch: &[DiscreteRow<T>],
    lambda: T,
) -> Result<LossGrad<T>> {
    non_empty(batch)?;
    let n = T::lit(batch.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); model.n_params()];
    for row in batch {
        let q = model.q_row(&row.input)?;
        let a = check_action(row.action, q.len())?;
        let err = q[a] - row.target;
        let mut d = vec![T::zero(); q.len()];
        loss = loss + err * err;
        d[a] = two * err / n;
        if lambda != T::zero() {
            loss = loss + lambda * (logsumexp(&q) - q[a]);
            for (di, p) in d.iter_mut().zip(softmax(&q)) {
                *di = *di + lambda * p / n;
            }
            d[a] = d[a] - lambda / n;
        }
        model.accumulate_grad(&row.input, &d, &mut grad)?;
    }
    Ok(LossGrad { loss: loss / n, grad })
}

/// Action `a'` achieving `max_a' [Q(s,a') + l(a,a')]`, where `l` is `delta`
/// off the expert action and 0 on it; lowest index on ties.
pub fn margin_argmax<T: Scalar>(q_row: &[T], expert_a: usize, delta: T) -> usize {
    let shifted: Vec<T> = q_row
        .iter()
        .enumerate()
        .map(|(b, &q)| if b == expert_a { q } else { q + delta })
        .collect();
    argmax(&shifted)
}

/// `max_a' [Q(s,a') + l(a,a')] - Q(s,a)`; zero once the expert action leads
/// every other action by at least `delta`.
pub fn margin_loss<T: Scalar>(q_row: &[T], expert_a: usize, delta: T) -> T {
    let b = margin_argmax(q_row, expert_a, delta);
    let bonus = if b == expert_a { T::zero() } else { delta };
    q_row[b] + bonus - q_row[expert_a]
}

/// Squared Bellman error plus the large-margin term, averaged over the batch.
pub fn margin_bellman<T: Scalar>(model: &QModel<T>, batch: &[DiscreteRow<T>], delta: T) -> Result<LossGrad<T>> {
    non_empty(batch)?;
    let n = T::lit(batch.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); model.n_params()];
    for row in batch {
        let q = model.q_row(&row.input)?;
        let a = check_action(row.action, q.len())?;
        let err = q[a] - row.target;
        let mut d = vec![T::zero(); q.len()];
        loss = loss + err * err + margin_loss(&q, a, delta);
        d[a] = two * err / n;
        let b = margin_argmax(&q, a, delta);
        if b != a {
            d[b] = d[b] + T::one() / n;
            d[a] = d[a] - T::one() / n;
        }
        model.accumulate_grad(&row.input, &d, &mut grad)?;
    }
    Ok(LossGrad { loss: loss / n, grad })
}

fn check_action(a: usize, n: usize) -> Result<usize> {
    if a >= n {
        return Err(Error::InvalidArgument(format!("action {a} out of range for {n} actions")));
    }
    Ok(a)
}

/// One continuous-action sample with its (constant) critic target.
#[derive(Debug, Clone)]
pub struct ContinuousRow<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub target: T,
}

/// Mean squared Bellman error of a continuous critic.
pub fn critic_bellman<T: Scalar>(critic: &MlpQ<T>, batch: &[ContinuousRow<T>]) -> Result<LossGrad<T>> {
    non_empty(batch)?;
    let n = T::lit(batch.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); critic.n_params()];
    for row in batch {
        let x: Vec<T> = row.state.iter().chain(&row.action).copied().collect();
        let trace = critic.net().forward_trace(&x)?;
        let err = trace.output()[0] - row.target;
        loss = loss + err * err;
        critic.net().backward(&trace, &[two * err / n], &mut grad)?;
    }
    Ok(LossGrad { loss: loss / n, grad })
}

/// Anything that scores a state-action pair and exposes dQ/da.
pub trait ActionValue<T> {
    fn value_and_action_grad(&self, s: &[T], a: &[T]) -> Result<(T, Vec<T>)>;
}

impl<T: Scalar> ActionValue<T> for MlpQ<T> {
    fn value_and_action_grad(&self, s: &[T], a: &[T]) -> Result<(T, Vec<T>)> {
        MlpQ::value_and_action_grad(self, s, a)
    }
}

/// State with the reference action the actor is pulled toward.
#[derive(Debug, Clone)]
pub struct ActorRow<T> {
    pub state: Vec<T>,
    pub reference: Vec<T>,
}

/// `-mean Q(s, pi(s)) + bc_weight * mean ||pi(s) - a_ref||^2`, minimized
/// over the actor parameters with the critic held fixed.
pub fn actor_objective<T: Scalar, C: ActionValue<T>>(
    actor: &MlpActor<T>,
    critic: &C,
    batch: &[ActorRow<T>],
    bc_weight: T,
) -> Result<LossGrad<T>> {
    non_empty(batch)?;
    let n = T::lit(batch.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); actor.n_params()];
    for row in batch {
        if row.reference.len() != actor.net().output_dim() {
            return Err(Error::Dimension {
                expected: actor.net().output_dim(),
                got: row.reference.len(),
            });
        }
        let mut inner: Result<()> = Ok(());
        let mut row_loss = T::zero();
        actor.act_with_backward(
            &row.state,
            |a| match critic.value_and_action_grad(&row.state, a) {
                Ok((q, dq)) => {
                    let mut sq = T::zero();
                    let d: Vec<T> = a
                        .iter()
                        .zip(&row.reference)
                        .zip(&dq)
                        .map(|((&ai, &ri), &dqi)| {
                            sq = sq + (ai - ri) * (ai - ri);
                            (-dqi + bc_weight * two * (ai - ri)) / n
                        })
                        .collect();
                    row_loss = -q + bc_weight * sq;
                    d
                }
                Err(e) => {
                    inner = Err(e);
                    vec![T::zero(); a.len()]
                }
            },
            &mut grad,
        )?;
        inner?;
        loss = loss + row_loss;
    }
    Ok(LossGrad { loss: loss / n, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{finite_diff_check, Mlp, TabularQ};
    use crate::seeds::rng_from_seed;
    use rand::Rng;

    #[test]
    fn margin_loss_hand_values() {
        assert_eq!(margin_loss(&[3.0, 1.0], 0, 1.0), 0.0);
        assert_eq!(margin_loss(&[1.0, 2.0], 0, 1.0), 2.0);
        assert_eq!(margin_loss(&[2.0, 2.0], 1, 0.5), 0.5);
    }

    #[test]
    fn margin_loss_is_never_negative() {
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a = rng.gen_range(0..4);
            assert!(margin_loss(&q, a, rng.gen_range(0.01..2.0)) >= 0.0);
        }
    }

    #[test]
    fn tabular_squared_error_gradient_is_exact() {
        let mut rng = rng_from_seed(2);
        let values: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = QModel::Tabular(TabularQ::from_values(4, 3, values).unwrap());
        let batch: Vec<DiscreteRow<f64>> = (0..6)
            .map(|i| DiscreteRow {
                input: QInput::Index(i % 4),
                action: i % 3,
                target: 0.25 * i as f64,
            })
            .collect();
        let lg = conservative_bellman(&model, &batch, 0.0).unwrap();
        let rebuild = |p: &[f64]| QModel::Tabular(TabularQ::from_values(4, 3, p.to_vec()).unwrap());
        let rep = finite_diff_check(
            model.params(),
            &lg.grad,
            |p| conservative_bellman(&rebuild(p), &batch, 0.0).unwrap().loss,
            1e-5,
            1e-4,
        )
        .unwrap();
        // quadratic in the entries: central differences are exact up to rounding
        assert!(rep.max_rel_error < 1e-9, "{}", rep.max_rel_error);
    }

    #[test]
    fn mlp_cql_gradient_matches_central_differences() {
        let mut rng = rng_from_seed(9);
        let model = QModel::Mlp(MlpQ::new(Mlp::xavier(&[4, 8, 3], &mut rng).unwrap()));
        let batch: Vec<DiscreteRow<f64>> = (0..5)
            .map(|_| DiscreteRow {
                input: QInput::Features((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                action: rng.gen_range(0..3),
                target: rng.gen_range(-1.0..1.0),
            })
            .collect();
        let lg = conservative_bellman(&model, &batch, 1.5).unwrap();
        let sizes = [4, 8, 3];
        let rep = finite_diff_check(
            model.params(),
            &lg.grad,
            |p| {
                let m = QModel::Mlp(MlpQ::new(Mlp::from_params(&sizes, p.to_vec()).unwrap()));
                conservative_bellman(&m, &batch, 1.5).unwrap().loss
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(rep.passed, "max rel error {}", rep.max_rel_error);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let model = QModel::Tabular(TabularQ::<f64>::zeros(1, 2));
        assert!(matches!(conservative_bellman(&model, &[], 1.0), Err(Error::EmptyDataset)));
    }

    #[test]
    fn non_finite_loss_names_the_batch() {
        let lg = LossGrad { loss: f64::NAN, grad: vec![] };
        assert!(matches!(lg.ensure_finite(7), Err(Error::NonFiniteLoss { batch: 7 })));
    }
}

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Dataset, Transition};
use crate::approx::loss::{actor_objective, conservative_bellman, critic_bellman, ActionValue, ActorRow, ContinuousRow, DiscreteRow, LossGrad};
use crate::approx::{MlpActor, MlpQ, OptimState, Parameterized, QModel, TabularQ};
use crate::env::{q_input, Env};
use crate::seeds::{rng_from_seed, Rng as SeededRng};
use crate::{Error, Result};

/// Function class of a discrete candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Tabular,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineConfig {
    /// Penalty scale: conservative logsumexp term (discrete) or
    /// behavior-cloning weight (continuous).
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    /// Updates between refreshes of the bootstrap copy.
    pub target_refresh: u64,
    pub arch: Arch,
    pub seed: u64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            epochs: 30,
            minibatch: 64,
            lr: 1e-3,
            target_refresh: 100,
            arch: Arch::Tabular,
            seed: 0,
        }
    }
}

impl OfflineConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda {} must be finite and >= 0", self.lambda)));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.target_refresh == 0 {
            return Err(Error::InvalidArgument("epochs, minibatch and target_refresh must be positive".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Shuffled index batches covering `0..n` once; the last batch may be short.
pub fn minibatches<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size.max(1)).map(|c| c.to_vec()).collect()
}

/// Fresh discrete model: zero table or Xavier-initialized network.
pub fn init_q<R: Rng + ?Sized>(env: &Env, arch: Arch, rng: &mut R) -> Result<QModel<f64>> {
    let mdp = env.require_tabular()?;
    Ok(match arch {
        Arch::Tabular => QModel::Tabular(TabularQ::zeros(mdp.n_states, mdp.n_actions)),
        Arch::Mlp => QModel::Mlp(MlpQ::discrete(env.encoded_dim(), mdp.n_actions, rng)?),
    })
}

/// Rows with constant targets `r + gamma * max_a' Q_target(s', a')`
/// (no bootstrap after absorption).
pub fn discrete_rows(
    model: &QModel<f64>,
    target: &QModel<f64>,
    env: &Env,
    batch: &[&Transition],
) -> Result<Vec<DiscreteRow<f64>>> {
    let gamma = env.gamma();
    batch
        .iter()
        .map(|t| {
            let boot = if t.done {
                0.0
            } else {
                let row = target.q_row(&q_input(target, env, &t.s_next)?)?;
                row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            Ok(DiscreteRow {
                input: q_input(model, env, &t.s)?,
                action: t.a.index()?,
                target: t.r + gamma * boot,
            })
        })
        .collect()
}

pub(crate) fn apply<P: Parameterized<f64>>(
    model: &mut P,
    opt: &mut OptimState<f64>,
    lg: &LossGrad<f64>,
    batch: usize,
) -> Result<()> {
    lg.ensure_finite(batch)?;
    opt.step(model.params_mut(), &lg.grad)
}

/// Minibatch descent on a discrete loss over `data`, bootstrapping from a
/// copy of the model that is refreshed every `refresh` updates.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit_discrete<F>(
    model: &mut QModel<f64>,
    opt: &mut OptimState<f64>,
    env: &Env,
    data: &[Transition],
    epochs: usize,
    minibatch: usize,
    refresh: u64,
    rng: &mut SeededRng,
    loss: F,
) -> Result<()>
where
    F: Fn(&QModel<f64>, &[DiscreteRow<f64>]) -> Result<LossGrad<f64>>,
{
    let mut target = model.clone();
    let mut updates = 0u64;
    for _ in 0..epochs {
        for idx in minibatches(data.len(), minibatch, rng) {
            let batch: Vec<&Transition> = idx.iter().map(|&i| &data[i]).collect();
            let rows = discrete_rows(model, &target, env, &batch)?;
            let lg = loss(model, &rows)?;
            apply(model, opt, &lg, updates as usize)?;
            updates += 1;
            if updates % refresh == 0 {
                target = model.clone();
            }
        }
    }
    Ok(())
}

/// Conservative fitted Q-learning on a discrete dataset.
pub fn train_offline_discrete(env: &Env, data: &Dataset, cfg: &OfflineConfig) -> Result<QModel<f64>> {
    if !env.is_discrete() {
        return Err(Error::Unsupported(format!("`{}` has continuous actions", env.id())));
    }
    cfg.validate()?;
    data.check_env(env)?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut model = init_q(env, cfg.arch, &mut rng)?;
    let mut opt = OptimState::new(model.n_params(), cfg.lr);
    let lambda = cfg.lambda;
    fit_discrete(
        &mut model,
        &mut opt,
        env,
        &data.transitions,
        cfg.epochs,
        cfg.minibatch.min(data.len()),
        cfg.target_refresh,
        &mut rng,
        |m, rows| conservative_bellman(m, rows, lambda),
    )?;
    Ok(model)
}

/// Mean absolute Bellman residual of `model` over the dataset, bootstrapping
/// from the model itself.
pub fn mean_bellman_residual(model: &QModel<f64>, env: &Env, data: &[Transition]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let refs: Vec<&Transition> = data.iter().collect();
    let rows = discrete_rows(model, model, env, &refs)?;
    let mut total = 0.0;
    for row in &rows {
        total += (model.q_row(&row.input)?[row.action] - row.target).abs();
    }
    Ok(total / rows.len() as f64)
}

/// Deterministic actor with its critic.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: MlpActor<f64>,
    pub critic: MlpQ<f64>,
}

fn continuous_rows(
    critic_target: &MlpQ<f64>,
    actor_target: &MlpActor<f64>,
    env: &Env,
    batch: &[&Transition],
) -> Result<Vec<ContinuousRow<f64>>> {
    let gamma = env.gamma();
    batch
        .iter()
        .map(|t| {
            let state = env.encode(&t.s)?;
            let boot = if t.done {
                0.0
            } else {
                let s2 = env.encode(&t.s_next)?;
                critic_target.value(&s2, &actor_target.act(&s2)?)?
            };
            Ok(ContinuousRow {
                state,
                action: t.a.vector()?.to_vec(),
                target: t.r + gamma * boot,
            })
        })
        .collect()
}

/// One critic update on `batch` with targets from the given copies.
#[allow(clippy::too_many_arguments)]
pub fn critic_step(
    critic: &mut MlpQ<f64>,
    opt: &mut OptimState<f64>,
    critic_target: &MlpQ<f64>,
    actor_target: &MlpActor<f64>,
    env: &Env,
    batch: &[&Transition],
    batch_index: usize,
) -> Result<f64> {
    let rows = continuous_rows(critic_target, actor_target, env, batch)?;
    let lg = critic_bellman(critic, &rows)?;
    apply(critic, opt, &lg, batch_index)?;
    Ok(lg.loss)
}

/// One actor update: ascend `Q(s, pi(s))` while staying within
/// `bc_weight`-weighted squared distance of the reference actions.
pub fn actor_step<C: ActionValue<f64>>(
    actor: &mut MlpActor<f64>,
    opt: &mut OptimState<f64>,
    critic: &C,
    env: &Env,
    batch: &[&Transition],
    bc_weight: f64,
    batch_index: usize,
) -> Result<f64> {
    let rows = batch
        .iter()
        .map(|t| {
            Ok(ActorRow {
                state: env.encode(&t.s)?,
                reference: t.a.vector()?.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lg = actor_objective(actor, critic, &rows, bc_weight)?;
    apply(actor, opt, &lg, batch_index)?;
    Ok(lg.loss)
}

/// Actor-only training against a fixed critic.
#[allow(clippy::too_many_arguments)]
pub fn fit_actor<C: ActionValue<f64>>(
    actor: &mut MlpActor<f64>,
    opt: &mut OptimState<f64>,
    critic: &C,
    env: &Env,
    data: &[Transition],
    bc_weight: f64,
    epochs: usize,
    minibatch: usize,
    rng: &mut SeededRng,
) -> Result<()> {
    let mut updates = 0;
    for _ in 0..epochs {
        for idx in minibatches(data.len(), minibatch, rng) {
            let batch: Vec<&Transition> = idx.iter().map(|&i| &data[i]).collect();
            actor_step(actor, opt, critic, env, &batch, bc_weight, updates)?;
            updates += 1;
        }
    }
    Ok(())
}

/// Alternating critic / actor training with a behavior-cloning penalty of
/// weight λ on the actor.
pub fn train_offline_continuous(env: &Env, data: &Dataset, cfg: &OfflineConfig) -> Result<ActorCritic> {
    let (lo, hi) = env
        .action_bounds()
        .ok_or_else(|| Error::Unsupported(format!("`{}` has discrete actions", env.id())))?;
    cfg.validate()?;
    data.check_env(env)?;
    let mut rng = rng_from_seed(cfg.seed);
    let dim = env.action_dim();
    let mut actor = MlpActor::xavier(env.encoded_dim(), vec![lo; dim], vec![hi; dim], &mut rng)?;
    let mut critic = MlpQ::critic(env.encoded_dim(), dim, &mut rng)?;
    let mut opt_a = OptimState::new(actor.n_params(), cfg.lr);
    let mut opt_c = OptimState::new(critic.n_params(), cfg.lr);
    let (mut actor_t, mut critic_t) = (actor.clone(), critic.clone());
    let mut updates = 0u64;
    let minibatch = cfg.minibatch.min(data.len());
    for _ in 0..cfg.epochs {
        for idx in minibatches(data.len(), minibatch, &mut rng) {
            let batch: Vec<&Transition> = idx.iter().map(|&i| &data.transitions[i]).collect();
            critic_step(&mut critic, &mut opt_c, &critic_t, &actor_t, env, &batch, updates as usize)?;
            actor_step(&mut actor, &mut opt_a, &critic, env, &batch, cfg.lambda, updates as usize)?;
            updates += 1;
            if updates % cfg.target_refresh == 0 {
                actor_t = actor.clone();
                critic_t = critic.clone();
            }
        }
    }
    Ok(ActorCritic { actor, critic })
}

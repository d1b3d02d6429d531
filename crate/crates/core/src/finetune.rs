//! Deployment under expert overrides and online fine-tuning.
//!
//! Each iteration deploys the model for one episode. Whenever the expert
//! objects to a proposed action, the expert's action is executed instead and
//! the step is logged. After the episode the model is fine-tuned on the log,
//! which is then discarded.

use crate::approx::loss::margin_bellman;
use crate::approx::{OptimState, Parameterized, QModel};
use crate::env::{Env, Policy};
use crate::offline::{actor_step, critic_step, fit_discrete, minibatches, ActorCritic, Candidate, Transition};
use crate::scoring::{disagrees, EpisodeLog, ScoreParams, DEFAULT_TAU};
use crate::seeds::{derive_seed, rng_from_seed, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    /// Override trigger for continuous actions.
    pub tau: f64,
    /// Margin for discrete actions.
    pub delta: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub k_iters: u64,
    /// Weight of the imitation term in the actor update.
    pub bc_weight: f64,
    /// Keep overrides from earlier iterations instead of discarding them.
    pub replay: bool,
    pub target_refresh: u64,
    /// Snapshot the model every this many iterations (0 disables).
    pub checkpoint_every: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            delta: 1.0,
            epochs: 5,
            minibatch: 32,
            lr: 1e-3,
            k_iters: 200,
            bc_weight: 1.0,
            replay: false,
            target_refresh: 100,
            checkpoint_every: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.delta > 0.0) {
            return Err(Error::InvalidArgument("tau and delta must be positive".into()));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.target_refresh == 0 {
            return Err(Error::InvalidArgument("epochs, minibatch and target_refresh must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.bc_weight >= 0.0) {
            return Err(Error::InvalidArgument("lr and bc_weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Steps where the expert overrode the model, with the expert's action.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OverrideDataset {
    pub iteration: u64,
    pub transitions: Vec<Transition>,
}

impl OverrideDataset {
    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }
}

/// One supervised episode. Disagreements are counted against the model's
/// proposals, so they always equal the number of logged overrides.
pub fn deploy_with_overrides<R: rand::Rng + ?Sized>(
    policy: &Policy,
    expert: &Policy,
    env: &Env,
    params: &ScoreParams,
    iteration: u64,
    rng: &mut R,
) -> Result<(EpisodeLog, OverrideDataset)> {
    let mut s = env.reset(rng);
    let mut ret = 0.0;
    let mut steps = 0;
    let mut log = OverrideDataset {
        iteration,
        transitions: Vec::new(),
    };
    while steps < params.horizon {
        let proposed = policy.act(env, &s, rng)?;
        let expert_a = expert.decide(env, &s)?;
        let overridden = disagrees(&proposed, &expert_a, params.tau)?;
        let executed = if overridden { expert_a } else { proposed };
        let step = env.step(&s, &executed, rng)?;
        ret += step.reward;
        steps += 1;
        if overridden {
            log.transitions.push(Transition {
                s: s.clone(),
                a: executed,
                r: step.reward,
                s_next: step.state.clone(),
                done: step.done,
            });
        }
        if step.done {
            break;
        }
        s = step.state;
    }
    Ok((EpisodeLog::new(ret, log.len(), steps, params), log))
}

fn guard(data: &[Transition]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Squared Bellman error plus the large-margin term on the logged steps.
pub fn finetune_discrete(
    q: &mut QModel<f64>,
    opt: &mut OptimState<f64>,
    env: &Env,
    data: &[Transition],
    cfg: &FinetuneConfig,
    rng: &mut Rng,
) -> Result<()> {
    guard(data)?;
    let delta = cfg.delta;
    fit_discrete(
        q,
        opt,
        env,
        data,
        cfg.epochs,
        cfg.minibatch.min(data.len()),
        cfg.target_refresh,
        rng,
        |m, rows| margin_bellman(m, rows, delta),
    )
}

/// Critic regression onto `r + gamma * Q(s', pi(s'))` with the actor fixed.
pub fn finetune_critic_continuous(
    ac: &mut ActorCritic,
    opt: &mut OptimState<f64>,
    env: &Env,
    data: &[Transition],
    cfg: &FinetuneConfig,
    rng: &mut Rng,
) -> Result<()> {
    guard(data)?;
    let mut target = ac.critic.clone();
    let mut updates = 0u64;
    for _ in 0..cfg.epochs {
        for idx in minibatches(data.len(), cfg.minibatch.min(data.len()), rng) {
            let batch: Vec<&Transition> = idx.iter().map(|&i| &data[i]).collect();
            critic_step(&mut ac.critic, opt, &target, &ac.actor, env, &batch, updates as usize)?;
            updates += 1;
            if updates % cfg.target_refresh == 0 {
                target = ac.critic.clone();
            }
        }
    }
    Ok(())
}

/// Actor ascent on `Q(s, pi(s)) - bc_weight * |pi(s) - a_expert|^2`.
pub fn finetune_actor_continuous(
    ac: &mut ActorCritic,
    opt: &mut OptimState<f64>,
    env: &Env,
    data: &[Transition],
    cfg: &FinetuneConfig,
    rng: &mut Rng,
) -> Result<()> {
    guard(data)?;
    let mut updates = 0;
    for _ in 0..cfg.epochs {
        for idx in minibatches(data.len(), cfg.minibatch.min(data.len()), rng) {
            let batch: Vec<&Transition> = idx.iter().map(|&i| &data[i]).collect();
            actor_step(&mut ac.actor, opt, &ac.critic, env, &batch, cfg.bc_weight, updates)?;
            updates += 1;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneRecord {
    pub k: u64,
    pub env_return: f64,
    pub disagreements: usize,
    pub overrides: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneTrace {
    pub records: Vec<FinetuneRecord>,
    /// `(iteration, model)` taken after that iteration's update.
    pub snapshots: Vec<(u64, Candidate)>,
    pub model: Candidate,
}

impl FinetuneTrace {
    fn mean_of(&self, range: std::ops::Range<usize>, f: impl Fn(&FinetuneRecord) -> f64) -> f64 {
        let slice = &self.records[range];
        slice.iter().map(f).sum::<f64>() / slice.len().max(1) as f64
    }

    pub fn mean_disagreements_first(&self, n: usize) -> f64 {
        self.mean_of(0..n.min(self.records.len()), |r| r.disagreements as f64)
    }

    pub fn mean_disagreements_last(&self, n: usize) -> f64 {
        let len = self.records.len();
        self.mean_of(len.saturating_sub(n)..len, |r| r.disagreements as f64)
    }

    pub fn mean_score_first(&self, n: usize) -> f64 {
        self.mean_of(0..n.min(self.records.len()), |r| r.score)
    }

    pub fn mean_score_last(&self, n: usize) -> f64 {
        let len = self.records.len();
        self.mean_of(len.saturating_sub(n)..len, |r| r.score)
    }
}

enum Learner {
    Discrete {
        q: QModel<f64>,
        opt: OptimState<f64>,
    },
    Continuous {
        ac: ActorCritic,
        opt_actor: OptimState<f64>,
        opt_critic: OptimState<f64>,
    },
}

impl Learner {
    fn new(model: &Candidate, lr: f64) -> Self {
        match model {
            Candidate::Discrete(q) => Learner::Discrete {
                opt: OptimState::new(q.n_params(), lr),
                q: q.clone(),
            },
            Candidate::Continuous(ac) => Learner::Continuous {
                opt_actor: OptimState::new(ac.actor.n_params(), lr),
                opt_critic: OptimState::new(ac.critic.n_params(), lr),
                ac: ac.clone(),
            },
        }
    }

    fn candidate(&self) -> Candidate {
        match self {
            Learner::Discrete { q, .. } => Candidate::Discrete(q.clone()),
            Learner::Continuous { ac, .. } => Candidate::Continuous(ac.clone()),
        }
    }

    fn policy(&self) -> Policy {
        match self {
            Learner::Discrete { q, .. } => Policy::Greedy(q.clone()),
            Learner::Continuous { ac, .. } => Policy::Actor(ac.actor.clone()),
        }
    }

    fn train(&mut self, env: &Env, data: &[Transition], cfg: &FinetuneConfig, rng: &mut Rng) -> Result<()> {
        match self {
            Learner::Discrete { q, opt } => finetune_discrete(q, opt, env, data, cfg, rng),
            Learner::Continuous {
                ac,
                opt_actor,
                opt_critic,
            } => {
                finetune_critic_continuous(ac, opt_critic, env, data, cfg, rng)?;
                finetune_actor_continuous(ac, opt_actor, env, data, cfg, rng)
            }
        }
    }
}

/// Deploy, log overrides, fine-tune on them, clear the log; `k_iters` times.
pub fn run_finetuning(
    model: &Candidate,
    expert: &Policy,
    env: &Env,
    params: &ScoreParams,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneTrace> {
    cfg.validate()?;
    if cfg.k_iters == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let params = ScoreParams {
        tau: cfg.tau,
        ..*params
    };
    let mut deploy_rng = rng_from_seed(derive_seed(seed, "finetune-deploy", 0));
    let mut train_rng = rng_from_seed(derive_seed(seed, "finetune-train", 0));
    let mut learner = Learner::new(model, cfg.lr);
    let mut records = Vec::with_capacity(cfg.k_iters as usize);
    let mut snapshots = Vec::new();
    let mut replay: Vec<Transition> = Vec::new();
    for k in 1..=cfg.k_iters {
        let (ep, overrides) = deploy_with_overrides(&learner.policy(), expert, env, &params, k, &mut deploy_rng)?;
        if ep.disagreements != overrides.len() {
            return Err(Error::Invariant(format!(
                "iteration {k}: {} disagreements but {} overrides",
                ep.disagreements,
                overrides.len()
            )));
        }
        records.push(FinetuneRecord {
            k,
            env_return: ep.env_return,
            disagreements: ep.disagreements,
            overrides: overrides.len(),
            score: ep.score,
        });
        let data: &[Transition] = if cfg.replay {
            replay.extend(overrides.transitions);
            &replay
        } else {
            &overrides.transitions
        };
        if !data.is_empty() {
            learner.train(env, data, cfg, &mut train_rng)?;
        }
        if cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0 {
            snapshots.push((k, learner.candidate()));
        }
    }
    Ok(FinetuneTrace {
        records,
        snapshots,
        model: learner.candidate(),
    })
}

//! Offline datasets and conservative training of candidate models.

mod train;

pub use train::{
    actor_step, critic_step, discrete_rows, fit_actor, init_q, mean_bellman_residual, minibatches,
    train_offline_continuous, train_offline_discrete, ActorCritic, Arch, OfflineConfig,
};
pub(crate) use train::fit_discrete;

use crate::approx::QModel;
use crate::env::{Action, Env, Expert, Policy, State};
use crate::seeds::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// One logged step. `done` marks absorption, never truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: State,
    pub a: Action,
    pub r: f64,
    pub s_next: State,
    pub done: bool,
}

/// How a dataset was generated.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    pub epsilon: f64,
    pub expert: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub env_id: String,
    pub behavior: Behavior,
    pub seed: u64,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub(crate) fn check_env(&self, env: &Env) -> Result<()> {
        if self.env_id != env.id() {
            return Err(Error::InvalidArgument(format!(
                "dataset was collected on `{}`, not `{}`",
                self.env_id,
                env.id()
            )));
        }
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(())
    }
}

/// Rolls out the ε-greedy expert for exactly `n_steps` steps, restarting
/// episodes on absorption or at the horizon.
pub fn collect_dataset(env: &Env, expert: &Expert, epsilon: f64, n_steps: usize, seed: u64) -> Result<Dataset> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let behavior = Policy::epsilon_greedy(Policy::Expert(expert.clone()), epsilon)?;
    let mut rng = rng_from_seed(seed);
    let mut transitions = Vec::with_capacity(n_steps);
    let mut s = env.reset(&mut rng);
    let mut t = 0;
    while transitions.len() < n_steps {
        let a = behavior.act(env, &s, &mut rng)?;
        let step = env.step(&s, &a, &mut rng)?;
        t += 1;
        let restart = step.done || t >= env.horizon();
        transitions.push(Transition {
            s,
            a,
            r: step.reward,
            s_next: step.state.clone(),
            done: step.done,
        });
        s = if restart {
            t = 0;
            env.reset(&mut rng)
        } else {
            step.state
        };
    }
    Ok(Dataset {
        env_id: env.id().to_string(),
        behavior: Behavior {
            epsilon,
            expert: "oracle".into(),
        },
        seed,
        transitions,
    })
}

/// A trained candidate: a discrete Q-model or an actor with its critic.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    Discrete(QModel<f64>),
    Continuous(ActorCritic),
}

impl Candidate {
    pub fn policy(&self) -> Policy {
        match self {
            Candidate::Discrete(q) => Policy::Greedy(q.clone()),
            Candidate::Continuous(ac) => Policy::Actor(ac.actor.clone()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Candidate::Discrete(q) => q.kind(),
            Candidate::Continuous(_) => "actor-critic",
        }
    }

    /// `Q(s, pi(s))`, the value the model assigns to its own greedy action.
    pub fn greedy_value(&self, env: &Env, s: &State) -> Result<f64> {
        match self {
            Candidate::Discrete(q) => {
                let row = q.q_row(&crate::env::q_input(q, env, s)?)?;
                Ok(row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
            Candidate::Continuous(ac) => {
                let x = env.encode(s)?;
                ac.critic.value(&x, &ac.actor.act(&x)?)
            }
        }
    }
}

/// Candidates trained on one dataset, in the order of their penalty scales.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub env_id: String,
    pub lambdas: Vec<f64>,
    pub models: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Data-collection settings shared by every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub epsilon: f64,
    pub n_steps: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            n_steps: 20_000,
        }
    }
}

/// Collects one dataset and trains one candidate per λ, each in its own
/// thread with a seed derived from `master_seed` and its position.
pub fn build_candidates(
    env: &Env,
    expert: &Expert,
    lambdas: &[f64],
    data_cfg: &DataConfig,
    template: &OfflineConfig,
    master_seed: u64,
) -> Result<(Dataset, CandidateSet)> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("need at least one lambda".into()));
    }
    let data = collect_dataset(
        env,
        expert,
        data_cfg.epsilon,
        data_cfg.n_steps,
        derive_seed(master_seed, "dataset", 0),
    )?;
    let set = train_candidates(env, &data, lambdas, template, master_seed)?;
    Ok((data, set))
}

/// Trains one candidate per λ on an existing dataset.
pub fn train_candidates(
    env: &Env,
    data: &Dataset,
    lambdas: &[f64],
    template: &OfflineConfig,
    master_seed: u64,
) -> Result<CandidateSet> {
    let models = std::thread::scope(|scope| {
        let handles: Vec<_> = lambdas
            .iter()
            .enumerate()
            .map(|(i, &lambda)| {
                let cfg = OfflineConfig {
                    lambda,
                    seed: derive_seed(master_seed, "train", i as u64),
                    ..template.clone()
                };
                scope.spawn(move || train_candidate(env, data, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(CandidateSet {
        env_id: env.id().to_string(),
        lambdas: lambdas.to_vec(),
        models,
    })
}

pub fn train_candidate(env: &Env, data: &Dataset, cfg: &OfflineConfig) -> Result<Candidate> {
    if env.is_discrete() {
        Ok(Candidate::Discrete(train_offline_discrete(env, data, cfg)?))
    } else {
        Ok(Candidate::Continuous(train_offline_continuous(env, data, cfg)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_expert, Shaping};

    #[test]
    fn exact_length_and_greedy_when_epsilon_is_zero() {
        let env = Env::from_id("grid5").unwrap();
        let expert = make_expert(&env, &env.default_shaping()).unwrap();
        let d = collect_dataset(&env, &expert, 0.0, 7, 1).unwrap();
        assert_eq!(d.len(), 7);
        let d = collect_dataset(&env, &expert, 0.0, 500, 1).unwrap();
        for t in &d.transitions {
            assert_eq!(t.a, expert.action(&t.s).unwrap());
        }
    }

    #[test]
    fn episodes_restart_after_absorption() {
        let env = Env::from_id("grid5").unwrap();
        let expert = make_expert(&env, &Shaping::None).unwrap();
        let d = collect_dataset(&env, &expert, 0.0, 300, 2).unwrap();
        let start = State::Index(2);
        for w in d.transitions.windows(2) {
            if w[0].done {
                assert_eq!(w[1].s, start);
            } else {
                assert_eq!(w[1].s, w[0].s_next);
            }
        }
    }
}

//! Supervised rollouts, the online score and expected-score oracles.
//!
//! An episode's score is `alpha1 * return - alpha2 * disagreements`, where a
//! disagreement is a step at which the deployed policy's action differs from
//! the expert's (discrete), or is more than `tau` away in squared distance
//! (continuous). Returns are undiscounted and episodes truncate at the horizon.

use rand::Rng;

use crate::env::{Action, Env, Policy};
use crate::offline::Transition;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub tau: f64,
    pub horizon: usize,
}

pub const DEFAULT_TAU: f64 = 0.09;

impl ScoreParams {
    pub fn new(alpha1: f64, alpha2: f64, tau: f64, horizon: usize) -> Result<Self> {
        let p = Self {
            alpha1,
            alpha2,
            tau,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0 && self.tau > 0.0) {
            return Err(Error::InvalidArgument("alpha1, alpha2 and tau must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Per-environment defaults. A disagreement costs one over the typical
    /// episode length: the full horizon where nothing absorbs, ten steps on
    /// grid5 where the expert reaches the goal in about nine.
    pub fn for_env(env: &Env) -> ScoreParams {
        let horizon = env.horizon();
        let (alpha1, alpha2) = match env.id() {
            "grid5" => (1.0, 0.1),
            "queue2" => (0.1, 1.0 / horizon as f64),
            "pointmass" => (0.2, 1.0 / horizon as f64),
            _ => (1.0, 1.0 / horizon as f64),
        };
        ScoreParams {
            alpha1,
            alpha2,
            tau: DEFAULT_TAU,
            horizon,
        }
    }
}

/// `alpha1 * env_return - alpha2 * disagreements`.
pub fn online_score(env_return: f64, disagreements: usize, params: &ScoreParams) -> f64 {
    params.alpha1 * env_return - params.alpha2 * disagreements as f64
}

/// Whether `proposed` counts as a disagreement with the expert's `reference`.
pub fn disagrees(proposed: &Action, reference: &Action, tau: f64) -> Result<bool> {
    match (proposed, reference) {
        (Action::Index(a), Action::Index(b)) => Ok(a != b),
        (Action::Vector(a), Action::Vector(b)) => {
            if a.len() != b.len() {
                return Err(Error::Dimension {
                    expected: b.len(),
                    got: a.len(),
                });
            }
            let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            Ok(sq > tau)
        }
        _ => Err(Error::Unsupported("policy and expert act in different action spaces".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub env_return: f64,
    pub disagreements: usize,
    pub steps: usize,
    pub score: f64,
    pub transitions: Option<Vec<Transition>>,
}

impl EpisodeLog {
    pub fn new(env_return: f64, disagreements: usize, steps: usize, params: &ScoreParams) -> Self {
        Self {
            env_return,
            disagreements,
            steps,
            score: online_score(env_return, disagreements, params),
            transitions: None,
        }
    }
}

/// Runs one episode of `policy`, always executing its own action, and counts
/// the steps at which the expert would have acted differently.
pub fn rollout_episode<R: Rng + ?Sized>(
    policy: &Policy,
    expert: &Policy,
    env: &Env,
    params: &ScoreParams,
    rng: &mut R,
    log_transitions: bool,
) -> Result<EpisodeLog> {
    let mut s = env.reset(rng);
    let mut ret = 0.0;
    let mut dis = 0;
    let mut steps = 0;
    let mut log = log_transitions.then(Vec::new);
    while steps < params.horizon {
        let a = policy.act(env, &s, rng)?;
        if disagrees(&a, &expert.decide(env, &s)?, params.tau)? {
            dis += 1;
        }
        let step = env.step(&s, &a, rng)?;
        ret += step.reward;
        steps += 1;
        if let Some(log) = log.as_mut() {
            log.push(Transition {
                s: s.clone(),
                a,
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
    let mut ep = EpisodeLog::new(ret, dis, steps, params);
    ep.transitions = log;
    Ok(ep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreMethod {
    ExactDp,
    MonteCarlo { n: usize, std_error: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedScore {
    pub value: f64,
    pub method: ScoreMethod,
}

impl ExpectedScore {
    /// Normal-approximation interval `value ± z * std_error` (zero width for DP).
    pub fn interval(&self, z: f64) -> (f64, f64) {
        let se = match self.method {
            ScoreMethod::ExactDp => 0.0,
            ScoreMethod::MonteCarlo { std_error, .. } => std_error,
        };
        (self.value - z * se, self.value + z * se)
    }
}

/// Expected score of a deterministic policy on a finite environment by
/// backward induction over the horizon.
pub fn expected_score_exact(policy: &Policy, expert: &Policy, env: &Env, params: &ScoreParams) -> Result<ExpectedScore> {
    let mdp = env
        .tabular()
        .ok_or_else(|| Error::Unsupported("exact expected score needs a finite environment".into()))?;
    if !policy.is_deterministic() || !expert.is_deterministic() {
        return Err(Error::Unsupported("exact expected score needs deterministic policies".into()));
    }
    let n = mdp.n_states;
    let mut act = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);
    for s in 0..n {
        let st = crate::env::State::Index(s);
        let a = policy.decide(env, &st)?;
        let d = disagrees(&a, &expert.decide(env, &st)?, params.tau)?;
        let a = a.index()?;
        cost.push(params.alpha1 * mdp.reward(s, a) - if d { params.alpha2 } else { 0.0 });
        act.push(a);
    }
    let mut v = vec![0.0; n];
    for _ in 0..params.horizon {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let cont: f64 = mdp
                    .next(s, act[s])
                    .iter()
                    .filter(|&&(s2, _)| !mdp.terminal[s2])
                    .map(|&(s2, p)| p * v[s2])
                    .sum();
                cost[s] + cont
            })
            .collect();
        v = next;
    }
    let value = mdp.initial.iter().zip(&v).map(|(p, x)| p * x).sum();
    Ok(ExpectedScore {
        value,
        method: ScoreMethod::ExactDp,
    })
}

/// Mean score of `n` independent episodes with its standard error.
pub fn expected_score_mc<R: Rng + ?Sized>(
    policy: &Policy,
    expert: &Policy,
    env: &Env,
    params: &ScoreParams,
    n: usize,
    rng: &mut R,
) -> Result<ExpectedScore> {
    if n < 2 {
        return Err(Error::InvalidArgument("Monte-Carlo estimate needs at least 2 episodes".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let s = rollout_episode(policy, expert, env, params, rng, false)?.score;
        sum += s;
        sum_sq += s * s;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(ExpectedScore {
        value: mean,
        method: ScoreMethod::MonteCarlo {
            n,
            std_error: (var / nf).sqrt(),
        },
    })
}

/// Exact DP where the environment and policies allow it, Monte Carlo with
/// `mc_episodes` rollouts otherwise.
pub fn expected_score_oracle<R: Rng + ?Sized>(
    policy: &Policy,
    expert: &Policy,
    env: &Env,
    params: &ScoreParams,
    mc_episodes: usize,
    rng: &mut R,
) -> Result<ExpectedScore> {
    if env.tabular().is_some() && policy.is_deterministic() {
        expected_score_exact(policy, expert, env, params)
    } else {
        expected_score_mc(policy, expert, env, params, mc_episodes, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_expert, Shaping, State, TabularMdp};
    use crate::seeds::rng_from_seed;

    fn params() -> ScoreParams {
        ScoreParams::new(1.0, 0.1, DEFAULT_TAU, 10).unwrap()
    }

    #[test]
    fn score_is_linear_in_its_fields() {
        let p = params();
        assert_eq!(online_score(0.0, 0, &p), 0.0);
        assert!((online_score(2.5, 3, &p) - 2.2).abs() < 1e-15);
    }

    #[test]
    fn tolerance_is_strict() {
        let a = |x: f64| Action::Vector(vec![x]);
        // a gap of 0.3 sits exactly on the tolerance and does not count
        assert!(!disagrees(&a(0.2), &a(0.5), 0.09).unwrap());
        assert!(disagrees(&a(0.1), &a(0.5), 0.09).unwrap());
        assert!(!disagrees(&a(0.5), &a(0.5), 0.09).unwrap());
        assert!(disagrees(&Action::Index(1), &Action::Index(2), 0.09).unwrap());
    }

    #[test]
    fn expert_never_disagrees_with_itself() {
        let env = Env::from_id("grid5").unwrap();
        let e = Policy::Expert(make_expert(&env, &env.default_shaping()).unwrap());
        let p = ScoreParams::for_env(&env);
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            assert_eq!(rollout_episode(&e, &e, &env, &p, &mut rng, false).unwrap().disagreements, 0);
        }
    }

    #[test]
    fn exact_dp_on_a_deterministic_chain_equals_the_trajectory() {
        // three states in a line, action 0 moves right, the last state absorbs
        let mdp = TabularMdp {
            n_states: 3,
            n_actions: 2,
            transitions: vec![
                vec![(1, 1.0)],
                vec![(0, 1.0)],
                vec![(2, 1.0)],
                vec![(1, 1.0)],
                vec![(2, 1.0)],
                vec![(2, 1.0)],
            ],
            rewards: vec![0.5, 0.0, 1.0, 0.0, 0.0, 0.0],
            terminal: vec![false, false, true],
            initial: vec![1.0, 0.0, 0.0],
            gamma: 0.9,
            horizon: 10,
        };
        let env = Env::custom("chain", mdp).unwrap();
        let expert = Policy::Expert(make_expert(&env, &Shaping::None).unwrap());
        let pol = Policy::Expert(crate::env::Expert::Table(vec![0, 1, 0]));
        let p = params();
        let exact = expected_score_exact(&pol, &expert, &env, &p).unwrap();
        let ep = rollout_episode(&pol, &expert, &env, &p, &mut rng_from_seed(0), false).unwrap();
        // right from 0 (0.5), then idling in state 1 against the expert's advice
        assert_eq!(ep.steps, 10);
        assert_eq!(ep.disagreements, 9);
        assert!((ep.score - (0.5 - 0.9)).abs() < 1e-12);
        assert!((exact.value - ep.score).abs() < 1e-12);
        assert_eq!(State::Index(0), env.reset(&mut rng_from_seed(3)));
    }
}

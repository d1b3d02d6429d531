//! UCB selection among offline candidates, baseline selectors and regret.
//!
//! Arms are 0-based. Each iteration deploys one model for one supervised
//! episode and feeds its score back to the bandit.

use rand::Rng;

use crate::env::{Env, Policy};
use crate::offline::{CandidateSet, Dataset};
use crate::scalar::argmax;
use crate::scoring::{expected_score_oracle, rollout_episode, ExpectedScore, ScoreParams};
use crate::seeds::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Episodes used for Monte-Carlo expected scores where no exact oracle exists.
pub const MC_ORACLE_EPISODES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct UcbState {
    pub beta: f64,
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    pub k: u64,
}

impl UcbState {
    pub fn new(n_arms: usize, beta: f64) -> Result<Self> {
        if n_arms == 0 {
            return Err(Error::InvalidArgument("UCB needs at least one arm".into()));
        }
        if !(beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta {beta} must be >= 0")));
        }
        Ok(Self {
            beta,
            counts: vec![0; n_arms],
            sums: vec![0.0; n_arms],
            k: 0,
        })
    }

    pub fn n_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.counts[i] == 0 {
            0.0
        } else {
            self.sums[i] / self.counts[i] as f64
        }
    }

    pub fn bonus(&self, i: usize) -> f64 {
        self.beta * (1.0 / self.counts[i] as f64).sqrt()
    }

    /// First unpulled arm while any remain, then the highest upper
    /// confidence bound (lowest index on ties).
    pub fn select(&self) -> usize {
        if let Some(i) = self.counts.iter().position(|&n| n == 0) {
            return i;
        }
        let ucb: Vec<f64> = (0..self.n_arms()).map(|i| self.mean(i) + self.bonus(i)).collect();
        argmax(&ucb)
    }

    pub fn update(&mut self, arm: usize, score: f64) -> Result<()> {
        if arm >= self.n_arms() {
            return Err(Error::InvalidArgument(format!("arm {arm} out of range for {} arms", self.n_arms())));
        }
        self.counts[arm] += 1;
        self.sums[arm] += score;
        self.k += 1;
        Ok(())
    }

    /// Arm with the best empirical mean among those pulled so far.
    pub fn best_arm(&self) -> usize {
        let means: Vec<f64> = (0..self.n_arms())
            .map(|i| if self.counts[i] == 0 { f64::NEG_INFINITY } else { self.mean(i) })
            .collect();
        argmax(&means)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    /// 1-based iteration number.
    pub k: u64,
    pub arm: usize,
    pub score: f64,
    /// Cumulative `sum (s_k - S*)`; nonpositive in expectation.
    pub regret: f64,
    pub best_arm_so_far: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub records: Vec<SelectionRecord>,
    pub s_star: f64,
}

impl SelectionTrace {
    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    pub fn arms(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.arm).collect()
    }

    /// Mean score over the last `n` iterations.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        tail.iter().map(|r| r.score).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Prefix sums of `s_k - s_star`.
pub fn regret(scores: &[f64], s_star: f64) -> Vec<f64> {
    scores
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s - s_star;
            Some(*acc)
        })
        .collect()
}

/// UCB over `n_arms` for `k_iters` pulls; `pull(arm, k)` returns the realized score.
pub fn run_ucb<F>(n_arms: usize, k_iters: u64, beta: f64, s_star: f64, mut pull: F) -> Result<SelectionTrace>
where
    F: FnMut(usize, u64) -> Result<f64>,
{
    let mut st = UcbState::new(n_arms, beta)?;
    let mut records = Vec::with_capacity(k_iters as usize);
    let mut cum = 0.0;
    for k in 1..=k_iters {
        let arm = st.select();
        let score = pull(arm, k)?;
        st.update(arm, score)?;
        cum += score - s_star;
        records.push(SelectionRecord {
            k,
            arm,
            score,
            regret: cum,
            best_arm_so_far: st.best_arm(),
        });
    }
    Ok(SelectionTrace { records, s_star })
}

/// Deploys `choose(k, rng)` at every iteration, for the baseline selectors.
pub fn run_schedule<F>(k_iters: u64, s_star: f64, mut choose: F, mut pull: impl FnMut(usize, u64) -> Result<f64>) -> Result<SelectionTrace>
where
    F: FnMut(u64) -> usize,
{
    let mut records = Vec::with_capacity(k_iters as usize);
    let mut cum = 0.0;
    let mut means = Vec::<(f64, u64)>::new();
    for k in 1..=k_iters {
        let arm = choose(k);
        let score = pull(arm, k)?;
        cum += score - s_star;
        if means.len() <= arm {
            means.resize(arm + 1, (0.0, 0));
        }
        means[arm].0 += score;
        means[arm].1 += 1;
        let emp: Vec<f64> = means
            .iter()
            .map(|&(s, n)| if n == 0 { f64::NEG_INFINITY } else { s / n as f64 })
            .collect();
        records.push(SelectionRecord {
            k,
            arm,
            score,
            regret: cum,
            best_arm_so_far: argmax(&emp),
        });
    }
    Ok(SelectionTrace { records, s_star })
}

/// Expected score of every candidate: exact where possible, Monte Carlo otherwise.
pub fn candidate_values(
    candidates: &CandidateSet,
    env: &Env,
    expert: &Policy,
    params: &ScoreParams,
    seed: u64,
) -> Result<Vec<ExpectedScore>> {
    candidates
        .models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut rng = rng_from_seed(derive_seed(seed, "oracle", i as u64));
            expected_score_oracle(&m.policy(), expert, env, params, MC_ORACLE_EPISODES, &mut rng)
        })
        .collect()
}

/// Index of the best expected score (the Oracle baseline's choice).
pub fn oracle_arm(values: &[ExpectedScore]) -> usize {
    argmax(&values.iter().map(|v| v.value).collect::<Vec<_>>())
}

fn episode_pull<'a>(
    candidates: &'a CandidateSet,
    env: &'a Env,
    expert: &'a Policy,
    params: &'a ScoreParams,
    seed: u64,
) -> impl FnMut(usize, u64) -> Result<f64> + 'a {
    let policies: Vec<Policy> = candidates.models.iter().map(|m| m.policy()).collect();
    let mut rng = rng_from_seed(derive_seed(seed, "deploy", 0));
    move |arm, _k| Ok(rollout_episode(&policies[arm], expert, env, params, &mut rng, false)?.score)
}

/// UCB over the candidates with `S*` taken from the expected-score oracle.
pub fn run_selection(
    candidates: &CandidateSet,
    env: &Env,
    expert: &Policy,
    params: &ScoreParams,
    k_iters: u64,
    beta: f64,
    seed: u64,
) -> Result<SelectionTrace> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("candidate set is empty".into()));
    }
    let values = candidate_values(candidates, env, expert, params, seed)?;
    let s_star = values[oracle_arm(&values)].value;
    run_selection_with(candidates, env, expert, params, k_iters, beta, s_star, seed)
}

/// [`run_selection`] with a precomputed `S*`.
#[allow(clippy::too_many_arguments)]
pub fn run_selection_with(
    candidates: &CandidateSet,
    env: &Env,
    expert: &Policy,
    params: &ScoreParams,
    k_iters: u64,
    beta: f64,
    s_star: f64,
    seed: u64,
) -> Result<SelectionTrace> {
    if k_iters == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let pull = episode_pull(candidates, env, expert, params, seed);
    run_ucb(candidates.len(), k_iters, beta, s_star, pull)
}

/// Deploys a fixed arm, or a fresh uniform draw per iteration when `arm` is `None`.
pub fn run_baseline(
    candidates: &CandidateSet,
    env: &Env,
    expert: &Policy,
    params: &ScoreParams,
    k_iters: u64,
    arm: Option<usize>,
    s_star: f64,
    seed: u64,
) -> Result<SelectionTrace> {
    let n = candidates.len();
    if n == 0 {
        return Err(Error::InvalidArgument("candidate set is empty".into()));
    }
    if let Some(a) = arm {
        if a >= n {
            return Err(Error::InvalidArgument(format!("arm {a} out of range for {n} arms")));
        }
    }
    let mut draw = rng_from_seed(derive_seed(seed, "random-ensemble", 0));
    let pull = episode_pull(candidates, env, expert, params, seed);
    run_schedule(k_iters, s_star, |_| arm.unwrap_or_else(|| baseline_random_ensemble(n, &mut draw)), pull)
}

/// The candidate whose own greedy values, averaged over dataset states, are highest.
pub fn baseline_highest_q(candidates: &CandidateSet, env: &Env, data: &Dataset) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let means = candidates
        .models
        .iter()
        .map(|m| {
            let mut total = 0.0;
            for t in &data.transitions {
                total += m.greedy_value(env, &t.s)?;
            }
            Ok(total / data.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(argmax(&means))
}

/// Uniform draw over `0..n`.
pub fn baseline_random_ensemble<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    rng.gen_range(0..n)
}

use rand::Rng;

use super::{Action, Env, FiniteEnv, Layout, State};
use crate::approx::{MlpActor, QInput, QModel};
use crate::scalar::argmax;
use crate::{Error, Result};

/// Reward modifier defining the expert's preferences on top of the task reward.
#[derive(Debug, Clone, PartialEq)]
pub enum Shaping {
    None,
    /// Added to `r(s, a)` scaled by the probability of entering a hazard.
    HazardPenalty(f64),
    /// Added to `r(s, a)` whenever `a` switches the signal phase.
    SwitchPenalty(f64),
    /// Linear feedback gain used by the point-mass expert.
    ConservativeGain([f64; 2]),
}

/// The supervising expert: a fixed action table or a clipped linear controller.
#[derive(Debug, Clone, PartialEq)]
pub enum Expert {
    Table(Vec<usize>),
    Linear { gain: [f64; 2], low: f64, high: f64 },
}

impl Expert {
    pub fn action(&self, s: &State) -> Result<Action> {
        match self {
            Expert::Table(t) => {
                let i = s.index()?;
                t.get(i).map(|&a| Action::Index(a)).ok_or(Error::InvalidState {
                    index: i,
                    n_states: t.len(),
                })
            }
            Expert::Linear { gain, low, high } => {
                let v = s.vector()?;
                if v.len() != 2 {
                    return Err(Error::Dimension { expected: 2, got: v.len() });
                }
                let u = -(gain[0] * v[0] + gain[1] * v[1]);
                Ok(Action::Vector(vec![u.clamp(*low, *high)]))
            }
        }
    }
}

/// Builds the expert for `env` under `shaping`. Finite experts are greedy
/// with respect to the optimal Q-function of the shaped MDP.
pub fn make_expert(env: &Env, shaping: &Shaping) -> Result<Expert> {
    match (env, shaping) {
        (Env::PointMass(p), Shaping::ConservativeGain(k)) => {
            if p.closed_loop_radius(*k) >= 1.0 {
                return Err(Error::InvalidSpec(format!("expert gain {k:?} does not stabilize the point mass")));
            }
            Ok(Expert::Linear {
                gain: *k,
                low: p.action_low,
                high: p.action_high,
            })
        }
        (Env::PointMass(_), _) => Err(Error::Unsupported("the point-mass expert needs a feedback gain".into())),
        (Env::Finite(f), shaping) => {
            let shaped = shaped_mdp(f, shaping)?;
            let q = shaped.solve_optimal_q()?;
            Ok(Expert::Table(q.greedy_policy()))
        }
    }
}

fn shaped_mdp(f: &FiniteEnv, shaping: &Shaping) -> Result<super::TabularMdp> {
    match (shaping, &f.layout) {
        (Shaping::None, _) => Ok(f.mdp.clone()),
        (Shaping::HazardPenalty(c), Layout::Grid(g)) => {
            Ok(f.mdp.with_shaping(|s, a| c * g.hazard_probability(&f.mdp, s, a)))
        }
        (Shaping::SwitchPenalty(c), Layout::Queue(q)) => {
            Ok(f.mdp.with_shaping(|s, a| if a != q.state(s).phase { *c } else { 0.0 }))
        }
        (other, _) => Err(Error::Unsupported(format!(
            "shaping {other:?} does not apply to `{}`",
            f.id
        ))),
    }
}

/// Presents `s` to `model` the way it expects: a row index for tables,
/// encoded features for networks.
pub fn q_input(model: &QModel<f64>, env: &Env, s: &State) -> Result<QInput<f64>> {
    match model {
        QModel::Tabular(_) => Ok(QInput::Index(s.index()?)),
        QModel::Mlp(_) => Ok(QInput::Features(env.encode(s)?)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Greedy in a discrete Q-model, lowest action on ties.
    Greedy(QModel<f64>),
    Actor(MlpActor<f64>),
    Expert(Expert),
    EpsilonGreedy { base: Box<Policy>, epsilon: f64 },
}

impl Policy {
    pub fn epsilon_greedy(base: Policy, epsilon: f64) -> Result<Policy> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} not in [0, 1]")));
        }
        Ok(Policy::EpsilonGreedy {
            base: Box::new(base),
            epsilon,
        })
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            Policy::EpsilonGreedy { epsilon, base } => *epsilon == 0.0 && base.is_deterministic(),
            _ => true,
        }
    }

    /// The action a deterministic policy takes at `s`; for ε-greedy this is
    /// the base policy's choice.
    pub fn decide(&self, env: &Env, s: &State) -> Result<Action> {
        match self {
            Policy::Greedy(q) => Ok(Action::Index(argmax(&q.q_row(&q_input(q, env, s)?)?))),
            Policy::Actor(actor) => Ok(Action::Vector(actor.act(&env.encode(s)?)?)),
            Policy::Expert(e) => e.action(s),
            Policy::EpsilonGreedy { base, .. } => base.decide(env, s),
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, env: &Env, s: &State, rng: &mut R) -> Result<Action> {
        match self {
            Policy::EpsilonGreedy { base, epsilon } => {
                // the coin is always drawn so the stream does not depend on epsilon
                let explore = rng.gen::<f64>() < *epsilon;
                if !explore {
                    return base.decide(env, s);
                }
                match (env.n_actions(), env.action_bounds()) {
                    (Some(n), _) => Ok(Action::Index(rng.gen_range(0..n))),
                    (None, Some((lo, hi))) => {
                        Ok(Action::Vector((0..env.action_dim()).map(|_| rng.gen_range(lo..=hi)).collect()))
                    }
                    (None, None) => Err(Error::Unsupported("environment has no action space".into())),
                }
            }
            other => other.decide(env, s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::grid::{GridStart, GridWorldSpec, NORTH};
    use crate::env::PointMassSpec;

    #[test]
    fn unshaped_expert_is_greedy_in_the_optimal_q() {
        let env = Env::from_id("grid5").unwrap();
        let q = env.solve_optimal_q().unwrap();
        assert_eq!(make_expert(&env, &Shaping::None).unwrap(), Expert::Table(q.greedy_policy()));
    }

    #[test]
    fn hazard_shaping_reroutes_the_expert() {
        // deterministic 5x5 board, hazard straight ahead, a mild true penalty
        let spec = GridWorldSpec {
            start: GridStart::Cell(2, 0),
            goal: (2, 4),
            hazards: vec![(2, 2)],
            slip_prob: 0.0,
            hazard_penalty: -0.02,
            ..GridWorldSpec::default()
        };
        let env = Env::grid("detour", spec.clone()).unwrap();
        let plain = make_expert(&env, &Shaping::None).unwrap();
        let shaped = make_expert(&env, &Shaping::HazardPenalty(-10.0)).unwrap();
        let path = |e: &Expert| {
            let mdp = env.tabular().unwrap();
            let mut s = spec.index(2, 0);
            let mut cells = vec![s];
            for _ in 0..12 {
                if mdp.terminal[s] {
                    break;
                }
                let a = e.action(&State::Index(s)).unwrap().index().unwrap();
                s = mdp.next(s, a)[0].0;
                cells.push(s);
            }
            cells
        };
        let hazard = spec.index(2, 2);
        assert!(path(&plain).contains(&hazard));
        let safe = path(&shaped);
        assert!(!safe.contains(&hazard));
        assert_eq!(*safe.last().unwrap(), spec.index(2, 4));
        assert_eq!(plain.action(&State::Index(spec.index(2, 1))).unwrap(), Action::Index(NORTH));
        assert_ne!(shaped.action(&State::Index(spec.index(2, 1))).unwrap(), Action::Index(NORTH));
    }

    #[test]
    fn linear_expert_from_rest() {
        let env = Env::point_mass(PointMassSpec::default()).unwrap();
        let e = make_expert(&env, &Shaping::ConservativeGain([0.6, 1.0])).unwrap();
        assert_eq!(e.action(&State::Vector(vec![1.0, 0.0])).unwrap(), Action::Vector(vec![-0.6]));
        assert_eq!(e.action(&State::Vector(vec![-3.0, 0.0])).unwrap(), Action::Vector(vec![1.0]));
        assert!(make_expert(&env, &Shaping::ConservativeGain([0.0, -5.0])).is_err());
    }

    #[test]
    fn zero_epsilon_follows_the_base() {
        let env = Env::from_id("grid5").unwrap();
        let expert = make_expert(&env, &env.default_shaping()).unwrap();
        let pol = Policy::epsilon_greedy(Policy::Expert(expert.clone()), 0.0).unwrap();
        let mut rng = crate::seeds::rng_from_seed(3);
        for s in 0..25 {
            let st = State::Index(s);
            assert_eq!(pol.act(&env, &st, &mut rng).unwrap(), expert.action(&st).unwrap());
        }
        assert!(Policy::epsilon_greedy(Policy::Expert(expert), 1.5).is_err());
    }
}

//! Built-in toy environments, the exact solver and the oracle experts.
//!
//! Finite environments are compiled into an explicit [`TabularMdp`]; the
//! point mass keeps its parametric dynamics.

pub mod grid;
mod policy;
pub mod pointmass;
pub mod queue;
mod tabular;

pub use grid::{GridStart, GridWorldSpec};
pub use policy::{make_expert, q_input, Expert, Policy, Shaping};
pub use pointmass::PointMassSpec;
pub use queue::{QueueState, QueueTrafficSpec};
pub use tabular::{TabularMdp, ROW_SUM_TOL, VI_MAX_SWEEPS, VI_TOL};

use rand::Rng;

use crate::approx::TabularQ;
use crate::{Error, Result};

pub const ENV_IDS: [&str; 3] = ["grid5", "queue2", "pointmass"];

#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Index(usize),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Index(usize),
    Vector(Vec<f64>),
}

impl State {
    pub fn index(&self) -> Result<usize> {
        match self {
            State::Index(s) => Ok(*s),
            State::Vector(_) => Err(Error::Unsupported("expected a finite state index".into())),
        }
    }

    pub fn vector(&self) -> Result<&[f64]> {
        match self {
            State::Vector(v) => Ok(v),
            State::Index(_) => Err(Error::Unsupported("expected a continuous state".into())),
        }
    }
}

impl Action {
    pub fn index(&self) -> Result<usize> {
        match self {
            Action::Index(a) => Ok(*a),
            Action::Vector(_) => Err(Error::Unsupported("expected a discrete action".into())),
        }
    }

    pub fn vector(&self) -> Result<&[f64]> {
        match self {
            Action::Vector(v) => Ok(v),
            Action::Index(_) => Err(Error::Unsupported("expected a continuous action".into())),
        }
    }
}

/// Result of one environment step. `done` marks absorption only; the
/// caller tracks truncation at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: State,
    pub reward: f64,
    pub done: bool,
}

/// Structure behind a finite environment, kept for shaping and display.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Grid(GridWorldSpec),
    Queue(QueueTrafficSpec),
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteEnv {
    pub id: String,
    pub layout: Layout,
    pub mdp: TabularMdp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    Finite(FiniteEnv),
    PointMass(PointMassSpec),
}

impl Env {
    pub fn from_id(id: &str) -> Result<Env> {
        match id {
            "grid5" => Env::grid("grid5", GridWorldSpec::default()),
            "queue2" => Env::queue("queue2", QueueTrafficSpec::default()),
            "pointmass" => Env::point_mass(PointMassSpec::default()),
            other => Err(Error::InvalidArgument(format!(
                "unknown env id `{other}` (expected one of {})",
                ENV_IDS.join(", ")
            ))),
        }
    }

    pub fn grid(id: &str, spec: GridWorldSpec) -> Result<Env> {
        let mdp = spec.build()?;
        Ok(Env::Finite(FiniteEnv {
            id: id.into(),
            layout: Layout::Grid(spec),
            mdp,
        }))
    }

    pub fn queue(id: &str, spec: QueueTrafficSpec) -> Result<Env> {
        let mdp = spec.build()?;
        Ok(Env::Finite(FiniteEnv {
            id: id.into(),
            layout: Layout::Queue(spec),
            mdp,
        }))
    }

    pub fn custom(id: &str, mdp: TabularMdp) -> Result<Env> {
        mdp.validate()?;
        Ok(Env::Finite(FiniteEnv {
            id: id.into(),
            layout: Layout::Custom,
            mdp,
        }))
    }

    pub fn point_mass(spec: PointMassSpec) -> Result<Env> {
        spec.validate()?;
        Ok(Env::PointMass(spec))
    }

    pub fn id(&self) -> &str {
        match self {
            Env::Finite(f) => &f.id,
            Env::PointMass(_) => "pointmass",
        }
    }

    pub fn tabular(&self) -> Option<&TabularMdp> {
        match self {
            Env::Finite(f) => Some(&f.mdp),
            Env::PointMass(_) => None,
        }
    }

    pub fn require_tabular(&self) -> Result<&TabularMdp> {
        self.tabular()
            .ok_or_else(|| Error::Unsupported(format!("`{}` is not a finite environment", self.id())))
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Env::Finite(_))
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Env::Finite(f) => f.mdp.gamma,
            Env::PointMass(p) => p.gamma,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Env::Finite(f) => f.mdp.horizon,
            Env::PointMass(p) => p.horizon,
        }
    }

    /// Number of discrete actions; `None` for continuous actions.
    pub fn n_actions(&self) -> Option<usize> {
        self.tabular().map(|m| m.n_actions)
    }

    pub fn n_states(&self) -> Option<usize> {
        self.tabular().map(|m| m.n_states)
    }

    /// Box bounds of a continuous action.
    pub fn action_bounds(&self) -> Option<(f64, f64)> {
        match self {
            Env::PointMass(p) => Some((p.action_low, p.action_high)),
            Env::Finite(_) => None,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Env::Finite(_) => 1,
            Env::PointMass(_) => pointmass::ACTION_DIM,
        }
    }

    /// Length of [`Env::encode`]'s output.
    pub fn encoded_dim(&self) -> usize {
        match self {
            Env::Finite(f) => f.mdp.n_states,
            Env::PointMass(_) => pointmass::STATE_DIM,
        }
    }

    /// One-hot vector for finite states, the raw vector otherwise.
    pub fn encode(&self, s: &State) -> Result<Vec<f64>> {
        match (self, s) {
            (Env::Finite(f), State::Index(i)) => {
                f.mdp.check_state(*i)?;
                let mut v = vec![0.0; f.mdp.n_states];
                v[*i] = 1.0;
                Ok(v)
            }
            (Env::PointMass(_), State::Vector(v)) => {
                if v.len() != pointmass::STATE_DIM {
                    return Err(Error::Dimension {
                        expected: pointmass::STATE_DIM,
                        got: v.len(),
                    });
                }
                Ok(v.clone())
            }
            _ => Err(Error::Unsupported(format!("state kind does not match `{}`", self.id()))),
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self {
            Env::Finite(f) => State::Index(f.mdp.sample_initial(rng)),
            Env::PointMass(p) => State::Vector(p.sample_initial(rng)),
        }
    }

    /// Expected immediate reward `r(s, a)`.
    pub fn reward(&self, s: &State, a: &Action) -> Result<f64> {
        match self {
            Env::Finite(f) => {
                let (s, a) = (s.index()?, a.index()?);
                f.mdp.check_state(s)?;
                check_action(a, f.mdp.n_actions)?;
                Ok(f.mdp.reward(s, a))
            }
            Env::PointMass(p) => Ok(p.reward(s.vector()?, scalar_action(a)?)),
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, s: &State, a: &Action, rng: &mut R) -> Result<Step> {
        let reward = self.reward(s, a)?;
        match self {
            Env::Finite(f) => {
                let next = f.mdp.sample_next(s.index()?, a.index()?, rng);
                Ok(Step {
                    state: State::Index(next),
                    reward,
                    done: f.mdp.terminal[next],
                })
            }
            Env::PointMass(p) => {
                let v = s.vector()?;
                if v.len() != pointmass::STATE_DIM {
                    return Err(Error::Dimension {
                        expected: pointmass::STATE_DIM,
                        got: v.len(),
                    });
                }
                Ok(Step {
                    state: State::Vector(p.sample_next(v, scalar_action(a)?, rng)),
                    reward,
                    done: false,
                })
            }
        }
    }

    pub fn solve_optimal_q(&self) -> Result<TabularQ<f64>> {
        self.require_tabular()?.solve_optimal_q()
    }

    /// Reward modifier that makes the expert disagree with pure return-seekers.
    pub fn default_shaping(&self) -> Shaping {
        match self {
            Env::Finite(FiniteEnv {
                layout: Layout::Grid(_), ..
            }) => Shaping::HazardPenalty(-10.0),
            Env::Finite(FiniteEnv {
                layout: Layout::Queue(_), ..
            }) => Shaping::SwitchPenalty(-0.5),
            Env::Finite(_) => Shaping::None,
            Env::PointMass(_) => Shaping::ConservativeGain([0.6, 1.0]),
        }
    }
}

fn check_action(a: usize, n: usize) -> Result<()> {
    if a >= n {
        return Err(Error::InvalidArgument(format!("action {a} out of range for {n} actions")));
    }
    Ok(())
}

fn scalar_action(a: &Action) -> Result<f64> {
    let v = a.vector()?;
    if v.len() != pointmass::ACTION_DIM {
        return Err(Error::Dimension {
            expected: pointmass::ACTION_DIM,
            got: v.len(),
        });
    }
    Ok(v[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from_seed;

    #[test]
    fn builtin_ids_resolve() {
        for id in ENV_IDS {
            assert_eq!(Env::from_id(id).unwrap().id(), id);
        }
        assert!(Env::from_id("hopper").is_err());
    }

    #[test]
    fn invalid_state_index_is_an_error() {
        let env = Env::from_id("grid5").unwrap();
        let mut rng = rng_from_seed(0);
        let err = env.step(&State::Index(25), &Action::Index(0), &mut rng).unwrap_err();
        assert!(matches!(err, Error::InvalidState { index: 25, .. }));
    }

    #[test]
    fn step_is_reproducible() {
        let env = Env::from_id("pointmass").unwrap();
        let s = State::Vector(vec![0.3, -0.1]);
        let a = Action::Vector(vec![0.7]);
        let x = env.step(&s, &a, &mut rng_from_seed(5)).unwrap();
        let y = env.step(&s, &a, &mut rng_from_seed(5)).unwrap();
        assert_eq!(x, y);
    }
}

use std::collections::{BTreeMap, BTreeSet};

use hitl_core::approx::loss::ActionValue;
use hitl_core::approx::{MlpActor, OptimState, Parameterized};
use hitl_core::env::{make_expert, q_input, Action, Env, State, TabularMdp};
use hitl_core::harness::persist::{dataset_from_str, dataset_to_string, model_to_string};
use hitl_core::harness::ModelFile;
use hitl_core::offline::{
    build_candidates, collect_dataset, fit_actor, init_q, mean_bellman_residual, train_candidates,
    train_offline_continuous, train_offline_discrete, Arch, Behavior, Candidate, DataConfig, Dataset, OfflineConfig,
    Transition,
};
use hitl_core::seeds::rng_from_seed;
use hitl_core::{Error, QModel64};

/// Two states, two actions, deterministic: action 1 switches state, action 0
/// stays; staying in state 1 pays 1.
fn switch_env() -> Env {
    let mdp = TabularMdp {
        n_states: 2,
        n_actions: 2,
        transitions: vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)]],
        rewards: vec![0.0, 0.0, 1.0, 0.0],
        terminal: vec![false, false],
        initial: vec![1.0, 0.0],
        gamma: 0.5,
        horizon: 10,
    };
    Env::custom("switch", mdp).unwrap()
}

fn full_coverage(env: &Env, copies: usize) -> Dataset {
    let mdp = env.tabular().unwrap();
    let mut transitions = Vec::new();
    for _ in 0..copies {
        for s in 0..2 {
            for a in 0..2 {
                let (s2, _) = mdp.next(s, a)[0];
                transitions.push(Transition {
                    s: State::Index(s),
                    a: Action::Index(a),
                    r: mdp.reward(s, a),
                    s_next: State::Index(s2),
                    done: false,
                });
            }
        }
    }
    Dataset {
        env_id: env.id().to_string(),
        behavior: Behavior {
            epsilon: 1.0,
            expert: "enumeration".into(),
        },
        seed: 0,
        transitions,
    }
}

fn q_table(model: &QModel64, env: &Env, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|s| model.q_row(&q_input(model, env, &State::Index(s)).unwrap()).unwrap())
        .collect()
}

#[test]
fn unpenalized_tabular_training_finds_q_star() {
    let env = switch_env();
    let data = full_coverage(&env, 100);
    let cfg = OfflineConfig {
        epochs: 300,
        lr: 1e-2,
        ..OfflineConfig::default()
    };
    let q = train_offline_discrete(&env, &data, &cfg).unwrap();
    let star = env.solve_optimal_q().unwrap();
    for (s, row) in q_table(&q, &env, 2).iter().enumerate() {
        for (a, v) in row.iter().enumerate() {
            assert!((v - star.get(s, a)).abs() < 0.05, "Q({s},{a}) = {v}, Q* = {}", star.get(s, a));
        }
    }
}

#[test]
fn empty_dataset_is_an_error() {
    let env = switch_env();
    let mut data = full_coverage(&env, 1);
    data.transitions.clear();
    assert!(matches!(
        train_offline_discrete(&env, &data, &OfflineConfig::default()),
        Err(Error::EmptyDataset)
    ));
}

/// Expert-only data on grid5: each visited state shows a single action.
fn expert_data(steps: usize) -> (Env, Dataset) {
    let env = Env::from_id("grid5").unwrap();
    let expert = make_expert(&env, &env.default_shaping()).unwrap();
    let data = collect_dataset(&env, &expert, 0.0, steps, 5).unwrap();
    (env, data)
}

fn seen_actions(data: &Dataset) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut seen: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for t in &data.transitions {
        seen.entry(t.s.index().unwrap()).or_default().insert(t.a.index().unwrap());
    }
    seen
}

#[test]
fn large_penalty_ranks_unseen_actions_below_seen_ones() {
    let (env, data) = expert_data(3000);
    let cfg = OfflineConfig {
        lambda: 100.0,
        ..OfflineConfig::default()
    };
    let q = q_table(&train_offline_discrete(&env, &data, &cfg).unwrap(), &env, 25);
    for (s, acts) in seen_actions(&data) {
        for unseen in (0..4).filter(|a| !acts.contains(a)) {
            for &a in &acts {
                assert!(q[s][unseen] < q[s][a], "state {s}: Q(unseen {unseen}) {} vs Q({a}) {}", q[s][unseen], q[s][a]);
            }
        }
    }
}

#[test]
fn penalty_depresses_unseen_actions_on_average() {
    let (env, data) = expert_data(3000);
    let seen = seen_actions(&data);
    let unseen_mean = |lambda: f64| {
        let cfg = OfflineConfig {
            lambda,
            ..OfflineConfig::default()
        };
        let q = q_table(&train_offline_discrete(&env, &data, &cfg).unwrap(), &env, 25);
        let per_state: Vec<f64> = seen
            .iter()
            .filter(|(_, acts)| acts.len() < 4)
            .map(|(&s, acts)| {
                let vals: Vec<f64> = (0..4).filter(|a| !acts.contains(a)).map(|a| q[s][a]).collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect();
        per_state.iter().sum::<f64>() / per_state.len() as f64
    };
    let (none, strong) = (unseen_mean(0.0), unseen_mean(100.0));
    assert!(strong <= none, "lambda=100 {strong} vs lambda=0 {none}");
}

#[test]
fn training_lowers_the_bellman_residual() {
    for (id, arch, steps, epochs) in [
        ("grid5", Arch::Tabular, 20_000, 30),
        ("queue2", Arch::Tabular, 20_000, 30),
        ("grid5", Arch::Mlp, 3000, 10),
    ] {
        let env = Env::from_id(id).unwrap();
        let expert = make_expert(&env, &env.default_shaping()).unwrap();
        let data = collect_dataset(&env, &expert, 0.2, steps, 1).unwrap();
        let cfg = OfflineConfig {
            lambda: 0.0,
            epochs,
            arch,
            seed: 2,
            ..OfflineConfig::default()
        };
        let init = init_q(&env, arch, &mut rng_from_seed(cfg.seed)).unwrap();
        let before = mean_bellman_residual(&init, &env, &data.transitions).unwrap();
        let trained = train_offline_discrete(&env, &data, &cfg).unwrap();
        let after = mean_bellman_residual(&trained, &env, &data.transitions).unwrap();
        assert!(after < before, "{id} {arch:?}: {after} >= {before}");
    }
}

#[test]
fn mlp_and_tabular_agree_on_the_expert_route() {
    let (env, data) = expert_data(3000);
    let train = |arch| {
        let cfg = OfflineConfig {
            lambda: 5.0,
            arch,
            ..OfflineConfig::default()
        };
        train_offline_discrete(&env, &data, &cfg).unwrap()
    };
    let (tab, mlp) = (train(Arch::Tabular), train(Arch::Mlp));
    let greedy = |m: &QModel64, s: usize| {
        let row = m.q_row(&q_input(m, &env, &State::Index(s)).unwrap()).unwrap();
        hitl_core::scalar::argmax(&row)
    };
    for s in seen_actions(&data).keys() {
        assert_eq!(greedy(&tab, *s), greedy(&mlp, *s), "state {s}");
    }
}

fn pointmass_expert_data(steps: usize) -> (Env, Dataset) {
    let env = Env::from_id("pointmass").unwrap();
    let expert = make_expert(&env, &env.default_shaping()).unwrap();
    let data = collect_dataset(&env, &expert, 0.0, steps, 3).unwrap();
    (env, data)
}

#[test]
fn heavy_imitation_weight_reproduces_the_data() {
    let (env, data) = pointmass_expert_data(2000);
    let cfg = OfflineConfig {
        lambda: 1000.0,
        arch: Arch::Mlp,
        ..OfflineConfig::default()
    };
    let ac = train_offline_continuous(&env, &data, &cfg).unwrap();
    let mse = data
        .transitions
        .iter()
        .map(|t| {
            let a = ac.actor.act(&env.encode(&t.s).unwrap()).unwrap()[0];
            (a - t.a.vector().unwrap()[0]).powi(2)
        })
        .sum::<f64>()
        / data.len() as f64;
    assert!(mse < 0.01, "{mse}");
}

struct Bowl(f64);

impl ActionValue<f64> for Bowl {
    fn value_and_action_grad(&self, _s: &[f64], a: &[f64]) -> hitl_core::Result<(f64, Vec<f64>)> {
        Ok((-(a[0] - self.0).powi(2), vec![-2.0 * (a[0] - self.0)]))
    }
}

#[test]
fn actor_climbs_a_frozen_critic() {
    let (env, data) = pointmass_expert_data(1000);
    let mut rng = rng_from_seed(4);
    let mut actor = MlpActor::xavier(2, vec![-1.0], vec![1.0], &mut rng).unwrap();
    let mut opt = OptimState::new(actor.n_params(), 1e-3);
    fit_actor(&mut actor, &mut opt, &Bowl(0.3), &env, &data.transitions, 0.0, 30, 64, &mut rng).unwrap();
    for t in &data.transitions {
        let a = actor.act(&env.encode(&t.s).unwrap()).unwrap()[0];
        assert!((a - 0.3).abs() < 0.02, "{a}");
    }
}

fn serialized(set: &[Candidate], lambdas: &[f64]) -> Vec<String> {
    set.iter()
        .zip(lambdas)
        .map(|(m, &lambda)| {
            model_to_string(&ModelFile {
                env_id: "grid5".into(),
                lambda,
                model: m.clone(),
            })
            .unwrap()
        })
        .collect()
}

#[test]
fn same_master_seed_same_models() {
    let env = Env::from_id("grid5").unwrap();
    let expert = make_expert(&env, &env.default_shaping()).unwrap();
    let data_cfg = DataConfig {
        n_steps: 2000,
        ..DataConfig::default()
    };
    let template = OfflineConfig {
        arch: Arch::Mlp,
        epochs: 3,
        ..OfflineConfig::default()
    };
    let lambdas = [0.0, 1.0, 5.0, 10.0, 100.0];
    let (_, a) = build_candidates(&env, &expert, &lambdas, &data_cfg, &template, 11).unwrap();
    let (_, b) = build_candidates(&env, &expert, &lambdas, &data_cfg, &template, 11).unwrap();
    assert_eq!(a.len(), 5);
    assert_eq!(serialized(&a.models, &lambdas), serialized(&b.models, &lambdas));
    let (_, c) = build_candidates(&env, &expert, &lambdas, &data_cfg, &template, 12).unwrap();
    assert_ne!(serialized(&a.models, &lambdas), serialized(&c.models, &lambdas));
}

#[test]
fn retraining_from_a_saved_dataset_is_bit_exact() {
    for id in ["grid5", "pointmass"] {
        let env = Env::from_id(id).unwrap();
        let expert = make_expert(&env, &env.default_shaping()).unwrap();
        let data = collect_dataset(&env, &expert, 0.2, 500, 8).unwrap();
        let reloaded = dataset_from_str(&dataset_to_string(&data).unwrap()).unwrap();
        assert_eq!(reloaded, data);
        let template = OfflineConfig {
            arch: Arch::Mlp,
            epochs: 2,
            ..OfflineConfig::default()
        };
        let a = train_candidates(&env, &data, &[1.0], &template, 3).unwrap();
        let b = train_candidates(&env, &reloaded, &[1.0], &template, 3).unwrap();
        assert_eq!(a.models, b.models, "{id}");
    }
}

#[test]
fn one_lambda_gives_one_candidate() {
    let env = Env::from_id("queue2").unwrap();
    let expert = make_expert(&env, &env.default_shaping()).unwrap();
    let data_cfg = DataConfig {
        n_steps: 300,
        ..DataConfig::default()
    };
    let (_, set) = build_candidates(&env, &expert, &[1.0], &data_cfg, &OfflineConfig::default(), 0).unwrap();
    assert_eq!(set.len(), 1);
    assert!(build_candidates(&env, &expert, &[], &data_cfg, &OfflineConfig::default(), 0).is_err());
}

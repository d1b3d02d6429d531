//! Model and dataset files.
//!
//! Models are one JSON document; datasets are JSON lines, a header followed
//! by one `[s, a, r, s_next, done]` record per transition. Every float is
//! written with 17 significant digits, so reading a file back reproduces the
//! parameters bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::approx::{Mlp, MlpActor, MlpQ, Parameterized, QModel, TabularQ};
use crate::env::{Action, Env, State};
use crate::offline::{ActorCritic, Behavior, Candidate, Dataset, Transition};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u64 = 1;
pub const DATASET_FORMAT_VERSION: u64 = 1;

/// A candidate together with what it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub env_id: String,
    pub lambda: f64,
    pub model: Candidate,
}

/// `x` as a JSON number with 17 significant digits.
fn num(x: f64) -> Result<Box<RawValue>> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("cannot store non-finite value {x}")));
    }
    RawValue::from_string(format!("{x:.16e}")).map_err(|e| Error::Invariant(e.to_string()))
}

fn nums(xs: &[f64]) -> Result<Vec<Box<RawValue>>> {
    xs.iter().map(|&x| num(x)).collect()
}

/// Byte offset of a serde_json error inside `text`.
fn byte_offset(text: &str, err: &serde_json::Error) -> usize {
    if err.line() == 0 {
        return text.len();
    }
    let line_start: usize = text.split_inclusive('\n').take(err.line() - 1).map(str::len).sum();
    (line_start + err.column().saturating_sub(1)).min(text.len())
}

fn parse_err(text: &str, base: usize, err: serde_json::Error) -> Error {
    let offset = base + byte_offset(text, &err);
    Error::Parse {
        offset,
        message: err.to_string(),
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

fn check_version(text: &str, base: usize, expected: u64) -> Result<()> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| parse_err(text, base, e))?;
    if probe.format_version != expected {
        return Err(Error::Version {
            found: probe.format_version,
            expected,
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct NetworkOut {
    role: &'static str,
    layer_sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    action_low: Option<Vec<Box<RawValue>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    action_high: Option<Vec<Box<RawValue>>>,
    parameters: Vec<Box<RawValue>>,
}

#[derive(Serialize)]
struct ModelOut<'a> {
    format_version: u64,
    env_id: &'a str,
    kind: &'a str,
    lambda: Box<RawValue>,
    networks: Vec<NetworkOut>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkIn {
    role: String,
    layer_sizes: Vec<usize>,
    #[serde(default)]
    action_low: Option<Vec<f64>>,
    #[serde(default)]
    action_high: Option<Vec<f64>>,
    parameters: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelIn {
    #[allow(dead_code)]
    format_version: u64,
    env_id: String,
    kind: String,
    lambda: f64,
    networks: Vec<NetworkIn>,
}

fn plain(role: &'static str, sizes: Vec<usize>, params: &[f64]) -> Result<NetworkOut> {
    Ok(NetworkOut {
        role,
        layer_sizes: sizes,
        action_low: None,
        action_high: None,
        parameters: nums(params)?,
    })
}

pub fn model_to_string(file: &ModelFile) -> Result<String> {
    let networks = match &file.model {
        Candidate::Discrete(QModel::Tabular(t)) => {
            vec![plain("q", vec![t.n_states(), t.n_actions()], t.params())?]
        }
        Candidate::Discrete(QModel::Mlp(m)) => vec![plain("q", m.net().sizes().to_vec(), m.params())?],
        Candidate::Continuous(ac) => vec![
            NetworkOut {
                role: "actor",
                layer_sizes: ac.actor.net().sizes().to_vec(),
                action_low: Some(nums(ac.actor.low())?),
                action_high: Some(nums(ac.actor.high())?),
                parameters: nums(ac.actor.params())?,
            },
            plain("critic", ac.critic.net().sizes().to_vec(), ac.critic.params())?,
        ],
    };
    let out = ModelOut {
        format_version: MODEL_FORMAT_VERSION,
        env_id: &file.env_id,
        kind: file.model.kind(),
        lambda: num(file.lambda)?,
        networks,
    };
    let mut s = serde_json::to_string_pretty(&out).map_err(|e| Error::Invariant(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn take_network<'a>(nets: &'a [NetworkIn], role: &str) -> Result<&'a NetworkIn> {
    nets.iter()
        .find(|n| n.role == role)
        .ok_or_else(|| Error::InvalidArgument(format!("model file has no `{role}` network")))
}

pub fn model_from_str(text: &str) -> Result<ModelFile> {
    check_version(text, 0, MODEL_FORMAT_VERSION)?;
    let m: ModelIn = serde_json::from_str(text).map_err(|e| parse_err(text, 0, e))?;
    let model = match m.kind.as_str() {
        "tabular-q" => {
            let n = take_network(&m.networks, "q")?;
            if n.layer_sizes.len() != 2 {
                return Err(Error::InvalidArgument("a table needs [n_states, n_actions]".into()));
            }
            let t = TabularQ::from_values(n.layer_sizes[0], n.layer_sizes[1], n.parameters.clone())?;
            Candidate::Discrete(QModel::Tabular(t))
        }
        "mlp-q" => {
            let n = take_network(&m.networks, "q")?;
            let net = Mlp::from_params(&n.layer_sizes, n.parameters.clone())?;
            Candidate::Discrete(QModel::Mlp(MlpQ::new(net)))
        }
        "actor-critic" => {
            let a = take_network(&m.networks, "actor")?;
            let c = take_network(&m.networks, "critic")?;
            let (low, high) = match (&a.action_low, &a.action_high) {
                (Some(l), Some(h)) => (l.clone(), h.clone()),
                _ => return Err(Error::InvalidArgument("actor network needs action_low and action_high".into())),
            };
            let actor = MlpActor::new(Mlp::from_params(&a.layer_sizes, a.parameters.clone())?, low, high)?;
            let critic = MlpQ::new(Mlp::from_params(&c.layer_sizes, c.parameters.clone())?);
            Candidate::Continuous(ActorCritic { actor, critic })
        }
        other => return Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
    };
    Ok(ModelFile {
        env_id: m.env_id,
        lambda: m.lambda,
        model,
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    write(path, &model_to_string(file)?)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = read(path)?;
    model_from_str(&text).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Checks that a loaded model fits `env`.
pub fn check_model_env(file: &ModelFile, env: &Env) -> Result<()> {
    if file.env_id != env.id() {
        return Err(Error::InvalidArgument(format!(
            "model was trained on `{}`, not `{}`",
            file.env_id,
            env.id()
        )));
    }
    let fits = match &file.model {
        Candidate::Discrete(QModel::Tabular(t)) => {
            env.n_states() == Some(t.n_states()) && env.n_actions() == Some(t.n_actions())
        }
        Candidate::Discrete(QModel::Mlp(m)) => {
            m.net().input_dim() == env.encoded_dim() && env.n_actions() == Some(m.net().output_dim())
        }
        Candidate::Continuous(ac) => {
            !env.is_discrete()
                && ac.actor.net().input_dim() == env.encoded_dim()
                && ac.actor.net().output_dim() == env.action_dim()
                && ac.critic.net().input_dim() == env.encoded_dim() + env.action_dim()
        }
    };
    if !fits {
        return Err(Error::InvalidArgument(format!(
            "{} model does not match the shape of `{}`",
            file.model.kind(),
            env.id()
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    format_version: u64,
    env_id: String,
    epsilon: f64,
    expert: String,
    seed: u64,
    transitions: usize,
}

fn state_json(s: &State) -> Result<Box<RawValue>> {
    match s {
        State::Index(i) => RawValue::from_string(i.to_string()).map_err(|e| Error::Invariant(e.to_string())),
        State::Vector(v) => vec_json(v),
    }
}

fn action_json(a: &Action) -> Result<Box<RawValue>> {
    match a {
        Action::Index(i) => RawValue::from_string(i.to_string()).map_err(|e| Error::Invariant(e.to_string())),
        Action::Vector(v) => vec_json(v),
    }
}

fn vec_json(v: &[f64]) -> Result<Box<RawValue>> {
    let parts = v.iter().map(|&x| num(x).map(|r| r.get().to_string())).collect::<Result<Vec<_>>>()?;
    RawValue::from_string(format!("[{}]", parts.join(","))).map_err(|e| Error::Invariant(e.to_string()))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Point {
    Index(usize),
    Vector(Vec<f64>),
}

pub fn dataset_to_string(data: &Dataset) -> Result<String> {
    let header = DatasetHeader {
        format_version: DATASET_FORMAT_VERSION,
        env_id: data.env_id.clone(),
        epsilon: data.behavior.epsilon,
        expert: data.behavior.expert.clone(),
        seed: data.seed,
        transitions: data.len(),
    };
    let mut out = serde_json::to_string(&header).map_err(|e| Error::Invariant(e.to_string()))?;
    out.push('\n');
    for t in &data.transitions {
        out.push_str(&format!(
            "[{},{},{},{},{}]\n",
            state_json(&t.s)?.get(),
            action_json(&t.a)?.get(),
            num(t.r)?.get(),
            state_json(&t.s_next)?.get(),
            t.done
        ));
    }
    Ok(out)
}

pub fn dataset_from_str(text: &str) -> Result<Dataset> {
    let mut lines = text.split_inclusive('\n');
    let first = lines.next().ok_or(Error::Parse {
        offset: 0,
        message: "empty dataset file".into(),
    })?;
    check_version(first, 0, DATASET_FORMAT_VERSION)?;
    let header: DatasetHeader = serde_json::from_str(first).map_err(|e| parse_err(first, 0, e))?;
    let mut offset = first.len();
    let mut transitions = Vec::with_capacity(header.transitions);
    for line in lines {
        if line.trim().is_empty() {
            offset += line.len();
            continue;
        }
        let (s, a, r, s2, done): (Point, Point, f64, Point, bool) =
            serde_json::from_str(line).map_err(|e| parse_err(line, offset, e))?;
        let state = |p: Point| match p {
            Point::Index(i) => State::Index(i),
            Point::Vector(v) => State::Vector(v),
        };
        let a = match a {
            Point::Index(i) => Action::Index(i),
            Point::Vector(v) => Action::Vector(v),
        };
        transitions.push(Transition {
            s: state(s),
            a,
            r,
            s_next: state(s2),
            done,
        });
        offset += line.len();
    }
    if transitions.len() != header.transitions {
        return Err(Error::Parse {
            offset,
            message: format!(
                "header announces {} transitions, file holds {}",
                header.transitions,
                transitions.len()
            ),
        });
    }
    Ok(Dataset {
        env_id: header.env_id,
        behavior: Behavior {
            epsilon: header.epsilon,
            expert: header.expert,
        },
        seed: header.seed,
        transitions,
    })
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write(path, &dataset_to_string(data)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_str(&read(path)?)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    read(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from_seed;
    use rand::Rng;

    #[test]
    fn tabular_round_trip_is_bit_exact() {
        let mut rng = rng_from_seed(3);
        let vals: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0) / 3.0).collect();
        let file = ModelFile {
            env_id: "x".into(),
            lambda: 0.1,
            model: Candidate::Discrete(QModel::Tabular(TabularQ::from_values(3, 4, vals).unwrap())),
        };
        let back = model_from_str(&model_to_string(&file).unwrap()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn other_versions_are_refused() {
        let text = r#"{"format_version": 0, "env_id": "grid5"}"#;
        assert!(matches!(
            model_from_str(text),
            Err(Error::Version { found: 0, expected: 1 })
        ));
    }

    #[test]
    fn truncation_reports_an_offset() {
        let file = ModelFile {
            env_id: "x".into(),
            lambda: 1.0,
            model: Candidate::Discrete(QModel::Tabular(TabularQ::zeros(2, 2))),
        };
        let text = model_to_string(&file).unwrap();
        let cut = &text[..text.len() / 2];
        match model_from_str(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn dataset_with_missing_records_is_rejected() {
        let data = Dataset {
            env_id: "grid5".into(),
            behavior: Behavior {
                epsilon: 0.2,
                expert: "oracle".into(),
            },
            seed: 4,
            transitions: vec![
                Transition {
                    s: State::Index(0),
                    a: Action::Index(1),
                    r: -0.01,
                    s_next: State::Index(5),
                    done: false,
                };
                3
            ],
        };
        let text = dataset_to_string(&data).unwrap();
        assert_eq!(dataset_from_str(&text).unwrap(), data);
        let short: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        match dataset_from_str(&short) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, short.len()),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }
}

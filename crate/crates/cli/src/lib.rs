//! Command-line front end for the `hitl` binary.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hitl_core::env::{make_expert, Env, Policy};
use hitl_core::finetune::{run_finetuning, FinetuneConfig};
use hitl_core::harness::persist::check_model_env;
use hitl_core::harness::tables::{episodes_csv, finetune_csv, selection_csv};
use hitl_core::harness::{
    load_dataset, load_model, reproduce_paper_protocol, save_dataset, save_model, summarize_files, ExperimentConfig,
    Mode, ModelFile, ReportOptions,
};
use hitl_core::offline::{collect_dataset, train_candidates, Arch, CandidateSet, OfflineConfig};
use hitl_core::scoring::{ScoreParams, DEFAULT_TAU};
use hitl_core::seeds::derive_seed;
use hitl_core::select::{
    baseline_highest_q, candidate_values, oracle_arm, run_baseline, run_selection_with,
};

#[derive(Parser, Debug)]
#[command(name = "hitl", version, about = "Offline RL candidates, UCB deployment and expert-override fine-tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll out the ε-greedy expert and write a dataset file.
    GenDataset(GenDataset),
    /// Train one candidate per λ on a dataset.
    TrainOffline(TrainOffline),
    /// Deploy one model under supervision for a number of episodes.
    Eval(Eval),
    /// Run UCB or a baseline selector over a candidate directory.
    Select(Select),
    /// Deploy a model with expert overrides and fine-tune it on them.
    Finetune(Finetune),
    /// Summarize trace files as mean ± std tables.
    Report(Report),
    /// Run the full experiment from a config file.
    Reproduce(Reproduce),
}

#[derive(Args, Debug)]
struct ScoreFlags {
    /// Weight on the episode return.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Cost of one disagreement.
    #[arg(long)]
    alpha2: Option<f64>,
}

impl ScoreFlags {
    fn params(&self, env: &Env, tau: f64) -> anyhow::Result<ScoreParams> {
        let d = ScoreParams::for_env(env);
        Ok(ScoreParams::new(
            self.alpha1.unwrap_or(d.alpha1),
            self.alpha2.unwrap_or(d.alpha2),
            tau,
            d.horizon,
        )?)
    }
}

#[derive(Args, Debug)]
struct GenDataset {
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArchArg {
    Tabular,
    Mlp,
}

#[derive(Args, Debug)]
struct TrainOffline {
    #[arg(long)]
    env: String,
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated penalty scales.
    #[arg(long, value_delimiter = ',', default_value = "0,1,5,10,100")]
    lambdas: Vec<f64>,
    /// Defaults to tabular on finite environments, mlp otherwise.
    #[arg(long, value_enum)]
    arch: Option<ArchArg>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    minibatch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for model-<i>.json files.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct Eval {
    #[arg(long)]
    env: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[command(flatten)]
    score: ScoreFlags,
    /// Written to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Ucb,
    HighestQ,
    RandomEnsemble,
    Oracle,
}

#[derive(Args, Debug)]
struct Select {
    #[arg(long)]
    env: String,
    /// Directory holding model-0.json, model-1.json, ...
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long, value_enum, default_value = "ucb")]
    method: Method,
    #[arg(long = "K", default_value_t = 100)]
    k: u64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Offline dataset, needed by highest-q.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[command(flatten)]
    score: ScoreFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Finetune {
    #[arg(long)]
    env: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "K", default_value_t = 200)]
    k: u64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    minibatch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Weight of the imitation term in the continuous actor update.
    #[arg(long, default_value_t = 1.0)]
    bc_weight: f64,
    /// Keep every logged override instead of clearing the log each iteration.
    #[arg(long)]
    replay: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    score: ScoreFlags,
    #[arg(long)]
    out: PathBuf,
    /// Also write the fine-tuned model.
    #[arg(long)]
    save_model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Report {
    /// Trace file; repeat for several runs.
    #[arg(long = "trace", required = true)]
    traces: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    last: usize,
    #[arg(long, default_value_t = 20)]
    window: usize,
    #[arg(long, default_value_t = 2)]
    digits: usize,
}

#[derive(Args, Debug)]
struct Reproduce {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with_all = ["env", "mode", "seed"])]
    config: Option<PathBuf>,
    /// Without a config: environment to run with defaults.
    #[arg(long)]
    env: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Select,
    Finetune,
    Eval,
    Full,
}

fn env_by_id(id: &str) -> anyhow::Result<Env> {
    Ok(Env::from_id(id)?)
}

fn expert_for(env: &Env) -> anyhow::Result<Policy> {
    Ok(Policy::Expert(make_expert(env, &env.default_shaping())?))
}

fn load_model_for(path: &Path, env: &Env) -> anyhow::Result<ModelFile> {
    let file = load_model(path)?;
    check_model_env(&file, env).with_context(|| format!("{}", path.display()))?;
    Ok(file)
}

fn write_out(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen_dataset(a: GenDataset) -> anyhow::Result<()> {
    let env = env_by_id(&a.env)?;
    let expert = make_expert(&env, &env.default_shaping())?;
    if !(0.0..=1.0).contains(&a.epsilon) {
        bail!("--epsilon must lie in [0, 1]");
    }
    let data = collect_dataset(&env, &expert, a.epsilon, a.steps, derive_seed(a.seed, "dataset", 0))?;
    save_dataset(&a.out, &data)?;
    Ok(())
}

fn train_offline(a: TrainOffline) -> anyhow::Result<()> {
    let env = env_by_id(&a.env)?;
    let data = load_dataset(&a.dataset)?;
    let arch = match a.arch {
        Some(ArchArg::Tabular) => Arch::Tabular,
        Some(ArchArg::Mlp) => Arch::Mlp,
        None if env.is_discrete() => Arch::Tabular,
        None => Arch::Mlp,
    };
    let template = OfflineConfig {
        epochs: a.epochs,
        minibatch: a.minibatch,
        lr: a.lr,
        arch,
        ..OfflineConfig::default()
    };
    let set = train_candidates(&env, &data, &a.lambdas, &template, a.seed)?;
    for (i, (m, &lambda)) in set.models.iter().zip(&set.lambdas).enumerate() {
        let file = ModelFile {
            env_id: env.id().to_string(),
            lambda,
            model: m.clone(),
        };
        save_model(&a.out_dir.join(format!("model-{i}.json")), &file)?;
    }
    Ok(())
}

fn eval(a: Eval) -> anyhow::Result<()> {
    let env = env_by_id(&a.env)?;
    let file = load_model_for(&a.model, &env)?;
    let params = a.score.params(&env, a.tau)?;
    let eps = hitl_core::harness::evaluate(
        &file.model.policy(),
        &expert_for(&env)?,
        &env,
        &params,
        a.episodes,
        derive_seed(a.seed, "eval", 0),
    )?;
    let text = episodes_csv(a.seed, 0, &eps);
    match &a.out {
        Some(p) => write_out(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `model-<i>.json` files of a directory, which must be numbered from 0.
fn load_candidates(dir: &Path, env: &Env) -> anyhow::Result<CandidateSet> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut indexed = Vec::new();
    for e in entries {
        let path = e?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(i) = name.strip_prefix("model-").and_then(|n| n.strip_suffix(".json")) {
            if let Ok(i) = i.parse::<usize>() {
                indexed.push((i, path));
            }
        }
    }
    indexed.sort();
    if indexed.is_empty() {
        bail!("{} holds no model-<i>.json files", dir.display());
    }
    let mut set = CandidateSet {
        env_id: env.id().to_string(),
        lambdas: Vec::new(),
        models: Vec::new(),
    };
    for (pos, (i, path)) in indexed.into_iter().enumerate() {
        if i != pos {
            bail!("{}: candidates must be numbered 0, 1, ... without gaps (missing model-{pos}.json)", dir.display());
        }
        let f = load_model_for(&path, env)?;
        set.lambdas.push(f.lambda);
        set.models.push(f.model);
    }
    Ok(set)
}

fn select(a: Select) -> anyhow::Result<()> {
    let env = env_by_id(&a.env)?;
    let expert = expert_for(&env)?;
    let params = a.score.params(&env, a.tau)?;
    let set = load_candidates(&a.candidates, &env)?;
    let values = candidate_values(&set, &env, &expert, &params, a.seed)?;
    let best = oracle_arm(&values);
    let s_star = values[best].value;
    let trace = match a.method {
        Method::Ucb => run_selection_with(&set, &env, &expert, &params, a.k, a.beta, s_star, a.seed)?,
        Method::HighestQ => {
            let path = a.dataset.as_ref().context("--method highest-q needs --dataset")?;
            let arm = baseline_highest_q(&set, &env, &load_dataset(path)?)?;
            run_baseline(&set, &env, &expert, &params, a.k, Some(arm), s_star, a.seed)?
        }
        Method::RandomEnsemble => run_baseline(&set, &env, &expert, &params, a.k, None, s_star, a.seed)?,
        Method::Oracle => run_baseline(&set, &env, &expert, &params, a.k, Some(best), s_star, a.seed)?,
    };
    write_out(&a.out, &selection_csv(&trace.records))
}

fn finetune(a: Finetune) -> anyhow::Result<()> {
    let env = env_by_id(&a.env)?;
    let file = load_model_for(&a.model, &env)?;
    let params = a.score.params(&env, a.tau)?;
    let cfg = FinetuneConfig {
        tau: a.tau,
        delta: a.delta,
        epochs: a.epochs,
        minibatch: a.minibatch,
        lr: a.lr,
        k_iters: a.k,
        bc_weight: a.bc_weight,
        replay: a.replay,
        ..FinetuneConfig::default()
    };
    let trace = run_finetuning(&file.model, &expert_for(&env)?, &env, &params, &cfg, a.seed)?;
    write_out(&a.out, &finetune_csv(&trace.records))?;
    if let Some(p) = &a.save_model {
        save_model(
            p,
            &ModelFile {
                model: trace.model,
                ..file
            },
        )?;
    }
    Ok(())
}

fn report(a: Report) -> anyhow::Result<()> {
    let opts = ReportOptions {
        last: a.last,
        window: a.window,
        digits: a.digits,
    };
    if opts.last == 0 || opts.window == 0 {
        bail!("--last and --window must be at least 1");
    }
    print!("{}", summarize_files(&a.traces, &opts)?);
    Ok(())
}

fn reproduce(a: Reproduce) -> anyhow::Result<()> {
    let mut cfg = match (&a.config, &a.env) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(env)) => {
            let mode = match a.mode.unwrap_or(ModeArg::Full) {
                ModeArg::Select => Mode::Select,
                ModeArg::Finetune => Mode::Finetune,
                ModeArg::Eval => Mode::Eval,
                ModeArg::Full => Mode::Full,
            };
            let seed = a.seed.context("--seed is required without --config")?;
            ExperimentConfig::new(env, mode, seed)
        }
        (None, None) => bail!("reproduce needs --config or --env"),
    };
    if let Some(dir) = a.out_dir {
        cfg.output.dir = dir;
    }
    cfg.validate()?;
    let out = reproduce_paper_protocol(&cfg)?;
    print!("{}", out.summary);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenDataset(a) => gen_dataset(a),
        Command::TrainOffline(a) => train_offline(a),
        Command::Eval(a) => eval(a),
        Command::Select(a) => select(a),
        Command::Finetune(a) => finetune(a),
        Command::Report(a) => report(a),
        Command::Reproduce(a) => reproduce(a),
    }
}

/// The error chain joined by `: `, skipping causes the outer message
/// already spells out.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on a runtime failure, 2 on bad usage.
pub fn cli_main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            1
        }
    }
}

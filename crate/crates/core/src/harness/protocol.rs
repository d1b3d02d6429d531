//! The end-to-end experiment: candidates over a λ grid, selection against
//! the baselines, fine-tuning of the worst candidate, summary tables.
//!
//! Layout of a run directory:
//!
//! ```text
//! candidates.csv                  expected score of every candidate, all runs
//! selection/<method>-seed<r>.csv  ucb, highest-q, random-ensemble, oracle
//! finetune/worst-seed<r>.csv
//! episodes/candidates-seed<r>.csv
//! models/seed<r>/model-<i>.json   (output.save_models)
//! data/seed<r>.jsonl              (output.save_datasets)
//! summary.txt
//! manifest.toml
//! ```

use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::manifest::RunManifest;
use super::persist::{load_dataset, save_dataset, save_model, write_text, ModelFile};
use super::report::{summarize, ReportOptions};
use super::tables::{candidates_csv, episode_blocks_csv, finetune_csv, selection_csv, CandidateRow, Table};
use crate::env::{make_expert, Env, Policy};
use crate::finetune::run_finetuning;
use crate::offline::{build_candidates, train_candidates};
use crate::scalar::argmax;
use crate::scoring::{rollout_episode, EpisodeLog, ScoreParams};
use crate::seeds::{derive_seed, rng_from_seed};
use crate::select::{baseline_highest_q, candidate_values, oracle_arm, run_baseline, run_selection_with, SelectionTrace};
use crate::Result;

/// Selection methods in the order they are reported.
pub const METHODS: [&str; 4] = ["ucb", "highest-q", "random-ensemble", "oracle"];

/// `n` supervised episodes of `policy` from a seeded stream.
pub fn evaluate(policy: &Policy, expert: &Policy, env: &Env, params: &ScoreParams, n: usize, seed: u64) -> Result<Vec<EpisodeLog>> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| rollout_episode(policy, expert, env, params, &mut rng, false))
        .collect()
}

/// Which arm each selector settled on in one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct Choices {
    pub oracle: usize,
    pub highest_q: Option<usize>,
    pub worst: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub summary: String,
    pub manifest: RunManifest,
    pub choices: Vec<Choices>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<(String, Table)>,
    manifest: RunManifest,
}

impl Writer<'_> {
    fn put(&mut self, rel: String, text: &str) -> Result<()> {
        write_text(&self.dir.join(&rel), text)?;
        self.manifest.add_file(self.dir, &rel)?;
        Ok(())
    }

    fn put_table(&mut self, rel: String, text: String) -> Result<()> {
        self.put(rel.clone(), &text)?;
        self.files.push((rel, super::tables::parse_table(&text)?));
        Ok(())
    }

    fn tables(&self, prefix: &str) -> Vec<(PathBuf, Table)> {
        self.files
            .iter()
            .filter(|(rel, _)| rel.starts_with(prefix))
            .map(|(rel, t)| (PathBuf::from(rel), t.clone()))
            .collect()
    }
}

pub fn reproduce_paper_protocol(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let env = Env::from_id(&cfg.env)?;
    let expert_rule = make_expert(&env, &env.default_shaping())?;
    let expert = Policy::Expert(expert_rule.clone());
    let params = cfg.score_params(&env)?;
    let template = cfg.offline_template(&env)?;
    let lambdas = &cfg.train.lambdas;
    let shared = cfg.data.path.as_deref().map(load_dataset).transpose()?;
    let dir = cfg.output.dir.as_path();
    let mut w = Writer {
        dir,
        files: Vec::new(),
        manifest: RunManifest::new(cfg.hash()?),
    };
    let mut candidate_rows = Vec::new();
    let mut choices = Vec::new();

    for rep in 0..cfg.repetitions {
        let master = derive_seed(cfg.seed, "repetition", rep);
        let seeds = &mut w.manifest.seeds;
        seeds.insert(format!("{rep}/repetition"), master.to_string());
        let (data, set) = match &shared {
            Some(d) => (d.clone(), train_candidates(&env, d, lambdas, &template, master)?),
            None => {
                seeds.insert(format!("{rep}/dataset"), derive_seed(master, "dataset", 0).to_string());
                build_candidates(&env, &expert_rule, lambdas, &cfg.data_config(), &template, master)?
            }
        };
        for i in 0..set.len() as u64 {
            seeds.insert(format!("{rep}/train-{i}"), derive_seed(master, "train", i).to_string());
            seeds.insert(format!("{rep}/oracle-{i}"), derive_seed(master, "oracle", i).to_string());
        }

        let values = candidate_values(&set, &env, &expert, &params, master)?;
        let best = oracle_arm(&values);
        let s_star = values[best].value;
        let worst = argmax(&values.iter().map(|v| -v.value).collect::<Vec<_>>());
        for (i, v) in values.iter().enumerate() {
            candidate_rows.push(CandidateRow {
                seed: rep,
                model_id: i,
                lambda: set.lambdas[i],
                value: *v,
            });
        }
        if cfg.output.save_models {
            for (i, m) in set.models.iter().enumerate() {
                let rel = format!("models/seed{rep}/model-{i}.json");
                let file = ModelFile {
                    env_id: env.id().to_string(),
                    lambda: set.lambdas[i],
                    model: m.clone(),
                };
                save_model(&dir.join(&rel), &file)?;
                w.manifest.add_file(dir, &rel)?;
            }
        }
        if cfg.output.save_datasets && shared.is_none() {
            let rel = format!("data/seed{rep}.jsonl");
            save_dataset(&dir.join(&rel), &data)?;
            w.manifest.add_file(dir, &rel)?;
        }

        let mut highest_q = None;
        if let Some(sel) = &cfg.select {
            let seeds = &mut w.manifest.seeds;
            seeds.insert(format!("{rep}/deploy"), derive_seed(master, "deploy", 0).to_string());
            seeds.insert(format!("{rep}/random-ensemble"), derive_seed(master, "random-ensemble", 0).to_string());
            let hq = baseline_highest_q(&set, &env, &data)?;
            highest_q = Some(hq);
            let traces: [SelectionTrace; 4] = [
                run_selection_with(&set, &env, &expert, &params, sel.k, sel.beta, s_star, master)?,
                run_baseline(&set, &env, &expert, &params, sel.k, Some(hq), s_star, master)?,
                run_baseline(&set, &env, &expert, &params, sel.k, None, s_star, master)?,
                run_baseline(&set, &env, &expert, &params, sel.k, Some(best), s_star, master)?,
            ];
            for (name, t) in METHODS.iter().zip(&traces) {
                w.put_table(format!("selection/{name}-seed{rep}.csv"), selection_csv(&t.records))?;
            }
        }
        if let Some(ev) = &cfg.eval {
            let blocks = set
                .models
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let seed = derive_seed(master, "eval", i as u64);
                    Ok((rep, i, evaluate(&m.policy(), &expert, &env, &params, ev.episodes, seed)?))
                })
                .collect::<Result<Vec<_>>>()?;
            for i in 0..set.len() as u64 {
                w.manifest.seeds.insert(format!("{rep}/eval-{i}"), derive_seed(master, "eval", i).to_string());
            }
            w.put_table(format!("episodes/candidates-seed{rep}.csv"), episode_blocks_csv(&blocks))?;
        }
        if let Some(ft) = cfg.finetune_config() {
            let seeds = &mut w.manifest.seeds;
            seeds.insert(format!("{rep}/finetune-deploy"), derive_seed(master, "finetune-deploy", 0).to_string());
            seeds.insert(format!("{rep}/finetune-train"), derive_seed(master, "finetune-train", 0).to_string());
            let trace = run_finetuning(&set.models[worst], &expert, &env, &params, &ft, master)?;
            w.put_table(format!("finetune/worst-seed{rep}.csv"), finetune_csv(&trace.records))?;
        }
        choices.push(Choices {
            oracle: best,
            highest_q,
            worst,
        });
    }
    w.put_table("candidates.csv".into(), candidates_csv(&candidate_rows))?;

    let summary = render_summary(cfg, &params, &w, &choices)?;
    w.put("summary.txt".into(), &summary)?;
    w.manifest.save(dir)?;
    w.manifest.verify(dir)?;
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        summary,
        manifest: w.manifest,
        choices,
    })
}

fn render_summary(cfg: &ExperimentConfig, params: &ScoreParams, w: &Writer, choices: &[Choices]) -> Result<String> {
    let mut out = format!(
        "{} | {} runs from master seed {} | alpha1 = {}, alpha2 = {}, tau = {}, T = {}\n",
        cfg.env, cfg.repetitions, cfg.seed, params.alpha1, params.alpha2, params.tau, params.horizon
    );
    let digits = if cfg.env == "grid5" { 3 } else { 2 };
    let mut opts = ReportOptions {
        digits,
        ..ReportOptions::default()
    };
    out.push_str("\nCandidates (expected score)\n\n");
    out.push_str(&summarize(&w.tables("candidates.csv"), &opts)?);
    out.push_str("\nChoices per run (0-based arms)\n\n");
    for (rep, c) in choices.iter().enumerate() {
        let hq = c.highest_q.map_or("-".to_string(), |a| a.to_string());
        out.push_str(&format!("run {rep}: oracle {}, highest-q {hq}, worst {}\n", c.oracle, c.worst));
    }
    if let Some(sel) = &cfg.select {
        opts.last = sel.last;
        out.push_str(&format!("\nSelection over {} iterations\n\n", sel.k));
        out.push_str(&summarize(&w.tables("selection/"), &opts)?);
    }
    if let Some(ft) = &cfg.finetune {
        opts.window = ft.window;
        out.push_str(&format!("\nFine-tuning the worst candidate for {} iterations\n\n", ft.k));
        out.push_str(&summarize(&w.tables("finetune/"), &opts)?);
    }
    if cfg.eval.is_some() {
        out.push_str("\nEvaluation episodes\n\n");
        out.push_str(&summarize(&w.tables("episodes/"), &opts)?);
    }
    Ok(out)
}

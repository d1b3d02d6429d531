//! CSV traces with fixed headers.

use std::path::Path;

use crate::finetune::FinetuneRecord;
use crate::scoring::{EpisodeLog, ExpectedScore, ScoreMethod};
use crate::select::SelectionRecord;
use crate::{Error, Result};

pub const EPISODE_HEADER: [&str; 6] = ["seed", "iteration", "model_id", "env_return", "disagreements", "score"];
pub const SELECTION_HEADER: [&str; 5] = ["k", "arm", "score", "regret_paper_sign", "best_arm_so_far"];
pub const FINETUNE_HEADER: [&str; 5] = ["k", "env_return", "disagreements", "overrides", "score"];
pub const CANDIDATE_HEADER: [&str; 6] = ["seed", "model_id", "lambda", "expected_score", "method", "std_error"];

/// Marker in the `seed` column of an episode file's summary rows.
pub const SUMMARY_MARKER: &str = "mean";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Episodes,
    Selection,
    Finetune,
    Candidates,
}

impl TraceKind {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            TraceKind::Episodes => &EPISODE_HEADER,
            TraceKind::Selection => &SELECTION_HEADER,
            TraceKind::Finetune => &FINETUNE_HEADER,
            TraceKind::Candidates => &CANDIDATE_HEADER,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Episodes => "episodes",
            TraceKind::Selection => "selection",
            TraceKind::Finetune => "finetune",
            TraceKind::Candidates => "candidates",
        }
    }

    fn from_header(fields: &[&str]) -> Option<Self> {
        [
            TraceKind::Episodes,
            TraceKind::Selection,
            TraceKind::Finetune,
            TraceKind::Candidates,
        ]
        .into_iter()
        .find(|k| k.header() == fields)
    }
}

/// One row of an episode file. Summary rows carry means over `iteration`
/// episodes and have `summary` set.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub seed: u64,
    pub iteration: u64,
    pub model_id: usize,
    pub env_return: f64,
    pub disagreements: f64,
    pub score: f64,
    pub summary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRow {
    pub seed: u64,
    pub model_id: usize,
    pub lambda: f64,
    pub value: ExpectedScore,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Table {
    Episodes(Vec<EpisodeRow>),
    Selection(Vec<SelectionRecord>),
    Finetune(Vec<FinetuneRecord>),
    Candidates(Vec<CandidateRow>),
}

impl Table {
    pub fn kind(&self) -> TraceKind {
        match self {
            Table::Episodes(_) => TraceKind::Episodes,
            Table::Selection(_) => TraceKind::Selection,
            Table::Finetune(_) => TraceKind::Finetune,
            Table::Candidates(_) => TraceKind::Candidates,
        }
    }
}

struct Csv(String);

impl Csv {
    fn new(header: &[&str]) -> Self {
        Csv(format!("{}\n", header.join(",")))
    }

    fn row(&mut self, fields: &[String]) {
        self.0.push_str(&fields.join(","));
        self.0.push('\n');
    }
}

/// Episode rows for one model followed by their summary row.
pub fn episodes_csv(seed: u64, model_id: usize, episodes: &[EpisodeLog]) -> String {
    let mut out = Csv::new(&EPISODE_HEADER);
    push_episodes(&mut out, seed, model_id, episodes);
    out.0
}

/// Several models' episodes in one file, each block followed by its summary.
pub fn episode_blocks_csv(blocks: &[(u64, usize, Vec<EpisodeLog>)]) -> String {
    let mut out = Csv::new(&EPISODE_HEADER);
    for (seed, model_id, eps) in blocks {
        push_episodes(&mut out, *seed, *model_id, eps);
    }
    out.0
}

fn push_episodes(out: &mut Csv, seed: u64, model_id: usize, episodes: &[EpisodeLog]) {
    for (i, ep) in episodes.iter().enumerate() {
        out.row(&[
            seed.to_string(),
            (i + 1).to_string(),
            model_id.to_string(),
            ep.env_return.to_string(),
            ep.disagreements.to_string(),
            ep.score.to_string(),
        ]);
    }
    if !episodes.is_empty() {
        let n = episodes.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeLog) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        out.row(&[
            SUMMARY_MARKER.to_string(),
            episodes.len().to_string(),
            model_id.to_string(),
            mean(&|e| e.env_return).to_string(),
            mean(&|e| e.disagreements as f64).to_string(),
            mean(&|e| e.score).to_string(),
        ]);
    }
}

pub fn selection_csv(records: &[SelectionRecord]) -> String {
    let mut out = Csv::new(&SELECTION_HEADER);
    for r in records {
        out.row(&[
            r.k.to_string(),
            r.arm.to_string(),
            r.score.to_string(),
            r.regret.to_string(),
            r.best_arm_so_far.to_string(),
        ]);
    }
    out.0
}

pub fn finetune_csv(records: &[FinetuneRecord]) -> String {
    let mut out = Csv::new(&FINETUNE_HEADER);
    for r in records {
        out.row(&[
            r.k.to_string(),
            r.env_return.to_string(),
            r.disagreements.to_string(),
            r.overrides.to_string(),
            r.score.to_string(),
        ]);
    }
    out.0
}

pub fn candidates_csv(rows: &[CandidateRow]) -> String {
    let mut out = Csv::new(&CANDIDATE_HEADER);
    for r in rows {
        let (method, se) = match r.value.method {
            ScoreMethod::ExactDp => ("exact", 0.0),
            ScoreMethod::MonteCarlo { std_error, .. } => ("monte-carlo", std_error),
        };
        out.row(&[
            r.seed.to_string(),
            r.model_id.to_string(),
            r.lambda.to_string(),
            r.value.value.to_string(),
            method.to_string(),
            se.to_string(),
        ]);
    }
    out.0
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        offset: rec.position().map_or(0, |p| p.byte() as usize),
        message: format!("line {line}: cannot read `{raw}` in column {}", i + 1),
    })
}

/// Parses any of the known trace files; files whose header is not one of
/// the fixed headers are refused.
pub fn parse_table(text: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let fields: Vec<&str> = header.iter().collect();
    let kind = TraceKind::from_header(&fields).ok_or_else(|| {
        Error::InvalidArgument(format!("unrecognized trace header `{}`", fields.join(",")))
    })?;
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        records.push((rec, line));
    }
    Ok(match kind {
        TraceKind::Episodes => Table::Episodes(
            records
                .iter()
                .map(|(r, l)| {
                    let summary = r.get(0) == Some(SUMMARY_MARKER);
                    Ok(EpisodeRow {
                        seed: if summary { 0 } else { field(r, 0, *l)? },
                        iteration: field(r, 1, *l)?,
                        model_id: field(r, 2, *l)?,
                        env_return: field(r, 3, *l)?,
                        disagreements: field(r, 4, *l)?,
                        score: field(r, 5, *l)?,
                        summary,
                    })
                })
                .collect::<Result<_>>()?,
        ),
        TraceKind::Selection => Table::Selection(
            records
                .iter()
                .map(|(r, l)| {
                    Ok(SelectionRecord {
                        k: field(r, 0, *l)?,
                        arm: field(r, 1, *l)?,
                        score: field(r, 2, *l)?,
                        regret: field(r, 3, *l)?,
                        best_arm_so_far: field(r, 4, *l)?,
                    })
                })
                .collect::<Result<_>>()?,
        ),
        TraceKind::Finetune => Table::Finetune(
            records
                .iter()
                .map(|(r, l)| {
                    Ok(FinetuneRecord {
                        k: field(r, 0, *l)?,
                        env_return: field(r, 1, *l)?,
                        disagreements: field(r, 2, *l)?,
                        overrides: field(r, 3, *l)?,
                        score: field(r, 4, *l)?,
                    })
                })
                .collect::<Result<_>>()?,
        ),
        TraceKind::Candidates => Table::Candidates(
            records
                .iter()
                .map(|(r, l)| {
                    let method: String = field(r, 4, *l)?;
                    let se: f64 = field(r, 5, *l)?;
                    let method = match method.as_str() {
                        "exact" => ScoreMethod::ExactDp,
                        "monte-carlo" => ScoreMethod::MonteCarlo { n: 0, std_error: se },
                        other => {
                            return Err(Error::InvalidArgument(format!("line {l}: unknown score method `{other}`")))
                        }
                    };
                    Ok(CandidateRow {
                        seed: field(r, 0, *l)?,
                        model_id: field(r, 1, *l)?,
                        lambda: field(r, 2, *l)?,
                        value: ExpectedScore {
                            value: field(r, 3, *l)?,
                            method,
                        },
                    })
                })
                .collect::<Result<_>>()?,
        ),
    })
}

pub fn read_table(path: &Path) -> Result<Table> {
    parse_table(&super::persist::read_text(path)?).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", path.display())),
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ScoreParams;

    #[test]
    fn selection_round_trip() {
        let recs = vec![
            SelectionRecord {
                k: 1,
                arm: 0,
                score: 0.5,
                regret: -0.5,
                best_arm_so_far: 0,
            },
            SelectionRecord {
                k: 2,
                arm: 1,
                score: 1.0 / 3.0,
                regret: -1.1666666666666667,
                best_arm_so_far: 0,
            },
        ];
        assert_eq!(parse_table(&selection_csv(&recs)).unwrap(), Table::Selection(recs));
    }

    #[test]
    fn episode_file_ends_with_a_summary() {
        let p = ScoreParams::new(1.0, 0.1, 0.09, 10).unwrap();
        let eps = vec![EpisodeLog::new(1.0, 2, 5, &p), EpisodeLog::new(0.5, 0, 3, &p)];
        let text = episodes_csv(4, 2, &eps);
        assert_eq!(text.lines().next().unwrap(), "seed,iteration,model_id,env_return,disagreements,score");
        let Table::Episodes(rows) = parse_table(&text).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(rows.len(), 3);
        assert!(rows[2].summary);
        assert_eq!(rows[2].iteration, 2);
        assert_eq!(rows[2].disagreements, 1.0);
    }

    #[test]
    fn unknown_headers_are_refused() {
        assert!(matches!(parse_table("a,b\n1,2\n"), Err(Error::InvalidArgument(_))));
        assert!(parse_table("k,arm,score,regret,best_arm_so_far\n").is_err());
    }
}

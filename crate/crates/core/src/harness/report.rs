//! Summary tables over trace files, one row per group of seeds.
//!
//! Files named `<group>-seed<N>.csv` are pooled into `<group>`; any other
//! file is its own group. Cells read `mean ± std` with the sample standard
//! deviation across files.

use std::path::{Path, PathBuf};

use super::tables::{read_table, EpisodeRow, Table, TraceKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    /// Trailing window for selection traces.
    pub last: usize,
    /// Leading and trailing window for fine-tuning traces.
    pub window: usize,
    pub digits: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            last: 10,
            window: 20,
            digits: 2,
        }
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn pm(xs: &[f64], digits: usize) -> String {
    let (m, s) = mean_std(xs);
    format!("{m:.digits$} ± {s:.digits$}")
}

/// `name` with a trailing `-seed<N>` removed.
pub fn group_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if let Some(i) = stem.rfind("-seed") {
        let tail = &stem[i + 5..];
        if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) {
            return stem[..i].to_string();
        }
    }
    stem
}

fn tail_mean(xs: &[f64], n: usize) -> f64 {
    let n = n.min(xs.len());
    xs[xs.len() - n..].iter().sum::<f64>() / n as f64
}

fn head_mean(xs: &[f64], n: usize) -> f64 {
    let n = n.min(xs.len());
    xs[..n].iter().sum::<f64>() / n as f64
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("{}\n", parts.join("  ").trim_end())
    };
    let mut out = line(header);
    out.push_str(&line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>()));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

/// Groups in order of first appearance.
fn grouped(files: &[(PathBuf, Table)]) -> Vec<(String, Vec<&Table>)> {
    let mut groups: Vec<(String, Vec<&Table>)> = Vec::new();
    for (path, table) in files {
        let name = group_name(path);
        match groups.iter_mut().find(|(g, _)| *g == name) {
            Some((_, v)) => v.push(table),
            None => groups.push((name, vec![table])),
        }
    }
    groups
}

/// Reads `paths` (all of one kind) and renders their summary table.
pub fn summarize_files(paths: &[PathBuf], opts: &ReportOptions) -> Result<String> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("no trace files given".into()));
    }
    let files = paths
        .iter()
        .map(|p| Ok((p.clone(), read_table(p)?)))
        .collect::<Result<Vec<_>>>()?;
    summarize(&files, opts)
}

pub fn summarize(files: &[(PathBuf, Table)], opts: &ReportOptions) -> Result<String> {
    let kind = files
        .first()
        .map(|(_, t)| t.kind())
        .ok_or_else(|| Error::InvalidArgument("no trace files given".into()))?;
    if let Some((p, t)) = files.iter().find(|(_, t)| t.kind() != kind) {
        return Err(Error::InvalidArgument(format!(
            "{} is a {} trace, the others are {} traces",
            p.display(),
            t.kind().name(),
            kind.name()
        )));
    }
    let d = opts.digits;
    let groups = grouped(files);
    let out = match kind {
        TraceKind::Selection => {
            let header = vec![
                "method".to_string(),
                format!("score (last {})", opts.last),
                "final regret".to_string(),
                "runs".to_string(),
            ];
            let rows = groups
                .iter()
                .map(|(name, tables)| {
                    let mut tails = Vec::new();
                    let mut regrets = Vec::new();
                    for t in tables {
                        if let Table::Selection(r) = t {
                            if r.is_empty() {
                                continue;
                            }
                            let scores: Vec<f64> = r.iter().map(|x| x.score).collect();
                            tails.push(tail_mean(&scores, opts.last));
                            regrets.push(r[r.len() - 1].regret);
                        }
                    }
                    vec![name.clone(), pm(&tails, d), pm(&regrets, d), tails.len().to_string()]
                })
                .collect::<Vec<_>>();
            render(&header, &rows)
        }
        TraceKind::Finetune => {
            let w = opts.window;
            let header = vec![
                "run".to_string(),
                format!("disagreements (first {w})"),
                format!("disagreements (last {w})"),
                format!("score (first {w})"),
                format!("score (last {w})"),
                "runs".to_string(),
            ];
            let rows = groups
                .iter()
                .map(|(name, tables)| {
                    let (mut df, mut dl, mut sf, mut sl) = (vec![], vec![], vec![], vec![]);
                    for t in tables {
                        if let Table::Finetune(r) = t {
                            if r.is_empty() {
                                continue;
                            }
                            let dis: Vec<f64> = r.iter().map(|x| x.disagreements as f64).collect();
                            let sc: Vec<f64> = r.iter().map(|x| x.score).collect();
                            df.push(head_mean(&dis, w));
                            dl.push(tail_mean(&dis, w));
                            sf.push(head_mean(&sc, w));
                            sl.push(tail_mean(&sc, w));
                        }
                    }
                    vec![name.clone(), pm(&df, d), pm(&dl, d), pm(&sf, d), pm(&sl, d), df.len().to_string()]
                })
                .collect::<Vec<_>>();
            render(&header, &rows)
        }
        TraceKind::Episodes => {
            let header = ["run", "model", "return", "disagreements", "score", "runs"]
                .map(String::from)
                .to_vec();
            let mut rows = Vec::new();
            for (name, tables) in &groups {
                let mut models: Vec<usize> = Vec::new();
                for t in tables {
                    if let Table::Episodes(r) = t {
                        for row in r {
                            if !models.contains(&row.model_id) {
                                models.push(row.model_id);
                            }
                        }
                    }
                }
                for m in models {
                    let (mut ret, mut dis, mut sc) = (vec![], vec![], vec![]);
                    for t in tables {
                        if let Table::Episodes(r) = t {
                            if let Some((a, b, c)) = episode_means(r, m) {
                                ret.push(a);
                                dis.push(b);
                                sc.push(c);
                            }
                        }
                    }
                    rows.push(vec![name.clone(), m.to_string(), pm(&ret, d), pm(&dis, d), pm(&sc, d), ret.len().to_string()]);
                }
            }
            render(&header, &rows)
        }
        TraceKind::Candidates => {
            let header = ["model", "lambda", "expected score", "runs"].map(String::from).to_vec();
            let mut ids: Vec<(usize, f64)> = Vec::new();
            for (_, t) in files {
                if let Table::Candidates(r) = t {
                    for row in r {
                        if !ids.iter().any(|(i, _)| *i == row.model_id) {
                            ids.push((row.model_id, row.lambda));
                        }
                    }
                }
            }
            let rows = ids
                .iter()
                .map(|&(id, lambda)| {
                    let vals: Vec<f64> = files
                        .iter()
                        .filter_map(|(_, t)| match t {
                            Table::Candidates(r) => Some(r),
                            _ => None,
                        })
                        .flatten()
                        .filter(|r| r.model_id == id)
                        .map(|r| r.value.value)
                        .collect();
                    vec![id.to_string(), lambda.to_string(), pm(&vals, d), vals.len().to_string()]
                })
                .collect::<Vec<_>>();
            render(&header, &rows)
        }
    };
    Ok(out)
}

/// Per-file means for one model: the summary row if present, else the
/// average of its episode rows.
fn episode_means(rows: &[EpisodeRow], model: usize) -> Option<(f64, f64, f64)> {
    if let Some(s) = rows.iter().find(|r| r.summary && r.model_id == model) {
        return Some((s.env_return, s.disagreements, s.score));
    }
    let eps: Vec<&EpisodeRow> = rows.iter().filter(|r| !r.summary && r.model_id == model).collect();
    if eps.is_empty() {
        return None;
    }
    let n = eps.len() as f64;
    Some((
        eps.iter().map(|r| r.env_return).sum::<f64>() / n,
        eps.iter().map(|r| r.disagreements).sum::<f64>() / n,
        eps.iter().map(|r| r.score).sum::<f64>() / n,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_and_format() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(pm(&[0.91, 0.91], 2), "0.91 ± 0.00");
    }

    #[test]
    fn seed_suffix_groups_files() {
        assert_eq!(group_name(Path::new("out/ucb-seed3.csv")), "ucb");
        assert_eq!(group_name(Path::new("highest-q-seed10.csv")), "highest-q");
        assert_eq!(group_name(Path::new("trace.csv")), "trace");
        assert_eq!(group_name(Path::new("a-seedx.csv")), "a-seedx");
    }
}

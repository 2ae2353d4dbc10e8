//! Top-N recommendation quality against masked-out ratings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::completion::{predict_scores, CompletionResult};
use crate::datasets::MaskedDataset;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::report::{format_g6, Table};

/// The `n` highest-scoring items outside `excluded`, best first. Ties go to
/// the lower item index.
pub fn top_n(scores: &[f64], excluded: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut blocked = vec![false; scores.len()];
    for &e in excluded {
        if e >= scores.len() {
            return Err(Error::input(format!("excluded item {e} out of range")));
        }
        blocked[e] = true;
    }
    let mut pool: Vec<usize> = (0..scores.len()).filter(|&i| !blocked[i]).collect();
    if n == 0 || n > pool.len() {
        return Err(Error::input(format!(
            "cannot rank {n} items from a pool of {}",
            pool.len()
        )));
    }
    let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if n < pool.len() {
        pool.select_nth_unstable_by(n - 1, order);
        pool.truncate(n);
    }
    pool.sort_unstable_by(order);
    Ok(pool)
}

/// A user's Top-N list and how many of it were masked-out items.
#[derive(Clone, Debug, PartialEq)]
pub struct TopNResult {
    pub user: usize,
    pub top_items: Vec<usize>,
    pub hit_count: usize,
}

impl TopNResult {
    /// `truth` must be sorted ascending.
    pub fn new(user: usize, top_items: Vec<usize>, truth: &[usize]) -> Self {
        let hit_count = top_items.iter().filter(|i| truth.binary_search(i).is_ok()).count();
        TopNResult {
            user,
            top_items,
            hit_count,
        }
    }
}

/// `(hits / n, hits / n_mask)`.
pub fn precision_recall(hits: usize, n: usize, n_mask: usize) -> Result<(f64, f64)> {
    if n == 0 || n_mask == 0 {
        return Err(Error::input("N and n_mask must be positive"));
    }
    if hits > n.min(n_mask) {
        return Err(Error::input(format!(
            "{hits} hits exceed min(N = {n}, n_mask = {n_mask})"
        )));
    }
    Ok((hits as f64 / n as f64, hits as f64 / n_mask as f64))
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else if precision == recall {
        precision
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Drop items the user rated in training from the candidate pool.
    pub exclude_training_items: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            exclude_training_items: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall for `N = 1..=2·n_mask`, averaged over training users.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub n_mask: usize,
    pub curve: Vec<PrPoint>,
    pub f1_at_nmask: f64,
    pub runs_averaged: usize,
}

impl EvalReport {
    pub fn at(&self, n: usize) -> Option<&PrPoint> {
        self.curve.get(n.checked_sub(1)?)
    }

    pub fn curve_table(&self) -> Table {
        let mut t = Table::new(&["N", "precision", "recall"]);
        for p in &self.curve {
            t.push(vec![p.n as f64, p.precision, p.recall]);
        }
        t
    }

    /// `key=value` lines.
    pub fn f1_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "f1_at_nmask={}", format_g6(self.f1_at_nmask));
        let _ = writeln!(s, "n_mask={}", self.n_mask);
        let _ = writeln!(s, "runs_averaged={}", self.runs_averaged);
        s
    }

    /// Rebuilds a report from a curve table and an `f1_text` block.
    pub fn from_parts(curve: &Table, f1_text: &str) -> Result<EvalReport> {
        let col = |name: &str| {
            curve
                .column(name)
                .ok_or_else(|| Error::parse("pr curve", format!("missing column {name}")))
        };
        let (ns, ps, rs) = (col("N")?, col("precision")?, col("recall")?);
        let mut f1 = None;
        let mut n_mask = None;
        let mut runs = None;
        for (lineno, line) in f1_text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("f1:{}", lineno + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(loc(), "expected key=value"))?;
            let bad = |_| Error::parse(loc(), format!("bad value {v:?}"));
            match k.trim() {
                "f1_at_nmask" => f1 = Some(v.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "n_mask" => n_mask = Some(v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "runs_averaged" => runs = Some(v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                _ => {}
            }
        }
        let missing = |k: &str| Error::parse("f1", format!("missing {k}"));
        Ok(EvalReport {
            n_mask: n_mask.ok_or_else(|| missing("n_mask"))?,
            curve: ns
                .iter()
                .zip(&ps)
                .zip(&rs)
                .map(|((&n, &p), &r)| PrPoint {
                    n: n as usize,
                    precision: p,
                    recall: r,
                })
                .collect(),
            f1_at_nmask: f1.ok_or_else(|| missing("f1_at_nmask"))?,
            runs_averaged: runs.ok_or_else(|| missing("runs_averaged"))?,
        })
    }

    /// Writes `pr_curve.csv` and `f1.txt` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        let dir = dir.as_ref();
        let mut table = self.curve_table();
        table.comments = comments.to_vec();
        table.write(dir.join("pr_curve.csv"))?;
        fs::write(dir.join("f1.txt"), self.f1_text())?;
        Ok(())
    }
}

/// Scores every training user with `score(user)` and averages the curves.
pub fn evaluate_scores<F>(masked: &MaskedDataset, score: F, options: EvalOptions, exec: Execution) -> Result<EvalReport>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    let n_mask = masked.plan.n_mask;
    let n_max = 2 * n_mask;
    let m = masked.train.m_items();
    let users = &masked.plan.selected_users;
    let per_user: Vec<Result<Vec<usize>>> = par::map_indexed(users.len(), exec, |idx| {
        let u = users[idx];
        let scores = score(u)?;
        if scores.len() != m {
            return Err(Error::dim(format!("user {u}: {} scores for {m} items", scores.len())));
        }
        let excluded: Vec<usize> = if options.exclude_training_items {
            masked.train.row_items(u).collect()
        } else {
            Vec::new()
        };
        let ranked = top_n(&scores, &excluded, n_max)
            .map_err(|e| Error::input(format!("user {u}: {e}")))?;
        let truth = &masked.ground_truth()[&u];
        let mut hits = Vec::with_capacity(n_max);
        let mut acc = 0;
        for item in ranked {
            if truth.binary_search(&item).is_ok() {
                acc += 1;
            }
            hits.push(acc);
        }
        Ok(hits)
    });
    let per_user = per_user.into_iter().collect::<Result<Vec<_>>>()?;
    let n_users = per_user.len() as f64;
    let curve: Vec<PrPoint> = (1..=n_max)
        .map(|n| {
            let (mut p, mut r) = (0.0, 0.0);
            for hits in &per_user {
                let h = hits[n - 1] as f64;
                p += h / n as f64;
                r += h / n_mask as f64;
            }
            PrPoint {
                n,
                precision: p / n_users,
                recall: r / n_users,
            }
        })
        .collect();
    let at = curve[n_mask - 1];
    Ok(EvalReport {
        n_mask,
        f1_at_nmask: f1_measure(at.precision, at.recall),
        curve,
        runs_averaged: 1,
    })
}

/// Ranks items by the completed model `UVᵀ`.
pub fn evaluate(result: &CompletionResult, masked: &MaskedDataset) -> Result<EvalReport> {
    evaluate_with(result, masked, EvalOptions::default(), Execution::default())
}

pub fn evaluate_with(
    result: &CompletionResult,
    masked: &MaskedDataset,
    options: EvalOptions,
    exec: Execution,
) -> Result<EvalReport> {
    if result.u.rows() != masked.train.n_users() || result.v.rows() != masked.train.m_items() {
        return Err(Error::dim(format!(
            "model is {}x{}, data is {}x{}",
            result.u.rows(),
            result.v.rows(),
            masked.train.n_users(),
            masked.train.m_items()
        )));
    }
    evaluate_scores(masked, |u| predict_scores(result, u), options, exec)
}

/// Order-independent mean: exact for identical inputs.
fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let base = values[0];
    let offset: f64 = values.iter().map(|v| v - base).sum();
    base + offset / values.len() as f64
}

/// Pointwise mean of reports from independent runs; F1 is the mean of the
/// per-run F1 values.
pub fn average_runs(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports.first().ok_or_else(|| Error::input("no reports to average"))?;
    if reports
        .iter()
        .any(|r| r.n_mask != first.n_mask || r.curve.len() != first.curve.len())
    {
        return Err(Error::input("reports differ in n_mask or curve length"));
    }
    let curve = (0..first.curve.len())
        .map(|i| PrPoint {
            n: first.curve[i].n,
            precision: stable_mean(&mut reports.iter().map(|r| r.curve[i].precision).collect::<Vec<_>>()),
            recall: stable_mean(&mut reports.iter().map(|r| r.curve[i].recall).collect::<Vec<_>>()),
        })
        .collect();
    Ok(EvalReport {
        n_mask: first.n_mask,
        curve,
        f1_at_nmask: stable_mean(&mut reports.iter().map(|r| r.f1_at_nmask).collect::<Vec<_>>()),
        runs_averaged: reports.iter().map(|r| r.runs_averaged).sum(),
    })
}

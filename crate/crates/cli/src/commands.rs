use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rsvd::completion::{em_complete_with, CompletionConfig, CompletionResult, ObservedMatrix};
use rsvd::datasets::{
    binarize, filter_users_by_rating_count, load_csv_triples, load_movielens_100k, mask_out, CsvLayout, DatasetStats,
};
use rsvd::evaluation::{average_runs, evaluate_with, EvalOptions, EvalReport};
use rsvd::linalg::{read_matrix_csv, thin_svd, write_matrix_csv};
use rsvd::report::{format_g6, Table};
use rsvd::solver::{rsvd_als_with, rsvd_closed_form, AlsOptions};
use rsvd::{par, DenseMatrix, Execution, RsvdConfig};

use crate::args::{CommonArgs, DataArgs, EvaluateArgs, FactorizeArgs, FormatArg, SolverArg, SweepArgs};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A request that parsed but cannot be honored.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Some sweep cells failed; `code` is the most severe cell exit code.
#[derive(Debug)]
pub struct SweepFailure {
    pub failed: usize,
    pub total: usize,
    pub code: u8,
}

impl fmt::Display for SweepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} of {} sweep cells failed", self.failed, self.total)
    }
}

impl std::error::Error for SweepFailure {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(s) = err.downcast_ref::<SweepFailure>() {
        return s.code;
    }
    if err.chain().any(|e| e.is::<Usage>()) {
        return EXIT_USAGE;
    }
    match err.chain().find_map(|e| e.downcast_ref::<rsvd::Error>()) {
        Some(e) if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn provenance(common: &CommonArgs, fields: &[(&str, String)]) -> Vec<String> {
    let mut lines = vec![
        format!("rsvd {}", env!("CARGO_PKG_VERSION")),
        format!("input={}", common.input.display()),
        format!("seed={}", common.seed),
        format!("solver={}", rsvd::completion::InnerSolver::from(common.solver)),
    ];
    lines.extend(fields.iter().map(|(k, v)| format!("{k}={v}")));
    lines
}

fn write_matrix(path: &Path, m: &DenseMatrix, comments: &[String]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_matrix_csv(&mut out, m, comments)?;
    out.flush()?;
    Ok(())
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn lambda_dir(out: &Path, lambda: f64) -> PathBuf {
    out.join(format!("lambda={}", format_g6(lambda)))
}

fn inner_config(common: &CommonArgs, k: usize, lambda: f64) -> RsvdConfig {
    RsvdConfig::new(k, lambda)
        .with_tol(common.tol)
        .with_max_iter(common.max_iter)
        .with_seed(common.seed)
}

pub fn factorize(a: &FactorizeArgs) -> Result<()> {
    let x = read_matrix_csv(&a.common.input).with_context(|| format!("reading {}", a.common.input.display()))?;
    for &lambda in &a.lambda {
        let dir = if a.lambda.len() == 1 {
            a.common.out.clone()
        } else {
            lambda_dir(&a.common.out, lambda)
        };
        factorize_one(&x, a, lambda, &dir).with_context(|| format!("lambda = {lambda}"))?;
    }
    Ok(())
}

fn factorize_one(x: &DenseMatrix, a: &FactorizeArgs, lambda: f64, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let comments = provenance(
        &a.common,
        &[("k", a.k.to_string()), ("lambda", format_g6(lambda))],
    );
    let solution = match a.common.solver {
        SolverArg::Closed => {
            let sol = rsvd_closed_form(x, a.k, lambda)?;
            let spectrum = sol.spectrum.as_ref().expect("closed form reports its spectrum");
            let mut table = Table::new(&["sigma", "omega"]);
            table.comments = comments.clone();
            for (&s, &w) in spectrum.sigma.iter().zip(&spectrum.omega) {
                table.push(vec![s, w]);
            }
            table.write(dir.join("spectrum.csv"))?;
            sol
        }
        SolverArg::Als => {
            let svd = thin_svd(x, Some(a.k))?;
            let opts = AlsOptions {
                init: None,
                track_subspace: Some(&svd),
            };
            let sol = rsvd_als_with(x, &inner_config(&a.common, a.k, lambda), opts)?;
            let mut conv = Table::new(&["iter", "J1", "dV"]);
            conv.comments = comments.clone();
            for (t, (&j, &dv)) in sol.objective_history.iter().zip(&sol.dv_history).enumerate() {
                conv.push(vec![(t + 1) as f64, j, dv]);
            }
            conv.write(dir.join("convergence.csv"))?;
            subspace_table(&sol.subspace_history, &comments).write(dir.join("subspace_residuals.csv"))?;
            sol
        }
    };
    write_matrix(&dir.join("U.csv"), &solution.u, &comments)?;
    write_matrix(&dir.join("V.csv"), &solution.v, &comments)?;
    Ok(())
}

fn subspace_table(history: &[(f64, f64)], comments: &[String]) -> Table {
    let mut table = Table::new(&["iter", "r1", "r2"]);
    table.comments = comments.to_vec();
    for (t, &(r1, r2)) in history.iter().enumerate() {
        table.push(vec![(t + 1) as f64, r1, r2]);
    }
    table
}

fn load_observed(common: &CommonArgs, data: &DataArgs) -> Result<ObservedMatrix> {
    let path = &common.input;
    let triples = match data.format {
        FormatArg::Movielens => load_movielens_100k(path),
        FormatArg::Triples => load_csv_triples(
            path,
            CsvLayout::Triples {
                one_based: data.index_base == 1,
            },
        ),
        FormatArg::Grid => load_csv_triples(
            path,
            CsvLayout::Grid {
                missing_sentinel: data.sentinel,
                skip_columns: data.skip_cols,
            },
        ),
    }
    .with_context(|| format!("loading {}", path.display()))?;
    let triples = if data.min_ratings.is_some() || data.max_ratings.is_some() {
        filter_users_by_rating_count(&triples, data.min_ratings, data.max_ratings)?
    } else {
        triples
    };
    let observed = binarize(&triples)?;
    let stats = DatasetStats::from_observed(&observed);
    log::info!(
        "{}: {} users, {} items, {} ratings ({:.1} per user)",
        path.display(),
        stats.n_users,
        stats.m_items,
        stats.n_ratings,
        stats.mean_ratings_per_user
    );
    Ok(observed)
}

fn completion_config(common: &CommonArgs, data: &DataArgs, k: usize, lambda: f64) -> CompletionConfig {
    CompletionConfig {
        inner: inner_config(common, k, lambda),
        solver: common.solver.into(),
        em_max_iter: data.em_max_iter,
        em_tol: data.em_tol,
        init_fill: data.init_fill,
    }
}

/// Runs every mask-out for one `(k, λ)` into `dir` and returns the average.
fn evaluate_into(
    observed: &ObservedMatrix,
    common: &CommonArgs,
    data: &DataArgs,
    (k, lambda): (usize, f64),
    dir: &Path,
    exec: Execution,
) -> Result<EvalReport> {
    create_dir(dir)?;
    let cfg = completion_config(common, data, k, lambda);
    let comments = provenance(
        common,
        &[
            ("k", k.to_string()),
            ("lambda", format_g6(lambda)),
            ("mask_t", data.mask_t.to_string()),
            ("n_mask", data.n_mask.to_string()),
            ("runs", data.runs.to_string()),
            ("init_fill", data.init_fill.to_string()),
            ("exclude_training_items", data.exclude_training_items.to_string()),
        ],
    );
    let mut em_all = Table::new(&["run", "iter", "dX", "dM"]);
    em_all.comments = comments.clone();
    let mut sub_all = Table::new(&["run", "iter", "r1", "r2"]);
    sub_all.comments = comments.clone();
    let mut reports = Vec::with_capacity(data.runs);
    for r in 0..data.runs {
        let seed = common.seed.wrapping_add(r as u64);
        let mut run_comments = comments.clone();
        run_comments.push(format!("mask_seed={seed}"));
        let masked = mask_out(observed, data.mask_t, data.n_mask, seed)?;
        let result = em_complete_with(&masked.train, &cfg, exec)?;
        let options = EvalOptions {
            exclude_training_items: data.exclude_training_items,
        };
        let report = evaluate_with(&result, &masked, options, exec)?;
        let run_dir = dir.join(format!("run-{r}"));
        create_dir(&run_dir)?;
        report.write_to(&run_dir, &run_comments)?;

        let mut em = Table::new(&["iter", "dX", "dM"]);
        em.comments = run_comments.clone();
        for (t, (&dx, &dm)) in result.dx_history.iter().zip(&result.model_change_history).enumerate() {
            em.push(vec![(t + 1) as f64, dx, dm]);
            em_all.push(vec![r as f64, (t + 1) as f64, dx, dm]);
        }
        em.write(run_dir.join("em_convergence.csv"))?;

        if common.solver == SolverArg::Als {
            let history = final_subspace_history(&result, &cfg)?;
            subspace_table(&history, &run_comments).write(run_dir.join("subspace_residuals.csv"))?;
            for (t, &(r1, r2)) in history.iter().enumerate() {
                sub_all.push(vec![r as f64, (t + 1) as f64, r1, r2]);
            }
        }
        log::info!("k = {k}, lambda = {lambda}, run {r}: F1 = {:.4}", report.f1_at_nmask);
        reports.push(report);
    }
    let avg = average_runs(&reports)?;
    avg.write_to(dir, &comments)?;
    em_all.write(dir.join("em_convergence.csv"))?;
    if common.solver == SolverArg::Als {
        sub_all.write(dir.join("subspace_residuals.csv"))?;
    }
    Ok(avg)
}

/// Subspace residuals of a fresh ALS run on the final completed matrix,
/// measured against its leading `k` singular subspaces.
fn final_subspace_history(result: &CompletionResult, cfg: &CompletionConfig) -> Result<Vec<(f64, f64)>> {
    let svd = thin_svd(&result.x_hat, Some(cfg.inner.k))?;
    let opts = AlsOptions {
        init: None,
        track_subspace: Some(&svd),
    };
    Ok(rsvd_als_with(&result.x_hat, &cfg.inner, opts)?.subspace_history)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let observed = load_observed(&a.common, &a.data)?;
    let report = evaluate_into(
        &observed,
        &a.common,
        &a.data,
        (a.k, a.lambda),
        &a.common.out,
        Execution::default(),
    )?;
    emit(&report.f1_text())
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    if a.k.is_empty() || a.lambda.is_empty() {
        return Err(Usage("sweep needs at least one k and one lambda".into()).into());
    }
    let observed = load_observed(&a.common, &a.data)?;
    let cells: Vec<(usize, f64)> = a
        .k
        .iter()
        .flat_map(|&k| a.lambda.iter().map(move |&l| (k, l)))
        .collect();
    let exec = Execution::default();
    let outcomes = par::map_indexed(cells.len(), exec, |c| {
        let (k, lambda) = cells[c];
        let dir = a.common.out.join(format!("k={k}")).join(format!("lambda={}", format_g6(lambda)));
        evaluate_into(&observed, &a.common, &a.data, (k, lambda), &dir, exec).map(|r| r.f1_at_nmask)
    });

    let mut header = vec!["k".to_string()];
    header.extend(a.lambda.iter().map(|&l| format!("lambda={}", format_g6(l))));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header);
    table.comments = provenance(
        &a.common,
        &[
            ("dataset", a.common.input.display().to_string()),
            ("mask_t", a.data.mask_t.to_string()),
            ("n_mask", a.data.n_mask.to_string()),
            ("runs", a.data.runs.to_string()),
        ],
    );
    let mut failures = Vec::new();
    let mut worst = 0u8;
    for (row, &k) in a.k.iter().enumerate() {
        let mut values = vec![k as f64];
        for col in 0..a.lambda.len() {
            let c = row * a.lambda.len() + col;
            match &outcomes[c] {
                Ok(f1) => values.push(*f1),
                Err(e) => {
                    values.push(f64::NAN);
                    worst = worst.max(exit_code(e));
                    failures.push(format!("k={k} lambda={}: {e:#}", format_g6(cells[c].1)));
                }
            }
        }
        table.push(values);
    }
    table.write(a.common.out.join("f1_table.csv"))?;
    emit(&table.to_csv())?;
    if failures.is_empty() {
        return Ok(());
    }
    let mut text = failures.join("\n");
    text.push('\n');
    fs::write(a.common.out.join("failures.txt"), &text)?;
    for f in &failures {
        log::error!("{f}");
    }
    Err(SweepFailure {
        failed: failures.len(),
        total: cells.len(),
        code: worst,
    }
    .into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let numerical = anyhow::Error::from(rsvd::Error::Singular("ridge system".into())).context("step 3");
        assert_eq!(exit_code(&numerical), EXIT_NUMERICAL);
        let data = anyhow::Error::from(rsvd::Error::Input("bad row".into()));
        assert_eq!(exit_code(&data), EXIT_DATA);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), EXIT_DATA);
        assert_eq!(exit_code(&Usage("no".into()).into()), EXIT_USAGE);
        let sweep = SweepFailure { failed: 1, total: 4, code: EXIT_NUMERICAL };
        assert_eq!(exit_code(&sweep.into()), EXIT_NUMERICAL);
    }
}

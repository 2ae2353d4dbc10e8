use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rsvd::datasets::filter_users_by_rating_count;
use rsvd::report::Table;
use rsvd::synthetic::{implicit_ratings, uniform_matrix, ImplicitSpec};

fn rsvd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsvd"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn rsvd")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_dense(dir: &Path, name: &str, rows: &[Vec<f64>]) -> PathBuf {
    let path = dir.join(name);
    let text: String = rows
        .iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(&path, text).unwrap();
    path
}

/// Three groups of users, each rating every item of its own block of twelve.
fn block_triples(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for user in 0..30 {
        let block = user % 3;
        for item in 0..12 {
            text.push_str(&format!("{},{},1\n", user + 1, block * 12 + item + 1));
        }
    }
    let path = dir.join("blocks.csv");
    fs::write(&path, text).unwrap();
    path
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn diagonal_closed_form_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let x = write_dense(dir.path(), "diag.csv", &[vec![3.0, 0.0], vec![0.0, 1.0]]);
    let out = dir.path().join("out");
    let run = rsvd(&["factorize", "--input", s(&x), "--k", "2", "--lambda", "1", "--solver", "closed", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let spectrum = Table::read(out.join("spectrum.csv")).unwrap();
    assert_eq!(spectrum.column("sigma").unwrap(), [3.0, 1.0]);
    let omega = spectrum.column("omega").unwrap();
    assert!((omega[0] - 2f64.sqrt()).abs() < 1e-5);
    assert_eq!(omega[1], 0.0);
    assert!(out.join("U.csv").exists() && out.join("V.csv").exists());
}

#[test]
fn lambda_list_gives_one_directory_each_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let x = uniform_matrix(25, 18, -1.0, 1.0, 9);
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
    let input = write_dense(dir.path(), "x.csv", &rows);
    let run = |out: &Path| {
        rsvd(&[
            "factorize", "--input", s(&input), "--k", "3", "--lambda", "0,3,5,10", "--solver", "als", "--seed", "4",
            "--tol", "1e-9", "--out", s(out),
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run(&a)), 0);
    assert_eq!(code(&run(&b)), 0);
    for lambda in ["0", "3", "5", "10"] {
        let sub = a.join(format!("lambda={lambda}"));
        let conv = Table::read(sub.join("convergence.csv")).unwrap();
        assert_eq!(conv.header, ["iter", "J1", "dV"]);
        assert!(conv.comments.iter().any(|c| c == "seed=4"));
        let sub_res = Table::read(sub.join("subspace_residuals.csv")).unwrap();
        assert_eq!(sub_res.rows.len(), conv.rows.len());
    }
    assert_eq!(files_under(&a), files_under(&b));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let x = write_dense(dir.path(), "diag.csv", &[vec![3.0, 0.0], vec![0.0, 1.0]]);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("input={}\nk=2\nlambda=0.5\nout={}\n", s(&x), s(&dir.path().join("unused")))).unwrap();
    let out = dir.path().join("out");
    let run = rsvd(&["factorize", "--config", s(&cfg), "--lambda", "2", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let omega = Table::read(out.join("spectrum.csv")).unwrap().column("omega").unwrap();
    assert_eq!(omega, [1.0, 0.0]);
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let x = write_dense(dir.path(), "x.csv", &[vec![1.0, 2.0], vec![3.0, 4.0]]);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let out = dir.path().join("out");
    let blocks = block_triples(dir.path());
    let factorize = |input: &Path, k: &str, lambda: &str| {
        code(&rsvd(&["factorize", "--input", s(input), "--k", k, "--lambda", lambda, "--out", s(&out)]))
    };

    assert_eq!(code(&rsvd(&[])), 1);
    assert_eq!(code(&rsvd(&["factorize", "--k", "1"])), 1);
    assert_eq!(factorize(&x, "0", "1"), 1);
    assert_eq!(factorize(&x, "1", "-1"), 1);
    assert_eq!(factorize(&x, "1", "abc"), 1);
    assert_eq!(code(&rsvd(&["factorize", "--config", "/nonexistent.cfg"])), 1);
    let empty_lambda = rsvd(&[
        "sweep", "--input", s(&blocks), "--format", "triples", "--k", "2", "--lambda", "", "--out", s(&out),
    ]);
    assert_eq!(code(&empty_lambda), 1);

    assert_eq!(factorize(&dir.path().join("missing.csv"), "1", "1"), 2);
    assert_eq!(factorize(&bad, "1", "1"), 2);
    assert_eq!(factorize(&x, "3", "1"), 2);
    assert_eq!(factorize(&x, "2", "1"), 0);
    assert_eq!(code(&rsvd(&["--help"])), 0);
}

#[test]
fn oracle_dataset_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let input = block_triples(dir.path());
    let out = dir.path().join("eval");
    let run = rsvd(&[
        "evaluate", "--input", s(&input), "--format", "triples", "--k", "3", "--lambda", "0.01", "--mask-t", "10",
        "--n-mask", "4", "--runs", "2", "--seed", "7", "--out", s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let f1 = fs::read_to_string(out.join("f1.txt")).unwrap();
    assert!(f1.contains("f1_at_nmask=1\n"), "{f1}");
    assert!(f1.contains("runs_averaged=2"));
    let curve = Table::read(out.join("pr_curve.csv")).unwrap();
    assert_eq!(curve.header, ["N", "precision", "recall"]);
    let em = Table::read(out.join("run-1/em_convergence.csv")).unwrap();
    assert_eq!(em.header, ["iter", "dX", "dM"]);
    assert!(em.comments.iter().any(|c| c == "mask_seed=8"));
    assert!(!out.join("subspace_residuals.csv").exists());

    let with_training = dir.path().join("with_training");
    let run = rsvd(&[
        "evaluate", "--input", s(&input), "--format", "triples", "--k", "3", "--lambda", "0.01", "--mask-t", "10",
        "--n-mask", "4", "--exclude-training-items", "false", "--out", s(&with_training),
    ]);
    assert_eq!(code(&run), 0);
    let f1 = fs::read_to_string(with_training.join("f1.txt")).unwrap();
    assert!(!f1.contains("f1_at_nmask=1\n"), "{f1}");
}

#[test]
fn als_evaluation_writes_subspace_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let input = block_triples(dir.path());
    let out = dir.path().join("eval");
    let run = rsvd(&[
        "evaluate", "--input", s(&input), "--format", "triples", "--k", "3", "--lambda", "0.5", "--solver", "als",
        "--mask-t", "10", "--n-mask", "4", "--out", s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let res = Table::read(out.join("subspace_residuals.csv")).unwrap();
    assert_eq!(res.header, ["run", "iter", "r1", "r2"]);
    let last = res.rows.last().unwrap();
    assert!(last[2] < 1e-6 && last[3] < 1e-6, "{last:?}");
}

#[test]
fn sweep_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let input = block_triples(dir.path());
    let out = dir.path().join("sweep");
    let run = rsvd(&[
        "sweep", "--input", s(&input), "--format", "triples", "--k", "3,5", "--lambda", "0,3", "--mask-t", "10",
        "--n-mask", "4", "--out", s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let table = Table::read(out.join("f1_table.csv")).unwrap();
    assert_eq!(table.header, ["k", "lambda=0", "lambda=3"]);
    assert_eq!(table.column("k").unwrap(), [3.0, 5.0]);
    assert!(table.rows.iter().flatten().all(|v| v.is_finite()));
    assert!(out.join("k=5/lambda=3/pr_curve.csv").exists());
}

#[test]
fn sweep_records_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let input = block_triples(dir.path());
    let out = dir.path().join("sweep");
    let run = rsvd(&[
        "sweep", "--input", s(&input), "--format", "triples", "--k", "3,40", "--lambda", "1", "--mask-t", "10",
        "--n-mask", "4", "--out", s(&out),
    ]);
    assert_eq!(code(&run), 2);
    let table = Table::read(out.join("f1_table.csv")).unwrap();
    assert!(table.rows[0][1].is_finite());
    assert!(table.rows[1][1].is_nan());
    assert!(fs::read_to_string(out.join("failures.txt")).unwrap().starts_with("k=40 lambda=1:"));
}

#[test]
fn regularization_wins_on_jester_like_data() {
    let dir = tempfile::tempdir().unwrap();
    let raw = implicit_ratings(&ImplicitSpec::jester_like(11)).unwrap();
    let filtered = filter_users_by_rating_count(&raw, None, Some(40)).unwrap();
    let text: String = filtered.triples.iter().map(|&(u, i, r)| format!("{u},{i},{r}\n")).collect();
    let input = dir.path().join("jester.csv");
    fs::write(&input, text).unwrap();
    let f1 = |lambda: &str| {
        let out = dir.path().join(format!("lambda{lambda}"));
        let run = rsvd(&[
            "evaluate", "--input", s(&input), "--format", "triples", "--index-base", "0", "--k", "14", "--lambda",
            lambda, "--mask-t", "37", "--n-mask", "35", "--seed", "3", "--out", s(&out),
        ]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
        let report = Table::read(out.join("pr_curve.csv")).unwrap();
        let text = fs::read_to_string(out.join("f1.txt")).unwrap();
        rsvd::evaluation::EvalReport::from_parts(&report, &text).unwrap().f1_at_nmask
    };
    let (svd, regularized) = (f1("0"), f1("5"));
    assert!(regularized > svd, "lambda=5 F1 {regularized} vs lambda=0 F1 {svd}");
}

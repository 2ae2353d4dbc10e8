//! Matrix completion by alternating imputation and regularized factorization.
//!
//! Starting from a filled-in matrix, each EM step factorizes the current
//! completed matrix `X_t` with one of the RSVD solvers and replaces every
//! unobserved cell with the model value `(UVᵀ)_ij`. Observed cells are never
//! modified. With `λ = 0` this fits the plain low-rank model over the observed
//! set; with `λ > 0` it fits the regularized one.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, thin_svd, truncated_svd, DenseMatrix, SparsePlusLowRank};
use crate::par::{self, Execution};
use crate::solver::{closed_form_from_svd, rsvd_als_with, AlsOptions, RsvdConfig};

/// Partially observed matrix: the observed cells `Ω` and their values.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedMatrix {
    n_users: usize,
    m_items: usize,
    /// Sorted by `(row, column)`.
    entries: Vec<(usize, usize, f64)>,
    row_ptr: Vec<usize>,
}

impl ObservedMatrix {
    /// Validates ranges, finiteness, and uniqueness. Entries may come in any order.
    pub fn new(n_users: usize, m_items: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n_users == 0 || m_items == 0 {
            return Err(Error::input(format!(
                "observed matrix must be at least 1x1, got {n_users}x{m_items}"
            )));
        }
        if entries.is_empty() {
            return Err(Error::input("observed matrix has no observed entries"));
        }
        for &(i, j, v) in &entries {
            if i >= n_users || j >= m_items {
                return Err(Error::input(format!(
                    "entry ({i}, {j}) out of range for {n_users}x{m_items}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::input(format!("entry ({i}, {j}) is not finite")));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::input(format!(
                "duplicate observation at ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut row_ptr = vec![0usize; n_users + 1];
        for &(i, _, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_users {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(ObservedMatrix {
            n_users,
            m_items,
            entries,
            row_ptr,
        })
    }

    /// Every cell of `x` observed.
    pub fn from_dense(x: &DenseMatrix) -> Self {
        let entries = (0..x.rows())
            .flat_map(|i| x.row(i).iter().enumerate().map(move |(j, &v)| (i, j, v)))
            .collect();
        Self::new(x.rows(), x.cols(), entries).expect("dense matrix is a valid observation set")
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn m_items(&self) -> usize {
        self.m_items
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_users, self.m_items)
    }

    /// `N_Ω`.
    pub fn n_observed(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// The observed index set `Ω`, sorted.
    pub fn omega(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|&(i, j, _)| (i, j)).collect()
    }

    /// Observed entries of row `i`, sorted by column.
    pub fn row_entries(&self, i: usize) -> &[(usize, usize, f64)] {
        &self.entries[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_items(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_entries(i).iter().map(|e| e.1)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let row = self.row_entries(i);
        row.binary_search_by(|e| e.1.cmp(&j)).ok().map(|p| row[p].2)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    /// Unobserved index set, row-major.
    pub fn missing(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_users * self.m_items - self.entries.len());
        for i in 0..self.n_users {
            let mut obs = self.row_items(i).peekable();
            for j in 0..self.m_items {
                if obs.peek() == Some(&j) {
                    obs.next();
                } else {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn column_indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.1).collect()
    }
}

/// How unobserved cells are filled before the first EM step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitFill {
    /// Mean of the observed values in the column.
    ColumnMean,
    /// Mean of the observed values in the row.
    RowMean,
    /// Mean of all observed values.
    GlobalMean,
    /// Column sum divided by the number of rows, i.e. unobserved cells count
    /// as zero. For binarized data this is the item's popularity.
    ColumnMeanImplicit,
    /// Row sum divided by the number of columns.
    RowMeanImplicit,
}

impl InitFill {
    pub const NAMES: [&'static str; 5] = [
        "column-mean",
        "row-mean",
        "global-mean",
        "column-implicit",
        "row-implicit",
    ];
}

impl fmt::Display for InitFill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = match self {
            InitFill::ColumnMean => 0,
            InitFill::RowMean => 1,
            InitFill::GlobalMean => 2,
            InitFill::ColumnMeanImplicit => 3,
            InitFill::RowMeanImplicit => 4,
        };
        f.write_str(Self::NAMES[i])
    }
}

impl FromStr for InitFill {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "column-mean" => InitFill::ColumnMean,
            "row-mean" => InitFill::RowMean,
            "global-mean" => InitFill::GlobalMean,
            "column-implicit" => InitFill::ColumnMeanImplicit,
            "row-implicit" => InitFill::RowMeanImplicit,
            other => {
                return Err(Error::input(format!(
                    "unknown fill mode {other:?}, expected one of {:?}",
                    Self::NAMES
                )))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerSolver {
    ClosedForm,
    Als,
}

impl FromStr for InnerSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" | "closed-form" | "closed_form" => Ok(InnerSolver::ClosedForm),
            "als" => Ok(InnerSolver::Als),
            other => Err(Error::input(format!(
                "unknown solver {other:?}, expected closed or als"
            ))),
        }
    }
}

impl fmt::Display for InnerSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerSolver::ClosedForm => "closed",
            InnerSolver::Als => "als",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionConfig {
    pub inner: RsvdConfig,
    pub solver: InnerSolver,
    pub em_max_iter: usize,
    pub em_tol: f64,
    pub init_fill: InitFill,
}

impl CompletionConfig {
    pub const DEFAULT_EM_MAX_ITER: usize = 200;
    pub const DEFAULT_EM_TOL: f64 = 1e-4;

    pub fn new(k: usize, lambda: f64) -> Self {
        CompletionConfig {
            inner: RsvdConfig::new(k, lambda),
            solver: InnerSolver::ClosedForm,
            em_max_iter: Self::DEFAULT_EM_MAX_ITER,
            em_tol: Self::DEFAULT_EM_TOL,
            init_fill: InitFill::ColumnMean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        if self.em_max_iter == 0 {
            return Err(Error::input("em_max_iter must be at least 1"));
        }
        if !(self.em_tol > 0.0) {
            return Err(Error::input(format!(
                "em_tol must be positive, got {}",
                self.em_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CompletionResult {
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    /// Final completed matrix; equals the data on `Ω`.
    pub x_hat: DenseMatrix,
    /// RMS change of the imputed (unobserved) cells per EM step.
    pub dx_history: Vec<f64>,
    /// RMS change of the model `UVᵀ` over `Ω` per EM step.
    pub model_change_history: Vec<f64>,
    /// `J₁(X_t, U_t, V_t)` per EM step, where `X_t` is the matrix that step factorized.
    pub objective_history: Vec<f64>,
    pub em_iterations: usize,
    pub converged: bool,
}

/// `‖X − UVᵀ‖²_Ω + λ‖U‖²_F + λ‖V‖²_F`.
pub fn masked_objective(observed: &ObservedMatrix, u: &DenseMatrix, v: &DenseMatrix, lambda: f64) -> Result<f64> {
    if u.rows() != observed.n_users() || v.rows() != observed.m_items() || u.cols() != v.cols() {
        return Err(Error::dim(format!(
            "observed matrix is {}x{}, U is {}x{}, V is {}x{}",
            observed.n_users(),
            observed.m_items(),
            u.rows(),
            u.cols(),
            v.rows(),
            v.cols()
        )));
    }
    let loss: f64 = observed
        .entries()
        .iter()
        .map(|&(i, j, x)| {
            let r = x - dot(u.row(i), v.row(j));
            r * r
        })
        .sum();
    Ok(loss + lambda * (u.frobenius_sq() + v.frobenius_sq()))
}

/// Rank-1 model `a·bᵀ` whose cells supply the initial fill.
fn fill_model(observed: &ObservedMatrix, mode: InitFill) -> (DenseMatrix, DenseMatrix) {
    let (n, m) = observed.shape();
    let total: f64 = observed.entries().iter().map(|e| e.2).sum();
    let global = total / observed.n_observed() as f64;
    let mut col_sum = vec![0.0; m];
    let mut col_cnt = vec![0usize; m];
    let mut row_sum = vec![0.0; n];
    let mut row_cnt = vec![0usize; n];
    for &(i, j, x) in observed.entries() {
        col_sum[j] += x;
        col_cnt[j] += 1;
        row_sum[i] += x;
        row_cnt[i] += 1;
    }
    let mean_or = |s: f64, c: usize| if c > 0 { s / c as f64 } else { global };
    let ones = |len| DenseMatrix::from_fn(len, 1, |_, _| 1.0);
    match mode {
        InitFill::ColumnMean => (
            ones(n),
            DenseMatrix::from_fn(m, 1, |j, _| mean_or(col_sum[j], col_cnt[j])),
        ),
        InitFill::RowMean => (
            DenseMatrix::from_fn(n, 1, |i, _| mean_or(row_sum[i], row_cnt[i])),
            ones(m),
        ),
        InitFill::GlobalMean => (ones(n), DenseMatrix::from_fn(m, 1, |_, _| global)),
        InitFill::ColumnMeanImplicit => (
            ones(n),
            DenseMatrix::from_fn(m, 1, |j, _| col_sum[j] / n as f64),
        ),
        InitFill::RowMeanImplicit => (
            DenseMatrix::from_fn(n, 1, |i, _| row_sum[i] / m as f64),
            ones(m),
        ),
    }
}

/// Dense matrix equal to the data on `Ω` with every other cell filled by `mode`.
pub fn initialize_fill(observed: &ObservedMatrix, mode: InitFill) -> Result<DenseMatrix> {
    if observed.n_observed() == 0 {
        return Err(Error::input("cannot fill a matrix with no observed entries"));
    }
    let (a, b) = fill_model(observed, mode);
    let mut x = a.matmul_t(&b)?;
    for &(i, j, v) in observed.entries() {
        x[(i, j)] = v;
    }
    Ok(x)
}

/// `√(Σ_{(i,j)∈set} (X_now − X_prev)²_ij / n_set)`.
pub fn dx_residual(
    x_now: &DenseMatrix,
    x_prev: &DenseMatrix,
    measure_set: &[(usize, usize)],
    n_set: usize,
) -> Result<f64> {
    if x_now.shape() != x_prev.shape() {
        return Err(Error::dim(format!(
            "{:?} vs {:?}",
            x_now.shape(),
            x_prev.shape()
        )));
    }
    if n_set == 0 || measure_set.is_empty() {
        return Err(Error::input("dX needs a nonempty measurement set"));
    }
    let mut acc = 0.0;
    for &(i, j) in measure_set {
        if i >= x_now.rows() || j >= x_now.cols() {
            return Err(Error::input(format!("index ({i}, {j}) out of range")));
        }
        let d = x_now[(i, j)] - x_prev[(i, j)];
        acc += d * d;
    }
    Ok(acc.sqrt() / (n_set as f64).sqrt())
}

/// The user's row of `UVᵀ`.
pub fn predict_scores(result: &CompletionResult, user: usize) -> Result<Vec<f64>> {
    if user >= result.u.rows() {
        return Err(Error::input(format!(
            "user {user} out of range for {} users",
            result.u.rows()
        )));
    }
    let ui = result.u.row(user);
    Ok((0..result.v.rows()).map(|j| dot(ui, result.v.row(j))).collect())
}

/// Matrices at least this large in both dimensions are factorized through the
/// sparse-plus-low-rank operator rather than densely.
const OPERATOR_MIN_DIM: usize = 200;

/// Per-row sums from one pass over the completed matrix.
#[derive(Default, Clone, Copy)]
struct RowPass {
    observed_loss: f64,
    missing_change_sq: f64,
    model_change_sq: f64,
    completed_sq: f64,
}

/// Impute-and-factorize completion.
pub fn em_complete(observed: &ObservedMatrix, config: &CompletionConfig) -> Result<CompletionResult> {
    em_complete_with(observed, config, Execution::default())
}

pub fn em_complete_with(
    observed: &ObservedMatrix,
    config: &CompletionConfig,
    exec: Execution,
) -> Result<CompletionResult> {
    config.validate()?;
    let (n, m) = observed.shape();
    let k = config.inner.k;
    let lambda = config.inner.lambda;
    if k > n.min(m) {
        return Err(Error::input(format!(
            "rank {k} exceeds min(n, m) = {}",
            n.min(m)
        )));
    }
    let n_missing = n * m - observed.n_observed();
    let col_idx = observed.column_indices();

    // Current low-rank model (initially the fill model) and the completed matrix.
    let (mut left, mut right) = fill_model(observed, config.init_fill);
    let mut x_cur = initialize_fill(observed, config.init_fill)?;
    let mut model_at_obs: Vec<f64> = observed
        .entries()
        .iter()
        .map(|&(i, j, _)| dot(left.row(i), right.row(j)))
        .collect();
    let mut x_frob_sq = x_cur.frobenius_sq();
    let use_operator = n.min(m) >= OPERATOR_MIN_DIM && 3 * k <= n.min(m);

    let mut dx_history = Vec::new();
    let mut model_change_history = Vec::new();
    let mut objective_history = Vec::new();
    let mut converged = false;
    let mut u = DenseMatrix::zeros(n, k);
    let mut v = DenseMatrix::zeros(m, k);
    let mut prev_v: Option<DenseMatrix> = None;

    for t in 1..=config.em_max_iter {
        let sol = match config.solver {
            InnerSolver::ClosedForm => {
                let svd = if use_operator {
                    let residual: Vec<f64> = observed
                        .entries()
                        .iter()
                        .zip(&model_at_obs)
                        .map(|(e, z)| e.2 - z)
                        .collect();
                    let op = SparsePlusLowRank::new(&observed.row_ptr, &col_idx, residual, &left, &right);
                    let start = prev_v.as_ref().map(warm_start_vector);
                    truncated_svd(&op, k, start.as_deref())?
                } else {
                    thin_svd(&x_cur, Some(k))?
                };
                closed_form_from_svd(&svd, lambda, x_frob_sq)?
            }
            InnerSolver::Als => {
                let opts = AlsOptions {
                    init: prev_v.clone(),
                    track_subspace: None,
                };
                rsvd_als_with(&x_cur, &config.inner, opts)?
            }
        };
        u = sol.u;
        v = sol.v;

        let obs = observed;
        let (u_ref, v_ref) = (&u, &v);
        let rows = par::map_rows_mut(x_cur.as_mut_slice(), m, exec, |i, row| {
            let ui = u_ref.row(i);
            let mut acc = RowPass::default();
            let mut seen = obs.row_entries(i).iter().peekable();
            for (j, cell) in row.iter_mut().enumerate() {
                let z = dot(ui, v_ref.row(j));
                match seen.peek() {
                    Some(e) if e.1 == j => {
                        let r = e.2 - z;
                        acc.observed_loss += r * r;
                        seen.next();
                    }
                    _ => {
                        let d = z - *cell;
                        acc.missing_change_sq += d * d;
                        *cell = z;
                    }
                }
                acc.completed_sq += *cell * *cell;
            }
            acc
        });
        let mut total = RowPass::default();
        for r in &rows {
            total.observed_loss += r.observed_loss;
            total.missing_change_sq += r.missing_change_sq;
            total.completed_sq += r.completed_sq;
        }
        for (p, &(i, j, _)) in observed.entries().iter().enumerate() {
            let z = dot(u.row(i), v.row(j));
            let d = z - model_at_obs[p];
            total.model_change_sq += d * d;
            model_at_obs[p] = z;
        }

        let objective =
            total.observed_loss + total.missing_change_sq + lambda * (u.frobenius_sq() + v.frobenius_sq());
        let dx = if n_missing == 0 {
            0.0
        } else {
            (total.missing_change_sq / n_missing as f64).sqrt()
        };
        let dm = (total.model_change_sq / observed.n_observed() as f64).sqrt();
        objective_history.push(objective);
        dx_history.push(dx);
        model_change_history.push(dm);
        x_frob_sq = total.completed_sq;
        left = u.clone();
        right = v.clone();
        prev_v = Some(v.clone());
        log::debug!("em step {t}: dX = {dx:.3e}, J1 = {objective:.6e}");
        if dx <= config.em_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "em completion stopped at em_max_iter = {} with dX = {:.3e}",
            config.em_max_iter,
            dx_history.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(CompletionResult {
        u,
        v,
        x_hat: x_cur,
        em_iterations: dx_history.len(),
        dx_history,
        model_change_history,
        objective_history,
        converged,
    })
}

/// Sum of the normalized nonzero columns of the previous right factor.
fn warm_start_vector(v: &DenseMatrix) -> Vec<f64> {
    let mut start = vec![0.0; v.rows()];
    for j in 0..v.cols() {
        let col = v.column(j);
        let nc = norm2(&col);
        if nc > 0.0 {
            for (s, c) in start.iter_mut().zip(&col) {
                *s += c / nc;
            }
        }
    }
    start
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(n: usize, m: usize, e: &[(usize, usize, f64)]) -> ObservedMatrix {
        ObservedMatrix::new(n, m, e.to_vec()).unwrap()
    }

    #[test]
    fn observed_matrix_validation() {
        assert!(ObservedMatrix::new(2, 2, vec![]).is_err());
        assert!(ObservedMatrix::new(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(ObservedMatrix::new(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(ObservedMatrix::new(2, 2, vec![(0, 0, f64::NAN)]).is_err());
        let o = obs(2, 3, &[(1, 2, 5.0), (0, 1, 1.0), (1, 0, 2.0)]);
        assert_eq!(o.omega(), vec![(0, 1), (1, 0), (1, 2)]);
        assert_eq!(o.get(1, 2), Some(5.0));
        assert_eq!(o.get(0, 0), None);
        assert_eq!(o.missing(), vec![(0, 0), (0, 2), (1, 1)]);
    }

    #[test]
    fn masked_objective_examples() {
        let o = obs(2, 2, &[(0, 0, 1.0), (1, 1, 2.0)]);
        let z = DenseMatrix::zeros(2, 1);
        assert_eq!(masked_objective(&o, &z, &z, 0.0).unwrap(), 5.0);

        let u = DenseMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let v = DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let o = obs(2, 2, &[(0, 0, 1.0), (1, 0, 2.0), (1, 1, 2.0)]);
        assert_eq!(masked_objective(&o, &u, &v, 0.0).unwrap(), 0.0);

        let o = obs(1, 1, &[(0, 0, 2.0)]);
        let one = DenseMatrix::from_rows(&[[1.0]]).unwrap();
        assert_eq!(masked_objective(&o, &one, &one, 1.0).unwrap(), 3.0);
        assert!(masked_objective(&o, &u, &one, 1.0).is_err());
    }

    #[test]
    fn fill_examples() {
        let o = obs(3, 2, &[(0, 0, 1.0), (2, 0, 3.0), (1, 1, 4.0)]);
        let x = initialize_fill(&o, InitFill::ColumnMean).unwrap();
        assert_eq!(x[(1, 0)], 2.0);
        assert_eq!(x[(0, 1)], 4.0);
        assert_eq!(x[(2, 0)], 3.0);

        let full = DenseMatrix::from_fn(2, 2, |i, j| (i * 2 + j) as f64);
        let o = ObservedMatrix::from_dense(&full);
        for mode in [InitFill::ColumnMean, InitFill::RowMean, InitFill::GlobalMean] {
            assert_eq!(initialize_fill(&o, mode).unwrap(), full);
        }

        // column 1 unobserved: falls back to the global mean (1 + 4) / 2
        let o = obs(2, 2, &[(0, 0, 1.0), (1, 0, 4.0)]);
        let x = initialize_fill(&o, InitFill::ColumnMean).unwrap();
        assert_eq!(x.column(1), vec![2.5, 2.5]);

        let o = obs(2, 2, &[(0, 0, 1.0), (1, 0, 1.0), (0, 1, 1.0)]);
        let x = initialize_fill(&o, InitFill::ColumnMeanImplicit).unwrap();
        assert_eq!(x[(1, 1)], 0.5);
        let x = initialize_fill(&o, InitFill::RowMeanImplicit).unwrap();
        assert_eq!(x[(1, 1)], 0.5);
    }

    #[test]
    fn dx_examples() {
        let a = DenseMatrix::from_fn(2, 2, |i, j| (i + j) as f64);
        assert_eq!(dx_residual(&a, &a, &[(0, 0)], 1).unwrap(), 0.0);
        let b = a.map(|x| x + 3.0);
        assert_eq!(dx_residual(&b, &a, &[(1, 1)], 1).unwrap(), 3.0);
        let c = a.map(|x| x + 1.0);
        let all = [(0, 0), (0, 1), (1, 0), (1, 1)];
        assert_eq!(dx_residual(&c, &a, &all, 4).unwrap(), 1.0);
        assert!(dx_residual(&c, &a, &[], 0).is_err());
    }

    #[test]
    fn predict_scores_examples() {
        let result = CompletionResult {
            u: DenseMatrix::from_rows(&[[1.0, 0.0], [0.5, 2.0]]).unwrap(),
            v: DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap(),
            x_hat: DenseMatrix::zeros(2, 3),
            dx_history: vec![],
            model_change_history: vec![],
            objective_history: vec![],
            em_iterations: 0,
            converged: true,
        };
        assert_eq!(predict_scores(&result, 0).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(predict_scores(&result, 1).unwrap(), vec![0.5, 2.0, 0.0]);
        assert!(predict_scores(&result, 2).is_err());
    }

    #[test]
    fn parses_modes() {
        for name in InitFill::NAMES {
            assert_eq!(name.parse::<InitFill>().unwrap().to_string(), name);
        }
        assert!("median".parse::<InitFill>().is_err());
        assert_eq!("als".parse::<InnerSolver>().unwrap(), InnerSolver::Als);
        assert!("svd".parse::<InnerSolver>().is_err());
    }
}

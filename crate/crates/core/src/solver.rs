//! Regularized SVD solvers.
//!
//! Both solvers minimize
//!
//! ```text
//! J₁(U, V) = ‖X − U·Vᵀ‖²_F + λ‖U‖²_F + λ‖V‖²_F
//! ```
//!
//! over `U ∈ ℝ^{n×k}`, `V ∈ ℝ^{m×k}`. [`rsvd_als`] alternates the two ridge
//! least-squares updates from a random `V`; [`rsvd_closed_form`] reads the
//! global optimum off a rank-`k` SVD by shrinking each singular value by `λ`
//! and splitting the result evenly between the two factors:
//! `U = F_k·Ω`, `V = G_k·Ω` with `ω_i = √((σ_i − λ)₊)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, thin_svd, Cholesky, DenseMatrix, SvdFactors};

#[derive(Clone, Debug, PartialEq)]
pub struct RsvdConfig {
    /// Target rank.
    pub k: usize,
    /// Regularization weight, `λ ≥ 0`.
    pub lambda: f64,
    pub max_iter: usize,
    /// Threshold on both `dV` and the relative objective change.
    pub tol: f64,
    /// Seed for the random initial `V`.
    pub seed: u64,
}

impl RsvdConfig {
    pub const DEFAULT_MAX_ITER: usize = 500;
    pub const DEFAULT_TOL: f64 = 1e-8;

    pub fn new(k: usize, lambda: f64) -> Self {
        RsvdConfig {
            k,
            lambda,
            max_iter: Self::DEFAULT_MAX_ITER,
            tol: Self::DEFAULT_TOL,
            seed: 0,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::input("rank k must be at least 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::input(format!(
                "lambda must be a finite nonnegative number, got {}",
                self.lambda
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::input("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::input(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    fn check_rank(&self, x: &DenseMatrix) -> Result<()> {
        let min_dim = x.rows().min(x.cols());
        if self.k > min_dim {
            return Err(Error::input(format!(
                "rank {} exceeds min(n, m) = {min_dim}",
                self.k
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Als,
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// The iteration budget ran out; histories are still returned.
    MaxIterations,
    /// `λ ≥ σ₁`: every shrunk singular value vanished and `U = V = 0`.
    ZeroSolution,
}

/// `ω_i = √((σ_i − λ)₊)` for the leading `k` singular values.
#[derive(Clone, Debug, PartialEq)]
pub struct ShrinkageSpectrum {
    pub sigma: Vec<f64>,
    pub omega: Vec<f64>,
    /// Number of strictly positive `ω_i`.
    pub effective_rank: usize,
}

#[derive(Clone, Debug)]
pub struct RsvdSolution {
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    /// Final `J₁`.
    pub objective: f64,
    /// `J₁` after each ALS sweep (a single entry for the closed form).
    pub objective_history: Vec<f64>,
    /// `‖V_t − V_{t−1}‖_F` after each ALS sweep.
    pub dv_history: Vec<f64>,
    /// `(r₁, r₂)` after each ALS sweep, when tracking was requested.
    pub subspace_history: Vec<(f64, f64)>,
    pub iterations: usize,
    pub method: Method,
    pub status: SolveStatus,
    pub spectrum: Option<ShrinkageSpectrum>,
}

fn check_factors(x: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix) -> Result<()> {
    if u.rows() != x.rows() || v.rows() != x.cols() || u.cols() != v.cols() {
        return Err(Error::dim(format!(
            "X is {}x{}, U is {}x{}, V is {}x{}",
            x.rows(),
            x.cols(),
            u.rows(),
            u.cols(),
            v.rows(),
            v.cols()
        )));
    }
    Ok(())
}

/// `‖X − UVᵀ‖²_F + λ‖U‖²_F + λ‖V‖²_F`.
pub fn objective_j1(x: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix, lambda: f64) -> Result<f64> {
    check_factors(x, u, v)?;
    let k = u.cols();
    let mut loss = 0.0;
    for i in 0..x.rows() {
        let ui = u.row(i);
        for (j, &xij) in x.row(i).iter().enumerate() {
            let vj = v.row(j);
            let mut z = 0.0;
            for p in 0..k {
                z += ui[p] * vj[p];
            }
            let r = xij - z;
            loss += r * r;
        }
    }
    Ok(loss + lambda * (u.frobenius_sq() + v.frobenius_sq()))
}

/// Cholesky factor of `gram + λI`, adding a `1e-12`-relative jitter when the
/// system is numerically semidefinite.
fn ridge_factor(gram: &DenseMatrix, lambda: f64) -> Result<Cholesky> {
    let k = gram.rows();
    let mut a = gram.clone();
    for i in 0..k {
        a[(i, i)] += lambda;
    }
    let max_diag = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max);
    if !(max_diag > 0.0) {
        return Err(Error::Singular(
            "factor matrix is zero and lambda is zero".into(),
        ));
    }
    if let Some(ch) = Cholesky::new(&a, 1e-14 * max_diag) {
        return Ok(ch);
    }
    let jitter = 1e-12 * max_diag;
    for i in 0..k {
        a[(i, i)] += jitter;
    }
    Cholesky::new(&a, 0.0).ok_or_else(|| {
        Error::Singular("ridge system is not positive definite even after jitter".into())
    })
}

/// Right-multiplies `b` by `(gram + λI)⁻¹` row by row.
fn solve_rows(mut b: DenseMatrix, gram: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    let ch = ridge_factor(gram, lambda)?;
    for i in 0..b.rows() {
        ch.solve_in_place(b.row_mut(i));
    }
    Ok(b)
}

/// `U = X·V·(VᵀV + λI)⁻¹`.
pub fn update_u(x: &DenseMatrix, v: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    if v.rows() != x.cols() {
        return Err(Error::dim(format!(
            "V has {} rows but X has {} columns",
            v.rows(),
            x.cols()
        )));
    }
    solve_rows(x.matmul(v)?, &v.gram(), lambda)
}

/// `V = Xᵀ·U·(UᵀU + λI)⁻¹`.
pub fn update_v(x: &DenseMatrix, u: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    if u.rows() != x.rows() {
        return Err(Error::dim(format!(
            "U has {} rows but X has {} rows",
            u.rows(),
            x.rows()
        )));
    }
    solve_rows(x.t_matmul(u)?, &u.gram(), lambda)
}

/// `‖V_now − V_prev‖_F`.
pub fn dv_residual(v_now: &DenseMatrix, v_prev: &DenseMatrix) -> Result<f64> {
    Ok(v_now.sub(v_prev)?.frobenius_norm())
}

/// Squared distances of `U_t` and `V_t` from the column spans of `svd.f` and
/// `svd.g`: `r₁ = ‖U_t − F·FᵀU_t‖²_F`, `r₂ = ‖V_t − G·GᵀV_t‖²_F`.
///
/// Pass a rank-`k` SVD to measure convergence into the leading singular
/// subspaces; the full-rank factors contain every ALS iterate trivially.
pub fn subspace_residuals(u: &DenseMatrix, v: &DenseMatrix, svd: &SvdFactors) -> Result<(f64, f64)> {
    if u.rows() != svd.f.rows() || v.rows() != svd.g.rows() {
        return Err(Error::dim(format!(
            "U is {}x{} and V is {}x{}, SVD factors are {}x{} and {}x{}",
            u.rows(),
            u.cols(),
            v.rows(),
            v.cols(),
            svd.f.rows(),
            svd.f.cols(),
            svd.g.rows(),
            svd.g.cols()
        )));
    }
    if svd.rank() < u.cols() || u.cols() != v.cols() {
        return Err(Error::dim(format!(
            "SVD has {} columns, factors have {} and {}",
            svd.rank(),
            u.cols(),
            v.cols()
        )));
    }
    let project_out = |basis: &DenseMatrix, y: &DenseMatrix| -> Result<f64> {
        let coeff = basis.t_matmul(y)?;
        Ok(y.sub(&basis.matmul(&coeff)?)?.frobenius_sq())
    };
    Ok((project_out(&svd.f, u)?, project_out(&svd.g, v)?))
}

/// Initial `V` with i.i.d. uniform(−1, 1) entries drawn row-major.
pub fn random_init(m: usize, k: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0))
}

/// Extra inputs for [`rsvd_als_with`].
#[derive(Clone, Debug, Default)]
pub struct AlsOptions<'a> {
    /// Starting `V`; drawn from the config seed when absent.
    pub init: Option<DenseMatrix>,
    /// Record `(r₁, r₂)` against these factors after each sweep.
    pub track_subspace: Option<&'a SvdFactors>,
}

/// Alternating ridge least squares from a random `V`.
pub fn rsvd_als(x: &DenseMatrix, config: &RsvdConfig) -> Result<RsvdSolution> {
    rsvd_als_with(x, config, AlsOptions::default())
}

pub fn rsvd_als_with(x: &DenseMatrix, config: &RsvdConfig, opts: AlsOptions<'_>) -> Result<RsvdSolution> {
    config.validate()?;
    config.check_rank(x)?;
    let lambda = config.lambda;
    let mut v = match opts.init {
        Some(v0) => {
            if v0.shape() != (x.cols(), config.k) {
                return Err(Error::dim(format!(
                    "initial V is {}x{}, expected {}x{}",
                    v0.rows(),
                    v0.cols(),
                    x.cols(),
                    config.k
                )));
            }
            v0
        }
        None => random_init(x.cols(), config.k, config.seed),
    };

    let mut objective_history = Vec::new();
    let mut dv_history = Vec::new();
    let mut subspace_history = Vec::new();
    let mut u = DenseMatrix::zeros(x.rows(), config.k);
    let mut status = SolveStatus::MaxIterations;
    for t in 1..=config.max_iter {
        u = update_u(x, &v, lambda)?;
        let v_new = update_v(x, &u, lambda)?;
        let j = objective_j1(x, &u, &v_new, lambda)?;
        let dv = dv_residual(&v_new, &v)?;
        if let Some(svd) = opts.track_subspace {
            subspace_history.push(subspace_residuals(&u, &v_new, svd)?);
        }
        let prev = objective_history.last().copied();
        objective_history.push(j);
        dv_history.push(dv);
        v = v_new;
        let objective_settled = prev.is_some_and(|p: f64| (p - j).abs() <= config.tol * p.max(1.0));
        if objective_settled || dv <= config.tol {
            log::debug!("als converged after {t} sweeps, J1 = {j:.6e}, dV = {dv:.3e}");
            status = SolveStatus::Converged;
            break;
        }
    }
    if status == SolveStatus::MaxIterations {
        log::warn!(
            "als stopped at max_iter = {} without meeting tol = {:e}",
            config.max_iter,
            config.tol
        );
    }
    let objective = *objective_history.last().expect("max_iter >= 1");
    Ok(RsvdSolution {
        u,
        v,
        objective,
        iterations: objective_history.len(),
        objective_history,
        dv_history,
        subspace_history,
        method: Method::Als,
        status,
        spectrum: None,
    })
}

/// `ω_i = √((σ_i − λ)₊)` for `i < k`.
pub fn shrink_singular_values(sigma: &[f64], lambda: f64, k: usize) -> ShrinkageSpectrum {
    let sigma: Vec<f64> = sigma.iter().take(k).copied().collect();
    let omega: Vec<f64> = sigma.iter().map(|&s| (s - lambda).max(0.0).sqrt()).collect();
    let effective_rank = omega.iter().filter(|&&w| w > 0.0).count();
    ShrinkageSpectrum {
        sigma,
        omega,
        effective_rank,
    }
}

/// Global optimum of `J₁` from the rank-`k` SVD of `x`.
pub fn rsvd_closed_form(x: &DenseMatrix, k: usize, lambda: f64) -> Result<RsvdSolution> {
    RsvdConfig::new(k, lambda).validate()?;
    let svd = thin_svd(x, Some(k))?;
    let mut sol = closed_form_from_svd(&svd, lambda, 0.0)?;
    sol.objective = objective_j1(x, &sol.u, &sol.v, lambda)?;
    sol.objective_history = vec![sol.objective];
    Ok(sol)
}

/// Closed-form factors from a precomputed rank-`k` SVD of `X`.
///
/// The objective is evaluated from the spectrum and `‖X‖²_F` (which the caller
/// supplies), using `‖X − F_k·diag(σ − λ)₊·G_kᵀ‖² = ‖X‖² − Σσ_i² + Σ(σ_i − (σ_i − λ)₊)²`.
pub fn closed_form_from_svd(svd: &SvdFactors, lambda: f64, x_frobenius_sq: f64) -> Result<RsvdSolution> {
    let k = svd.rank();
    let spectrum = shrink_singular_values(&svd.sigma, lambda, k);
    let u = svd.f.scale_columns(&spectrum.omega);
    let v = svd.g.scale_columns(&spectrum.omega);
    let mut loss = x_frobenius_sq;
    let mut reg = 0.0;
    for (&s, &w) in spectrum.sigma.iter().zip(&spectrum.omega) {
        let kept = w * w;
        loss += (s - kept) * (s - kept) - s * s;
        reg += 2.0 * kept;
    }
    let objective = loss.max(0.0) + lambda * reg;
    let status = if spectrum.effective_rank == 0 {
        log::warn!("lambda = {lambda} is at least sigma_1; the solution is identically zero");
        SolveStatus::ZeroSolution
    } else {
        SolveStatus::Converged
    };
    Ok(RsvdSolution {
        u,
        v,
        objective,
        objective_history: vec![objective],
        dv_history: Vec::new(),
        subspace_history: Vec::new(),
        iterations: 0,
        method: Method::ClosedForm,
        status,
        spectrum: Some(spectrum),
    })
}

/// Rotates `(U, V)` by the orthogonal `Q` that makes `VᵀV` diagonal, leaving
/// `U·Vᵀ` and `J₁` unchanged.
///
/// `J₁` is invariant under `(U, V) → (U·Q, V·Q)`, so ALS converges to some
/// rotation of the closed-form factors. After alignment, columns are ordered
/// by decreasing `‖V_i‖` and signed so the largest-magnitude entry of each
/// `U` column is positive, which matches [`closed_form_from_svd`] up to the
/// usual sign and tie ambiguities.
pub fn align_to_principal_axes(u: &DenseMatrix, v: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if u.cols() != v.cols() {
        return Err(Error::dim(format!("U has {} columns, V has {}", u.cols(), v.cols())));
    }
    let q = jacobi_svd(v).g;
    let mut u = u.matmul(&q)?;
    let mut v = v.matmul(&q)?;
    for j in 0..u.cols() {
        let col = u.column(j);
        let pivot = col.iter().copied().fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            u.set_column(j, &col.iter().map(|x| -x).collect::<Vec<_>>());
            v.set_column(j, &v.column(j).iter().map(|x| -x).collect::<Vec<_>>());
        }
    }
    Ok((u, v))
}

/// First 1-based sweep at which `dV` drops to `tol` or below.
pub fn iterations_to_tolerance(dv_history: &[f64], tol: f64) -> Option<usize> {
    dv_history.iter().position(|&d| d <= tol).map(|i| i + 1)
}

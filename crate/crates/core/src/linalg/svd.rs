//! Thin singular value decomposition.
//!
//! Two in-repo routines:
//!
//! * one-sided (Hestenes) Jacobi, which computes every singular triplet to
//!   full working accuracy and is used for small and medium matrices;
//! * Golub–Kahan–Lanczos bidiagonalization with full reorthogonalization,
//!   which extracts the leading `k` triplets of a large operator using only
//!   matrix–vector products. The projected bidiagonal matrix is solved with
//!   the Jacobi routine.
//!
//! Both return singular values in nonincreasing order, and each left singular
//! vector is signed so that its largest-magnitude entry is positive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{dot, norm2, DenseMatrix};
use super::operator::{LinearMap, Transposed};
use crate::error::{Error, Result};

/// Thin SVD `X ≈ F · diag(sigma) · Gᵀ`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    /// Left singular vectors, `n × r`.
    pub f: DenseMatrix,
    /// Singular values, nonincreasing.
    pub sigma: Vec<f64>,
    /// Right singular vectors, `m × r`.
    pub g: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> SvdFactors {
        assert!(k >= 1 && k <= self.rank());
        SvdFactors {
            f: self.f.first_columns(k),
            sigma: self.sigma[..k].to_vec(),
            g: self.g.first_columns(k),
        }
    }

    /// `F · diag(sigma) · Gᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.f
            .scale_columns(&self.sigma)
            .matmul_t(&self.g)
            .expect("factor shapes agree")
    }
}

/// Which routine [`thin_svd_with`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvdMethod {
    /// Jacobi for small problems or large `k`, Lanczos otherwise.
    Auto,
    Jacobi,
    Lanczos,
}

/// Smallest dimension at which `Auto` switches to Lanczos.
const LANCZOS_MIN_DIM: usize = 200;

/// Leading `k` singular triplets of `x`, or all `min(n, m)` when `k` is `None`.
pub fn thin_svd(x: &DenseMatrix, k: Option<usize>) -> Result<SvdFactors> {
    thin_svd_with(x, k, SvdMethod::Auto)
}

pub fn thin_svd_with(x: &DenseMatrix, k: Option<usize>, method: SvdMethod) -> Result<SvdFactors> {
    if !x.is_finite() {
        return Err(Error::input("matrix contains non-finite entries"));
    }
    let min_dim = x.rows().min(x.cols());
    let k = k.unwrap_or(min_dim);
    if k == 0 || k > min_dim {
        return Err(Error::input(format!(
            "requested rank {k} outside 1..={min_dim} for a {}x{} matrix",
            x.rows(),
            x.cols()
        )));
    }
    let use_lanczos = match method {
        SvdMethod::Jacobi => false,
        SvdMethod::Lanczos => true,
        SvdMethod::Auto => min_dim >= LANCZOS_MIN_DIM && 3 * k <= min_dim,
    };
    if use_lanczos {
        truncated_svd(x, k, None)
    } else {
        let full = jacobi_svd(x);
        Ok(if k < full.rank() { full.truncate(k) } else { full })
    }
}

/// Full thin SVD by one-sided Jacobi rotations.
///
/// Tall inputs are first reduced to their `m×m` triangular factor by
/// Householder QR, so rotations act on short columns.
pub fn jacobi_svd(x: &DenseMatrix) -> SvdFactors {
    if x.rows() < x.cols() {
        let t = jacobi_svd(&x.transpose());
        let mut out = SvdFactors {
            f: t.g,
            sigma: t.sigma,
            g: t.f,
        };
        normalize_signs(&mut out);
        return out;
    }
    if x.rows() >= 2 * x.cols() && x.cols() >= 8 {
        let qr = Householder::new(x);
        let inner = jacobi_square_or_tall(&qr.r());
        let mut out = SvdFactors {
            f: qr.apply_q(&inner.f),
            sigma: inner.sigma,
            g: inner.g,
        };
        normalize_signs(&mut out);
        return out;
    }
    jacobi_square_or_tall(x)
}

/// Householder reflectors of a tall matrix, stored column-wise.
struct Householder {
    rows: usize,
    /// Column `j` holds the reflector `v_j` in entries `j..rows` and `R`'s
    /// strict upper part above the diagonal.
    cols: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

impl Householder {
    fn new(x: &DenseMatrix) -> Self {
        let (n, m) = x.shape();
        let mut cols: Vec<Vec<f64>> = (0..m).map(|j| x.column(j)).collect();
        let mut diag = vec![0.0; m];
        for j in 0..m {
            let alpha = norm2(&cols[j][j..]);
            if alpha == 0.0 {
                continue;
            }
            let d = if cols[j][j] > 0.0 { -alpha } else { alpha };
            cols[j][j] -= d;
            let vnorm_sq = dot(&cols[j][j..], &cols[j][j..]);
            diag[j] = d;
            let (head, tail) = cols.split_at_mut(j + 1);
            let v = &head[j][j..];
            for c in tail.iter_mut() {
                let f = 2.0 * dot(v, &c[j..]) / vnorm_sq;
                for (ci, vi) in c[j..].iter_mut().zip(v) {
                    *ci -= f * vi;
                }
            }
        }
        Householder { rows: n, cols, diag }
    }

    fn r(&self) -> DenseMatrix {
        let m = self.cols.len();
        DenseMatrix::from_fn(m, m, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => self.cols[j][i],
            std::cmp::Ordering::Equal => self.diag[j],
            std::cmp::Ordering::Greater => 0.0,
        })
    }

    /// `Q·[B; 0]` for an `m×p` block `B`.
    fn apply_q(&self, b: &DenseMatrix) -> DenseMatrix {
        let (n, m) = (self.rows, self.cols.len());
        let mut out: Vec<Vec<f64>> = (0..b.cols())
            .map(|c| {
                let mut col = vec![0.0; n];
                col[..m].copy_from_slice(&b.column(c));
                col
            })
            .collect();
        for j in (0..m).rev() {
            if self.diag[j] == 0.0 {
                continue;
            }
            let v = &self.cols[j][j..];
            let vnorm_sq = dot(v, v);
            for col in out.iter_mut() {
                let f = 2.0 * dot(v, &col[j..]) / vnorm_sq;
                for (ci, vi) in col[j..].iter_mut().zip(v) {
                    *ci -= f * vi;
                }
            }
        }
        columns_to_matrix(&out, n)
    }
}

fn jacobi_square_or_tall(x: &DenseMatrix) -> SvdFactors {
    let (n, m) = x.shape();
    let mut a: Vec<Vec<f64>> = (0..m).map(|j| x.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();

    let tol = f64::EPSILON * (n as f64).sqrt().max(1.0);
    const MAX_SWEEPS: usize = 80;
    let mut norms: Vec<f64> = a.iter().map(|c| dot(c, c)).collect();
    for sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&a[p], &a[q]);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut a, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
                norms[p] = dot(&a[p], &a[p]);
                norms[q] = dot(&a[q], &a[q]);
            }
        }
        if !rotated {
            break;
        }
        if sweep + 1 == MAX_SWEEPS {
            log::warn!("jacobi svd: sweep limit reached on a {n}x{m} matrix");
        }
    }

    let sigma_raw: Vec<f64> = a.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| sigma_raw[j].total_cmp(&sigma_raw[i]).then(i.cmp(&j)));

    let sigma_max = order.first().map_or(0.0, |&i| sigma_raw[i]);
    let negligible = sigma_max * f64::EPSILON * (n.max(m) as f64);
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut sigma = Vec::with_capacity(m);
    let mut right: Vec<Vec<f64>> = Vec::with_capacity(m);
    for &j in &order {
        let s = sigma_raw[j];
        let u = if s > negligible && s > 0.0 {
            let mut u: Vec<f64> = a[j].iter().map(|x| x / s).collect();
            orthogonalize(&mut u, &left);
            let nu = norm2(&u);
            u.iter_mut().for_each(|x| *x /= nu);
            u
        } else {
            complete_basis_vector(&left, n)
        };
        left.push(u);
        sigma.push(s);
        right.push(v[j].clone());
    }

    let mut out = SvdFactors {
        f: columns_to_matrix(&left, n),
        sigma,
        g: columns_to_matrix(&right, m),
    };
    normalize_signs(&mut out);
    out
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Two passes of modified Gram–Schmidt against `basis` (assumed orthonormal).
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            if c != 0.0 {
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
    }
}

/// A unit vector orthogonal to `basis`, built from coordinate vectors.
fn complete_basis_vector(basis: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = -1.0;
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        orthogonalize(&mut e, basis);
        let ne = norm2(&e);
        if ne > 0.5 {
            e.iter_mut().for_each(|x| *x /= ne);
            return e;
        }
        if ne > best_norm {
            best_norm = ne;
            best = Some(e);
        }
    }
    let mut e = best.expect("n >= 1");
    e.iter_mut().for_each(|x| *x /= best_norm);
    e
}

fn columns_to_matrix(cols: &[Vec<f64>], n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// Flips each triplet so the largest-magnitude entry of its left vector is positive.
fn normalize_signs(svd: &mut SvdFactors) {
    let n = svd.f.rows();
    for j in 0..svd.rank() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..n {
            let a = svd.f[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if svd.f[(best, j)] < 0.0 {
            for i in 0..n {
                svd.f[(i, j)] = -svd.f[(i, j)];
            }
            for i in 0..svd.g.rows() {
                svd.g[(i, j)] = -svd.g[(i, j)];
            }
        }
    }
}

/// Relative residual bound at which a Lanczos Ritz triplet is accepted.
const LANCZOS_TOL: f64 = 1e-12;

/// Leading `k` singular triplets of an operator by Golub–Kahan–Lanczos
/// bidiagonalization with full reorthogonalization.
///
/// `start` seeds the right Krylov vector; a fixed pseudo-random vector is used
/// when absent. The Krylov dimension grows until every wanted Ritz triplet
/// satisfies `‖Aᵀu − θv‖ ≤ 1e-12 · θ₁`, or until it spans the whole space, in
/// which case the result is exact.
pub fn truncated_svd(op: &dyn LinearMap, k: usize, start: Option<&[f64]>) -> Result<SvdFactors> {
    if op.nrows() < op.ncols() {
        // A right-space start vector maps to the transposed problem through A.
        let mapped = start.filter(|s| s.len() == op.ncols()).map(|s| {
            let mut y = vec![0.0; op.nrows()];
            op.apply(s, &mut y);
            y
        });
        let t = lanczos_tall(&Transposed(op), k, mapped.as_deref())?;
        let mut out = SvdFactors {
            f: t.g,
            sigma: t.sigma,
            g: t.f,
        };
        normalize_signs(&mut out);
        return Ok(out);
    }
    lanczos_tall(op, k, start)
}

fn lanczos_tall(op: &dyn LinearMap, k: usize, start: Option<&[f64]>) -> Result<SvdFactors> {
    let (n, m) = (op.nrows(), op.ncols());
    if k == 0 || k > m {
        return Err(Error::input(format!(
            "requested rank {k} outside 1..={m} for a {n}x{m} operator"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
    let mut random_unit = |basis: &[Vec<f64>], len: usize| -> Option<Vec<f64>> {
        for _ in 0..4 {
            let mut v: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            orthogonalize(&mut v, basis);
            let nv = norm2(&v);
            if nv > 1e-8 {
                v.iter_mut().for_each(|x| *x /= nv);
                return Some(v);
            }
        }
        None
    };

    let mut p_vecs: Vec<Vec<f64>> = Vec::new();
    let mut q_vecs: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let first = match start {
        Some(s) if s.len() == m && norm2(s) > 0.0 => {
            let ns = norm2(s);
            s.iter().map(|x| x / ns).collect()
        }
        _ => random_unit(&[], m).expect("nonzero random vector"),
    };
    p_vecs.push(first);

    let mut anorm: f64 = 0.0;
    let mut next_check = (k + 8).min(m);
    let mut q_work = vec![0.0; n];
    let mut p_work = vec![0.0; m];

    loop {
        let j = alphas.len();
        // q_j = A p_j − β_{j−1} q_{j−1}
        op.apply(&p_vecs[j], &mut q_work);
        if j > 0 {
            let b = betas[j - 1];
            for (x, y) in q_work.iter_mut().zip(&q_vecs[j - 1]) {
                *x -= b * y;
            }
        }
        orthogonalize(&mut q_work, &q_vecs);
        let mut alpha = norm2(&q_work);
        anorm = anorm.max(alpha);
        let q_next = if alpha > 1e-12 * anorm && alpha > 0.0 {
            q_work.iter().map(|x| x / alpha).collect()
        } else {
            alpha = 0.0;
            random_unit(&q_vecs, n).ok_or_else(|| {
                Error::NoConvergence("lanczos: could not extend the left Krylov basis".into())
            })?
        };
        alphas.push(alpha);
        q_vecs.push(q_next);

        // p_{j+1} = Aᵀ q_j − α_j p_j
        op.apply_transpose(&q_vecs[j], &mut p_work);
        for (x, y) in p_work.iter_mut().zip(&p_vecs[j]) {
            *x -= alpha * y;
        }
        orthogonalize(&mut p_work, &p_vecs);
        let mut beta = norm2(&p_work);
        anorm = anorm.max(beta);
        let s = j + 1;
        let full = s == m;
        if !(beta > 1e-12 * anorm && beta > 0.0) {
            beta = 0.0;
        }
        betas.push(beta);

        if s >= k && (full || s >= next_check || beta == 0.0) {
            let b = bidiagonal(&alphas, &betas);
            let small = jacobi_svd(&b);
            let theta_max = small.sigma[0];
            let converged = full
                || (0..k).all(|i| {
                    (beta * small.f[(s - 1, i)]).abs() <= LANCZOS_TOL * theta_max.max(f64::MIN_POSITIVE)
                });
            if converged {
                let mut out = ritz_vectors(&q_vecs, &p_vecs[..s], &small, k, n, m);
                normalize_signs(&mut out);
                log::debug!("lanczos svd: {n}x{m}, k={k}, krylov dimension {s}");
                return Ok(out);
            }
            next_check = (s + (s / 8).max(2)).min(m);
        }

        let p_next = if beta > 0.0 {
            p_work.iter().map(|x| x / beta).collect()
        } else {
            random_unit(&p_vecs, m).ok_or_else(|| {
                Error::NoConvergence("lanczos: could not extend the right Krylov basis".into())
            })?
        };
        p_vecs.push(p_next);
    }
}

/// Upper bidiagonal `s × s` matrix with `alphas` on the diagonal and the first
/// `s − 1` betas on the superdiagonal.
fn bidiagonal(alphas: &[f64], betas: &[f64]) -> DenseMatrix {
    let s = alphas.len();
    let mut b = DenseMatrix::zeros(s, s);
    for i in 0..s {
        b[(i, i)] = alphas[i];
        if i + 1 < s {
            b[(i, i + 1)] = betas[i];
        }
    }
    b
}

fn ritz_vectors(
    q_vecs: &[Vec<f64>],
    p_vecs: &[Vec<f64>],
    small: &SvdFactors,
    k: usize,
    n: usize,
    m: usize,
) -> SvdFactors {
    let s = p_vecs.len();
    let mut f = DenseMatrix::zeros(n, k);
    let mut g = DenseMatrix::zeros(m, k);
    for c in 0..k {
        for t in 0..s {
            let y = small.f[(t, c)];
            if y != 0.0 {
                for (i, &qv) in q_vecs[t].iter().enumerate() {
                    f[(i, c)] += y * qv;
                }
            }
            let z = small.g[(t, c)];
            if z != 0.0 {
                for (i, &pv) in p_vecs[t].iter().enumerate() {
                    g[(i, c)] += z * pv;
                }
            }
        }
    }
    SvdFactors {
        f,
        sigma: small.sigma[..k].to_vec(),
        g,
    }
}

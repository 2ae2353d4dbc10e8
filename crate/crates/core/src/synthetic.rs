//! Seeded synthetic data: random dense matrices, low-rank completion
//! instances, and implicit-feedback rating sets shaped like public datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};

use crate::completion::ObservedMatrix;
use crate::datasets::{Provenance, RatingTriples, SourceFormat};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Entries i.i.d. uniform on `[lo, hi)`.
pub fn uniform_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Entries i.i.d. standard normal.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// `A·Bᵀ` with standard normal `A` (rows×rank) and `B` (cols×rank).
pub fn low_rank_matrix(rows: usize, cols: usize, rank: usize, seed: u64) -> DenseMatrix {
    let a = gaussian_matrix(rows, rank, seed);
    let b = gaussian_matrix(cols, rank, seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    a.matmul_t(&b).expect("shapes agree")
}

/// A fully known matrix with some cells hidden.
#[derive(Clone, Debug)]
pub struct CompletionInstance {
    pub truth: DenseMatrix,
    pub observed: ObservedMatrix,
    /// Hidden cells, ascending.
    pub hidden: Vec<(usize, usize)>,
}

/// Hides `round(fraction · n · m)` uniformly chosen cells, redrawing until
/// every row and column keeps at least `min_per_line` observations.
pub fn hide_entries(truth: &DenseMatrix, fraction: f64, min_per_line: usize, seed: u64) -> Result<CompletionInstance> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::input(format!("hidden fraction {fraction} must lie in [0, 1)")));
    }
    let (n, m) = truth.shape();
    let n_hide = (fraction * (n * m) as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let mut hidden: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, n * m, n_hide)
            .into_iter()
            .map(|p| (p / m, p % m))
            .collect();
        hidden.sort_unstable();
        let mut row_kept = vec![m; n];
        let mut col_kept = vec![n; m];
        for &(i, j) in &hidden {
            row_kept[i] -= 1;
            col_kept[j] -= 1;
        }
        if row_kept.iter().chain(&col_kept).any(|&c| c < min_per_line) {
            continue;
        }
        let mut is_hidden = vec![false; n * m];
        for &(i, j) in &hidden {
            is_hidden[i * m + j] = true;
        }
        let entries = (0..n * m)
            .filter(|&p| !is_hidden[p])
            .map(|p| (p / m, p % m, truth.as_slice()[p]))
            .collect();
        return Ok(CompletionInstance {
            truth: truth.clone(),
            observed: ObservedMatrix::new(n, m, entries)?,
            hidden,
        });
    }
    Err(Error::input(format!(
        "could not hide {n_hide} cells while keeping {min_per_line} per row and column"
    )))
}

/// How many ratings each synthetic user gives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActivityModel {
    /// `min + LogNormal(μ, s)` with mean `min + extra_mean`, capped at `max`.
    HeavyTail { min: usize, extra_mean: f64, shape: f64, max: usize },
    /// `max − Exp(mean)`, floored at `min`.
    NearCap { min: usize, max: usize, shortfall_mean: f64 },
}

/// Users pick items with probability proportional to
/// `popularity(item) · exp(affinity · θ_u·φ_i)`, where `popularity` follows
/// a Zipf-like law and `θ`, `φ` are Gaussian taste vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitSpec {
    pub n_users: usize,
    pub m_items: usize,
    pub activity: ActivityModel,
    pub latent_rank: usize,
    pub affinity: f64,
    pub zipf_exponent: f64,
    /// Ratings are mapped affinely to `[rating_lo, rating_hi]`.
    pub rating_lo: f64,
    pub rating_hi: f64,
    /// Round ratings to whole stars.
    pub integer_ratings: bool,
    pub seed: u64,
}

impl ImplicitSpec {
    /// 943 users, 1682 items, about 100k ratings, at least 20 per user, and
    /// about 360 users above 100 ratings.
    pub fn movielens_like(seed: u64) -> Self {
        ImplicitSpec {
            n_users: 943,
            m_items: 1682,
            activity: ActivityModel::HeavyTail {
                min: 20,
                extra_mean: 90.0,
                shape: 0.75,
                max: 737,
            },
            latent_rank: 8,
            affinity: 2.0,
            zipf_exponent: 0.9,
            rating_lo: 1.0,
            rating_hi: 5.0,
            integer_ratings: true,
            seed,
        }
    }

    /// 1731 users, 100 jokes, at most 40 ratings each, mean near 37.
    pub fn jester_like(seed: u64) -> Self {
        ImplicitSpec {
            n_users: 1731,
            m_items: 100,
            activity: ActivityModel::NearCap {
                min: 15,
                max: 40,
                shortfall_mean: 3.5,
            },
            latent_rank: 6,
            affinity: 2.5,
            zipf_exponent: 0.5,
            rating_lo: -10.0,
            rating_hi: 10.0,
            integer_ratings: false,
            seed,
        }
    }
}

/// Draws a rating set from `spec`.
pub fn implicit_ratings(spec: &ImplicitSpec) -> Result<RatingTriples> {
    let (n, m, r) = (spec.n_users, spec.m_items, spec.latent_rank);
    if n == 0 || m == 0 || r == 0 {
        return Err(Error::input("synthetic spec needs users, items and a latent rank"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = (r as f64).sqrt();
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let theta = DenseMatrix::from_fn(n, r, |_, _| gauss(&mut rng) / scale);
    let phi = DenseMatrix::from_fn(m, r, |_, _| gauss(&mut rng) / scale);

    let mut rank_of: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        rank_of.swap(i, rng.random_range(0..=i));
    }
    let log_pop: Vec<f64> = rank_of
        .iter()
        .map(|&p| -spec.zipf_exponent * ((p + 1) as f64).ln())
        .collect();

    let counts: Vec<usize> = match spec.activity {
        ActivityModel::HeavyTail {
            min,
            extra_mean,
            shape,
            max,
        } => {
            let mu = extra_mean.ln() - shape * shape / 2.0;
            let dist = LogNormal::new(mu, shape).map_err(|e| Error::input(e.to_string()))?;
            (0..n)
                .map(|_| (min + dist.sample(&mut rng).floor() as usize).min(max).min(m))
                .collect()
        }
        ActivityModel::NearCap {
            min,
            max,
            shortfall_mean,
        } => {
            let dist = Exp::new(1.0 / shortfall_mean).map_err(|e| Error::input(e.to_string()))?;
            (0..n)
                .map(|_| {
                    let short = dist.sample(&mut rng).floor() as usize;
                    max.saturating_sub(short).max(min).min(m)
                })
                .collect()
        }
    };

    let mut triples = Vec::with_capacity(counts.iter().sum());
    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(m);
    for u in 0..n {
        keys.clear();
        let mut affinity = Vec::with_capacity(m);
        for i in 0..m {
            let a: f64 = theta.row(u).iter().zip(phi.row(i)).map(|(x, y)| x * y).sum();
            affinity.push(a);
            let log_w = log_pop[i] + spec.affinity * a;
            // Efraimidis–Spirakis: the d largest keys u^(1/w) form a weighted
            // sample without replacement; compare in log space.
            let uniform: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            keys.push((uniform.ln() * (-log_w).exp(), i));
        }
        let d = counts[u];
        keys.select_nth_unstable_by(d - 1, |a, b| b.0.total_cmp(&a.0));
        let mut chosen: Vec<usize> = keys[..d].iter().map(|k| k.1).collect();
        chosen.sort_unstable();
        for i in chosen {
            let z = 1.0 / (1.0 + (-3.0 * affinity[i]).exp());
            let raw = spec.rating_lo + z * (spec.rating_hi - spec.rating_lo);
            let value = if spec.integer_ratings { raw.round() } else { raw };
            triples.push((u, i, value));
        }
    }
    Ok(RatingTriples {
        n_users: n,
        m_items: m,
        triples,
        provenance: Provenance::new(SourceFormat::Synthetic),
    })
}

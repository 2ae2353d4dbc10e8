use std::io::Write;

use proptest::prelude::*;
use rsvd::completion::ObservedMatrix;
use rsvd::datasets::{
    binarize, filter_users_by_rating_count, load_csv_triples, load_movielens_100k, mask_out, CsvLayout, DatasetStats,
};
use rsvd::synthetic::{implicit_ratings, ImplicitSpec};

fn movielens_path() -> Option<String> {
    std::env::var("RSVD_MOVIELENS_PATH").ok().filter(|p| std::path::Path::new(p).exists())
}

#[test]
fn real_movielens_counts_when_available() {
    let Some(path) = movielens_path() else {
        eprintln!("RSVD_MOVIELENS_PATH not set; skipping");
        return;
    };
    let t = load_movielens_100k(path).unwrap();
    let stats = DatasetStats::from_triples(&t);
    assert_eq!((stats.n_ratings, stats.n_users, stats.m_items), (100_000, 943, 1682));
    let masked = mask_out(&binarize(&t).unwrap(), 100, 90, 0).unwrap();
    assert_eq!(masked.plan.selected_users.len(), 361);
}

#[test]
fn loaders_read_files() {
    let mut ml = tempfile::NamedTempFile::new().unwrap();
    writeln!(ml, "196\t242\t3\t881250949\n186\t302\t3\t891717742").unwrap();
    let t = load_movielens_100k(ml.path()).unwrap();
    assert_eq!(t.triples[0], (195, 241, 3.0));
    assert_eq!(t.n_users, 196);

    let mut grid = tempfile::NamedTempFile::new().unwrap();
    writeln!(grid, "99,4.5,99\n1.0,99,-3").unwrap();
    let layout = CsvLayout::Grid {
        missing_sentinel: CsvLayout::JESTER_SENTINEL,
        skip_columns: 0,
    };
    let t = load_csv_triples(grid.path(), layout).unwrap();
    assert_eq!(t.triples, vec![(0, 1, 4.5), (1, 0, 1.0), (1, 2, -3.0)]);
    assert!(load_movielens_100k("/nonexistent/u.data").is_err());
}

#[test]
fn jester_like_filtering() {
    let raw = implicit_ratings(&ImplicitSpec::jester_like(3)).unwrap();
    let filtered = filter_users_by_rating_count(&raw, None, Some(40)).unwrap();
    let stats = DatasetStats::from_triples(&filtered);
    assert!((stats.mean_ratings_per_user - 37.0).abs() < 1.5, "{}", stats.mean_ratings_per_user);
    let masked = mask_out(&binarize(&filtered).unwrap(), 37, 35, 1).unwrap();
    assert!(masked.plan.selected_users.len() > 500);
}

#[test]
fn movielens_scale_masking() {
    let o = binarize(&implicit_ratings(&ImplicitSpec::movielens_like(1)).unwrap()).unwrap();
    let stats = DatasetStats::from_observed(&o);
    assert_eq!((stats.n_users, stats.m_items), (943, 1682));
    assert!((90_000..110_000).contains(&stats.n_ratings));

    let a = mask_out(&o, 100, 90, 17).unwrap();
    let b = mask_out(&o, 100, 90, 17).unwrap();
    assert_eq!(a.plan, b.plan);
    assert!((300..420).contains(&a.plan.selected_users.len()));

    let distinct = (0..100u64)
        .filter(|&s| {
            let x = mask_out(&o, 100, 90, 2 * s).unwrap();
            let y = mask_out(&o, 100, 90, 2 * s + 1).unwrap();
            x.plan.masked != y.plan.masked
        })
        .count();
    assert!(distinct >= 99, "{distinct} of 100 seed pairs differ");
}

fn small_matrix() -> impl Strategy<Value = ObservedMatrix> {
    (2..12usize, 4..20usize, prop::collection::vec(any::<bool>(), 240)).prop_filter_map("nonempty", |(n, m, bits)| {
        let entries: Vec<_> = (0..n * m).filter(|&p| bits[p % bits.len()]).map(|p| (p / m, p % m, 1.0)).collect();
        ObservedMatrix::new(n, m, entries).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_out_invariants(o in small_matrix(), t in 0..6usize, n_mask in 1..4usize, seed in any::<u64>()) {
        let Ok(masked) = mask_out(&o, t, n_mask, seed) else { return Ok(()) };
        prop_assert_eq!(masked.unmask().unwrap(), o.clone());
        for (&u, items) in masked.ground_truth() {
            prop_assert!(o.row_entries(u).len() > t);
            prop_assert_eq!(items.len(), n_mask);
            for &i in items {
                prop_assert!(o.contains(u, i));
                prop_assert!(!masked.train.contains(u, i));
            }
        }
        prop_assert_eq!(DatasetStats::from_observed(&o), masked.stats.clone());
    }
}

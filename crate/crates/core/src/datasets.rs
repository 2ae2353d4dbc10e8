//! Rating datasets: parsers, user filtering, binarization, and the mask-out
//! split that hides a fixed number of known ratings per heavy user.
//!
//! External files are 1-indexed (MovieLens) or declare their base; every
//! index in memory is 0-based.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::completion::ObservedMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceFormat {
    MovieLens,
    Triples,
    Grid,
    Synthetic,
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFormat::MovieLens => "movielens",
            SourceFormat::Triples => "triples",
            SourceFormat::Grid => "grid",
            SourceFormat::Synthetic => "synthetic",
        })
    }
}

impl FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens" => Ok(SourceFormat::MovieLens),
            "triples" => Ok(SourceFormat::Triples),
            "grid" => Ok(SourceFormat::Grid),
            other => Err(Error::input(format!(
                "unknown format {other:?}, expected movielens, triples or grid"
            ))),
        }
    }
}

/// Where a [`RatingTriples`] came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub format: SourceFormat,
    /// `user_ids[i]` is the pre-filter (0-based) index of user `i`; `None`
    /// until users are filtered.
    pub user_ids: Option<Vec<usize>>,
    /// Repeated (user, item) records overwritten by a later line.
    pub duplicates_replaced: usize,
}

impl Provenance {
    pub fn new(format: SourceFormat) -> Self {
        Provenance {
            format,
            user_ids: None,
            duplicates_replaced: 0,
        }
    }
}

/// `(user, item, rating)` records with 0-based indices and no duplicate pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingTriples {
    pub n_users: usize,
    pub m_items: usize,
    pub triples: Vec<(usize, usize, f64)>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub n_users: usize,
    pub m_items: usize,
    pub n_ratings: usize,
    pub mean_ratings_per_user: f64,
}

impl DatasetStats {
    fn new(n_users: usize, m_items: usize, n_ratings: usize) -> Self {
        DatasetStats {
            n_users,
            m_items,
            n_ratings,
            mean_ratings_per_user: n_ratings as f64 / n_users.max(1) as f64,
        }
    }

    pub fn from_triples(t: &RatingTriples) -> Self {
        Self::new(t.n_users, t.m_items, t.triples.len())
    }

    pub fn from_observed(o: &ObservedMatrix) -> Self {
        Self::new(o.n_users(), o.m_items(), o.n_observed())
    }
}

/// Collapses duplicate (user, item) pairs, keeping the last occurrence.
fn dedup_keep_last(raw: Vec<(usize, usize, f64)>) -> (Vec<(usize, usize, f64)>, usize) {
    let mut pos: HashMap<(usize, usize), usize> = HashMap::with_capacity(raw.len());
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(raw.len());
    let mut replaced = 0;
    for (u, i, r) in raw {
        match pos.get(&(u, i)) {
            Some(&p) => {
                out[p].2 = r;
                replaced += 1;
            }
            None => {
                pos.insert((u, i), out.len());
                out.push((u, i, r));
            }
        }
    }
    (out, replaced)
}

fn finish(
    raw: Vec<(usize, usize, f64)>,
    n_users: usize,
    m_items: usize,
    format: SourceFormat,
    source: &str,
) -> Result<RatingTriples> {
    if raw.is_empty() {
        return Err(Error::input(format!("{source}: no ratings")));
    }
    let (triples, replaced) = dedup_keep_last(raw);
    if replaced > 0 {
        log::warn!("{source}: {replaced} duplicate (user, item) records replaced by later lines");
    }
    Ok(RatingTriples {
        n_users,
        m_items,
        triples,
        provenance: Provenance {
            duplicates_replaced: replaced,
            ..Provenance::new(format)
        },
    })
}

fn parse_index(cell: &str, location: impl Fn() -> String, one_based: bool) -> Result<usize> {
    let id: usize = cell
        .parse()
        .map_err(|_| Error::parse(location(), format!("not an index: {cell:?}")))?;
    if one_based {
        id.checked_sub(1)
            .ok_or_else(|| Error::parse(location(), "1-based index must be at least 1"))
    } else {
        Ok(id)
    }
}

fn parse_rating(cell: &str, location: impl Fn() -> String) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::parse(location(), format!("not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(location(), "non-finite rating"));
    }
    Ok(v)
}

/// Parses MovieLens `u.data` text: `user<TAB>item<TAB>rating<TAB>timestamp`.
pub fn parse_movielens(text: &str, source: &str) -> Result<RatingTriples> {
    let mut raw = Vec::new();
    let (mut n_users, mut m_items) = (0, 0);
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{source}:{}", lineno + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::parse(
                loc(),
                format!("expected user, item, rating, timestamp; found {} fields", fields.len()),
            ));
        }
        let user = parse_index(fields[0], loc, true)?;
        let item = parse_index(fields[1], loc, true)?;
        let rating = parse_rating(fields[2], loc)?;
        n_users = n_users.max(user + 1);
        m_items = m_items.max(item + 1);
        raw.push((user, item, rating));
    }
    finish(raw, n_users, m_items, SourceFormat::MovieLens, source)
}

pub fn load_movielens_100k(path: impl AsRef<Path>) -> Result<RatingTriples> {
    let path = path.as_ref();
    parse_movielens(&fs::read_to_string(path)?, &path.display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CsvLayout {
    /// `user,item,rating` rows.
    Triples { one_based: bool },
    /// One user per row, one item per column; cells equal to
    /// `missing_sentinel` (or empty) are unrated. The first `skip_columns`
    /// cells of each row are ignored.
    Grid {
        missing_sentinel: f64,
        skip_columns: usize,
    },
}

impl CsvLayout {
    /// Jester convention: 99 marks an unrated joke.
    pub const JESTER_SENTINEL: f64 = 99.0;
}

/// Parses header-free CSV in the declared layout. Lines starting with `#`
/// are skipped.
pub fn parse_csv_triples(text: &str, layout: CsvLayout, source: &str) -> Result<RatingTriples> {
    let mut raw = Vec::new();
    let (mut n_users, mut m_items) = (0, 0);
    let mut grid_width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        match layout {
            CsvLayout::Triples { one_based } => {
                let loc = || format!("{source}:{}", lineno + 1);
                if cells.len() != 3 {
                    return Err(Error::parse(
                        loc(),
                        format!("triples layout expects 3 columns, found {}", cells.len()),
                    ));
                }
                let cell_loc = |c: usize| move || format!("{source}:{}:{}", lineno + 1, c + 1);
                let user = parse_index(cells[0], cell_loc(0), one_based)?;
                let item = parse_index(cells[1], cell_loc(1), one_based)?;
                let rating = parse_rating(cells[2], cell_loc(2))?;
                n_users = n_users.max(user + 1);
                m_items = m_items.max(item + 1);
                raw.push((user, item, rating));
            }
            CsvLayout::Grid {
                missing_sentinel,
                skip_columns,
            } => {
                if cells.len() <= skip_columns {
                    return Err(Error::parse(
                        format!("{source}:{}", lineno + 1),
                        format!("grid row has {} cells, nothing after {skip_columns} skipped", cells.len()),
                    ));
                }
                let width = cells.len() - skip_columns;
                match grid_width {
                    None => grid_width = Some(width),
                    Some(w) if w != width => {
                        return Err(Error::parse(
                            format!("{source}:{}", lineno + 1),
                            format!("expected {w} item columns, found {width}"),
                        ))
                    }
                    _ => {}
                }
                let user = n_users;
                for (j, cell) in cells[skip_columns..].iter().enumerate() {
                    if cell.is_empty() {
                        continue;
                    }
                    let col = j + skip_columns;
                    let v = parse_rating(cell, || format!("{source}:{}:{}", lineno + 1, col + 1))?;
                    if v != missing_sentinel {
                        raw.push((user, j, v));
                    }
                }
                n_users += 1;
                m_items = width;
            }
        }
    }
    let format = match layout {
        CsvLayout::Triples { .. } => SourceFormat::Triples,
        CsvLayout::Grid { .. } => SourceFormat::Grid,
    };
    finish(raw, n_users, m_items, format, source)
}

pub fn load_csv_triples(path: impl AsRef<Path>, layout: CsvLayout) -> Result<RatingTriples> {
    let path = path.as_ref();
    parse_csv_triples(&fs::read_to_string(path)?, layout, &path.display().to_string())
}

/// Keeps users whose rating count lies in `[min, max]` (either bound
/// optional) and compacts their indices.
pub fn filter_users_by_rating_count(
    triples: &RatingTriples,
    min: Option<usize>,
    max: Option<usize>,
) -> Result<RatingTriples> {
    let mut counts = vec![0usize; triples.n_users];
    for &(u, _, _) in &triples.triples {
        counts[u] += 1;
    }
    let keep = |c: usize| min.is_none_or(|lo| c >= lo) && max.is_none_or(|hi| c <= hi);
    let mut new_index = vec![usize::MAX; triples.n_users];
    let mut user_ids = Vec::new();
    let previous = triples.provenance.user_ids.as_deref();
    for (u, &c) in counts.iter().enumerate() {
        if keep(c) {
            new_index[u] = user_ids.len();
            user_ids.push(previous.map_or(u, |p| p[u]));
        }
    }
    if user_ids.is_empty() {
        return Err(Error::input(format!(
            "no users with a rating count in [{}, {}]",
            min.map_or("-".into(), |v| v.to_string()),
            max.map_or("-".into(), |v| v.to_string())
        )));
    }
    let kept: Vec<_> = triples
        .triples
        .iter()
        .filter(|t| new_index[t.0] != usize::MAX)
        .map(|&(u, i, r)| (new_index[u], i, r))
        .collect();
    Ok(RatingTriples {
        n_users: user_ids.len(),
        m_items: triples.m_items,
        triples: kept,
        provenance: Provenance {
            user_ids: Some(user_ids),
            ..triples.provenance.clone()
        },
    })
}

/// Every observed rating becomes `1.0`; the observed set is unchanged.
pub fn binarize(triples: &RatingTriples) -> Result<ObservedMatrix> {
    ObservedMatrix::new(
        triples.n_users,
        triples.m_items,
        triples.triples.iter().map(|&(u, i, _)| (u, i, 1.0)).collect(),
    )
}

/// Mask-out configuration and the items it hid.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPlan {
    pub threshold_t: usize,
    pub n_mask: usize,
    pub seed: u64,
    /// Users with more than `threshold_t` ratings, ascending.
    pub selected_users: Vec<usize>,
    /// Masked items per selected user, ascending.
    pub masked: BTreeMap<usize, Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct MaskedDataset {
    /// Source matrix with the masked entries removed.
    pub train: ObservedMatrix,
    pub plan: MaskPlan,
    /// The removed entries with their source values.
    pub held_out: Vec<(usize, usize, f64)>,
    /// Statistics of the source matrix.
    pub stats: DatasetStats,
}

impl MaskedDataset {
    /// Ground-truth set `M` for each training user.
    pub fn ground_truth(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.plan.masked
    }

    /// Reinserts the held-out entries, reproducing the source matrix.
    pub fn unmask(&self) -> Result<ObservedMatrix> {
        let mut entries = self.train.entries().to_vec();
        entries.extend_from_slice(&self.held_out);
        ObservedMatrix::new(self.train.n_users(), self.train.m_items(), entries)
    }
}

/// Hides `n_mask` randomly chosen ratings of every user with more than
/// `threshold_t` ratings.
pub fn mask_out(matrix: &ObservedMatrix, threshold_t: usize, n_mask: usize, seed: u64) -> Result<MaskedDataset> {
    if n_mask == 0 {
        return Err(Error::input("n_mask must be at least 1"));
    }
    let selected: Vec<usize> = (0..matrix.n_users())
        .filter(|&u| matrix.row_entries(u).len() > threshold_t)
        .collect();
    if selected.is_empty() {
        return Err(Error::input(format!(
            "no training users: nobody has more than {threshold_t} ratings"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = BTreeMap::new();
    let mut held_out = Vec::with_capacity(selected.len() * n_mask);
    for &u in &selected {
        let row = matrix.row_entries(u);
        if row.len() < n_mask {
            return Err(Error::input(format!(
                "user {u} has {} ratings, fewer than n_mask = {n_mask}",
                row.len()
            )));
        }
        let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, row.len(), n_mask).into_vec();
        picks.sort_unstable();
        let items: Vec<usize> = picks.iter().map(|&p| row[p].1).collect();
        held_out.extend(picks.iter().map(|&p| row[p]));
        masked.insert(u, items);
    }
    let train_entries: Vec<_> = matrix
        .entries()
        .iter()
        .filter(|&&(u, i, _)| masked.get(&u).is_none_or(|items: &Vec<usize>| items.binary_search(&i).is_err()))
        .copied()
        .collect();
    let train = ObservedMatrix::new(matrix.n_users(), matrix.m_items(), train_entries)?;
    Ok(MaskedDataset {
        train,
        plan: MaskPlan {
            threshold_t,
            n_mask,
            seed,
            selected_users: selected,
            masked,
        },
        held_out,
        stats: DatasetStats::from_observed(matrix),
    })
}

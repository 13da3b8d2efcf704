//! Real-data pipeline: parse delimited ratings files, binarize against the
//! global average rating, and split into train/held-out sets.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::obs::{ObservationSet, SplitPair};
use crate::util::Accumulator;

/// Shape of a delimited ratings file.
#[derive(Clone, Debug)]
pub struct RatingsFormat {
    /// Field separator; may be longer than one character.
    pub delimiter: String,
    /// Declared rating scale `(lo, hi)`. Ratings outside it are kept but
    /// logged, since scale violations usually signal a format mix-up.
    pub scale: Option<(f64, f64)>,
}

impl Default for RatingsFormat {
    fn default() -> Self {
        Self { delimiter: "::".to_owned(), scale: Some((1.0, 5.0)) }
    }
}

/// One retained rating, with ids already mapped to dense 0-based indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingRow {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// A parsed ratings file with dense index dictionaries.
///
/// Users and items are numbered in order of first appearance; each
/// `(user, item)` pair appears at most once (later duplicates in the file
/// replace earlier ones).
#[derive(Clone, Debug)]
pub struct RatingsTable {
    rows: Vec<RatingRow>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
}

impl RatingsTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn rows(&self) -> &[RatingRow] {
        &self.rows
    }

    /// External id of a dense user index.
    pub fn user_id(&self, index: usize) -> Option<u64> {
        self.user_ids.get(index).copied()
    }

    /// External id of a dense item index.
    pub fn item_id(&self, index: usize) -> Option<u64> {
        self.item_ids.get(index).copied()
    }
}

/// Binarized observations plus the metadata the evaluation step needs.
#[derive(Clone, Debug)]
pub struct Binarized {
    /// The `+1`/`-1` observations over the dense user x item grid.
    pub obs: ObservationSet,
    /// Global average rating the labels were thresholded against.
    pub average: f64,
    /// Original rating per observation, aligned with `obs` storage order.
    pub ratings: Vec<f64>,
}

impl Binarized {
    /// Original ratings for a subset of `obs` (e.g. one side of a split),
    /// aligned with the subset's storage order.
    pub fn ratings_for(&self, subset: &ObservationSet) -> Result<Vec<f64>> {
        let lookup: HashMap<(u32, u32), f64> = self
            .obs
            .iter()
            .zip(&self.ratings)
            .map(|((i, j, _), &r)| ((i, j), r))
            .collect();
        subset
            .iter()
            .map(|(i, j, _)| {
                lookup.get(&(i, j)).copied().ok_or_else(|| {
                    Error::domain(format!("entry ({i}, {j}) is not part of this ratings table"))
                })
            })
            .collect()
    }
}

/// Parse a delimited ratings file into a dense-indexed table.
///
/// Each line is `user<delim>item<delim>rating[<delim>timestamp]`; ids are
/// positive integers. Malformed lines fail with their line number; duplicate
/// `(user, item)` pairs keep the last occurrence with a warning.
pub fn read_ratings(path: &Path, format: &RatingsFormat) -> Result<RatingsTable> {
    if format.delimiter.is_empty() {
        return Err(Error::domain("ratings delimiter must not be empty"));
    }
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<RatingRow> = Vec::new();
    let mut user_index: HashMap<u64, u32> = HashMap::new();
    let mut item_index: HashMap<u64, u32> = HashMap::new();
    let mut user_ids: Vec<u64> = Vec::new();
    let mut item_ids: Vec<u64> = Vec::new();
    let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(format.delimiter.as_str()).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::parse(format!(
                "line {lineno}: expected user{0}item{0}rating[{0}timestamp], got {1} fields",
                format.delimiter,
                fields.len()
            )));
        }
        let user_id: u64 = fields[0].trim().parse().map_err(|e| {
            Error::parse(format!("line {lineno}: bad user id {:?}: {e}", fields[0]))
        })?;
        let item_id: u64 = fields[1].trim().parse().map_err(|e| {
            Error::parse(format!("line {lineno}: bad item id {:?}: {e}", fields[1]))
        })?;
        let rating: f64 = fields[2].trim().parse().map_err(|e| {
            Error::parse(format!("line {lineno}: bad rating {:?}: {e}", fields[2]))
        })?;
        if !rating.is_finite() {
            return Err(Error::parse(format!("line {lineno}: non-finite rating {rating}")));
        }
        let timestamp: Option<i64> = match fields.get(3) {
            Some(f) => Some(f.trim().parse().map_err(|e| {
                Error::parse(format!("line {lineno}: bad timestamp {:?}: {e}", f))
            })?),
            None => None,
        };
        if let Some((lo, hi)) = format.scale {
            if rating < lo || rating > hi {
                log::warn!(
                    "line {lineno}: rating {rating} outside declared scale [{lo}, {hi}]; keeping it"
                );
            }
        }
        let next_user = user_ids.len() as u32;
        let user = *user_index.entry(user_id).or_insert_with(|| {
            user_ids.push(user_id);
            next_user
        });
        let next_item = item_ids.len() as u32;
        let item = *item_index.entry(item_id).or_insert_with(|| {
            item_ids.push(item_id);
            next_item
        });
        let row = RatingRow { user, item, rating, timestamp };
        match seen.get(&(user, item)) {
            Some(&at) => {
                log::warn!(
                    "line {lineno}: duplicate rating for user {user_id}, item {item_id}; keeping the last"
                );
                rows[at] = row;
            }
            None => {
                seen.insert((user, item), rows.len());
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::parse(format!("{} contains no ratings", path.display())));
    }
    Ok(RatingsTable { rows, user_ids, item_ids })
}

/// Threshold ratings against their global average: strictly above the
/// average becomes `+1`, everything else `-1`.
pub fn binarize(table: &RatingsTable) -> Result<Binarized> {
    if table.is_empty() {
        return Err(Error::domain("cannot binarize an empty ratings table"));
    }
    let mut sum = Accumulator::new();
    for row in table.rows() {
        sum.add(row.rating);
    }
    let average = sum.value() / table.len() as f64;
    let mut entries: Vec<(u32, u32, i8, f64)> = table
        .rows()
        .iter()
        .map(|row| {
            let y: i8 = if row.rating > average { 1 } else { -1 };
            (row.user, row.item, y, row.rating)
        })
        .collect();
    // Match the observation set's column-major storage order so the
    // retained ratings line up entry for entry.
    entries.sort_unstable_by_key(|&(i, j, _, _)| (j, i));
    let triplets: Vec<(u32, u32, i8)> = entries.iter().map(|&(i, j, y, _)| (i, j, y)).collect();
    let ratings: Vec<f64> = entries.iter().map(|&(_, _, _, r)| r).collect();
    let obs = ObservationSet::from_triplets(table.n_users(), table.n_items(), &triplets)?;
    Ok(Binarized { obs, average, ratings })
}

/// Split observations into train and held-out sets; `test_fraction` goes to
/// the held-out side. Deterministic in the seed.
pub fn holdout_split(obs: &ObservationSet, test_fraction: f64, seed: u64) -> Result<SplitPair> {
    obs.split(test_fraction, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_file(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.dat");
        fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn two_line_file_maps_to_dense_indices() {
        let (_dir, path) = write_file("1::10::5\n2::10::3\n");
        let table = read_ratings(&path, &RatingsFormat::default()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.n_users(), 2);
        assert_eq!(table.n_items(), 1);
        assert_eq!(table.rows()[0], RatingRow { user: 0, item: 0, rating: 5.0, timestamp: None });
        assert_eq!(table.rows()[1].user, 1);
        // Dictionaries round-trip the external ids.
        assert_eq!(table.user_id(0), Some(1));
        assert_eq!(table.user_id(1), Some(2));
        assert_eq!(table.item_id(0), Some(10));
        assert_eq!(table.item_id(1), None);
    }

    #[test]
    fn timestamps_and_alternate_delimiters_parse() {
        let (_dir, path) = write_file("7\t3\t4.5\t978300760\n8\t3\t2\n");
        let format = RatingsFormat { delimiter: "\t".to_owned(), scale: Some((1.0, 5.0)) };
        let table = read_ratings(&path, &format).unwrap();
        assert_eq!(table.rows()[0].timestamp, Some(978300760));
        assert_eq!(table.rows()[1].timestamp, None);
        assert_eq!(table.rows()[0].rating, 4.5);
    }

    #[test]
    fn duplicates_keep_the_last_occurrence() {
        let (_dir, path) = write_file("1::1::5\n1::2::4\n1::1::2\n");
        let table = read_ratings(&path, &RatingsFormat::default()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.rows()[0].rating, 2.0); // replaced in place
        assert_eq!(table.rows()[1].rating, 4.0);
    }

    #[test]
    fn malformed_lines_fail_with_line_numbers() {
        let (_dir, path) = write_file("1::1::5\nnot a line\n");
        let err = read_ratings(&path, &RatingsFormat::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let (_dir2, bad_rating) = write_file("1::1::x\n");
        assert!(read_ratings(&bad_rating, &RatingsFormat::default()).is_err());
        let (_dir3, empty) = write_file("\n\n");
        assert!(read_ratings(&empty, &RatingsFormat::default()).is_err());
    }

    #[test]
    fn out_of_scale_ratings_are_retained() {
        let (_dir, path) = write_file("1::1::9\n2::1::1\n");
        let table = read_ratings(&path, &RatingsFormat::default()).unwrap();
        assert_eq!(table.rows()[0].rating, 9.0);
    }

    #[test]
    fn binarize_thresholds_strictly_above_the_average() {
        let (_dir, path) = write_file("1::1::1\n2::1::5\n");
        let table = read_ratings(&path, &RatingsFormat::default()).unwrap();
        let bin = binarize(&table).unwrap();
        assert_eq!(bin.average, 3.0);
        let t = bin.obs.to_triplets();
        assert_eq!(t, vec![(0, 0, -1), (1, 0, 1)]);
        assert_eq!(bin.ratings, vec![1.0, 5.0]);
    }

    #[test]
    fn equal_ratings_all_map_to_minus_one() {
        let (_dir, path) = write_file("1::1::3\n2::1::3\n1::2::3\n");
        let table = read_ratings(&path, &RatingsFormat::default()).unwrap();
        let bin = binarize(&table).unwrap();
        assert!(bin.obs.to_triplets().iter().all(|&(_, _, y)| y == -1));
    }

    #[test]
    fn binarize_is_order_invariant() {
        let (_dir, a) = write_file("1::1::5\n2::1::1\n1::2::4\n");
        let (_dir2, b) = write_file("1::2::4\n1::1::5\n2::1::1\n");
        let ta = read_ratings(&a, &RatingsFormat::default()).unwrap();
        let tb = read_ratings(&b, &RatingsFormat::default()).unwrap();
        let ba = binarize(&ta).unwrap();
        let bb = binarize(&tb).unwrap();
        assert_eq!(ba.average, bb.average);
        // Dense indices depend on appearance order, so compare through the
        // external ids instead.
        let externalize = |t: &RatingsTable, bin: &Binarized| {
            let mut v: Vec<(u64, u64, f64, f64)> = bin
                .obs
                .iter()
                .zip(&bin.ratings)
                .map(|((i, j, y), &r)| {
                    (t.user_id(i as usize).unwrap(), t.item_id(j as usize).unwrap(), y, r)
                })
                .collect();
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            v
        };
        assert_eq!(externalize(&ta, &ba), externalize(&tb, &bb));
    }

    #[test]
    fn ratings_align_with_split_sides() {
        let lines: String = (0..40)
            .map(|k| format!("{}::{}::{}\n", k % 8 + 1, k / 8 + 1, k % 5 + 1))
            .collect();
        let (_dir, path) = write_file(&lines);
        let table = read_ratings(&path, &RatingsFormat::default()).unwrap();
        let bin = binarize(&table).unwrap();
        let split = holdout_split(&bin.obs, 0.25, 3).unwrap();
        assert_eq!(split.heldout.len(), 10);
        let train_r = bin.ratings_for(&split.train).unwrap();
        let held_r = bin.ratings_for(&split.heldout).unwrap();
        assert_eq!(train_r.len() + held_r.len(), 40);
        // Every aligned rating reproduces its own binarization.
        for (set, rs) in [(&split.train, &train_r), (&split.heldout, &held_r)] {
            for ((_, _, y), &r) in set.iter().zip(rs) {
                let want = if r > bin.average { 1.0 } else { -1.0 };
                assert_eq!(y, want);
            }
        }
        // Entries outside the table are rejected.
        let foreign = ObservationSet::from_triplets(9, 6, &[(8, 5, 1)]).unwrap();
        assert!(bin.ratings_for(&foreign).is_err());
    }
}

//! Sparse storage for partially observed sign matrices.
//!
//! An [`ObservationSet`] holds the observed entries of an `m x n` sign matrix
//! as triplets `(i, j, y)` kept in compressed column order (sorted by column,
//! then row). Storage is three numbers per observed entry — two indices and a
//! label — plus the dimensions; nothing dense is ever materialized here.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Observed entries of a partially observed `m x n` sign matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationSet {
    m: usize,
    n: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    labels: Vec<i8>,
}

/// Disjoint partition of an observation set, as produced by [`ObservationSet::split`].
#[derive(Clone, Debug)]
pub struct SplitPair {
    /// Entries kept for fitting.
    pub train: ObservationSet,
    /// Entries held out for validation or testing.
    pub heldout: ObservationSet,
}

impl ObservationSet {
    /// Build from 0-based triplets `(i, j, y)` with `y` in `{-1, +1}`.
    ///
    /// Input order is arbitrary; entries are sorted into column-major order.
    /// Duplicate `(i, j)` pairs with the same label collapse to one entry (with
    /// a warning); duplicates with conflicting labels are an error, as is an
    /// empty set or an out-of-range index.
    pub fn from_triplets(m: usize, n: usize, triplets: &[(u32, u32, i8)]) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::domain(format!(
                "matrix dimensions must be positive, got {m} x {n}"
            )));
        }
        if triplets.is_empty() {
            return Err(Error::domain("observation set must contain at least one entry"));
        }
        let mut sorted: Vec<(u32, u32, i8)> = triplets.to_vec();
        for &(i, j, y) in &sorted {
            if i as usize >= m || j as usize >= n {
                return Err(Error::domain(format!(
                    "observation index ({i}, {j}) out of range for a {m} x {n} matrix"
                )));
            }
            if y != 1 && y != -1 {
                return Err(Error::domain(format!(
                    "label at ({i}, {j}) must be +1 or -1, got {y}"
                )));
            }
        }
        sorted.sort_unstable_by_key(|&(i, j, _)| (j, i));
        let mut rows = Vec::with_capacity(sorted.len());
        let mut cols = Vec::with_capacity(sorted.len());
        let mut labels = Vec::with_capacity(sorted.len());
        let mut duplicates = 0usize;
        for &(i, j, y) in &sorted {
            if let (Some(&pi), Some(&pj)) = (rows.last(), cols.last()) {
                if pi == i && pj == j {
                    let prev: i8 = *labels.last().unwrap();
                    if prev != y {
                        return Err(Error::domain(format!(
                            "conflicting duplicate observation at ({i}, {j}): {prev} vs {y}"
                        )));
                    }
                    duplicates += 1;
                    continue;
                }
            }
            rows.push(i);
            cols.push(j);
            labels.push(y);
        }
        if duplicates > 0 {
            log::warn!("collapsed {duplicates} duplicate observation(s) with consistent labels");
        }
        Ok(Self { m, n, rows, cols, labels })
    }

    /// Number of matrix rows.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of matrix columns.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of observed entries.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Fraction of entries observed, `|omega| / (m n)`.
    pub fn density(&self) -> f64 {
        self.len() as f64 / (self.m as f64 * self.n as f64)
    }

    /// Row indices in storage (column-major) order.
    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    /// Column indices in storage order.
    pub fn cols(&self) -> &[u32] {
        &self.cols
    }

    /// Labels in storage order.
    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    /// Iterate entries `(i, j, y)` in storage order with the label as `±1.0`.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.labels)
            .map(|((&i, &j), &y)| (i, j, f64::from(y)))
    }

    /// Recover owned triplets in storage order.
    pub fn to_triplets(&self) -> Vec<(u32, u32, i8)> {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.labels)
            .map(|((&i, &j), &y)| (i, j, y))
            .collect()
    }

    /// Deterministically split into train and heldout parts.
    ///
    /// The heldout side receives `round(holdout_fraction * len)` entries
    /// (round half up), drawn uniformly without replacement from the seeded
    /// generator. Both sides keep column-major order. Errors if the fraction
    /// is outside `(0, 1)` or either side would be empty.
    ///
    /// The sampler always draws the *smaller* side, so complementary
    /// fractions with the same seed produce exactly swapped partitions.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> Result<SplitPair> {
        if !holdout_fraction.is_finite() || holdout_fraction <= 0.0 || holdout_fraction >= 1.0 {
            return Err(Error::domain(format!(
                "holdout fraction must lie strictly between 0 and 1, got {holdout_fraction}"
            )));
        }
        let k = (holdout_fraction * self.len() as f64 + 0.5).floor() as usize;
        if k == 0 || k == self.len() {
            return Err(Error::domain(format!(
                "holdout fraction {holdout_fraction} of {} entries leaves one side empty",
                self.len()
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let sampled_is_heldout = k <= self.len() - k;
        let draw = if sampled_is_heldout { k } else { self.len() - k };
        let mut heldout_mask = vec![!sampled_is_heldout; self.len()];
        for idx in rand::seq::index::sample(&mut rng, self.len(), draw) {
            heldout_mask[idx] = sampled_is_heldout;
        }
        let mut train = Half::with_capacity(self.len() - k);
        let mut heldout = Half::with_capacity(k);
        for (idx, ((&i, &j), &y)) in self.rows.iter().zip(&self.cols).zip(&self.labels).enumerate() {
            let side = if heldout_mask[idx] { &mut heldout } else { &mut train };
            side.rows.push(i);
            side.cols.push(j);
            side.labels.push(y);
        }
        Ok(SplitPair {
            train: train.into_set(self.m, self.n),
            heldout: heldout.into_set(self.m, self.n),
        })
    }

    /// Internal constructor for entries already in column-major order with all
    /// invariants established by the caller.
    pub(crate) fn from_sorted_unchecked(
        m: usize,
        n: usize,
        rows: Vec<u32>,
        cols: Vec<u32>,
        labels: Vec<i8>,
    ) -> Self {
        debug_assert!(!rows.is_empty());
        debug_assert!(rows.len() == cols.len() && cols.len() == labels.len());
        Self { m, n, rows, cols, labels }
    }
}

struct Half {
    rows: Vec<u32>,
    cols: Vec<u32>,
    labels: Vec<i8>,
}

impl Half {
    fn with_capacity(cap: usize) -> Self {
        Self {
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            labels: Vec::with_capacity(cap),
        }
    }

    fn into_set(self, m: usize, n: usize) -> ObservationSet {
        ObservationSet::from_sorted_unchecked(m, n, self.rows, self.cols, self.labels)
    }
}

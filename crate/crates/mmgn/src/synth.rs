//! Synthetic low-rank ground truth, observation masks, and label sampling.
//!
//! Two factor ensembles with very different tail behavior:
//!
//! * **non-spiky** — factor entries uniform on `[-1/2, 1/2]`, product rescaled
//!   to max-entry one, giving spikiness around 3 for square desk-scale shapes;
//! * **spiky** — factor entries Student-t with `nu` degrees of freedom, left
//!   unscaled; heavy tails concentrate the mass of `Theta` on few entries and
//!   drive the spikiness up as `nu` decreases toward 2.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::link::LinkModel;
use crate::metrics::spikiness;
use crate::obs::ObservationSet;

/// A generated parameter matrix with its construction metadata.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// The dense parameter matrix.
    pub theta_star: DMatrix<f64>,
    /// Rank of the generating factorization.
    pub rank_star: usize,
    /// Spikiness `sqrt(m n) * max|theta| / ||theta||_F`, precomputed.
    pub spikiness: f64,
}

impl GroundTruth {
    pub fn m(&self) -> usize {
        self.theta_star.nrows()
    }

    pub fn n(&self) -> usize {
        self.theta_star.ncols()
    }
}

fn check_shape(m: usize, n: usize, rank_star: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::domain(format!("dimensions must be positive, got {m} x {n}")));
    }
    if rank_star == 0 || rank_star > m.min(n) {
        return Err(Error::domain(format!(
            "rank_star must lie in 1..={}, got {rank_star}",
            m.min(n)
        )));
    }
    Ok(())
}

/// Uniform factors, product rescaled so that `max |theta| = 1`.
pub fn gen_nonspiky(m: usize, n: usize, rank_star: usize, seed: u64) -> Result<GroundTruth> {
    check_shape(m, n, rank_star)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        DMatrix::from_iterator(
            rows,
            rank_star,
            (0..rows * rank_star).map(|_| rng.random::<f64>() - 0.5),
        )
    };
    let u = draw(m);
    let v = draw(n);
    let mut theta_star = u * v.transpose();
    let max_abs = theta_star.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if max_abs == 0.0 {
        return Err(Error::domain("degenerate draw: the product matrix is identically zero"));
    }
    theta_star /= max_abs;
    let spikiness = spikiness(&theta_star)?;
    Ok(GroundTruth { theta_star, rank_star, spikiness })
}

/// Student-t factors with `nu` degrees of freedom, unscaled.
///
/// Each entry is `z * sqrt(nu / g)` with `z` standard normal and
/// `g ~ chi-squared(nu)` (a Gamma with shape `nu/2`, scale 2), the classic
/// normal-over-chi construction. Requires `nu > 2` so the factor entries have
/// finite variance; the spikiness of the product still grows sharply as `nu`
/// approaches 2.
pub fn gen_spiky(m: usize, n: usize, rank_star: usize, nu: f64, seed: u64) -> Result<GroundTruth> {
    check_shape(m, n, rank_star)?;
    if !nu.is_finite() || nu <= 2.0 {
        return Err(Error::domain(format!(
            "degrees of freedom must exceed 2 for finite variance, got {nu}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let gamma = Gamma::new(nu / 2.0, 2.0)
        .map_err(|e| Error::domain(format!("invalid chi-squared parameter: {e}")))?;
    let mut draw = |rows: usize| {
        DMatrix::from_iterator(
            rows,
            rank_star,
            (0..rows * rank_star).map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let g: f64 = gamma.sample(&mut rng);
                z * (nu / g).sqrt()
            }),
        )
    };
    let u = draw(m);
    let v = draw(n);
    let theta_star = u * v.transpose();
    let spikiness = spikiness(&theta_star)?;
    Ok(GroundTruth { theta_star, rank_star, spikiness })
}

/// Sample `round(rho * m * n)` observed positions uniformly without
/// replacement, returned in column-major order.
pub fn sample_omega(m: usize, n: usize, rho: f64, seed: u64) -> Result<Vec<(u32, u32)>> {
    if m == 0 || n == 0 {
        return Err(Error::domain(format!("dimensions must be positive, got {m} x {n}")));
    }
    if !rho.is_finite() || rho <= 0.0 || rho > 1.0 {
        return Err(Error::domain(format!(
            "observation density must lie in (0, 1], got {rho}"
        )));
    }
    let total = m * n;
    let count = (rho * total as f64 + 0.5).floor() as usize;
    let count = count.min(total);
    if count == 0 {
        return Err(Error::domain(format!(
            "density {rho} of a {m} x {n} matrix selects no entries"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut linear: Vec<usize> = rand::seq::index::sample(&mut rng, total, count).into_vec();
    // Column-major linearization: sorting indices sorts entries by (col, row).
    linear.sort_unstable();
    Ok(linear
        .into_iter()
        .map(|idx| ((idx % m) as u32, (idx / m) as u32))
        .collect())
}

/// Draw one label per observed position: `+1` with probability `F(theta*_ij)`.
pub fn sample_labels(
    truth: &GroundTruth,
    omega: &[(u32, u32)],
    model: &LinkModel,
    seed: u64,
) -> Result<ObservationSet> {
    if omega.is_empty() {
        return Err(Error::domain("observation position list must not be empty"));
    }
    let (m, n) = (truth.m(), truth.n());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(omega.len());
    for &(i, j) in omega {
        if i as usize >= m || j as usize >= n {
            return Err(Error::domain(format!(
                "observation position ({i}, {j}) out of range for {m} x {n}"
            )));
        }
        let p = model.cdf(truth.theta_star[(i as usize, j as usize)])?;
        let y: i8 = if rng.random::<f64>() < p { 1 } else { -1 };
        triplets.push((i, j, y));
    }
    ObservationSet::from_triplets(m, n, &triplets)
}

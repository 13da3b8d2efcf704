//! Evaluation metrics: squared relative Frobenius error, mean squared
//! Hellinger distance between entrywise Bernoulli probabilities, the
//! spikiness ratio, sign-prediction accuracy, and value-group breakdowns.
//!
//! Dense metrics stream over column blocks so that peak memory stays at
//! `O((m + n) r + block)` even when the estimate is only held in factored
//! form; blocks are reduced in a fixed order so results are identical no
//! matter how many threads run.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::LinkModel;
use crate::obs::ObservationSet;
use crate::objective::FactorPair;
use crate::util::Accumulator;

const COLUMN_BLOCK: usize = 128;

/// Evaluation summary for one completed instance.
///
/// Serializes to a flat JSON object with snake_case keys; `per_group` is
/// omitted when no group breakdown was requested.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// Squared relative Frobenius error `||est - truth||_F^2 / ||truth||_F^2`.
    pub relative_error: f64,
    /// Mean per-entry squared Hellinger distance, in `[0, 2]`.
    pub hellinger: f64,
    /// Wall-clock seconds of the solve this estimate came from (0 when
    /// evaluated standalone).
    pub runtime_seconds: f64,
    /// Per value-group metrics, when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_group: Option<Vec<GroupRow>>,
}

/// Metrics restricted to the cells whose true value falls in one bin.
///
/// `value_lo`/`value_hi` are the bin edges (`None` meaning unbounded); the
/// half-open convention is `(lo, hi]`. `prob_lo`/`prob_hi` are the same edges
/// mapped through the link CDF, labeling the bin as a probability range.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupRow {
    pub value_lo: Option<f64>,
    pub value_hi: Option<f64>,
    pub prob_lo: f64,
    pub prob_hi: f64,
    pub count: usize,
    /// Squared relative error within the bin; `None` when the bin is empty
    /// or its truth mass is zero.
    pub relative_error: Option<f64>,
    /// Mean squared Hellinger distance within the bin; `None` when empty.
    pub hellinger: Option<f64>,
}

/// Sign-prediction accuracy on held-out entries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignAccuracy {
    /// Fraction of held-out entries whose sign is predicted correctly.
    pub overall: f64,
    /// Accuracy split by the original (pre-binarization) rating value, when
    /// that metadata is available.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub by_rating: Option<Vec<RatingAccuracy>>,
}

/// Accuracy over the held-out entries that carried one original rating value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatingAccuracy {
    pub rating: f64,
    pub count: usize,
    pub accuracy: f64,
}

fn check_dims(estimate: &FactorPair, truth: &DMatrix<f64>) -> Result<()> {
    if estimate.m() != truth.nrows() || estimate.n() != truth.ncols() {
        return Err(Error::dimension(format!(
            "estimate is {} x {} but truth is {} x {}",
            estimate.m(),
            estimate.n(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    Ok(())
}

fn block_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .step_by(COLUMN_BLOCK)
        .map(|j0| (j0, (j0 + COLUMN_BLOCK).min(n)))
        .collect()
}

/// Write column `j` of the factored estimate into `out` (length `m`).
fn estimate_column(estimate: &FactorPair, j: usize, out: &mut [f64]) {
    let m = estimate.m();
    let n = estimate.n();
    let rank = estimate.rank();
    let u = estimate.u().as_slice();
    let v = estimate.v().as_slice();
    out.fill(0.0);
    for t in 0..rank {
        let w = v[t * n + j];
        if w == 0.0 {
            continue;
        }
        let u_col = &u[t * m..(t + 1) * m];
        for (o, &x) in out.iter_mut().zip(u_col) {
            *o += x * w;
        }
    }
}

/// Squared relative Frobenius error `||est - truth||_F^2 / ||truth||_F^2`.
///
/// Streams over column blocks; never materializes the dense estimate.
pub fn relative_error(estimate: &FactorPair, truth: &DMatrix<f64>) -> Result<f64> {
    check_dims(estimate, truth)?;
    let m = truth.nrows();
    let partials: Vec<(f64, f64)> = block_ranges(truth.ncols())
        .par_iter()
        .map(|&(j0, j1)| {
            let mut num = Accumulator::new();
            let mut den = Accumulator::new();
            let mut col = vec![0.0; m];
            for j in j0..j1 {
                estimate_column(estimate, j, &mut col);
                for (i, &e) in col.iter().enumerate() {
                    let t = truth[(i, j)];
                    let d = e - t;
                    num.add(d * d);
                    den.add(t * t);
                }
            }
            (num.value(), den.value())
        })
        .collect();
    let mut num = Accumulator::new();
    let mut den = Accumulator::new();
    for (a, b) in partials {
        num.add(a);
        den.add(b);
    }
    if den.value() == 0.0 {
        return Err(Error::domain("relative error is undefined against a zero truth matrix"));
    }
    Ok(num.value() / den.value())
}

/// Squared Hellinger distance between two Bernoulli laws,
/// `(sqrt(p) - sqrt(q))^2 + (sqrt(1-p) - sqrt(1-q))^2`, in `[0, 2]`.
fn bernoulli_hellinger_sq(p: f64, q: f64) -> f64 {
    let a = p.sqrt() - q.sqrt();
    let b = (1.0 - p).sqrt() - (1.0 - q).sqrt();
    a * a + b * b
}

/// Mean per-entry squared Hellinger distance between two probability
/// matrices. Symmetric; zero iff the matrices agree elementwise.
pub fn hellinger_distance(p_est: &DMatrix<f64>, p_true: &DMatrix<f64>) -> Result<f64> {
    if p_est.shape() != p_true.shape() {
        return Err(Error::dimension(format!(
            "probability matrices differ in shape: {:?} vs {:?}",
            p_est.shape(),
            p_true.shape()
        )));
    }
    let mut sum = Accumulator::new();
    for (&p, &q) in p_est.iter().zip(p_true.iter()) {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::domain(format!(
                "probabilities must lie in [0, 1], got {p} and {q}"
            )));
        }
        sum.add(bernoulli_hellinger_sq(p, q));
    }
    Ok(sum.value() / (p_est.nrows() * p_est.ncols()) as f64)
}

/// Mean squared Hellinger distance between `F(est)` and `F(truth)` where the
/// estimate stays in factored form; streams over column blocks.
pub fn hellinger_factors(
    estimate: &FactorPair,
    truth: &DMatrix<f64>,
    model: &LinkModel,
) -> Result<f64> {
    check_dims(estimate, truth)?;
    let m = truth.nrows();
    let partials: Vec<Result<f64>> = block_ranges(truth.ncols())
        .par_iter()
        .map(|&(j0, j1)| {
            let mut sum = Accumulator::new();
            let mut col = vec![0.0; m];
            for j in j0..j1 {
                estimate_column(estimate, j, &mut col);
                for (i, &e) in col.iter().enumerate() {
                    let p = model.cdf(e)?;
                    let q = model.cdf(truth[(i, j)])?;
                    sum.add(bernoulli_hellinger_sq(p, q));
                }
            }
            Ok(sum.value())
        })
        .collect();
    let mut sum = Accumulator::new();
    for p in partials {
        sum.add(p?);
    }
    Ok(sum.value() / (m * truth.ncols()) as f64)
}

/// Spikiness ratio `sqrt(mn) * max|theta| / ||theta||_F`, in `[1, sqrt(mn)]`.
pub fn spikiness(theta: &DMatrix<f64>) -> Result<f64> {
    let mut max_abs = 0.0f64;
    let mut sq = Accumulator::new();
    for &x in theta.iter() {
        max_abs = max_abs.max(x.abs());
        sq.add(x * x);
    }
    if max_abs == 0.0 {
        return Err(Error::domain("spikiness is undefined for the zero matrix"));
    }
    let mn = (theta.nrows() * theta.ncols()) as f64;
    Ok(mn.sqrt() * max_abs / sq.value().sqrt())
}

/// Fraction of held-out entries whose sign the estimate predicts correctly,
/// with `sign(0) = +1` as the deterministic tie-break. When `ratings` carries
/// the original rating per held-out entry (aligned with the set's storage
/// order), the result also breaks accuracy down by rating value.
pub fn sign_accuracy(
    estimate: &FactorPair,
    heldout: &ObservationSet,
    ratings: Option<&[f64]>,
) -> Result<SignAccuracy> {
    if heldout.is_empty() {
        return Err(Error::domain("sign accuracy needs a nonempty held-out set"));
    }
    if estimate.m() != heldout.m() || estimate.n() != heldout.n() {
        return Err(Error::dimension(format!(
            "estimate is {} x {} but held-out set is over {} x {}",
            estimate.m(),
            estimate.n(),
            heldout.m(),
            heldout.n()
        )));
    }
    if let Some(r) = ratings {
        if r.len() != heldout.len() {
            return Err(Error::dimension(format!(
                "{} ratings for {} held-out entries",
                r.len(),
                heldout.len()
            )));
        }
    }
    let mut hits = 0usize;
    // Few distinct rating values in practice; a sorted vec beats float keys.
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (idx, (i, j, y)) in heldout.iter().enumerate() {
        let pred = estimate.predict(i as usize, j as usize);
        let sign = if pred >= 0.0 { 1.0 } else { -1.0 };
        let hit = sign == y;
        hits += hit as usize;
        if let Some(r) = ratings {
            let value = r[idx];
            match groups.iter_mut().find(|g| g.0 == value) {
                Some(g) => {
                    g.1 += 1;
                    g.2 += hit as usize;
                }
                None => groups.push((value, 1, hit as usize)),
            }
        }
    }
    let by_rating = ratings.map(|_| {
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        groups
            .iter()
            .map(|&(rating, count, h)| RatingAccuracy {
                rating,
                count,
                accuracy: h as f64 / count as f64,
            })
            .collect()
    });
    Ok(SignAccuracy { overall: hits as f64 / heldout.len() as f64, by_rating })
}

/// Bin the cells of `truth` by value range and report per-bin squared
/// relative error and Hellinger distance.
///
/// `value_edges` must be strictly increasing; `k` edges produce `k + 1` bins
/// `(-inf, e_1], (e_1, e_2], ..., (e_k, inf)`. An empty edge list yields a
/// single bin reproducing the overall metrics.
pub fn group_breakdown(
    estimate: &FactorPair,
    truth: &DMatrix<f64>,
    model: &LinkModel,
    value_edges: &[f64],
) -> Result<Vec<GroupRow>> {
    check_dims(estimate, truth)?;
    for w in value_edges.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::domain(format!(
                "value edges must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if value_edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::domain("value edges must be finite"));
    }
    let bins = value_edges.len() + 1;
    let mut count = vec![0usize; bins];
    let mut num: Vec<Accumulator> = (0..bins).map(|_| Accumulator::new()).collect();
    let mut den: Vec<Accumulator> = (0..bins).map(|_| Accumulator::new()).collect();
    let mut hell: Vec<Accumulator> = (0..bins).map(|_| Accumulator::new()).collect();
    let m = truth.nrows();
    let mut col = vec![0.0; m];
    for j in 0..truth.ncols() {
        estimate_column(estimate, j, &mut col);
        for (i, &e) in col.iter().enumerate() {
            let t = truth[(i, j)];
            // (lo, hi] convention: a value equal to an edge falls below it.
            let b = value_edges.partition_point(|&edge| edge < t);
            count[b] += 1;
            let d = e - t;
            num[b].add(d * d);
            den[b].add(t * t);
            hell[b].add(bernoulli_hellinger_sq(model.cdf(e)?, model.cdf(t)?));
        }
    }
    let mut rows = Vec::with_capacity(bins);
    for b in 0..bins {
        let value_lo = if b == 0 { None } else { Some(value_edges[b - 1]) };
        let value_hi = if b == bins - 1 { None } else { Some(value_edges[b]) };
        let prob_lo = match value_lo {
            Some(e) => model.cdf(e)?,
            None => 0.0,
        };
        let prob_hi = match value_hi {
            Some(e) => model.cdf(e)?,
            None => 1.0,
        };
        let relative_error = if count[b] > 0 && den[b].value() > 0.0 {
            Some(num[b].value() / den[b].value())
        } else {
            None
        };
        let hellinger = if count[b] > 0 {
            Some(hell[b].value() / count[b] as f64)
        } else {
            None
        };
        rows.push(GroupRow {
            value_lo,
            value_hi,
            prob_lo,
            prob_hi,
            count: count[b],
            relative_error,
            hellinger,
        });
    }
    Ok(rows)
}

/// Convenience wrapper computing the full report in one pass of calls.
pub fn evaluate(
    estimate: &FactorPair,
    truth: &DMatrix<f64>,
    model: &LinkModel,
    runtime_seconds: f64,
    value_edges: Option<&[f64]>,
) -> Result<EvalReport> {
    let relative_error = relative_error(estimate, truth)?;
    let hellinger = hellinger_factors(estimate, truth, model)?;
    let per_group = match value_edges {
        Some(edges) => Some(group_breakdown(estimate, truth, model, edges)?),
        None => None,
    };
    Ok(EvalReport { relative_error, hellinger, runtime_seconds, per_group })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_pair(m: usize, n: usize, r: usize, seed: u64) -> FactorPair {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let u = DMatrix::from_fn(m, r, |_, _| rng.random::<f64>() - 0.5);
        let v = DMatrix::from_fn(n, r, |_, _| rng.random::<f64>() - 0.5);
        FactorPair::new(u, v).unwrap()
    }

    #[test]
    fn relative_error_hits_the_three_anchors() {
        let est = random_pair(9, 7, 2, 1);
        let truth = est.u() * est.v().transpose();
        // Estimate equals truth.
        assert!(relative_error(&est, &truth).unwrap() < 1e-24);
        // Estimate is twice the truth: ||truth||^2 / ||truth||^2 = 1.
        let doubled = FactorPair::new(est.u() * 2.0, est.v().clone()).unwrap();
        assert!((relative_error(&doubled, &truth).unwrap() - 1.0).abs() < 1e-12);
        // Zero estimate: also exactly 1.
        let zero =
            FactorPair::new(DMatrix::zeros(9, 1), DMatrix::zeros(7, 1)).unwrap();
        assert!((relative_error(&zero, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_error_rejects_zero_truth_and_bad_shapes() {
        let est = random_pair(4, 4, 1, 2);
        assert!(relative_error(&est, &DMatrix::zeros(4, 4)).is_err());
        assert!(relative_error(&est, &DMatrix::from_element(5, 4, 1.0)).is_err());
    }

    #[test]
    fn relative_error_matches_direct_dense_computation() {
        let est = random_pair(23, 31, 3, 3);
        let truth = random_pair(23, 31, 2, 4).u() * random_pair(23, 31, 2, 4).v().transpose();
        let dense = est.u() * est.v().transpose();
        let num: f64 = (&dense - &truth).iter().map(|d| d * d).sum();
        let den: f64 = truth.iter().map(|t| t * t).sum();
        let got = relative_error(&est, &truth).unwrap();
        assert!((got - num / den).abs() < 1e-12 * (1.0 + num / den));
    }

    #[test]
    fn hellinger_anchors_and_symmetry() {
        let p = DMatrix::from_element(3, 3, 0.37);
        assert_eq!(hellinger_distance(&p, &p).unwrap(), 0.0);
        let zero = DMatrix::from_element(1, 1, 0.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        assert!((hellinger_distance(&zero, &one).unwrap() - 2.0).abs() < 1e-15);
        // (sqrt(1/4) - sqrt(3/4))^2 + (sqrt(3/4) - sqrt(1/4))^2 = 2 - sqrt(3).
        let a = DMatrix::from_element(1, 1, 0.25);
        let b = DMatrix::from_element(1, 1, 0.75);
        let want = 2.0 - 3.0f64.sqrt();
        assert!((hellinger_distance(&a, &b).unwrap() - want).abs() < 1e-14);
        // Symmetry is exact.
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let p = DMatrix::from_fn(6, 5, |_, _| rng.random::<f64>());
        let q = DMatrix::from_fn(6, 5, |_, _| rng.random::<f64>());
        assert_eq!(
            hellinger_distance(&p, &q).unwrap(),
            hellinger_distance(&q, &p).unwrap()
        );
    }

    #[test]
    fn hellinger_rejects_out_of_range_probabilities() {
        let ok = DMatrix::from_element(2, 2, 0.5);
        let bad = DMatrix::from_element(2, 2, 1.5);
        assert!(hellinger_distance(&ok, &bad).is_err());
        let neg = DMatrix::from_element(2, 2, -0.01);
        assert!(hellinger_distance(&neg, &ok).is_err());
    }

    #[test]
    fn hellinger_factors_agrees_with_materialized_probabilities() {
        let est = random_pair(17, 13, 2, 5);
        let truth = random_pair(17, 13, 1, 6).u() * random_pair(17, 13, 1, 6).v().transpose();
        let model = LinkModel::probit(0.8).unwrap();
        let dense = est.u() * est.v().transpose();
        let p_est = dense.map(|x| model.cdf(x).unwrap());
        let p_true = truth.map(|x| model.cdf(x).unwrap());
        let streamed = hellinger_factors(&est, &truth, &model).unwrap();
        let direct = hellinger_distance(&p_est, &p_true).unwrap();
        assert!((streamed - direct).abs() < 1e-14, "{streamed} vs {direct}");
    }

    #[test]
    fn spikiness_bounds_and_invariance() {
        // Constant matrices attain the lower bound 1.
        let ones = DMatrix::from_element(2, 2, 1.0);
        assert!((spikiness(&ones).unwrap() - 1.0).abs() < 1e-14);
        // A single nonzero entry attains sqrt(mn).
        let mut single = DMatrix::zeros(4, 6);
        single[(2, 3)] = -7.5;
        assert!((spikiness(&single).unwrap() - 24.0f64.sqrt()).abs() < 1e-12);
        // Scale invariance.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let theta = DMatrix::from_fn(8, 9, |_, _| rng.random::<f64>() - 0.5);
        let s1 = spikiness(&theta).unwrap();
        let s2 = spikiness(&(theta.clone() * -137.25)).unwrap();
        assert!((s1 - s2).abs() < 1e-14 * s1);
        assert!(s1 >= 1.0 && s1 <= 72.0f64.sqrt());
        // Zero matrix is rejected.
        assert!(spikiness(&DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn sign_accuracy_anchors_and_rating_breakdown() {
        let est = random_pair(10, 8, 2, 7);
        // Labels taken from the estimate's own signs: perfect accuracy.
        let mut triplets = Vec::new();
        for i in 0..10u32 {
            for j in 0..8u32 {
                let p = est.predict(i as usize, j as usize);
                triplets.push((i, j, if p >= 0.0 { 1i8 } else { -1i8 }));
            }
        }
        let obs = ObservationSet::from_triplets(10, 8, &triplets).unwrap();
        let perfect = sign_accuracy(&est, &obs, None).unwrap();
        assert_eq!(perfect.overall, 1.0);
        assert!(perfect.by_rating.is_none());
        // Zero estimate predicts +1 everywhere (sign(0) = +1).
        let zero = FactorPair::new(DMatrix::zeros(10, 1), DMatrix::zeros(8, 1)).unwrap();
        let plus = triplets.iter().filter(|t| t.2 > 0).count() as f64;
        let acc = sign_accuracy(&zero, &obs, None).unwrap();
        assert!((acc.overall - plus / 80.0).abs() < 1e-15);
        // Rating breakdown: counts must partition and accuracies average out.
        let ratings: Vec<f64> = (0..obs.len()).map(|k| 1.0 + (k % 5) as f64).collect();
        let broken = sign_accuracy(&est, &obs, Some(&ratings)).unwrap();
        let rows = broken.by_rating.unwrap();
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), obs.len());
        assert!(rows.windows(2).all(|w| w[0].rating < w[1].rating));
        for row in &rows {
            assert_eq!(row.accuracy, 1.0); // estimate still matches all signs
        }
    }

    #[test]
    fn sign_accuracy_rejects_misaligned_ratings() {
        let est = random_pair(4, 4, 1, 8);
        let obs = ObservationSet::from_triplets(4, 4, &[(0, 0, 1), (1, 2, -1)]).unwrap();
        assert!(sign_accuracy(&est, &obs, Some(&[1.0])).is_err());
        assert!(sign_accuracy(&est, &obs, Some(&[1.0, 2.0])).is_ok());
    }

    #[test]
    fn single_bin_breakdown_reproduces_overall_metrics() {
        let est = random_pair(12, 11, 2, 9);
        let truth = random_pair(12, 11, 1, 10).u() * random_pair(12, 11, 1, 10).v().transpose();
        let model = LinkModel::logistic(1.0).unwrap();
        let rows = group_breakdown(&est, &truth, &model, &[]).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.count, 12 * 11);
        assert_eq!(row.value_lo, None);
        assert_eq!(row.value_hi, None);
        assert_eq!(row.prob_lo, 0.0);
        assert_eq!(row.prob_hi, 1.0);
        let overall_rel = relative_error(&est, &truth).unwrap();
        let overall_hell = hellinger_factors(&est, &truth, &model).unwrap();
        assert!((row.relative_error.unwrap() - overall_rel).abs() < 1e-12);
        assert!((row.hellinger.unwrap() - overall_hell).abs() < 1e-12);
    }

    #[test]
    fn probit_sigma_two_maps_edge_to_the_tenth_percentile() {
        // Edge -2.5 under probit sigma = 2 is the standard normal CDF at
        // -1.25 = 0.10564977366685525769 (frozen independently).
        let est = random_pair(6, 6, 1, 12);
        let truth = DMatrix::from_fn(6, 6, |i, j| (i as f64 - j as f64) * 1.3);
        let model = LinkModel::probit(2.0).unwrap();
        let rows = group_breakdown(&est, &truth, &model, &[-2.5, 2.5]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!((rows[0].prob_hi - 0.105_649_773_666_855_257_69).abs() < 1e-13);
        assert!((rows[2].prob_lo - (1.0 - 0.105_649_773_666_855_257_69)).abs() < 1e-13);
        assert_eq!(rows[1].value_lo, Some(-2.5));
        assert_eq!(rows[1].value_hi, Some(2.5));
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), 36);
    }

    #[test]
    fn group_rows_match_a_direct_per_bin_oracle() {
        let est = random_pair(15, 14, 2, 13);
        let truth = random_pair(15, 14, 2, 14).u() * random_pair(15, 14, 2, 14).v().transpose();
        let model = LinkModel::probit(0.7).unwrap();
        let edges = [-0.3, 0.1, 0.4];
        let rows = group_breakdown(&est, &truth, &model, &edges).unwrap();
        let dense = est.u() * est.v().transpose();
        // Straightforward double loop as the oracle.
        let mut count = [0usize; 4];
        let mut num = [0.0f64; 4];
        let mut den = [0.0f64; 4];
        let mut hell = [0.0f64; 4];
        for j in 0..14 {
            for i in 0..15 {
                let t = truth[(i, j)];
                let e = dense[(i, j)];
                let b = edges.iter().filter(|&&edge| edge < t).count();
                count[b] += 1;
                num[b] += (e - t) * (e - t);
                den[b] += t * t;
                hell[b] +=
                    bernoulli_hellinger_sq(model.cdf(e).unwrap(), model.cdf(t).unwrap());
            }
        }
        for b in 0..4 {
            assert_eq!(rows[b].count, count[b]);
            if count[b] > 0 {
                let want_rel = num[b] / den[b];
                let want_hell = hell[b] / count[b] as f64;
                assert!((rows[b].relative_error.unwrap() - want_rel).abs() < 1e-12);
                assert!((rows[b].hellinger.unwrap() - want_hell).abs() < 1e-12);
            } else {
                assert!(rows[b].relative_error.is_none());
                assert!(rows[b].hellinger.is_none());
            }
        }
        // Additivity of the squared-error numerators across disjoint bins.
        let total_num: f64 = num.iter().sum();
        let total_den: f64 = den.iter().sum();
        let overall = relative_error(&est, &truth).unwrap();
        assert!((overall - total_num / total_den).abs() < 1e-10);
    }

    #[test]
    fn group_breakdown_rejects_bad_edges() {
        let est = random_pair(3, 3, 1, 15);
        let truth = DMatrix::from_element(3, 3, 0.5);
        let model = LinkModel::probit(1.0).unwrap();
        assert!(group_breakdown(&est, &truth, &model, &[0.2, 0.2]).is_err());
        assert!(group_breakdown(&est, &truth, &model, &[0.5, 0.1]).is_err());
        assert!(group_breakdown(&est, &truth, &model, &[f64::NAN]).is_err());
    }

    #[test]
    fn eval_report_serializes_flat_snake_case() {
        let report = EvalReport {
            relative_error: 0.03,
            hellinger: 7.0e-4,
            runtime_seconds: 1.25,
            per_group: None,
        };
        let json = serde_json::to_value(&report).unwrap();
        let obj = json.as_object().unwrap();
        assert!(obj.contains_key("relative_error"));
        assert!(obj.contains_key("hellinger"));
        assert!(obj.contains_key("runtime_seconds"));
        assert!(!obj.contains_key("per_group"));
        let back: EvalReport = serde_json::from_value(json).unwrap();
        assert_eq!(back.relative_error, 0.03);
        // With groups, rows carry both label kinds.
        let with = EvalReport {
            per_group: Some(vec![GroupRow {
                value_lo: None,
                value_hi: Some(-2.5),
                prob_lo: 0.0,
                prob_hi: 0.105,
                count: 3,
                relative_error: Some(0.1),
                hellinger: Some(0.01),
            }]),
            ..report
        };
        let json = serde_json::to_value(&with).unwrap();
        let row = &json["per_group"][0];
        assert!(row["value_lo"].is_null());
        assert_eq!(row["value_hi"], -2.5);
        assert_eq!(row["count"], 3);
    }
}

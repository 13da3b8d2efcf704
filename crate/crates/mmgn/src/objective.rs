//! Factored parameter matrices and the observed-data negative log-likelihood.
//!
//! The parameter matrix is carried in factored form `Theta = U Vᵀ` with
//! `U: m x r` and `V: n x r`; only its entries on the observed index set are
//! ever evaluated. The per-entry loss is `-log F(y * theta)` for the link CDF
//! `F`, so the full objective is a sum of `|omega|` such terms, accumulated
//! with compensated summation to keep the solver's monotonicity checks sharp.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::link::LinkModel;
use crate::obs::ObservationSet;
use crate::util::Accumulator;

/// A rank-`r` factored matrix `U Vᵀ` with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl FactorPair {
    /// Wrap factor matrices, validating that both have the same positive
    /// number of columns and only finite entries.
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.ncols() == 0 || u.ncols() != v.ncols() {
            return Err(Error::dimension(format!(
                "factors must share a positive rank, got U: {}x{}, V: {}x{}",
                u.nrows(),
                u.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        if u.nrows() == 0 || v.nrows() == 0 {
            return Err(Error::dimension("factor matrices must have at least one row"));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::domain("factor entries must be finite"));
        }
        Ok(Self { u, v })
    }

    /// Number of rows of `Theta`.
    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    /// Number of columns of `Theta`.
    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    /// Factorization rank `r`.
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Left factor `U` (`m x r`).
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Right factor `V` (`n x r`).
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.u, self.v)
    }

    /// Single entry `theta_ij = <U_i, V_j>`.
    #[inline]
    pub fn predict(&self, i: usize, j: usize) -> f64 {
        let (m, n, r) = (self.m(), self.n(), self.rank());
        debug_assert!(i < m && j < n);
        let u = self.u.as_slice();
        let v = self.v.as_slice();
        let mut acc = 0.0;
        for t in 0..r {
            acc += u[t * m + i] * v[t * n + j];
        }
        acc
    }

    /// Check that this pair is conformal with an observation set.
    fn check_dims(&self, obs: &ObservationSet) -> Result<()> {
        if self.m() != obs.m() || self.n() != obs.n() {
            return Err(Error::dimension(format!(
                "factors describe a {}x{} matrix but observations a {}x{} one",
                self.m(),
                self.n(),
                obs.m(),
                obs.n()
            )));
        }
        Ok(())
    }
}

/// Evaluate `Theta = U Vᵀ` on each observed entry, in storage order.
pub fn predict_on_omega(factors: &FactorPair, obs: &ObservationSet) -> Result<Vec<f64>> {
    factors.check_dims(obs)?;
    let mut out = vec![0.0; obs.len()];
    predict_into(factors, obs, &mut out);
    Ok(out)
}

/// Negative log-likelihood `sum_omega -log F(y * theta)`.
///
/// Nonnegative and finite for any finite factors; zero only when every
/// observation is predicted with probability one.
pub fn neg_log_lik(factors: &FactorPair, obs: &ObservationSet, model: &LinkModel) -> Result<f64> {
    factors.check_dims(obs)?;
    let theta = predict_on_omega(factors, obs)?;
    Ok(nll_of_theta(&theta, obs, model))
}

/// Gradient of the negative log-likelihood with respect to the observed
/// entries of `Theta`, in storage order: `g_k = -y_k f(theta_k) / F(y_k theta_k)`.
pub fn grad_neg_log_lik(
    factors: &FactorPair,
    obs: &ObservationSet,
    model: &LinkModel,
) -> Result<Vec<f64>> {
    factors.check_dims(obs)?;
    let lip = model.lipschitz();
    let mut grad = vec![0.0; obs.len()];
    let theta = predict_on_omega(factors, obs)?;
    for (k, (_, _, y)) in obs.iter().enumerate() {
        // The Mills-type ratio is the gradient scaled by -1/L; this form stays
        // finite wherever the naive density/CDF quotient would hit 0/0.
        grad[k] = -lip * model.mm_ratio(y, theta[k]);
    }
    Ok(grad)
}

/// Fill `out` (length `obs.len()`) with predictions in storage order.
pub(crate) fn predict_into(factors: &FactorPair, obs: &ObservationSet, out: &mut [f64]) {
    predict_pair_into(&factors.u, &factors.v, obs, out);
}

/// Evaluate `<u_i, v_j>` on the observed entries for any conformal pair of
/// matrices (not necessarily a validated [`FactorPair`]).
pub(crate) fn predict_pair_into(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    obs: &ObservationSet,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), obs.len());
    debug_assert_eq!(u.ncols(), v.ncols());
    let (m, n, r) = (u.nrows(), v.nrows(), u.ncols());
    debug_assert!(m == obs.m() && n == obs.n());
    let u = u.as_slice();
    let v = v.as_slice();
    let rows = obs.rows();
    let cols = obs.cols();
    for k in 0..out.len() {
        let i = rows[k] as usize;
        let j = cols[k] as usize;
        let mut acc = 0.0;
        for t in 0..r {
            acc += u[t * m + i] * v[t * n + j];
        }
        out[k] = acc;
    }
}

/// Negative log-likelihood from precomputed predictions.
pub(crate) fn nll_of_theta(theta: &[f64], obs: &ObservationSet, model: &LinkModel) -> f64 {
    debug_assert_eq!(theta.len(), obs.len());
    let mut acc = Accumulator::new();
    for (k, (_, _, y)) in obs.iter().enumerate() {
        acc.add(-model.log_cdf(y * theta[k]));
    }
    acc.value()
}

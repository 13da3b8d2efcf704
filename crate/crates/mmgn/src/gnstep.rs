//! The Gauss-Newton inner step: a matrix-free minimum-norm least squares solve.
//!
//! Linearizing `(U~ + dU)(V~ + dV)ᵀ` around the anchor and dropping the
//! second-order term `dU dVᵀ` leaves the linear map
//!
//! ```text
//! J(dU, dV)_ij = <U~_i, dV_j> + <dU_i, V~_j>      for (i, j) observed
//! ```
//!
//! and the inner problem `min ||x - J(dU, dV)||` over the observed entries.
//! `J` has a nontrivial null space (the factorization gauge), so the update is
//! pinned down as the *minimum-norm* least squares solution, computed by LSQR
//! (Paige & Saunders 1982). Starting from zero keeps every iterate inside the
//! row space of `J`, which is exactly the min-norm characterization; no
//! explicit regularization is needed.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::objective::FactorPair;
use crate::obs::ObservationSet;
use crate::util::norm2;

/// Matrix-free Jacobian of the factored parametrization at an anchor point.
///
/// Flattened vectors stack `vec(dU)` (column-major) before `vec(dV)`
/// (column-major); rows of the operator follow observation storage order.
pub struct JacobianOperator<'a> {
    anchor: &'a FactorPair,
    obs: &'a ObservationSet,
}

/// Outcome of [`solve_min_norm`].
#[derive(Clone, Debug)]
pub struct StepResult {
    /// Update for the left factor (`m x r`).
    pub delta_u: DMatrix<f64>,
    /// Update for the right factor (`n x r`).
    pub delta_v: DMatrix<f64>,
    /// Exact final residual norm `||x - J(delta)||`.
    pub residual_norm: f64,
    /// LSQR iterations consumed.
    pub inner_iterations: usize,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
}

impl<'a> JacobianOperator<'a> {
    pub fn new(anchor: &'a FactorPair, obs: &'a ObservationSet) -> Result<Self> {
        if anchor.m() != obs.m() || anchor.n() != obs.n() {
            return Err(Error::dimension(format!(
                "anchor describes a {}x{} matrix but observations a {}x{} one",
                anchor.m(),
                anchor.n(),
                obs.m(),
                obs.n()
            )));
        }
        Ok(Self { anchor, obs })
    }

    /// Rows of the operator: one per observed entry.
    pub fn n_rows(&self) -> usize {
        self.obs.len()
    }

    /// Columns of the operator: `(m + n) * r` factor coordinates.
    pub fn n_cols(&self) -> usize {
        (self.anchor.m() + self.anchor.n()) * self.anchor.rank()
    }

    /// Apply `J` to a factor update, returning values on the observed entries.
    pub fn apply(&self, delta_u: &DMatrix<f64>, delta_v: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_delta(delta_u, delta_v)?;
        let mut flat = Vec::with_capacity(self.n_cols());
        flat.extend_from_slice(delta_u.as_slice());
        flat.extend_from_slice(delta_v.as_slice());
        let mut out = vec![0.0; self.n_rows()];
        self.apply_flat(&flat, &mut out);
        Ok(out)
    }

    /// Apply `Jᵀ` to a vector on the observed entries.
    pub fn apply_adjoint(&self, w: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if w.len() != self.n_rows() {
            return Err(Error::dimension(format!(
                "adjoint input has {} entries, expected {}",
                w.len(),
                self.n_rows()
            )));
        }
        let mut flat = vec![0.0; self.n_cols()];
        self.adjoint_flat(w, &mut flat);
        let (m, n, r) = self.shape();
        let (du, dv) = flat.split_at(m * r);
        Ok((
            DMatrix::from_column_slice(m, r, du),
            DMatrix::from_column_slice(n, r, dv),
        ))
    }

    fn shape(&self) -> (usize, usize, usize) {
        (self.anchor.m(), self.anchor.n(), self.anchor.rank())
    }

    fn check_delta(&self, du: &DMatrix<f64>, dv: &DMatrix<f64>) -> Result<()> {
        let (m, n, r) = self.shape();
        if du.nrows() != m || du.ncols() != r || dv.nrows() != n || dv.ncols() != r {
            return Err(Error::dimension(format!(
                "update shapes ({}x{}, {}x{}) do not match anchor ({m}x{r}, {n}x{r})",
                du.nrows(),
                du.ncols(),
                dv.nrows(),
                dv.ncols()
            )));
        }
        Ok(())
    }

    /// `out[k] = <U~_i, dV_j> + <dU_i, V~_j>` over flattened input.
    pub(crate) fn apply_flat(&self, x: &[f64], out: &mut [f64]) {
        let (m, n, r) = self.shape();
        debug_assert_eq!(x.len(), (m + n) * r);
        debug_assert_eq!(out.len(), self.obs.len());
        let (du, dv) = x.split_at(m * r);
        let au = self.anchor.u().as_slice();
        let av = self.anchor.v().as_slice();
        let rows = self.obs.rows();
        let cols = self.obs.cols();
        for k in 0..out.len() {
            let i = rows[k] as usize;
            let j = cols[k] as usize;
            let mut acc = 0.0;
            for t in 0..r {
                acc += au[t * m + i] * dv[t * n + j] + du[t * m + i] * av[t * n + j];
            }
            out[k] = acc;
        }
    }

    /// Adjoint: scatter `w` back onto factor coordinates.
    pub(crate) fn adjoint_flat(&self, w: &[f64], out: &mut [f64]) {
        let (m, n, r) = self.shape();
        debug_assert_eq!(w.len(), self.obs.len());
        debug_assert_eq!(out.len(), (m + n) * r);
        out.fill(0.0);
        let (du, dv) = out.split_at_mut(m * r);
        let au = self.anchor.u().as_slice();
        let av = self.anchor.v().as_slice();
        let rows = self.obs.rows();
        let cols = self.obs.cols();
        for k in 0..w.len() {
            let i = rows[k] as usize;
            let j = cols[k] as usize;
            let wk = w[k];
            for t in 0..r {
                du[t * m + i] += wk * av[t * n + j];
                dv[t * n + j] += wk * au[t * m + i];
            }
        }
    }
}

/// Minimum-norm least squares solve of `min ||x_values - J(delta)||` by LSQR.
///
/// `tol` plays the role of both `atol` and `btol` in the usual LSQR stopping
/// rules; `max_iter` caps the bidiagonalization. The returned updates are the
/// minimum-norm minimizer up to the requested tolerance, with rows of `dU`
/// (`dV`) corresponding to unobserved matrix rows (columns) exactly zero.
pub fn solve_min_norm(
    op: &JacobianOperator<'_>,
    x_values: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<StepResult> {
    if x_values.len() != op.n_rows() {
        return Err(Error::dimension(format!(
            "target has {} entries, expected {}",
            x_values.len(),
            op.n_rows()
        )));
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::domain(format!("inner tolerance must be positive, got {tol}")));
    }
    if x_values.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("least squares target contains non-finite values"));
    }

    let nc = op.n_cols();
    let nr = op.n_rows();
    let mut x = vec![0.0; nc];
    let mut scratch_r = vec![0.0; nr];
    let mut scratch_c = vec![0.0; nc];

    // Golub-Kahan bidiagonalization state.
    let mut u: Vec<f64> = x_values.to_vec();
    let mut beta = norm2(&u);
    let bnorm = beta;
    let mut iterations = 0usize;
    let mut converged = true;

    if beta > 0.0 {
        scale(&mut u, 1.0 / beta);
        op.adjoint_flat(&u, &mut scratch_c);
        let mut v = scratch_c.clone();
        let mut alpha = norm2(&v);
        if alpha > 0.0 {
            scale(&mut v, 1.0 / alpha);
            let mut w = v.clone();
            let mut phibar = beta;
            let mut rhobar = alpha;
            let mut anorm_sq = alpha * alpha;
            converged = false;

            while iterations < max_iter {
                iterations += 1;

                // u <- A v - alpha u, beta = ||u||
                op.apply_flat(&v, &mut scratch_r);
                for (ui, &si) in u.iter_mut().zip(&scratch_r) {
                    *ui = si - alpha * *ui;
                }
                beta = norm2(&u);
                anorm_sq += beta * beta;
                if beta > 0.0 {
                    scale(&mut u, 1.0 / beta);
                }

                // v <- Aᵀ u - beta v, alpha = ||v||
                op.adjoint_flat(&u, &mut scratch_c);
                for (vi, &si) in v.iter_mut().zip(&scratch_c) {
                    *vi = si - beta * *vi;
                }
                alpha = norm2(&v);
                anorm_sq += alpha * alpha;
                if alpha > 0.0 {
                    scale(&mut v, 1.0 / alpha);
                }

                // Plane rotation eliminating the subdiagonal.
                let rho = rhobar.hypot(beta);
                let c = rhobar / rho;
                let s = beta / rho;
                let theta = s * alpha;
                rhobar = -c * alpha;
                let phi = c * phibar;
                phibar *= s;

                // x <- x + (phi/rho) w;  w <- v - (theta/rho) w
                let t1 = phi / rho;
                let t2 = -theta / rho;
                for ((xi, wi), &vi) in x.iter_mut().zip(w.iter_mut()).zip(&v) {
                    *xi += t1 * *wi;
                    *wi = vi + t2 * *wi;
                }

                // Standard LSQR stopping estimates.
                let rnorm = phibar;
                let arnorm = alpha * (c * phibar).abs();
                let anorm = anorm_sq.sqrt();
                let xnorm = norm2(&x);
                if rnorm <= tol * bnorm + tol * anorm * xnorm {
                    converged = true;
                    break;
                }
                if anorm > 0.0 && rnorm > 0.0 && arnorm <= tol * anorm * rnorm {
                    converged = true;
                    break;
                }
                if beta == 0.0 || alpha == 0.0 {
                    // Krylov space exhausted: x is the exact min-norm solution.
                    converged = true;
                    break;
                }
            }
        }
        // alpha == 0 right away: the target is orthogonal to the range, the
        // min-norm solution is zero.
    }

    // Exact residual for the report (phibar is only an estimate).
    op.apply_flat(&x, &mut scratch_r);
    let mut resid_sq = crate::util::Accumulator::new();
    for (k, &ax) in scratch_r.iter().enumerate() {
        let d = x_values[k] - ax;
        resid_sq.add(d * d);
    }

    let (m, n, r) = (op.anchor.m(), op.anchor.n(), op.anchor.rank());
    let (du, dv) = x.split_at(m * r);
    Ok(StepResult {
        delta_u: DMatrix::from_column_slice(m, r, du),
        delta_v: DMatrix::from_column_slice(n, r, dv),
        residual_norm: resid_sq.value().max(0.0).sqrt(),
        inner_iterations: iterations,
        converged,
    })
}

#[inline]
fn scale(xs: &mut [f64], a: f64) {
    for x in xs {
        *x *= a;
    }
}

//! Sequential thresholded least squares on the Kramers-Moyal targets.
//!
//! The loop fits the active columns by orthogonal decomposition, deactivates
//! every column whose coefficient magnitude falls below the threshold, and
//! refits until the active set is stable. The active set never grows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StlsqConfig {
    /// Hard magnitude threshold on coefficients.
    pub threshold: f64,
    pub max_iters: usize,
    /// Tikhonov regularizer: adds ridge * (||D||_F^2 / K) * ||x||^2 to the
    /// objective. Zero keeps plain least squares.
    pub ridge: f64,
}

impl Default for StlsqConfig {
    fn default() -> Self {
        StlsqConfig {
            threshold: 0.3,
            max_iters: 20,
            ridge: 0.0,
        }
    }
}

impl StlsqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StlsqFit {
    /// Dense coefficient vector; inactive entries are exactly zero.
    pub coef: DVector<f64>,
    pub active: Vec<bool>,
    /// A least-squares subproblem was rank-deficient and fell back to the
    /// minimum-norm solution.
    pub rank_deficient: bool,
    pub n_iters: usize,
}

impl StlsqFit {
    pub fn support(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }
}

/// Least squares by column-pivoted QR. Rank-deficient systems (diagonal of R
/// below an eps-scaled cutoff) fall back to the minimum-norm solution via a
/// complete orthogonal decomposition of the leading R block.
fn cpqr_solve(d: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let n = d.nrows();
    let k = d.ncols();
    let qr = d.clone().col_piv_qr();
    let q = qr.q();
    let r = qr.r();
    let rmax = (0..r.nrows().min(k)).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if !rmax.is_finite() {
        return Err(Error::NonFinite { context: "QR factor" });
    }
    let cutoff = rmax * n.max(k) as f64 * f64::EPSILON;
    let mut rank = 0;
    for i in 0..r.nrows().min(k) {
        if r[(i, i)].abs() > cutoff {
            rank += 1;
        } else {
            break;
        }
    }
    let deficient = rank < k;
    let c = q.transpose() * y;
    let mut w = DVector::zeros(k);
    if rank > 0 {
        let c_head = c.rows(0, rank).into_owned();
        if deficient {
            // complete orthogonal decomposition: QR of the wide block's
            // transpose gives the minimum-norm solution of R1 w = c
            let r1t = r.rows(0, rank).transpose(); // k x rank
            let qr2 = r1t.qr();
            let q2 = qr2.q(); // k x rank
            let r2 = qr2.r(); // rank x rank, upper
            // solve r2^T s = c_head (lower triangular)
            let mut s = c_head;
            for i in 0..rank {
                let mut acc = s[i];
                for j in 0..i {
                    acc -= r2[(j, i)] * s[j];
                }
                let piv = r2[(i, i)];
                if piv.abs() < 1e-300 {
                    return Err(Error::LinearSolveFailure { row: i, pivot: piv });
                }
                s[i] = acc / piv;
            }
            w = &q2 * s;
        } else {
            // back substitution on the full-rank triangle
            let mut s = c_head;
            for i in (0..rank).rev() {
                let mut acc = s[i];
                for j in (i + 1)..rank {
                    acc -= r[(i, j)] * s[j];
                }
                s[i] = acc / r[(i, i)];
            }
            for i in 0..rank {
                w[i] = s[i];
            }
        }
    }
    qr.p().inv_permute_rows(&mut w);
    Ok((w, deficient))
}

/// Ridge-regularized least squares via the row-augmented system
/// [D; sqrt(lambda) I] x = [y; 0], solved by plain QR (full rank by
/// construction).
fn ridge_solve(d: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let n = d.nrows();
    let k = d.ncols();
    let sq = lambda.sqrt();
    let mut aug = DMatrix::zeros(n + k, k);
    aug.rows_mut(0, n).copy_from(d);
    for i in 0..k {
        aug[(n + i, i)] = sq;
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(y);
    let qr = aug.qr();
    let c = qr.q().transpose() * rhs;
    let r = qr.r();
    let mut x = c.rows(0, k).into_owned();
    for i in (0..k).rev() {
        let mut acc = x[i];
        for j in (i + 1)..k {
            acc -= r[(i, j)] * x[j];
        }
        let piv = r[(i, i)];
        if piv.abs() < 1e-300 {
            return Err(Error::LinearSolveFailure { row: i, pivot: piv });
        }
        x[i] = acc / piv;
    }
    Ok(x)
}

/// Sequential thresholded least squares.
pub fn stlsq(d: &DMatrix<f64>, y: &DVector<f64>, config: &StlsqConfig) -> Result<StlsqFit> {
    config.validate()?;
    if d.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "design has {} rows, target has {}",
            d.nrows(),
            y.len()
        )));
    }
    let k = d.ncols();
    let frob2: f64 = d.iter().map(|v| v * v).sum();
    let lambda = config.ridge * frob2 / k.max(1) as f64;
    let mut active = vec![true; k];
    let mut coef = DVector::zeros(k);
    let mut rank_deficient = false;
    let mut n_iters = 0;
    for _ in 0..config.max_iters {
        n_iters += 1;
        let idx: Vec<usize> = active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect();
        coef.fill(0.0);
        if idx.is_empty() {
            break;
        }
        let sub = d.select_columns(idx.iter());
        let c = if config.ridge > 0.0 {
            ridge_solve(&sub, y, lambda)?
        } else {
            let (c, deficient) = cpqr_solve(&sub, y)?;
            rank_deficient |= deficient;
            c
        };
        for (pos, &i) in idx.iter().enumerate() {
            coef[i] = c[pos];
        }
        let mut changed = false;
        for i in 0..k {
            if active[i] && coef[i].abs() < config.threshold {
                active[i] = false;
                coef[i] = 0.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(StlsqFit {
        coef,
        active,
        rank_deficient,
        n_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn orthonormal_design(n: usize) -> DMatrix<f64> {
        // two orthonormal columns built from alternating patterns
        let mut d = DMatrix::zeros(n, 2);
        let s = 1.0 / (n as f64).sqrt();
        for i in 0..n {
            d[(i, 0)] = s;
            d[(i, 1)] = if i % 2 == 0 { s } else { -s };
        }
        d
    }

    #[test]
    fn thresholding_removes_small_orthonormal_coefficients() {
        let d = orthonormal_design(64);
        let y = 2.0 * d.column(0) + 0.1 * d.column(1);
        let fit = stlsq(&d, &y.into_owned(), &StlsqConfig::default()).unwrap();
        assert_eq!(fit.support(), vec![0]);
        assert_relative_eq!(fit.coef[0], 2.0, epsilon = 1e-10);
        assert_eq!(fit.coef[1], 0.0);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn zero_threshold_is_plain_least_squares() {
        let d = orthonormal_design(32);
        let y = 0.05 * d.column(0) - 0.02 * d.column(1);
        let cfg = StlsqConfig {
            threshold: 0.0,
            ..Default::default()
        };
        let fit = stlsq(&d, &y.into_owned(), &cfg).unwrap();
        assert_eq!(fit.support(), vec![0, 1]);
        assert_relative_eq!(fit.coef[0], 0.05, epsilon = 1e-12);
        assert_relative_eq!(fit.coef[1], -0.02, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_columns_fall_back_to_minimum_norm() {
        let mut d = DMatrix::zeros(16, 2);
        for i in 0..16 {
            d[(i, 0)] = 1.0;
            d[(i, 1)] = 1.0;
        }
        let y = DVector::from_element(16, 2.0);
        let fit = stlsq(&d, &y, &StlsqConfig::default()).unwrap();
        assert!(fit.rank_deficient);
        // minimum-norm splits the weight evenly
        assert_relative_eq!(fit.coef[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coef[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn general_overdetermined_solve_matches_normal_equations() {
        let n = 60;
        let k = 5;
        let mut state = 9u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 33) as f64 / (1u64 << 31) as f64 - 0.5
        };
        let d = DMatrix::from_fn(n, k, |_, _| next());
        let y = DVector::from_fn(n, |_, _| next());
        let (x, deficient) = cpqr_solve(&d, &y).unwrap();
        assert!(!deficient);
        let g = d.transpose() * &d;
        let expect = g.lu().solve(&(d.transpose() * &y)).unwrap();
        for i in 0..k {
            assert_relative_eq!(x[i], expect[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn ridge_shrinks_toward_zero() {
        let d = orthonormal_design(32);
        let y = (1.0 * d.column(0)).into_owned();
        let plain = stlsq(&d, &y, &StlsqConfig { threshold: 0.0, ..Default::default() }).unwrap();
        let ridged = stlsq(
            &d,
            &y,
            &StlsqConfig {
                threshold: 0.0,
                ridge: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(ridged.coef[0].abs() < plain.coef[0].abs());
        assert!(ridged.coef[0] > 0.0);
    }

    #[test]
    fn returned_nonzero_coefficients_clear_the_threshold() {
        let mut d = DMatrix::zeros(40, 4);
        let mut state = 123u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for v in d.iter_mut() {
            *v = next();
        }
        let beta = DVector::from_vec(vec![1.2, 0.05, -0.8, 0.0]);
        let y = &d * &beta;
        let fit = stlsq(&d, &y, &StlsqConfig::default()).unwrap();
        for i in 0..4 {
            if fit.active[i] {
                assert!(fit.coef[i].abs() >= 0.3);
            } else {
                assert_eq!(fit.coef[i], 0.0);
            }
        }
    }

    #[test]
    fn stlsq_is_idempotent_on_its_own_support() {
        let d = orthonormal_design(64);
        let y = (1.5 * d.column(0) - 0.7 * d.column(1)).into_owned();
        let cfg = StlsqConfig::default();
        let first = stlsq(&d, &y, &cfg).unwrap();
        let idx = first.support();
        let sub = d.select_columns(idx.iter());
        let second = stlsq(&sub, &y, &cfg).unwrap();
        assert_eq!(second.support().len(), idx.len());
    }

    #[test]
    fn all_columns_below_threshold_empties_the_model() {
        let d = orthonormal_design(32);
        let y = (0.01 * d.column(0)).into_owned();
        let fit = stlsq(&d, &y, &StlsqConfig::default()).unwrap();
        assert!(fit.support().is_empty());
        assert_eq!(fit.coef.amax(), 0.0);
    }
}

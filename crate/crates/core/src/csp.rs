//! Common spatial patterns: trace-normalised class covariances and the
//! generalized eigenproblem `S1 W = (S1 + S2) W D`, solved by whitening the
//! composite covariance and diagonalising the whitened class-1 covariance.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

const SYMMETRY_TOL: f64 = 1e-10;

/// Average of per-trial trace-normalised covariances for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCovariance {
    pub sigma: DMatrix<f64>,
    pub class_label: usize,
    pub n_trials: usize,
}

/// Computes `(1/N) sum_i E_i E_i^T / tr(E_i E_i^T)` over `[channel][time]`
/// trials.
pub fn class_covariance<T: AsRef<[f64]>>(
    trials: &[T],
    n_channels: usize,
    label: usize,
) -> Result<ClassCovariance> {
    if trials.is_empty() {
        return Err(Error::invalid(format!("class {label} has no trials")));
    }
    let mut sigma = DMatrix::<f64>::zeros(n_channels, n_channels);
    for (i, trial) in trials.iter().enumerate() {
        let trial = trial.as_ref();
        if n_channels == 0 || trial.len() % n_channels != 0 {
            return Err(Error::shape(format!(
                "trial of {} samples does not split into {n_channels} channels",
                trial.len()
            )));
        }
        let t = trial.len() / n_channels;
        let e = DMatrix::from_row_slice(n_channels, t, trial);
        let cov = &e * e.transpose();
        let tr = cov.trace();
        if !(tr > 0.0) {
            return Err(Error::invalid(format!(
                "trial {i} of class {label} has zero energy"
            )));
        }
        sigma += cov / tr;
    }
    sigma /= trials.len() as f64;
    Ok(ClassCovariance {
        sigma,
        class_label: label,
        n_trials: trials.len(),
    })
}

/// Spatial filters for one band.
#[derive(Debug, Clone, PartialEq)]
pub struct CspSolution {
    /// Columns are spatial filters sorted by eigenvalue, descending.
    pub w_full: DMatrix<f64>,
    pub eigvals: Vec<f64>,
    /// First and last `U/2` columns of `w_full`.
    pub w_selected: DMatrix<f64>,
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::shape(format!("{name} is not square")));
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::invalid(format!("{name} is not symmetric")));
            }
        }
    }
    Ok(())
}

/// Flips a column so its largest-magnitude entry is positive.
fn canonical_sign(w: &mut DMatrix<f64>) {
    for mut col in w.column_iter_mut() {
        let (mut best, mut idx) = (0.0f64, 0usize);
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Solves the CSP eigenproblem and keeps `u` filters (`u/2` from each end).
pub fn csp_fit(sigma1: &DMatrix<f64>, sigma2: &DMatrix<f64>, u: usize) -> Result<CspSolution> {
    check_symmetric(sigma1, "class-1 covariance")?;
    check_symmetric(sigma2, "class-2 covariance")?;
    let n = sigma1.nrows();
    if sigma2.shape() != sigma1.shape() {
        return Err(Error::shape("class covariances differ in size"));
    }
    if u < 2 || !u.is_multiple_of(2) || u > n {
        return Err(Error::invalid(format!(
            "number of spatial filters must be even and in [2, {n}], got {u}"
        )));
    }

    let mut composite = sigma1 + sigma2;
    let mut eig = SymmetricEigen::new(composite.clone());
    let lmax = eig.eigenvalues.max();
    if !(lmax > 0.0) {
        return Err(Error::Numerical("composite covariance is zero".into()));
    }
    if eig.eigenvalues.min() <= 1e-12 * lmax {
        let eps = 1e-8 * composite.trace() / n as f64;
        composite += DMatrix::identity(n, n) * eps;
        eig = SymmetricEigen::new(composite);
        if eig.eigenvalues.min() <= 1e-14 * lmax {
            return Err(Error::Numerical(
                "composite covariance is singular even after regularization".into(),
            ));
        }
    }

    // P = Lambda^{-1/2} V^T, so that P (S1 + S2) P^T = I.
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let whitening = DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    let mut s = &whitening * sigma1 * whitening.transpose();
    s = (&s + s.transpose()) * 0.5;
    let inner = SymmetricEigen::new(s);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| inner.eigenvalues[b].total_cmp(&inner.eigenvalues[a]));
    let b_sorted = DMatrix::from_fn(n, n, |i, j| inner.eigenvectors[(i, order[j])]);
    let eigvals: Vec<f64> = order.iter().map(|&j| inner.eigenvalues[j]).collect();

    let mut w_full = whitening.transpose() * b_sorted;
    canonical_sign(&mut w_full);

    let half = u / 2;
    let cols: Vec<usize> = (0..half).chain(n - half..n).collect();
    let w_selected = w_full.select_columns(cols.iter());
    Ok(CspSolution {
        w_full,
        eigvals,
        w_selected,
    })
}

/// Projects a `[channel][time]` block: `W^T E`, giving `[filter][time]`.
pub fn csp_apply(w_selected: &DMatrix<f64>, block: &[f64], n_channels: usize) -> Result<Vec<f64>> {
    if w_selected.nrows() != n_channels {
        return Err(Error::shape(format!(
            "filters expect {} channels, trial has {n_channels}",
            w_selected.nrows()
        )));
    }
    if n_channels == 0 || !block.len().is_multiple_of(n_channels) {
        return Err(Error::shape(
            "trial length is not a multiple of the channel count",
        ));
    }
    let t = block.len() / n_channels;
    let u = w_selected.ncols();
    let mut out = vec![0.0; u * t];
    for f in 0..u {
        let row = &mut out[f * t..(f + 1) * t];
        for ch in 0..n_channels {
            let w = w_selected[(ch, f)];
            if w == 0.0 {
                continue;
            }
            for (o, x) in row.iter_mut().zip(&block[ch * t..(ch + 1) * t]) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_equal_norm_rows_give_scaled_identity() {
        // rows are orthogonal sinusoids of equal energy
        let t = 8;
        let trial: Vec<f64> = vec![
            1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0,
        ];
        assert_eq!(trial.len(), 2 * t);
        let c = class_covariance(&[trial], 2, 0).unwrap();
        assert!((c.sigma[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((c.sigma[(1, 1)] - 0.5).abs() < 1e-15);
        assert!(c.sigma[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn covariance_has_unit_trace_and_is_a_mean() {
        let a = vec![1.0, 2.0, 3.0, -1.0, 0.5, 2.0];
        let b = vec![0.0, 1.0, -2.0, 4.0, 1.0, 1.0];
        let ca = class_covariance(std::slice::from_ref(&a), 2, 0).unwrap();
        let cb = class_covariance(std::slice::from_ref(&b), 2, 0).unwrap();
        let cab = class_covariance(&[a, b], 2, 0).unwrap();
        assert!((cab.sigma.trace() - 1.0).abs() < 1e-12);
        let mean = (&ca.sigma + &cb.sigma) / 2.0;
        assert!((cab.sigma - mean).amax() < 1e-15);
    }

    #[test]
    fn zero_trial_is_rejected() {
        assert!(class_covariance(&[vec![0.0; 6]], 2, 1).is_err());
        let empty: [Vec<f64>; 0] = [];
        assert!(class_covariance(&empty, 2, 1).is_err());
    }

    #[test]
    fn diagonal_toy_case() {
        let s1 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.75, 0.25]));
        let s2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.25, 0.75]));
        let sol = csp_fit(&s1, &s2, 2).unwrap();
        assert!((sol.eigvals[0] - 0.75).abs() < 1e-12);
        assert!((sol.eigvals[1] - 0.25).abs() < 1e-12);
        assert!((sol.w_full[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(sol.w_full[(1, 0)].abs() < 1e-12);
        assert!((sol.w_full[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(sol.w_full[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn equal_classes_give_half_spectrum() {
        let s = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.3, 0.05, 0.0, 0.05, 0.2]);
        let sol = csp_fit(&s, &s, 2).unwrap();
        for l in &sol.eigvals {
            assert!((l - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_filter_counts_and_asymmetry() {
        let s = DMatrix::<f64>::identity(4, 4) * 0.25;
        assert!(csp_fit(&s, &s, 3).is_err());
        assert!(csp_fit(&s, &s, 6).is_err());
        assert!(csp_fit(&s, &s, 0).is_err());
        let mut asym = s.clone();
        asym[(0, 1)] = 0.1;
        assert!(csp_fit(&asym, &s, 2).is_err());
    }

    #[test]
    fn singular_composite_is_regularized() {
        let mut s1 = DMatrix::<f64>::zeros(3, 3);
        s1[(0, 0)] = 1.0;
        let mut s2 = DMatrix::<f64>::zeros(3, 3);
        s2[(1, 1)] = 1.0;
        let sol = csp_fit(&s1, &s2, 2).unwrap();
        assert!(sol.w_full.iter().all(|v| v.is_finite()));
        assert!((sol.eigvals[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identity_projection_selects_rows() {
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let block = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let out = csp_apply(&w, &block, 3).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 5.0, 6.0]);
        assert_eq!(csp_apply(&w, &[0.0; 6], 3).unwrap(), vec![0.0; 4]);
        assert!(csp_apply(&w, &block, 2).is_err());
    }
}

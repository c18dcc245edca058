//! Evaluation of a discovered model against the ground truth: relative L2
//! coefficient error and false positive rate.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// True coefficients over the dictionary terms, zeros off-support. The
/// diffusion side is parameterized as g^2.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub drift: DVector<f64>,
    pub diffusion: DVector<f64>,
}

impl GroundTruth {
    /// Stacked drift-then-diffusion vector used for the headline L2 error.
    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.drift, &self.diffusion)
    }

    pub fn drift_support(&self) -> Vec<bool> {
        self.drift.iter().map(|&v| v != 0.0).collect()
    }

    pub fn diffusion_support(&self) -> Vec<bool> {
        self.diffusion.iter().map(|&v| v != 0.0).collect()
    }
}

pub fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// ||beta_true - beta_hat|| / ||beta_true||.
pub fn relative_l2(beta_true: &DVector<f64>, beta_hat: &DVector<f64>) -> Result<f64> {
    if beta_true.len() != beta_hat.len() {
        return Err(Error::InvalidInput(format!(
            "coefficient vectors differ in length: {} vs {}",
            beta_true.len(),
            beta_hat.len()
        )));
    }
    let denom = beta_true.norm();
    if denom == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok((beta_true - beta_hat).norm() / denom)
}

/// Percentage of dictionary terms selected but absent from the true support.
pub fn fpr(selected: &[bool], true_support: &[bool]) -> Result<f64> {
    if selected.len() != true_support.len() {
        return Err(Error::InvalidInput(format!(
            "support vectors differ in length: {} vs {}",
            selected.len(),
            true_support.len()
        )));
    }
    if selected.is_empty() {
        return Err(Error::InvalidInput("empty support vectors".into()));
    }
    let false_positives = selected
        .iter()
        .zip(true_support)
        .filter(|&(&s, &t)| s && !t)
        .count();
    Ok(100.0 * false_positives as f64 / selected.len() as f64)
}

/// Noise amplitude sqrt(c) of a constant squared-diffusion coefficient.
/// Small negative values (down to -1e-6) clamp to zero; anything lower
/// signals a badly converged fit.
pub fn diffusion_amplitude(coef_g_squared: f64) -> Result<f64> {
    if coef_g_squared < -1e-6 {
        return Err(Error::NegativeVariance(coef_g_squared));
    }
    Ok(coef_g_squared.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_vectors_have_zero_error() {
        let t = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        assert_relative_eq!(relative_l2(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn error_matches_direct_arithmetic() {
        let t = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let h = DVector::from_vec(vec![0.9, 0.0, -1.0]);
        assert_relative_eq!(
            relative_l2(&t, &h).unwrap(),
            0.1 / 2.0_f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn all_zero_truth_is_rejected() {
        let t = DVector::zeros(3);
        let h = DVector::from_vec(vec![0.1, 0.0, 0.0]);
        assert!(matches!(relative_l2(&t, &h), Err(Error::ZeroTruth)));
    }

    #[test]
    fn error_is_scale_homogeneous() {
        let t = DVector::from_vec(vec![2.0, -1.0, 0.5]);
        let h = DVector::from_vec(vec![1.5, -0.9, 0.7]);
        let base = relative_l2(&t, &h).unwrap();
        let scaled = relative_l2(&(7.0 * &t), &(7.0 * &h)).unwrap();
        assert_relative_eq!(base, scaled, epsilon = 1e-12);
    }

    #[test]
    fn fpr_counts_false_positives_over_dictionary_size() {
        let truth = vec![true, false, false, true];
        assert_relative_eq!(fpr(&[true, false, false, true], &truth).unwrap(), 0.0);
        assert_relative_eq!(fpr(&[true, true, false, true], &truth).unwrap(), 25.0);
        // 4 false positives with K = 35
        let mut sel = vec![false; 35];
        let mut tr = vec![false; 35];
        tr[0] = true;
        sel[0] = true;
        for i in 1..5 {
            sel[i] = true;
        }
        assert_relative_eq!(fpr(&sel, &tr).unwrap(), 11.428571428571429, epsilon = 1e-9);
    }

    #[test]
    fn fpr_with_everything_selected() {
        let k = 10;
        let mut tr = vec![false; k];
        tr[3] = true;
        tr[7] = true;
        let sel = vec![true; k];
        assert_relative_eq!(fpr(&sel, &tr).unwrap(), 100.0 * 8.0 / 10.0);
    }

    #[test]
    fn fpr_zero_iff_selected_subset_of_truth() {
        let truth = vec![true, true, false];
        assert_relative_eq!(fpr(&[true, false, false], &truth).unwrap(), 0.0);
        assert!(fpr(&[false, false, true], &truth).unwrap() > 0.0);
    }

    #[test]
    fn amplitude_is_square_root_with_clamping() {
        assert_relative_eq!(diffusion_amplitude(1.0).unwrap(), 1.0);
        assert_relative_eq!(diffusion_amplitude(0.9801).unwrap(), 0.99, epsilon = 1e-12);
        assert_relative_eq!(diffusion_amplitude(4.0).unwrap(), 2.0);
        assert_relative_eq!(diffusion_amplitude(-1e-7).unwrap(), 0.0);
        assert!(matches!(
            diffusion_amplitude(-1e-3),
            Err(Error::NegativeVariance(_))
        ));
    }
}

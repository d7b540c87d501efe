//! Linear minimum-variance filtering for systems whose transition and
//! measurement matrices are drawn, independently at every step, from finite
//! discrete distributions.
//!
//! With `F̄ = E[F]` and `H̄ = E[H]` the system is rewritten as
//! `x⁺ = F̄x + ṽ`, `z = H̄x + w̃`, where the effective noises absorb the matrix
//! randomness. Their covariances
//!
//! ```text
//! Q̃ = Σ_s p_s [ Q_s + (F_s − F̄) E[xxᵀ] (F_s − F̄)ᵀ ]
//! R̃ = Σ_m p_m [ R_m + (H_m − H̄) E[xxᵀ] (H_m − H̄)ᵀ ]
//! ```
//!
//! need the unconditional second moment `E[xxᵀ]`, which is propagated
//! alongside the usual mean/covariance pair and is untouched by measurement
//! updates. With singleton distributions everything collapses to the
//! ordinary Kalman filter.

use crate::error::{dims, invalid, Error, Result};
use crate::linalg::{is_symmetric, pseudo_inverse_sym, symmetrize, Mat, Vector};

const PROB_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub matrix: Mat,
    pub noise_cov: Mat,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMatrixDistribution {
    realizations: Vec<Realization>,
}

impl DiscreteMatrixDistribution {
    pub fn new(realizations: Vec<Realization>) -> Result<Self> {
        let first = realizations.first().ok_or_else(|| invalid("distribution needs at least one realization"))?;
        let (rows, cols) = first.matrix.shape();
        let mut total = 0.0;
        for r in &realizations {
            if r.matrix.shape() != (rows, cols) {
                return Err(dims("realization matrices differ in shape"));
            }
            if r.noise_cov.shape() != (rows, rows) {
                return Err(dims("noise covariance must be rows x rows"));
            }
            if !(r.probability >= 0.0) || !r.probability.is_finite() {
                return Err(invalid(format!("bad probability {}", r.probability)));
            }
            total += r.probability;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(invalid(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { realizations })
    }

    pub fn singleton(matrix: Mat, noise_cov: Mat) -> Result<Self> {
        Self::new(vec![Realization { matrix, noise_cov, probability: 1.0 }])
    }

    pub fn realizations(&self) -> &[Realization] {
        &self.realizations
    }

    pub fn rows(&self) -> usize {
        self.realizations[0].matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.realizations[0].matrix.ncols()
    }
}

pub fn mean_matrix(dist: &DiscreteMatrixDistribution) -> Mat {
    let mut acc = Mat::zeros(dist.rows(), dist.cols());
    for r in &dist.realizations {
        acc += &r.matrix * r.probability;
    }
    acc
}

fn effective_cov(dist: &DiscreteMatrixDistribution, second_moment: &Mat) -> Result<Mat> {
    let n = dist.cols();
    if second_moment.shape() != (n, n) {
        return Err(dims(format!("second moment is {:?}, distribution acts on dimension {n}", second_moment.shape())));
    }
    let mean = mean_matrix(dist);
    let mut acc = Mat::zeros(dist.rows(), dist.rows());
    for r in &dist.realizations {
        if r.probability == 0.0 {
            continue;
        }
        let dev = &r.matrix - &mean;
        acc += (&r.noise_cov + &dev * second_moment * dev.transpose()) * r.probability;
    }
    Ok(symmetrize(&acc))
}

/// Covariance of the effective process noise for the given `E[xxᵀ]`.
pub fn effective_process_cov(dist: &DiscreteMatrixDistribution, second_moment: &Mat) -> Result<Mat> {
    effective_cov(dist, second_moment)
}

/// Covariance of the effective measurement noise for the predicted `E[xxᵀ]`.
pub fn effective_meas_cov(dist: &DiscreteMatrixDistribution, second_moment: &Mat) -> Result<Mat> {
    effective_cov(dist, second_moment)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub mean: Vector,
    pub cov: Mat,
    /// Unconditional second moment `E[xxᵀ]`.
    pub second_moment: Mat,
}

impl Belief {
    /// Initial belief; the second moment starts at `μμᵀ + P`.
    pub fn new(mean: Vector, cov: Mat) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(dims("covariance does not match mean"));
        }
        let cov = symmetrize(&cov);
        let second_moment = symmetrize(&(&mean * mean.transpose() + &cov));
        Ok(Self { mean, cov, second_moment })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Time update with explicit mean transition and effective process covariance.
pub fn predict_with(b: &Belief, f_bar: &Mat, q_tilde: &Mat) -> Result<Belief> {
    let n = b.dim();
    if f_bar.shape() != (n, n) || q_tilde.shape() != (n, n) {
        return Err(dims("transition does not match belief dimension"));
    }
    Ok(Belief {
        mean: f_bar * &b.mean,
        cov: symmetrize(&(f_bar * &b.cov * f_bar.transpose() + q_tilde)),
        second_moment: symmetrize(&(f_bar * &b.second_moment * f_bar.transpose() + q_tilde)),
    })
}

pub fn predict(b: &Belief, f_dist: &DiscreteMatrixDistribution) -> Result<Belief> {
    if f_dist.rows() != b.dim() || f_dist.cols() != b.dim() {
        return Err(dims("transition distribution does not match belief"));
    }
    let q_tilde = effective_process_cov(f_dist, &b.second_moment)?;
    predict_with(b, &mean_matrix(f_dist), &q_tilde)
}

/// Measurement update given `H̄`, `R̃` and an already computed inverse of the
/// innovation covariance.
pub fn update_with_inverse(b: &Belief, h_bar: &Mat, s_inv: &Mat, z: &Vector) -> Belief {
    let k = &b.cov * h_bar.transpose() * s_inv;
    let innovation = z - h_bar * &b.mean;
    let n = b.dim();
    let mean = &b.mean + &k * innovation;
    let cov = symmetrize(&((Mat::identity(n, n) - &k * h_bar) * &b.cov));
    Belief { mean, cov, second_moment: b.second_moment.clone() }
}

pub fn update_with(b: &Belief, h_bar: &Mat, r_tilde: &Mat, z: &Vector) -> Result<Belief> {
    let m = h_bar.nrows();
    if h_bar.ncols() != b.dim() || r_tilde.shape() != (m, m) || z.len() != m {
        return Err(dims("measurement does not match belief"));
    }
    if m == 0 {
        return Ok(b.clone());
    }
    let s = h_bar * &b.cov * h_bar.transpose() + r_tilde;
    if !is_symmetric(&s, 1e-9) {
        return Err(Error::Internal("innovation covariance is not symmetric".into()));
    }
    let s_inv = crate::linalg::inverse_sym(&s);
    Ok(update_with_inverse(b, h_bar, &s_inv, z))
}

pub fn update(b: &Belief, h_dist: &DiscreteMatrixDistribution, z: &Vector) -> Result<Belief> {
    if h_dist.cols() != b.dim() {
        return Err(dims("measurement distribution does not match belief"));
    }
    let r_tilde = effective_meas_cov(h_dist, &b.second_moment)?;
    update_with(b, &mean_matrix(h_dist), &r_tilde, z)
}

/// Raw pseudoinverse gain, exposed for consistency checks.
pub fn pinv_gain(cov: &Mat, h_bar: &Mat, r_tilde: &Mat) -> Mat {
    let s = symmetrize(&(h_bar * cov * h_bar.transpose() + r_tilde));
    cov * h_bar.transpose() * pseudo_inverse_sym(&s)
}

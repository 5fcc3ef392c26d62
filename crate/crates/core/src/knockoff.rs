//! Second-order Gaussian model-X knockoffs (equicorrelated construction).
//!
//! For `X ~ N(0, Σ)` the joint law of `(X, X̃)` is Gaussian with covariance
//!
//! ```text
//! G = [[Σ,           Σ − diag(s)],
//!      [Σ − diag(s), Σ          ]]
//! ```
//!
//! and `X̃ | X ~ N(X − diag(s)Σ⁻¹X, 2diag(s) − diag(s)Σ⁻¹diag(s))`.

use log::warn;

use crate::error::{Error, Result};
use crate::numerics::{
    cholesky, cholesky_psd, min_eigenvalue, sample_standard_normal, spd_inverse, Mat, RngStream,
};

/// Below this smallest correlation eigenvalue the knockoffs are near copies.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-8;

/// Ridge applied by [`estimate_correlation`] as a fraction of `trace / p`.
pub const RIDGE_FRACTION: f64 = 1e-6;

const CONDITIONAL_PSD_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct KnockoffModel {
    pub p: usize,
    pub sigma: Mat,
    /// Decorrelation weights on the scale of `sigma`.
    pub s: Vec<f64>,
    /// `diag(s)·Σ⁻¹`
    pub cond_coef: Mat,
    /// Lower factor of `V = 2diag(s) − diag(s)Σ⁻¹diag(s)`.
    pub cond_chol: Mat,
    /// Set when the smallest correlation eigenvalue is below [`DEGENERATE_EIGENVALUE`].
    pub degenerate: bool,
}

impl KnockoffModel {
    /// Equicorrelated fit: `s_j = min(2·λ_min(C), 1)·Σ_jj` where `C` is the
    /// correlation matrix of `sigma`.
    pub fn fit_second_order(sigma: &Mat) -> Result<Self> {
        validate_covariance(sigma)?;
        // Fail early on a singular or indefinite Σ.
        cholesky(sigma)?;
        let corr = to_correlation(sigma);
        let lambda_min = min_eigenvalue(&corr)?;
        let degenerate = lambda_min < DEGENERATE_EIGENVALUE;
        if degenerate {
            warn!(
                "smallest correlation eigenvalue {lambda_min:e} is below {DEGENERATE_EIGENVALUE:e}; \
                 knockoffs will nearly copy the features and power will be close to zero"
            );
        }
        let s_corr = (2.0 * lambda_min).clamp(0.0, 1.0);
        let s: Vec<f64> = sigma.diag().iter().map(|d| s_corr * d).collect();
        let mut model = Self::with_s(sigma, &s)?;
        model.degenerate = degenerate;
        Ok(model)
    }

    /// Builds the conditional sampler for an explicit decorrelation vector.
    pub fn with_s(sigma: &Mat, s: &[f64]) -> Result<Self> {
        validate_covariance(sigma)?;
        let p = sigma.rows();
        if s.len() != p {
            return Err(Error::dims(p, s.len()));
        }
        let sigma_inv = spd_inverse(sigma)?;
        let cond_coef = Mat::from_fn(p, p, |i, j| s[i] * sigma_inv[(i, j)]);
        let mut v = Mat::from_fn(p, p, |i, j| -cond_coef[(i, j)] * s[j]);
        for i in 0..p {
            v[(i, i)] += 2.0 * s[i];
        }
        // symmetrize rounding noise
        for i in 0..p {
            for j in 0..i {
                let m = 0.5 * (v[(i, j)] + v[(j, i)]);
                v[(i, j)] = m;
                v[(j, i)] = m;
            }
        }
        let cond_chol = cholesky_psd(&v, CONDITIONAL_PSD_TOL)?;
        Ok(KnockoffModel {
            p,
            sigma: sigma.clone(),
            s: s.to_vec(),
            cond_coef,
            cond_chol,
            degenerate: false,
        })
    }

    /// Conditional covariance `V` reconstructed from its factor.
    pub fn conditional_covariance(&self) -> Mat {
        self.cond_chol
            .matmul_t(&self.cond_chol)
            .expect("square factor")
    }

    /// The joint covariance `G` of `(X, X̃)` this model targets.
    pub fn joint_covariance(&self) -> Mat {
        let p = self.p;
        Mat::from_fn(2 * p, 2 * p, |i, j| {
            let base = self.sigma[(i % p, j % p)];
            let same_block = (i < p) == (j < p);
            if !same_block && i % p == j % p {
                base - self.s[i % p]
            } else {
                base
            }
        })
    }

    /// Draws `X̃` row by row from `X̃ | X`. The response is never an input.
    pub fn sample_knockoffs(&self, x: &Mat, rng: &mut RngStream) -> Result<Mat> {
        if x.cols() != self.p {
            return Err(Error::dims(format!("{} columns", self.p), format!("{} columns", x.cols())));
        }
        let shift = x.matmul_t(&self.cond_coef)?;
        let z = sample_standard_normal(rng, x.rows(), self.p);
        let noise = z.matmul_t(&self.cond_chol)?;
        x.sub(&shift)?.add(&noise)
    }
}

fn validate_covariance(sigma: &Mat) -> Result<()> {
    if !sigma.is_square() {
        return Err(Error::dims("square covariance", format!("{:?}", sigma.shape())));
    }
    if !sigma.is_symmetric(1e-10) {
        return Err(Error::Data("covariance matrix is not symmetric".into()));
    }
    Ok(())
}

fn to_correlation(sigma: &Mat) -> Mat {
    let sd: Vec<f64> = sigma.diag().iter().map(|d| d.sqrt()).collect();
    Mat::from_fn(sigma.rows(), sigma.cols(), |i, j| {
        sigma[(i, j)] / (sd[i] * sd[j])
    })
}

/// Empirical correlation of the columns of `x`, with a small ridge added when
/// it is numerically singular.
pub fn estimate_correlation(x: &Mat) -> Result<Mat> {
    let cov = crate::numerics::covariance(x);
    let sd: Vec<f64> = cov.diag().iter().map(|d| d.sqrt()).collect();
    if let Some(j) = sd.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Data(format!("column {j} is constant; cannot estimate its correlation")));
    }
    let mut corr = Mat::from_fn(cov.rows(), cov.cols(), |i, j| cov[(i, j)] / (sd[i] * sd[j]));
    let p = corr.rows();
    let lambda_min = min_eigenvalue(&corr)?;
    if lambda_min < DEGENERATE_EIGENVALUE {
        let trace: f64 = corr.diag().iter().sum();
        let ridge = RIDGE_FRACTION * trace / p as f64;
        for i in 0..p {
            corr[(i, i)] += ridge;
        }
    }
    Ok(corr)
}

//! Gaussian feature statistics and the Fréchet distance between them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn check_finite(&self) -> Result<()> {
        if self.mu.iter().chain(self.sigma.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric("non-finite Gaussian statistics".into()))
        }
    }
}

/// Column means and unbiased, symmetrized covariance of `features` (`[n, d]`).
pub fn gaussian_stats(features: &DMatrix<f64>) -> Result<GaussianStats> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::SampleSize { needed: 2, got: n });
    }
    let mu = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let s = centered.transpose() * &centered / (n - 1) as f64;
    let sigma = (&s + s.transpose()) * 0.5;
    Ok(GaussianStats { mu, sigma, n })
}

/// Stacks per-sample feature vectors into an `[n, d]` matrix.
pub fn feature_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::shape(format!("feature rows of width {d} and {}", r.len())));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`, clamped at zero.
///
/// The trace of `(S_a S_b)^(1/2)` is taken as the trace of the PSD root of
/// `S_a^(1/2) S_b S_a^(1/2)`, which shares its eigenvalues.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() || a.sigma.shape() != (a.dim(), a.dim()) || b.sigma.shape() != (b.dim(), b.dim()) {
        return Err(Error::shape(format!(
            "Fréchet statistics of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    a.check_finite()?;
    b.check_finite()?;
    let root_a = psd_sqrt(&a.sigma);
    let inner = &root_a * &b.sigma * &root_a;
    let cross: f64 = SymmetricEigen::new((&inner + inner.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let mean_term = (&a.mu - &b.mu).norm_squared();
    let d = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * cross;
    if !d.is_finite() {
        return Err(Error::Numeric("Fréchet distance is not finite".into()));
    }
    Ok(d.max(0.0))
}

/// A distance together with an optional conditioning warning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub value: f64,
    pub warning: Option<String>,
}

/// Fits both feature sets and returns their Fréchet distance, flagging
/// rank-deficient covariances (fewer than `d + 1` samples).
pub fn distance_between(real: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<Distance> {
    let (a, b) = (gaussian_stats(&feature_matrix(real)?)?, gaussian_stats(&feature_matrix(generated)?)?);
    let d = a.dim();
    let warning = (a.n <= d || b.n <= d).then(|| {
        format!(
            "covariance is rank-deficient: {} real and {} generated samples for {d} features",
            a.n, b.n
        )
    });
    Ok(Distance {
        value: frechet_distance(&a, &b)?,
        warning,
    })
}

//! Bayesian ridge regression with evidence-maximizing hyperparameter updates.
//!
//! Model: `y ~ N(X beta, 1/alpha)`, `beta ~ N(0, I/lambda)`, with Gamma(shape, rate)
//! priors on both precisions. Inputs are centered so the intercept is not shrunk.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{BayesRidgePriors, ImputeError};

const MAX_EVIDENCE_ITERATIONS: usize = 300;
const COEF_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct BayesianRidge {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Noise precision.
    pub alpha: f64,
    /// Weight precision.
    pub lambda: f64,
    pub iterations: usize,
}

impl BayesianRidge {
    pub fn fit(x: &[Vec<f64>], y: &[f64], priors: &BayesRidgePriors) -> Result<Self, ImputeError> {
        let n = y.len();
        if n == 0 || x.len() != n {
            return Err(ImputeError::EmptyTraining);
        }
        let p = x[0].len();
        let nf = n as f64;
        let x_mean: Vec<f64> = (0..p)
            .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf)
            .collect();
        let y_mean = y.iter().sum::<f64>() / nf;
        let xc = DMatrix::from_fn(n, p, |i, j| x[i][j] - x_mean[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

        let gram = xc.transpose() * &xc;
        let xty = xc.transpose() * &yc;
        let eigen = SymmetricEigen::new(gram);
        let eig: Vec<f64> = eigen.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        // Projection of X'y onto the eigenbasis.
        let proj = eigen.eigenvectors.transpose() * &xty;

        let var_y = yc.iter().map(|v| v * v).sum::<f64>() / nf;
        let mut alpha = 1.0 / (var_y + f64::EPSILON);
        let mut lambda = priors.lambda_init;
        let shape = priors.shape;
        let rate = priors.rate;

        let solve = |alpha: f64, lambda: f64| -> DVector<f64> {
            let scaled = DVector::from_iterator(
                p,
                proj.iter()
                    .zip(&eig)
                    .map(|(&b, &e)| b / (e + lambda / alpha)),
            );
            &eigen.eigenvectors * scaled
        };

        let mut coef;
        let mut prev: Option<DVector<f64>> = None;
        let mut iterations = 0;
        for iter in 0..MAX_EVIDENCE_ITERATIONS {
            iterations = iter + 1;
            coef = solve(alpha, lambda);
            let resid = &yc - &xc * &coef;
            let sse = resid.norm_squared();
            let gamma: f64 = eig.iter().map(|&e| alpha * e / (lambda + alpha * e)).sum();
            lambda = (gamma + 2.0 * shape) / (coef.norm_squared() + 2.0 * rate);
            alpha = (nf - gamma + 2.0 * shape) / (sse + 2.0 * rate);
            if !(alpha.is_finite() && lambda.is_finite()) {
                return Err(ImputeError::FitFailed("evidence update diverged".into()));
            }
            if let Some(prev) = &prev {
                if (prev - &coef).abs().sum() < COEF_TOLERANCE {
                    break;
                }
            }
            prev = Some(coef.clone());
        }
        coef = solve(alpha, lambda);
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(ImputeError::FitFailed("non-finite coefficients".into()));
        }
        let intercept = y_mean - coef.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
        Ok(Self {
            coef: coef.iter().copied().collect(),
            intercept,
            alpha,
            lambda,
            iterations,
        })
    }

    /// Posterior predictive mean.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

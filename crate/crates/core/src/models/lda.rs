//! Linear discriminant analysis with a pooled, ridge-regularized covariance.
//! Posteriors are the softmax of the Gaussian discriminants.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};

use super::{softmax, Decision};
use crate::dataset::{MotionClass, N_CLASSES};
use crate::error::{Error, Result};
use crate::features::Standardizer;

const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub classes: Vec<MotionClass>,
    /// `classes x D`, in standardized feature space.
    pub class_means: Array2<f64>,
    pub shared_covariance: Array2<f64>,
    pub inverse_covariance: Array2<f64>,
    pub class_priors: Vec<f64>,
    pub standardizer: Standardizer,
}

impl LdaModel {
    /// Fits on raw features; the standardizer is fitted on the same data.
    pub fn fit(features: ArrayView2<f64>, labels: &[MotionClass], classes: &[MotionClass]) -> Result<Self> {
        let (n, d) = features.dim();
        if labels.len() != n {
            return Err(Error::Dimension { expected: n, got: labels.len() });
        }
        if classes.len() < 2 {
            return Err(Error::InvalidInput("LDA needs at least two classes".into()));
        }
        if n < d + 1 {
            return Err(Error::InvalidInput(format!("LDA needs at least {} frames, got {n}", d + 1)));
        }
        let standardizer = Standardizer::fit(features)?;
        let x = standardizer.apply(features)?;

        let k = classes.len();
        let mut means = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        let slot = |c: MotionClass| classes.iter().position(|&x| x == c);
        for (row, &label) in x.rows().into_iter().zip(labels) {
            if let Some(j) = slot(label) {
                counts[j] += 1;
                let mut m = means.row_mut(j);
                m += &row;
            }
        }
        for (j, &c) in counts.iter().enumerate() {
            if c == 0 {
                return Err(Error::MissingClass(classes[j]));
            }
            means.row_mut(j).mapv_inplace(|v| v / c as f64);
        }
        let used: usize = counts.iter().sum();

        let mut cov = DMatrix::<f64>::zeros(d, d);
        for (row, &label) in x.rows().into_iter().zip(labels) {
            if let Some(j) = slot(label) {
                let diff = DVector::from_iterator(d, row.iter().zip(means.row(j)).map(|(a, b)| a - b));
                cov.ger(1.0, &diff, &diff, 1.0);
            }
        }
        cov /= (used.saturating_sub(k)).max(1) as f64;
        let ridge = RIDGE * cov.trace() / d as f64;
        for i in 0..d {
            cov[(i, i)] += ridge.max(f64::MIN_POSITIVE);
        }
        let inverse = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("pooled covariance is not positive definite".into()))?
            .inverse();

        let to_nd = |m: &DMatrix<f64>| Array2::from_shape_fn((d, d), |(i, j)| m[(i, j)]);
        Ok(Self {
            classes: classes.to_vec(),
            class_means: means,
            shared_covariance: to_nd(&cov),
            inverse_covariance: to_nd(&inverse),
            class_priors: counts.iter().map(|&c| c as f64 / used as f64).collect(),
            standardizer,
        })
    }

    pub fn dim(&self) -> usize {
        self.class_means.ncols()
    }

    /// Discriminant scores for a standardized frame, one per fitted class.
    pub fn discriminants(&self, z: &[f64]) -> Vec<f64> {
        let inv = &self.inverse_covariance;
        self.class_means
            .rows()
            .into_iter()
            .zip(&self.class_priors)
            .map(|(mu, &prior)| {
                let w = inv.dot(&mu);
                let lin: f64 = w.iter().zip(z).map(|(a, b)| a * b).sum();
                let quad: f64 = w.iter().zip(mu.iter()).map(|(a, b)| a * b).sum();
                lin - 0.5 * quad + prior.ln()
            })
            .collect()
    }

    /// Posterior over all seven classes (zero for classes not fitted).
    pub fn predict_standardized(&self, z: &[f64]) -> Result<Decision> {
        if z.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: z.len() });
        }
        let p = softmax(&self.discriminants(z));
        let mut posterior = [0.0; N_CLASSES];
        for (c, v) in self.classes.iter().zip(p) {
            posterior[c.index()] = v;
        }
        Ok(Decision::from_posterior(posterior))
    }

    pub fn predict(&self, frame: &[f64]) -> Result<Decision> {
        if frame.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: frame.len() });
        }
        let mut z = frame.to_vec();
        self.standardizer.apply_row_in_place(&mut z);
        self.predict_standardized(&z)
    }

    pub fn predict_all(&self, features: ArrayView2<f64>) -> Result<Vec<Decision>> {
        features
            .rows()
            .into_iter()
            .map(|r| self.predict(r.as_slice().expect("standard layout")))
            .collect()
    }
}

//! Top-2 principal component projection for the 2-D pilot visualizations.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// A fitted mean-centering + top-2 projection.
#[derive(Clone, Debug)]
pub struct PcaTransform {
    mean: Array1<f64>,
    /// Two orthonormal rows, strongest direction first. Sign fixed so each
    /// row's largest-magnitude entry is positive.
    components: Array2<f64>,
    eigenvalues: [f64; 2],
}

impl PcaTransform {
    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    /// Variances captured by the two kept directions.
    pub fn eigenvalues(&self) -> [f64; 2] {
        self.eigenvalues
    }

    /// Projects an `n x d` feature block onto the two components.
    pub fn apply(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.mean.len() {
            return Err(Error::dim(format!(
                "pca apply: {} columns, transform fitted on {}",
                features.ncols(),
                self.mean.len()
            )));
        }
        let centered = features - &self.mean;
        Ok(centered.dot(&self.components.t()))
    }
}

/// Fits PCA on the dataset's covariance and returns the 2-D projection of
/// the data together with the transform.
pub fn pca_fit_transform(data: &Dataset) -> Result<(Dataset, PcaTransform)> {
    let x = data.features();
    let (n, d) = (x.nrows(), x.ncols());
    if n < 2 || d < 2 {
        return Err(Error::invalid(format!(
            "pca: need n >= 2 and d >= 2, got n={n}, d={d}"
        )));
    }

    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = x - &mean;
    // Sample covariance, d x d.
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let cov_na = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(cov_na);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let top = [order[0], order[1]];
    if eig.eigenvalues[top[0]] <= 1e-12 {
        return Err(Error::Degenerate(
            "pca: no direction with positive variance".into(),
        ));
    }

    let mut components = Array2::zeros((2, d));
    for (row, &col) in top.iter().enumerate() {
        let v = eig.eigenvectors.column(col);
        // Deterministic sign: largest-magnitude entry positive.
        let lead = (0..d)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap())
            .unwrap();
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components[[row, i]] = sign * v[i];
        }
    }

    let transform = PcaTransform {
        mean,
        components,
        eigenvalues: [eig.eigenvalues[top[0]], eig.eigenvalues[top[1]]],
    };
    let projected = transform.apply(x)?;
    let reduced = Dataset::new(projected, data.labels().to_vec(), data.class_count())?;
    Ok((reduced, transform))
}

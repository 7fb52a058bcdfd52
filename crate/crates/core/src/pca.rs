//! Principal component reduction of the feature matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, MkgError, Result};
use crate::linalg::Matrix;

/// Version tag of the component sign convention stored in checkpoints.
pub const SIGN_CONVENTION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    /// Column means of the fitted matrix.
    pub means: Vec<f64>,
    /// `N_d × d`, columns are orthonormal principal directions.
    pub components: Matrix,
    pub explained_variance_ratio: Vec<f64>,
    pub explained_variance: Vec<f64>,
}

impl ProjectionModel {
    pub fn input_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }
}

/// Fits the top-`d` eigenvectors of the column covariance.
///
/// Each component is sign-flipped so that its largest-magnitude coordinate
/// is positive (first such coordinate on ties).
pub fn fit_pca(data: &Matrix, d: usize) -> Result<ProjectionModel> {
    let (n, dims) = (data.rows(), data.cols());
    if n < 2 {
        return Err(config_err(format!("PCA needs at least 2 rows, got {n}")));
    }
    if d == 0 || d > n.min(dims) {
        return Err(config_err(format!(
            "PCA dimension {d} out of range 1..={}",
            n.min(dims)
        )));
    }
    let mut means = vec![0.0; dims];
    for i in 0..n {
        for (m, x) in means.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);

    let mut centered = data.clone();
    for i in 0..n {
        for (x, m) in centered.row_mut(i).iter_mut().zip(&means) {
            *x -= m;
        }
    }
    let ct = centered.transpose();
    let mut cov = ct.matmul_t(&ct)?;
    cov.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v /= (n - 1) as f64);
    // exact symmetry for the solver
    for i in 0..dims {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }

    let eig = SymmetricEigen::new(DMatrix::from_row_slice(dims, dims, cov.as_slice()));
    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut components = Matrix::zeros(dims, d);
    let mut explained_variance = Vec::with_capacity(d);
    let mut explained_variance_ratio = Vec::with_capacity(d);
    for (c, &k) in order.iter().take(d).enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..dims {
            if v[i].abs() > v[pivot].abs() + 1e-12 {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dims {
            components[(i, c)] = sign * v[i];
        }
        let lambda = eig.eigenvalues[k].max(0.0);
        explained_variance.push(lambda);
        explained_variance_ratio.push(if total > 0.0 { lambda / total } else { 0.0 });
    }
    if !components.all_finite() {
        return Err(MkgError::Internal("eigensolver returned non-finite components".into()));
    }
    Ok(ProjectionModel {
        means,
        components,
        explained_variance_ratio,
        explained_variance,
    })
}

/// `(L − means) · components`.
pub fn project(data: &Matrix, model: &ProjectionModel) -> Result<Matrix> {
    if data.cols() != model.input_dim() {
        return Err(MkgError::Shape(format!(
            "matrix has {} columns, projection expects {}",
            data.cols(),
            model.input_dim()
        )));
    }
    let mut centered = data.clone();
    for i in 0..data.rows() {
        for (x, m) in centered.row_mut(i).iter_mut().zip(&model.means) {
            *x -= m;
        }
    }
    centered.matmul(&model.components)
}

//! Two-dimensional PCA projection of embeddings for plotting.

use crate::error::Result;
use crate::linalg::{norm, Matrix};
use crate::pca::{fit_pca, project};

pub fn project_2d(embeddings: &Matrix) -> Result<Matrix> {
    let model = fit_pca(embeddings, 2)?;
    project(embeddings, &model)
}

/// Mean distance between class centroids divided by the mean distance of
/// points to their own centroid. Larger means better separated classes.
pub fn cluster_separation(points: &Matrix, labels: &[usize]) -> f64 {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let d = points.cols();
    let mut centroids = Matrix::zeros(classes, d);
    let mut counts = vec![0usize; classes];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (c, x) in centroids.row_mut(l).iter_mut().zip(points.row(i)) {
            *c += x;
        }
    }
    for k in 0..classes {
        if counts[k] > 0 {
            let inv = 1.0 / counts[k] as f64;
            centroids.row_mut(k).iter_mut().for_each(|c| *c *= inv);
        }
    }
    let dist = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
    let intra = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| dist(points.row(i), centroids.row(l)))
        .sum::<f64>()
        / labels.len().max(1) as f64;
    let present: Vec<usize> = (0..classes).filter(|&k| counts[k] > 0).collect();
    let (mut inter, mut pairs) = (0.0, 0usize);
    for (a, &i) in present.iter().enumerate() {
        for &j in &present[a + 1..] {
            inter += dist(centroids.row(i), centroids.row(j));
            pairs += 1;
        }
    }
    if pairs == 0 || intra == 0.0 {
        return f64::INFINITY;
    }
    inter / pairs as f64 / intra
}

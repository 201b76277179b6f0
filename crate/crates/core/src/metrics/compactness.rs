use alloc::format;
use alloc::vec::Vec;

use crate::math;
use crate::numeric::matrix::DenseMatrix;
use crate::{Error, Result};

fn distance(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(math::squared_distance(a, b))
}

fn mean_pairwise(points: &[&[f64]]) -> f64 {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            sum += distance(points[i], points[j]);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Mean pairwise distance between class centroids divided by the mean (over
/// classes) of the within-class mean pairwise distance, restricted to
/// `classes`. Zero when the centroids coincide; infinite when every class is
/// a point mass at distinct positions.
pub fn compactness(features: &DenseMatrix, labels: &[usize], classes: &[usize]) -> Result<f64> {
    if classes.len() < 2 {
        return Err(Error::contract("compactness needs at least two classes"));
    }
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(classes.len());
    let mut intra = 0.0;
    for &c in classes {
        let rows: Vec<&[f64]> = (0..features.rows())
            .filter(|&i| labels[i] == c)
            .map(|i| features.row(i))
            .collect();
        if rows.len() < 2 {
            return Err(Error::contract(format!(
                "class {c} has {} samples; compactness needs at least 2",
                rows.len()
            )));
        }
        let mut centroid = alloc::vec![0.0; features.cols()];
        for r in &rows {
            centroid.iter_mut().zip(*r).for_each(|(m, x)| *m += x / rows.len() as f64);
        }
        centroids.push(centroid);
        intra += mean_pairwise(&rows);
    }
    intra /= classes.len() as f64;
    let refs: Vec<&[f64]> = centroids.iter().map(Vec::as_slice).collect();
    let inter = mean_pairwise(&refs);
    if inter == 0.0 {
        return Ok(0.0);
    }
    Ok(inter / intra)
}

//! Sinkhorn–Knopp calibration of logits into balanced soft assignments.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::numeric::matrix::DenseMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PassKind {
    Column,
    Row,
}

/// Marginals observed right after one normalization pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornPass {
    pub kind: PassKind,
    pub sums: Vec<f64>,
}

/// Starting from `Q ∝ exp(logits / epsilon)`, alternately scales columns to
/// sum `batch / K` and rows to sum 1, `iterations` times. The result is row
/// stochastic; with zero iterations it is the row softmax.
pub fn sinkhorn_calibrate(logits: &DenseMatrix, epsilon: f64, iterations: usize) -> Result<DenseMatrix> {
    run(logits, epsilon, iterations, None)
}

/// Like [`sinkhorn_calibrate`], also returning the marginals after every pass.
pub fn sinkhorn_trace(
    logits: &DenseMatrix,
    epsilon: f64,
    iterations: usize,
) -> Result<(DenseMatrix, Vec<SinkhornPass>)> {
    let mut trace = Vec::with_capacity(2 * iterations + 1);
    let q = run(logits, epsilon, iterations, Some(&mut trace))?;
    Ok((q, trace))
}

fn run(
    logits: &DenseMatrix,
    epsilon: f64,
    iterations: usize,
    mut trace: Option<&mut Vec<SinkhornPass>>,
) -> Result<DenseMatrix> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("sinkhorn epsilon must be positive, got {epsilon}")));
    }
    let (b, k) = logits.shape();
    if b == 0 || k == 0 {
        return Err(Error::contract(format!("sinkhorn on an empty {b}x{k} matrix")));
    }
    if !logits.is_finite() {
        return Err(Error::contract("sinkhorn on non-finite logits"));
    }
    // work with log Q throughout; subtracting the row max keeps exp in range
    let mut log_q = logits.map(|x| x / epsilon);
    for r in 0..b {
        let row = log_q.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|x| *x -= max);
    }
    let log_col_target = math::ln(b as f64 / k as f64);
    for _ in 0..iterations {
        for c in 0..k {
            let lse = math::log_sum_exp((0..b).map(|r| log_q.get(r, c)));
            for r in 0..b {
                let v = log_q.get(r, c) - lse + log_col_target;
                log_q.set(r, c, v);
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(SinkhornPass {
                kind: PassKind::Column,
                sums: log_q.map(math::exp).column_sums(),
            });
        }
        normalize_rows_log(&mut log_q);
        if let Some(t) = trace.as_deref_mut() {
            t.push(SinkhornPass {
                kind: PassKind::Row,
                sums: row_sums(&log_q.map(math::exp)),
            });
        }
    }
    if iterations == 0 {
        normalize_rows_log(&mut log_q);
    }
    Ok(log_q.map(math::exp))
}

fn normalize_rows_log(log_q: &mut DenseMatrix) {
    for r in 0..log_q.rows() {
        let row = log_q.row_mut(r);
        let lse = math::log_sum_exp(row.iter().copied());
        row.iter_mut().for_each(|x| *x -= lse);
    }
}

fn row_sums(m: &DenseMatrix) -> Vec<f64> {
    m.row_iter().map(|r| r.iter().sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_matrix() {
        let q = sinkhorn_calibrate(&DenseMatrix::zeros(4, 5), 0.05, 3).unwrap();
        assert!(q.as_slice().iter().all(|&x| (x - 0.2).abs() < 1e-15));
        let single = sinkhorn_calibrate(&DenseMatrix::zeros(1, 2), 0.05, 3).unwrap();
        assert_eq!(single.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn diagonal_logits_match_hand_recurrence() {
        // K = 2, logits diag 1, off-diag 0, epsilon 0.05:
        // exp(20) on the diagonal, 1 off it. The matrix stays symmetric, so
        // each column pass scales by the same factor and the row pass yields
        // q_diag = e^20 / (e^20 + 1) every iteration.
        let logits = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let q = sinkhorn_calibrate(&logits, 0.05, 3).unwrap();
        let e = math::exp(20.0);
        let expected = e / (e + 1.0);
        assert!((q.get(0, 0) - expected).abs() < 1e-12);
        assert!((q.get(1, 1) - expected).abs() < 1e-12);
        assert!(q.get(0, 0) > 0.99);
    }

    #[test]
    fn trace_marginals() {
        let logits = DenseMatrix::from_rows(&[[0.3, -1.0, 2.0], [1.5, 0.2, -0.7], [0.0, 0.0, 4.0], [-2.0, 1.0, 0.5]])
            .unwrap();
        let (q, trace) = sinkhorn_trace(&logits, 0.5, 3).unwrap();
        assert_eq!(trace.len(), 6);
        for pass in &trace {
            let target = match pass.kind {
                PassKind::Column => 4.0 / 3.0,
                PassKind::Row => 1.0,
            };
            assert!(pass.sums.iter().all(|s| (s - target).abs() < 1e-12));
        }
        for r in q.row_iter() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_epsilon() {
        assert!(matches!(
            sinkhorn_calibrate(&DenseMatrix::zeros(1, 1), 0.0, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = DenseMatrix::from_rows(&[[1000.0, -1000.0], [-1000.0, 1000.0]]).unwrap();
        let q = sinkhorn_calibrate(&logits, 0.05, 3).unwrap();
        assert!(q.is_finite());
    }
}

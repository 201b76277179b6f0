//! Training losses with hand-derived gradients.
//!
//! Every function returns the literal sum over rows; callers apply their own
//! batch reduction. Similarities are dot products, so inputs expected to be
//! L2-normalized (`z`, prototypes) make them cosine similarities.

use alloc::format;
use alloc::vec::Vec;

use crate::math;
use crate::numeric::matrix::DenseMatrix;
use crate::{Error, Result};

/// A loss value and its gradient with respect to one input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: DenseMatrix,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("temperature must be positive, got {tau}")))
    }
}

fn same_shape(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

/// Row-wise log-softmax of `logits / temperature`.
pub fn log_softmax(logits: &DenseMatrix, temperature: f64) -> DenseMatrix {
    let mut out = logits.map(|x| x / temperature);
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let lse = math::log_sum_exp(row.iter().copied());
        row.iter_mut().for_each(|x| *x -= lse);
    }
    out
}

pub fn one_hot(labels: &[usize], k: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        m.set(i, l, 1.0);
    }
    m
}

/// `Σ_i w_i · (−Σ_k y_ik log softmax(l_i / T)_k)` for soft targets `y`.
pub fn cross_entropy(
    logits: &DenseMatrix,
    targets: &DenseMatrix,
    weights: &[f64],
    temperature: f64,
) -> Result<LossGrad> {
    check_tau(temperature)?;
    same_shape("cross_entropy", logits, targets)?;
    if weights.len() != logits.rows() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} row weights", logits.rows()),
            format!("{}", weights.len()),
        ));
    }
    let logp = log_softmax(logits, temperature);
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for i in 0..logits.rows() {
        let w = weights[i];
        let y = targets.row(i);
        let lp = logp.row(i);
        let mass: f64 = y.iter().sum();
        loss -= w * y.iter().zip(lp).map(|(a, b)| if *a == 0.0 { 0.0 } else { a * b }).sum::<f64>();
        for ((g, &yk), &lk) in grad.row_mut(i).iter_mut().zip(y).zip(lp) {
            *g = w * (math::exp(lk) * mass - yk) / temperature;
        }
    }
    Ok(LossGrad { loss, grad })
}

/// Prototypical contrastive loss:
/// `−Σ_i Σ_j q_ij log softmax_j(z_i · μ / τ)`. Prototypes receive no gradient.
pub fn pcl_loss(z: &DenseMatrix, prototypes: &DenseMatrix, q: &DenseMatrix, tau: f64) -> Result<LossGrad> {
    check_tau(tau)?;
    if prototypes.rows() != q.cols() || q.rows() != z.rows() {
        return Err(Error::shape(
            "pcl_loss",
            format!("q of {}x{}", z.rows(), prototypes.rows()),
            format!("{}x{}", q.rows(), q.cols()),
        ));
    }
    let sims = z.matmul_t(prototypes)?;
    let ce = cross_entropy(&sims, q, &alloc::vec![1.0; z.rows()], tau)?;
    // d/dz_i = Σ_j (dL/ds_ij) μ_j
    let grad = ce.grad.matmul(prototypes)?;
    Ok(LossGrad { loss: ce.loss, grad })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceLoss {
    pub loss: f64,
    pub grad_z: DenseMatrix,
    pub grad_aug: DenseMatrix,
}

/// Instance-level contrastive loss:
/// `−Σ_i log[ exp(z_i·ẑ_i/τ) / Σ_{j≠i} exp(z_i·z_j/τ) ]`.
/// The denominator runs over the other anchors of the batch.
pub fn instance_cl_loss(z: &DenseMatrix, z_aug: &DenseMatrix, tau: f64) -> Result<InstanceLoss> {
    check_tau(tau)?;
    same_shape("instance_cl_loss", z, z_aug)?;
    let b = z.rows();
    if b < 2 {
        return Err(Error::contract("instance contrastive loss needs a batch of at least 2"));
    }
    let sims = z.matmul_t(z)?;
    let mut loss = 0.0;
    let mut grad_z = DenseMatrix::zeros(b, z.cols());
    let mut grad_aug = DenseMatrix::zeros(b, z.cols());
    // coefficient matrix: d loss = Σ_ij c_ij d(z_i · z_j)
    let mut c = DenseMatrix::zeros(b, b);
    for i in 0..b {
        let pos = math::dot(z.row(i), z_aug.row(i)) / tau;
        let others: Vec<f64> = (0..b).filter(|&j| j != i).map(|j| sims.get(i, j) / tau).collect();
        let lse = math::log_sum_exp(others.iter().copied());
        loss += lse - pos;
        for j in (0..b).filter(|&j| j != i) {
            c.set(i, j, math::exp(sims.get(i, j) / tau - lse) / tau);
        }
        for (g, &x) in grad_z.row_mut(i).iter_mut().zip(z_aug.row(i)) {
            *g -= x / tau;
        }
        for (g, &x) in grad_aug.row_mut(i).iter_mut().zip(z.row(i)) {
            *g -= x / tau;
        }
    }
    // z_i·z_j depends on both rows: contributions (c + cᵀ) z
    let sym = {
        let mut s = c.clone();
        s.add_assign(&c.transpose())?;
        s
    };
    grad_z.add_assign(&sym.matmul(z)?)?;
    Ok(InstanceLoss {
        loss,
        grad_z,
        grad_aug,
    })
}

/// `Σ_i ||f(x_i) − f_init(x_i)||²` with gradient `2 (f − f_init)`.
pub fn feature_distill_loss(current: &DenseMatrix, frozen: &DenseMatrix) -> Result<LossGrad> {
    if current.shape() != frozen.shape() {
        return Err(Error::contract(format!(
            "feature distillation on {:?} vs {:?}",
            current.shape(),
            frozen.shape()
        )));
    }
    let mut grad = current.clone();
    let mut loss = 0.0;
    for (g, &f0) in grad.as_mut_slice().iter_mut().zip(frozen.as_slice()) {
        let d = *g - f0;
        loss += d * d;
        *g = 2.0 * d;
    }
    Ok(LossGrad { loss, grad })
}

//! The joint model: encoder plus a classifier split into an "old" block
//! (classes known before the current stage) and a "new" block.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::numeric::{Encoder, EncoderGrads, Linear};
use crate::numeric::matrix::DenseMatrix;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub encoder: Encoder,
    old_head: Linear,
    new_head: Linear,
    /// Sizes of the blocks merged so far, one per closed stage.
    head_sizes: Vec<usize>,
    frozen_encoder: Option<Encoder>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrads {
    pub old: Linear,
    pub new: Linear,
}

impl JointModel {
    /// A model with an empty classifier.
    pub fn new(encoder: Encoder) -> Self {
        let d = encoder.feature_dim();
        Self {
            encoder,
            old_head: Linear::zeros(d, 0),
            new_head: Linear::zeros(d, 0),
            head_sizes: Vec::new(),
            frozen_encoder: None,
        }
    }

    pub fn num_old(&self) -> usize {
        self.old_head.out_dim()
    }

    pub fn num_new(&self) -> usize {
        self.new_head.out_dim()
    }

    /// Logit dimension: old block plus new block.
    pub fn num_classes(&self) -> usize {
        self.num_old() + self.num_new()
    }

    pub fn head_sizes(&self) -> &[usize] {
        &self.head_sizes
    }

    pub fn old_head(&self) -> &Linear {
        &self.old_head
    }

    pub fn new_head(&self) -> &Linear {
        &self.new_head
    }

    /// Opens a fresh new-head block of `num_new` outputs. The old block is
    /// left untouched.
    pub fn expand_classifier(&mut self, num_new: usize, seed: u64) -> Result<()> {
        if self.num_new() > 0 {
            return Err(Error::contract(format!(
                "expand_classifier with an unmerged block of {} classes",
                self.num_new()
            )));
        }
        if num_new > 0 {
            let mut rng = rng_from_seed(seed);
            self.new_head = Linear::init(self.encoder.feature_dim(), num_new, &mut rng);
        }
        Ok(())
    }

    /// `old <- [old; new]`, leaving the new block empty.
    pub fn merge_heads(&mut self) -> Result<()> {
        let weight = self.old_head.weight.hstack(&self.new_head.weight)?;
        let mut bias = self.old_head.bias.clone();
        bias.extend_from_slice(&self.new_head.bias);
        self.head_sizes.push(self.num_new());
        self.old_head = Linear { weight, bias };
        self.new_head = Linear::zeros(self.encoder.feature_dim(), 0);
        Ok(())
    }

    /// Snapshots the encoder for feature distillation.
    pub fn begin_stage(&mut self) {
        self.frozen_encoder = Some(self.encoder.clone());
    }

    pub fn end_stage(&mut self) {
        self.frozen_encoder = None;
    }

    pub fn frozen_encoder(&self) -> Option<&Encoder> {
        self.frozen_encoder.as_ref()
    }

    /// Logits `[old | new]` for already computed features.
    pub fn logits(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        let old = self.old_head.forward(features)?;
        let new = self.new_head.forward(features)?;
        old.hstack(&new)
    }

    pub fn logits_for(&self, inputs: &DenseMatrix) -> Result<DenseMatrix> {
        self.logits(&self.encoder.features(inputs)?)
    }

    /// Argmax over all logits; ties go to the lowest class id.
    pub fn predict(&self, inputs: &DenseMatrix) -> Result<Vec<usize>> {
        let logits = self.logits_for(inputs)?;
        Ok(logits.row_iter().map(math::argmax).collect())
    }

    /// Gradients of both blocks and of the features, given `d logits`.
    pub fn classifier_backward(
        &self,
        features: &DenseMatrix,
        d_logits: &DenseMatrix,
    ) -> Result<(ClassifierGrads, DenseMatrix)> {
        let k_old = self.num_old();
        let d_old = d_logits.select_cols(0, k_old);
        let d_new = d_logits.select_cols(k_old, d_logits.cols());
        let d = self.encoder.feature_dim();
        let mut grads = ClassifierGrads {
            old: Linear::zeros(d, k_old),
            new: Linear::zeros(d, self.num_new()),
        };
        let mut d_feat = self.old_head.backward(features, &d_old, &mut grads.old)?;
        d_feat.add_assign(&self.new_head.backward(features, &d_new, &mut grads.new)?)?;
        Ok((grads, d_feat))
    }

    pub fn zero_classifier_grads(&self) -> ClassifierGrads {
        let d = self.encoder.feature_dim();
        ClassifierGrads {
            old: Linear::zeros(d, self.num_old()),
            new: Linear::zeros(d, self.num_new()),
        }
    }

    /// Trainable encoder parameters followed by both classifier blocks.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.trainable_params_mut();
        out.extend(self.old_head.param_slices_mut());
        out.extend(self.new_head.param_slices_mut());
        out
    }

    /// Gradient slices in the order of [`JointModel::trainable_params_mut`].
    pub fn trainable_grads<'g>(&self, enc: &'g EncoderGrads, cls: &'g ClassifierGrads) -> Vec<&'g [f64]> {
        let mut out = self.encoder.trainable_grads(enc);
        out.extend(cls.old.param_slices());
        out.extend(cls.new.param_slices());
        out
    }

    /// Every parameter, including frozen encoder layers.
    pub fn all_params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.all_params_mut();
        out.extend(self.old_head.param_slices_mut());
        out.extend(self.new_head.param_slices_mut());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.old_head.is_finite() && self.new_head.is_finite()
    }
}

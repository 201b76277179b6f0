//! Feed-forward encoder `f` with a linear projection head `g`.
//!
//! `f(x)` runs a stack of hidden layers (affine + activation, with optional
//! inverted dropout on the activations) followed by an affine map to the
//! feature dimension. The projection head maps features to the prototype
//! space: `z = g(f(x))`. Gradients are derived by hand in [`Encoder::backward`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::math;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => math::tanh(x),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation value.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = math::tanh(pre);
                1.0 - t * t
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine layer `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / math::sqrt(fan_in.max(1) as f64);
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
        Self {
            weight: DenseMatrix::new(fan_in, fan_out, data).expect("sized"),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut y = x.matmul(&self.weight)?;
        y.add_row_vector(&self.bias)?;
        Ok(y)
    }

    /// Accumulates `dW = xᵀ dy`, `db = colsum(dy)` and returns `dx = dy Wᵀ`.
    pub(crate) fn backward(
        &self,
        x: &DenseMatrix,
        dy: &DenseMatrix,
        grad: &mut Linear,
    ) -> Result<DenseMatrix> {
        grad.weight.add_assign(&x.t_matmul(dy)?)?;
        for (g, s) in grad.bias.iter_mut().zip(dy.column_sums()) {
            *g += s;
        }
        dy.matmul_t(&self.weight)
    }

    pub fn param_slices(&self) -> [&[f64]; 2] {
        [self.weight.as_slice(), &self.bias]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.as_mut_slice(), &mut self.bias]
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub projection_dim: usize,
    pub activation: Activation,
}

/// Encoder parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub hidden: Vec<Linear>,
    pub feature: Linear,
    pub projection: Linear,
    pub activation: Activation,
    /// One flag per layer: hidden layers, then the feature layer, then the projection head.
    pub frozen: Vec<bool>,
    /// Bumped on every parameter update so stale caches can be detected.
    version: u64,
}

/// Everything [`Encoder::backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    input: DenseMatrix,
    pre: Vec<DenseMatrix>,
    masks: Vec<Option<DenseMatrix>>,
    post: Vec<DenseMatrix>,
    features: DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// `f(x)`, one row per sample.
    pub features: DenseMatrix,
    /// Raw `g(f(x))`; callers normalize rows before using them as embeddings.
    pub projections: DenseMatrix,
    pub cache: ForwardCache,
}

/// Gradients with the same layout as [`Encoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub hidden: Vec<Linear>,
    pub feature: Linear,
    pub projection: Linear,
}

impl EncoderGrads {
    pub fn add_assign(&mut self, other: &EncoderGrads) -> Result<()> {
        for (a, b) in self.layers_mut().into_iter().zip(other.layers()) {
            a.weight.add_assign(&b.weight)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<&Linear> {
        let mut v: Vec<&Linear> = self.hidden.iter().collect();
        v.push(&self.feature);
        v.push(&self.projection);
        v
    }

    fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut v: Vec<&mut Linear> = self.hidden.iter_mut().collect();
        v.push(&mut self.feature);
        v.push(&mut self.projection);
        v
    }

    pub fn is_zero(&self) -> bool {
        self.layers().iter().all(|l| {
            l.weight.as_slice().iter().all(|&x| x == 0.0) && l.bias.iter().all(|&x| x == 0.0)
        })
    }
}

impl Encoder {
    pub fn new(config: &EncoderConfig, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.feature_dim == 0 || config.projection_dim == 0 {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        if config.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let mut hidden = Vec::with_capacity(config.hidden.len());
        let mut fan_in = config.input_dim;
        for &width in &config.hidden {
            hidden.push(Linear::init(fan_in, width, &mut rng));
            fan_in = width;
        }
        let feature = Linear::init(fan_in, config.feature_dim, &mut rng);
        let projection = Linear::init(config.feature_dim, config.projection_dim, &mut rng);
        let frozen = vec![false; hidden.len() + 2];
        Ok(Self {
            hidden,
            feature,
            projection,
            activation: config.activation,
            frozen,
            version: 0,
        })
    }

    /// Assembles an encoder from explicit layers and validates their shapes.
    pub fn from_layers(
        hidden: Vec<Linear>,
        feature: Linear,
        projection: Linear,
        activation: Activation,
    ) -> Result<Self> {
        let mut prev = hidden.first().map(Linear::in_dim).unwrap_or(feature.in_dim());
        for (i, l) in hidden.iter().chain(core::iter::once(&feature)).enumerate() {
            if l.in_dim() != prev || l.bias.len() != l.out_dim() {
                return Err(Error::shape(
                    "Encoder::from_layers",
                    format!("layer {i} input {prev}"),
                    format!("{}x{} with {} biases", l.in_dim(), l.out_dim(), l.bias.len()),
                ));
            }
            prev = l.out_dim();
        }
        if projection.in_dim() != feature.out_dim() || projection.bias.len() != projection.out_dim() {
            return Err(Error::shape(
                "Encoder::from_layers",
                format!("projection head from {}", feature.out_dim()),
                format!("{}x{}", projection.in_dim(), projection.out_dim()),
            ));
        }
        let frozen = vec![false; hidden.len() + 2];
        Ok(Self {
            hidden,
            feature,
            projection,
            activation,
            frozen,
            version: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.feature.in_dim(), Linear::in_dim)
    }

    pub fn feature_dim(&self) -> usize {
        self.feature.out_dim()
    }

    pub fn projection_dim(&self) -> usize {
        self.projection.out_dim()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    fn layers(&self) -> Vec<&Linear> {
        let mut v: Vec<&Linear> = self.hidden.iter().collect();
        v.push(&self.feature);
        v.push(&self.projection);
        v
    }

    pub fn zero_grads(&self) -> EncoderGrads {
        EncoderGrads {
            hidden: self
                .hidden
                .iter()
                .map(|l| Linear::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            feature: Linear::zeros(self.feature.in_dim(), self.feature.out_dim()),
            projection: Linear::zeros(self.projection.in_dim(), self.projection.out_dim()),
        }
    }

    /// Forward pass. With `dropout_prob == 0` the seed is ignored and the
    /// output is deterministic.
    pub fn forward(&self, batch: &DenseMatrix, dropout_prob: f64, seed: u64) -> Result<EncoderOutput> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(
                "encoder_forward",
                format!("{} input columns", self.input_dim()),
                format!("{} columns", batch.cols()),
            ));
        }
        if !(0.0..1.0).contains(&dropout_prob) {
            return Err(Error::config(format!(
                "dropout probability must lie in [0, 1), got {dropout_prob}"
            )));
        }
        let mut rng = (dropout_prob > 0.0).then(|| rng_from_seed(seed));
        let keep_scale = 1.0 / (1.0 - dropout_prob);
        let mut pre_all = Vec::with_capacity(self.hidden.len());
        let mut masks = Vec::with_capacity(self.hidden.len());
        let mut post_all: Vec<DenseMatrix> = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let input = post_all.last().unwrap_or(batch);
            let pre = layer.forward(input)?;
            let mut post = pre.map(|x| self.activation.apply(x));
            let mask = rng.as_mut().map(|rng| {
                let mut mask = DenseMatrix::zeros(post.rows(), post.cols());
                for m in mask.as_mut_slice() {
                    *m = if rng.random::<f64>() < dropout_prob {
                        0.0
                    } else {
                        keep_scale
                    };
                }
                mask
            });
            if let Some(mask) = &mask {
                for (p, m) in post.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *p *= m;
                }
            }
            pre_all.push(pre);
            masks.push(mask);
            post_all.push(post);
        }
        let features = self.feature.forward(post_all.last().unwrap_or(batch))?;
        let projections = self.projection.forward(&features)?;
        Ok(EncoderOutput {
            features: features.clone(),
            projections,
            cache: ForwardCache {
                version: self.version,
                input: batch.clone(),
                pre: pre_all,
                masks,
                post: post_all,
                features,
            },
        })
    }

    /// Features only, without dropout.
    pub fn features(&self, batch: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward(batch, 0.0, 0)?.features)
    }

    /// Backpropagates upstream gradients on the features and on the raw
    /// projections. Either may be `None` (treated as zero).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_features: Option<&DenseMatrix>,
        d_projections: Option<&DenseMatrix>,
    ) -> Result<EncoderGrads> {
        if cache.version != self.version || cache.pre.len() != self.hidden.len() {
            return Err(Error::contract(
                "forward cache does not belong to the current encoder parameters",
            ));
        }
        let n = cache.input.rows();
        let mut grads = self.zero_grads();
        let mut d_feat = match d_features {
            Some(d) => {
                check_grad_shape("d_features", d, n, self.feature_dim())?;
                d.clone()
            }
            None => DenseMatrix::zeros(n, self.feature_dim()),
        };
        if let Some(dz) = d_projections {
            check_grad_shape("d_projections", dz, n, self.projection_dim())?;
            let back = self
                .projection
                .backward(&cache.features, dz, &mut grads.projection)?;
            d_feat.add_assign(&back)?;
        }
        let last_hidden = cache.post.last().unwrap_or(&cache.input);
        let mut dh = self
            .feature
            .backward(last_hidden, &d_feat, &mut grads.feature)?;
        for l in (0..self.hidden.len()).rev() {
            if let Some(mask) = &cache.masks[l] {
                for (d, m) in dh.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *d *= m;
                }
            }
            for (d, &p) in dh.as_mut_slice().iter_mut().zip(cache.pre[l].as_slice()) {
                *d *= self.activation.derivative(p);
            }
            let input = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            dh = self.hidden[l].backward(input, &dh, &mut grads.hidden[l])?;
        }
        Ok(grads)
    }

    /// Parameter slices of every unfrozen layer, weight before bias.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version = self.version.wrapping_add(1);
        let frozen = self.frozen.clone();
        let mut out = Vec::new();
        let layers = self
            .hidden
            .iter_mut()
            .chain(core::iter::once(&mut self.feature))
            .chain(core::iter::once(&mut self.projection));
        for (layer, is_frozen) in layers.zip(frozen) {
            if !is_frozen {
                out.extend(layer.param_slices_mut());
            }
        }
        out
    }

    /// Gradient slices matching [`Encoder::trainable_params_mut`].
    pub fn trainable_grads<'g>(&self, grads: &'g EncoderGrads) -> Vec<&'g [f64]> {
        grads
            .layers()
            .into_iter()
            .zip(&self.frozen)
            .filter(|(_, &f)| !f)
            .flat_map(|(l, _)| l.param_slices())
            .collect()
    }

    /// Every parameter slice, frozen or not (for finite differences and hashing).
    pub fn all_params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version = self.version.wrapping_add(1);
        let mut out = Vec::new();
        for l in self.hidden.iter_mut() {
            out.extend(l.param_slices_mut());
        }
        out.extend(self.feature.param_slices_mut());
        out.extend(self.projection.param_slices_mut());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.is_finite())
    }
}

fn check_grad_shape(name: &'static str, d: &DenseMatrix, rows: usize, cols: usize) -> Result<()> {
    if d.shape() != (rows, cols) {
        return Err(Error::shape(
            name,
            format!("{rows}x{cols}"),
            format!("{}x{}", d.rows(), d.cols()),
        ));
    }
    Ok(())
}

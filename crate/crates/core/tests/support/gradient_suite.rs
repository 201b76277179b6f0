//! Analytic gradients of every training loss against central differences.
//! Each check returns the largest relative error over its seeded instances.

use cgid_core::baselines::{e2e_batch_loss, swapped_prediction_loss, BaselineConfig};
use cgid_core::numeric::gradcheck::{max_param_error, numeric_gradient, relative_error};
use cgid_core::numeric::{Activation, Encoder, EncoderConfig};
use cgid_core::plrd::losses::{cross_entropy, feature_distill_loss, instance_cl_loss, pcl_loss};
use cgid_core::plrd::{
    ce_gradients, plrd_batch_loss, InstanceRows, JointModel, LossWeights, MixedBatch, OptimConfig, Origin,
    PlrdConfig, PrototypeBank, SelectionStrategy, StageSchedule,
};
use cgid_core::rng::rng_from_seed;
use cgid_core::DenseMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;
pub const SEEDS: u64 = 20;

pub const CHECKS: [(&str, fn() -> f64); 13] = [
    ("cross-entropy logits", cross_entropy_logits),
    ("cross-entropy parameters", cross_entropy_parameters),
    ("prototype contrast", prototype_contrast),
    ("instance contrast", instance_contrast),
    ("feature distillation", distillation),
    ("swapped prediction", swapped_prediction),
    ("e2e batch", e2e_batch),
    ("plrd ce term", || check_plrd(only(1.0, 0.0, 0.0, 0.0), InstanceRows::Mixed)),
    ("plrd pcl term", || check_plrd(only(0.0, 1.0, 0.0, 0.0), InstanceRows::Mixed)),
    ("plrd ins term", || {
        check_plrd(only(0.0, 0.0, 1.0, 0.0), InstanceRows::Mixed)
            .max(check_plrd(only(0.0, 0.0, 1.0, 0.0), InstanceRows::New))
    }),
    ("plrd fd term", || check_plrd(only(0.0, 0.0, 0.0, 1.0), InstanceRows::Mixed)),
    ("plrd total", || {
        check_plrd(LossWeights::default(), InstanceRows::Mixed)
            .max(check_plrd(only(0.7, 1.3, 0.4, 2.0), InstanceRows::New))
    }),
    ("plrd total, frozen layer", frozen_first_layer),
];

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from_seed(seed);
    DenseMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn unit_rows(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    cgid_core::numeric::normalize_rows(&gaussian(rows, cols, seed)).0
}

fn simplex_rows(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from_seed(seed);
    let mut m = DenseMatrix::zeros(rows, cols);
    for r in 0..rows {
        let w: Vec<f64> = (0..cols).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = w.iter().sum();
        for (c, v) in w.iter().enumerate() {
            m.set(r, c, v / s);
        }
    }
    m
}

/// Largest relative error of `grad` against central differences of `f`
/// taken over the entries of `x`.
fn matrix_error(x: &DenseMatrix, grad: &DenseMatrix, f: impl Fn(&DenseMatrix) -> f64) -> f64 {
    let numeric = numeric_gradient(x.as_slice(), EPS, |v| {
        f(&DenseMatrix::new(x.rows(), x.cols(), v.to_vec()).unwrap())
    });
    grad.as_slice()
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n, FLOOR))
        .fold(0.0, f64::max)
}

fn worst(f: impl Fn(u64) -> f64) -> f64 {
    (0..SEEDS).map(f).fold(0.0, f64::max)
}

fn toy_model(seed: u64, num_old: usize, num_new: usize) -> JointModel {
    let cfg = EncoderConfig {
        input_dim: 4,
        hidden: vec![5, 4],
        feature_dim: 3,
        projection_dim: 4,
        activation: Activation::Tanh,
    };
    let mut model = JointModel::new(Encoder::new(&cfg, seed).unwrap());
    model.expand_classifier(num_old, seed ^ 1).unwrap();
    model.merge_heads().unwrap();
    model.begin_stage();
    // drift away from the stage-start copy so distillation is not at its minimum
    for s in model.encoder.all_params_mut() {
        for (k, v) in s.iter_mut().enumerate() {
            *v += 0.05 * ((k as f64 + seed as f64) * 0.7).sin();
        }
    }
    model.expand_classifier(num_new, seed ^ 2).unwrap();
    model
}

fn toy_batch(seed: u64, n_new: usize, old_labels: Vec<usize>) -> MixedBatch {
    let mut origins = vec![Origin::New; n_new];
    origins.extend(std::iter::repeat_n(Origin::Old, old_labels.len()));
    MixedBatch {
        inputs: gaussian(n_new + old_labels.len(), 4, seed),
        origins,
        old_labels,
    }
}

fn schedule() -> StageSchedule {
    StageSchedule {
        epochs: 1,
        batch_size: 4,
        optim: OptimConfig::default(),
    }
}

fn plrd_config(weights: LossWeights, instance_rows: InstanceRows) -> PlrdConfig {
    PlrdConfig {
        schedule: schedule(),
        tau: 0.5,
        gamma: 0.7,
        sk_epsilon: 0.05,
        sk_iterations: 3,
        dropout: 0.5,
        weights,
        instance_rows,
        memory_per_class: 5,
        selection: SelectionStrategy::Random,
    }
}

pub fn cross_entropy_logits() -> f64 {
    worst(|seed| {
        let logits = gaussian(5, 4, seed);
        let y = simplex_rows(5, 4, seed + 100);
        let w: Vec<f64> = (0..5).map(|i| 0.5 + i as f64 * 0.3).collect();
        let t = 0.1 + (seed % 4) as f64 * 0.3;
        let ce = cross_entropy(&logits, &y, &w, t).unwrap();
        matrix_error(&logits, &ce.grad, |l| cross_entropy(l, &y, &w, t).unwrap().loss)
    })
}

pub fn cross_entropy_parameters() -> f64 {
    worst(|seed| {
        let model = toy_model(seed, 2, 2);
        let x = gaussian(5, 4, seed + 7);
        let y = simplex_rows(5, 4, seed + 8);
        let w = vec![1.0, 3.0, 1.0, 3.0, 1.0];
        let (_, enc, cls) = ce_gradients(&model, &x, &y, &w, 1.0, 5.0).unwrap();
        let analytic = model.trainable_grads(&enc, &cls);
        max_param_error(&model, JointModel::trainable_params_mut, &analytic, EPS, FLOOR, |m| {
            ce_gradients(m, &x, &y, &w, 1.0, 5.0).unwrap().0
        })
    })
}

pub fn prototype_contrast() -> f64 {
    worst(|seed| {
        let z = unit_rows(4, 3, seed);
        let protos = unit_rows(3, 3, seed + 50);
        let q = simplex_rows(4, 3, seed + 60);
        let g = pcl_loss(&z, &protos, &q, 0.5).unwrap();
        matrix_error(&z, &g.grad, |zz| pcl_loss(zz, &protos, &q, 0.5).unwrap().loss)
    })
}

pub fn instance_contrast() -> f64 {
    worst(|seed| {
        let z = unit_rows(4, 3, seed);
        let za = unit_rows(4, 3, seed + 30);
        let g = instance_cl_loss(&z, &za, 0.5).unwrap();
        let ez = matrix_error(&z, &g.grad_z, |m| instance_cl_loss(m, &za, 0.5).unwrap().loss);
        let ea = matrix_error(&za, &g.grad_aug, |m| instance_cl_loss(&z, m, 0.5).unwrap().loss);
        ez.max(ea)
    })
}

pub fn distillation() -> f64 {
    worst(|seed| {
        let f = gaussian(3, 4, seed);
        let f0 = gaussian(3, 4, seed + 1);
        let g = feature_distill_loss(&f, &f0).unwrap();
        matrix_error(&f, &g.grad, |m| feature_distill_loss(m, &f0).unwrap().loss)
    })
}

fn baseline_config() -> BaselineConfig {
    BaselineConfig {
        schedule: schedule(),
        lambda: 3.0,
        align_rounds: 5,
        kmeans_max_iters: 100,
        kmeans_restarts: 2,
        temperature: 0.1,
        sk_epsilon: 0.05,
        sk_iterations: 3,
        dropout: 0.5,
        memory_per_class: 5,
        selection: SelectionStrategy::Random,
    }
}

pub fn swapped_prediction() -> f64 {
    let cfg = baseline_config();
    worst(|seed| {
        // logits on the scale of the temperature so logits / T is O(1)
        let mut la = gaussian(4, 5, seed);
        let mut lb = gaussian(4, 5, seed + 9);
        la.scale(cfg.temperature);
        lb.scale(cfg.temperature);
        let fixed = swapped_prediction_loss(&la, &lb, 2, &cfg, None).unwrap();
        let targets = (&fixed.target_a, &fixed.target_b);
        let ea = matrix_error(&la, &fixed.grad_a, |m| {
            swapped_prediction_loss(m, &lb, 2, &cfg, Some(targets)).unwrap().loss
        });
        let eb = matrix_error(&lb, &fixed.grad_b, |m| {
            swapped_prediction_loss(&la, m, 2, &cfg, Some(targets)).unwrap().loss
        });
        ea.max(eb)
    })
}

pub fn e2e_batch() -> f64 {
    let cfg = baseline_config();
    worst(|seed| {
        let model = toy_model(seed, 2, 3);
        let batch = toy_batch(seed + 3, 3, vec![0, 1, 1]);
        let seeds = (seed + 11, seed + 12);
        let first = e2e_batch_loss(&model, &batch, &cfg, seeds, None).unwrap();
        let targets = (
            &first.target_a.select_rows(&[0, 1, 2]),
            &first.target_b.select_rows(&[0, 1, 2]),
        );
        let analytic = model.trainable_grads(&first.encoder_grads, &first.classifier_grads);
        max_param_error(&model, JointModel::trainable_params_mut, &analytic, EPS, FLOOR, |m| {
            e2e_batch_loss(m, &batch, &cfg, seeds, Some(targets)).unwrap().loss
        })
    })
}

/// Also asserts that the total is the sum of its weighted components.
pub fn check_plrd(weights: LossWeights, rows: InstanceRows) -> f64 {
    worst(|seed| {
        let model = toy_model(seed, 2, 2);
        let batch = toy_batch(seed + 5, 3, vec![1, 0, 1]);
        let mut bank = PrototypeBank::new(0.7, 4);
        bank.push_random(4, seed + 6);
        let cfg = plrd_config(weights, rows);
        let first = plrd_batch_loss(&model, &batch, &bank, &cfg, seed + 7, None).unwrap();
        let c = first.components;
        assert!((first.total - (c.ce + c.pcl + c.ins + c.fd)).abs() < 1e-12);
        let analytic = model.trainable_grads(&first.encoder_grads, &first.classifier_grads);
        max_param_error(&model, JointModel::trainable_params_mut, &analytic, EPS, FLOOR, |m| {
            plrd_batch_loss(m, &batch, &bank, &cfg, seed + 7, Some(&first.targets))
                .unwrap()
                .total
        })
    })
}

pub fn only(ce: f64, pcl: f64, ins: f64, fd: f64) -> LossWeights {
    LossWeights { ce, pcl, ins, fd }
}

/// Two old and two new classes with the first hidden layer frozen: its
/// parameters are excluded on both sides.
pub fn frozen_first_layer() -> f64 {
    let mut model = toy_model(3, 2, 2);
    model.encoder.frozen[0] = true;
    let batch = toy_batch(9, 4, vec![0, 1, 0, 1]);
    let mut bank = PrototypeBank::new(0.7, 4);
    bank.push_random(4, 1);
    let cfg = plrd_config(LossWeights::default(), InstanceRows::Mixed);
    let first = plrd_batch_loss(&model, &batch, &bank, &cfg, 5, None).unwrap();
    let analytic = model.trainable_grads(&first.encoder_grads, &first.classifier_grads);
    max_param_error(&model, JointModel::trainable_params_mut, &analytic, EPS, FLOOR, |m| {
        plrd_batch_loss(m, &batch, &bank, &cfg, 5, Some(&first.targets)).unwrap().total
    })
}

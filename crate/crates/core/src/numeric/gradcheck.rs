//! Central finite differences for checking analytic gradients.

use alloc::vec::Vec;

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central-difference gradient of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Largest relative error between `analytic` and a central difference of
/// `loss` over every parameter exposed by `params`. Each evaluation works on
/// a perturbed clone of `model`.
pub fn max_param_error<M: Clone>(
    model: &M,
    params: impl for<'a> Fn(&'a mut M) -> Vec<&'a mut [f64]>,
    analytic: &[&[f64]],
    eps: f64,
    floor: f64,
    loss: impl Fn(&M) -> f64,
) -> f64 {
    let mut base = model.clone();
    let shapes: Vec<usize> = params(&mut base).iter().map(|s| s.len()).collect();
    assert_eq!(shapes.len(), analytic.len(), "one analytic slice per parameter slice");
    let mut worst = 0.0f64;
    for (s, &len) in shapes.iter().enumerate() {
        assert_eq!(len, analytic[s].len(), "analytic slice {s} has the wrong length");
        for j in 0..len {
            let eval = |delta: f64| {
                let mut m = model.clone();
                params(&mut m)[s][j] += delta;
                loss(&m)
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[s][j], numeric, floor));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_gradient() {
        let g = numeric_gradient(&[1.0, -2.0], 1e-5, |x| x[0] * x[0] * x[0] + 3.0 * x[1]);
        assert!(relative_error(g[0], 3.0, 1e-12) < 1e-9);
        assert!(relative_error(g[1], 3.0, 1e-12) < 1e-9);
    }
}

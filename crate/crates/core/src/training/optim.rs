use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

/// `scale · d^-0.5 · min(step^-0.5, step · warmup^-1.5)`.
pub fn noam_lr(step: usize, d_model: usize, warmup: usize, scale: f64) -> Result<f64> {
    if step == 0 {
        return Err(Error::arg("learning-rate steps start at 1"));
    }
    if warmup == 0 {
        return Err(Error::arg("warmup must be at least 1 step"));
    }
    let s = step as f64;
    let decay = s.powf(-0.5);
    let ramp = s * (warmup as f64).powf(-1.5);
    Ok(scale * (d_model as f64).powf(-0.5) * decay.min(ramp))
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the factor applied (1.0 when nothing was clipped).
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm <= max_norm {
        return 1.0;
    }
    let factor = max_norm / norm;
    for g in grads.iter_mut() {
        g.scale_in_place(factor);
    }
    factor
}

pub trait Optimizer {
    /// Applies one update; `grads` are in `params` iteration order.
    fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()>;
}

/// `θ ← θ - lr · g`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sgd;

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::arg(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        if lr == 0.0 {
            return Ok(());
        }
        for (p, g) in params.values_mut().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::dim("sgd step", p.shape(), g.shape()));
            }
            for (a, b) in p.data_mut().iter_mut().zip(g.data()) {
                *a -= lr * b;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noam_shape() {
        let (d, w) = (64, 100);
        let peak = noam_lr(w, d, w, 1.0).unwrap();
        // both terms agree at the crossover
        assert_abs_diff_eq!(peak, (d as f64).powf(-0.5) * (w as f64).powf(-0.5), epsilon = 1e-15);
        for s in 1..w {
            assert!(noam_lr(s, d, w, 1.0).unwrap() < noam_lr(s + 1, d, w, 1.0).unwrap());
        }
        assert_abs_diff_eq!(noam_lr(4 * w, d, w, 1.0).unwrap(), peak / 2.0, epsilon = 1e-15);
        assert!(noam_lr(0, d, w, 1.0).is_err());
    }

    #[test]
    fn clipping() {
        let mut g = vec![Tensor::vector(vec![3.0, 4.0])];
        assert_eq!(clip_gradients(&mut g, 1.0), 0.2);
        assert_abs_diff_eq!(g[0].data()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0].data()[1], 0.8, epsilon = 1e-15);
        let mut many = vec![Tensor::vector(vec![1.0, 2.0]), Tensor::full(&[2, 2], 3.0)];
        clip_gradients(&mut many, 2.5);
        assert_abs_diff_eq!(global_norm(&many), 2.5, epsilon = 1e-12);
        let mut small = vec![Tensor::vector(vec![0.1, 0.1])];
        assert_eq!(clip_gradients(&mut small, 1.0), 1.0);
        assert_eq!(small[0].data(), &[0.1, 0.1]);
    }

    #[test]
    fn zero_lr_leaves_params_untouched() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::vector(vec![0.1, -0.0, 3.0]));
        let before = p.clone();
        Sgd.step(&mut p, &[Tensor::vector(vec![f64::NAN, 1.0, 2.0])], 0.0).unwrap();
        let bits = |s: &ParamStore| s.get("w").unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&before));
        Sgd.step(&mut p, &[Tensor::vector(vec![1.0, 1.0, 1.0])], 0.5).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[-0.4, -0.5, 2.5]);
    }
}

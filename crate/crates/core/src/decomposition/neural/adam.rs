use super::mlp::Mlp;
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Per-parameter first and second moment estimates for one network.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    first: Mlp<T>,
    second: Mlp<T>,
    pub step: usize,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shape: &Mlp<T>) -> Self {
        Self {
            first: shape.zeros_like(),
            second: shape.zeros_like(),
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params` with gradients `grads`.
    pub fn update(&mut self, params: &mut Mlp<T>, grads: &Mlp<T>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::narrow(BETA1);
        let b2 = T::narrow(BETA2);
        let one = T::one();
        let step_size = T::narrow(lr / (1.0 - BETA1.powi(t)));
        let second_correction = T::narrow(1.0 / (1.0 - BETA2.powi(t)));
        let eps = T::narrow(EPSILON);

        let p = params.param_slices_mut();
        let g = grads.param_slices();
        let m = self.first.param_slices_mut();
        let v = self.second.param_slices_mut();
        for (((p, g), m), v) in p.into_iter().zip(g).zip(m).zip(v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p = *p - step_size * *m / ((*v * second_correction).sqrt() + eps);
            }
        }
    }
}

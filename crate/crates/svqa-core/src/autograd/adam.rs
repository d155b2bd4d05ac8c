use crate::autograd::params::{ParamId, ParamSet};
use crate::error::{Error, Result};

/// Adam with bias correction. Moment buffers are keyed by [`ParamId`] and
/// sized lazily on first touch, so frozen parameters cost nothing.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(lr: f32) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Number of completed updates.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update over the given (parameter, gradient) pairs. Gradients
    /// must be finite and match their parameter's element count; parameters
    /// not listed keep their values and moments untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[(ParamId, Vec<f32>)]) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (id, g) in grads {
            let name = params.name(*id).to_string();
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGrad(name));
            }
            let p = params.get_mut(*id);
            if p.tensor.numel() != g.len() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.tensor.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            if self.m.len() <= id.0 {
                self.m.resize_with(id.0 + 1, Vec::new);
                self.v.resize_with(id.0 + 1, Vec::new);
            }
            if self.m[id.0].is_empty() {
                self.m[id.0] = vec![0.0; g.len()];
                self.v[id.0] = vec![0.0; g.len()];
            }
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let w = p.tensor.data_mut();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

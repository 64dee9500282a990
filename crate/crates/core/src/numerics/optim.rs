use crate::numerics::ParamStore;

/// Adam with bias correction. The step counter lives in the [`ParamStore`]
/// so a store carries its full optimizer state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam {
            lr,
            ..Adam::default()
        }
    }

    /// Applies one update to every parameter and zeroes the gradients.
    pub fn step(&self, store: &mut ParamStore) {
        store.adam_steps += 1;
        let t = store.adam_steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for slot in &mut store.slots {
            let m = slot.first_moment.data_mut();
            let v = slot.second_moment.data_mut();
            let w = slot.value.data_mut();
            let g = slot.grad.data_mut();
            for i in 0..w.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                w[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                g[i] = 0.0;
            }
        }
    }
}

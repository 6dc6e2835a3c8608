//! Adam with bias correction.

use alloc::vec::Vec;

use crate::params::{GroupSet, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    groups: GroupSet,
    t: i32,
    moments: Vec<Option<(Tensor, Tensor)>>,
}

impl Adam {
    /// Only parameters in `groups` are ever touched.
    pub fn new(cfg: AdamConfig, groups: GroupSet, n_params: usize) -> Self {
        Self {
            cfg,
            groups,
            t: 0,
            moments: (0..n_params).map(|_| None).collect(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One update. `grads[i]` is the gradient of parameter `i`, if any.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Tensor>], lr: f32) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - libm::powf(beta1, self.t as f32);
        let bc2 = 1.0 - libm::powf(beta2, self.t as f32);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let id = crate::params::ParamId(i);
            if !self.groups.contains(params.entry(id).group) {
                continue;
            }
            let (m, v) = self.moments[i]
                .get_or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let p = params.value_mut(id).data_mut();
            for (((p, m), v), g) in p
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= lr * mh / (libm::sqrtf(vh) + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Group;
    use crate::tensor::Shape;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        let a = store.add("a", Group::Inn, Tensor::full(Shape::new(1, 1, 1, 2), 1.0));
        let b = store.add("b", Group::PostEnhance, Tensor::full(Shape::new(1, 1, 1, 1), 1.0));
        let mut opt = Adam::new(AdamConfig::default(), GroupSet::only(Group::Inn), store.len());
        let ga = Tensor::from_vec(Shape::new(1, 1, 1, 2), alloc::vec![3.0, -0.5]).unwrap();
        let gb = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        opt.step(&mut store, &[Some(ga), Some(gb)], 0.1);
        let va = store.value(a).data();
        assert!((va[0] - 0.9).abs() < 1e-6 && (va[1] - 1.1).abs() < 1e-6);
        assert_eq!(store.value(b).data()[0], 1.0, "frozen group untouched");
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut store = ParamStore::new();
        let x = store.add("x", Group::Inn, Tensor::full(Shape::new(1, 1, 1, 1), 4.0));
        let mut opt = Adam::new(AdamConfig::default(), GroupSet::ALL, 1);
        for _ in 0..500 {
            let v = store.value(x).data()[0];
            let g = Tensor::full(Shape::new(1, 1, 1, 1), 2.0 * (v - 1.0));
            opt.step(&mut store, &[Some(g)], 0.05);
        }
        assert!((store.value(x).data()[0] - 1.0).abs() < 1e-2);
    }
}

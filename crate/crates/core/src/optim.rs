use crate::autograd::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments over a fixed set of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    params: Vec<ParamId>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    /// Optimizes every parameter currently in `store`.
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        Self::for_params(config, store, store.ids().collect())
    }

    pub fn for_params(config: AdamConfig, store: &ParamStore, params: Vec<ParamId>) -> Self {
        let first = params
            .iter()
            .map(|&p| Tensor::zeros(store.value(p).shape()))
            .collect::<Vec<_>>();
        let second = first.clone();
        Self {
            config,
            params,
            first,
            second,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, &id) in self.params.iter().enumerate() {
            let grad = store.grad(id).data().to_vec();
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            let w = store.value_mut(id).data_mut();
            for i in 0..grad.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;

    fn quadratic_step(store: &mut ParamStore, w: ParamId, target: f64, adam: &mut Adam) {
        store.zero_grad();
        let mut g = Graph::new();
        let wv = g.param(store, w).unwrap();
        let t = g.constant(Tensor::vector(vec![target])).unwrap();
        let d = g.sub(wv, t).unwrap();
        let sq = g.mul(d, d).unwrap();
        let l = g.sum(sq).unwrap();
        g.backward(l, store).unwrap();
        adam.step(store);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![1.5, -2.0])).unwrap();
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &store);
        for _ in 0..10 {
            store.zero_grad();
            adam.step(&mut store);
        }
        assert_eq!(store.value(w).data(), &[1.5, -2.0]);
        assert_eq!(adam.steps(), 10);
    }

    #[test]
    fn one_step_descends() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![1.0])).unwrap();
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &store);
        quadratic_step(&mut store, w, 0.0, &mut adam);
        let v = store.value(w).item();
        assert!(v < 1.0 && v > 0.0, "w = {v}");
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![0.0])).unwrap();
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &store);
        for _ in 0..200 {
            quadratic_step(&mut store, w, 3.0, &mut adam);
        }
        let v = store.value(w).item();
        assert!((v - 3.0).abs() < 0.05, "w = {v}");
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![1.0])).unwrap();
        let b = store.add("b", Tensor::vector(vec![1.0])).unwrap();
        let mut adam = Adam::for_params(AdamConfig::with_lr(0.1), &store, vec![a]);
        store.params_mut()[b.index()].grad = Tensor::vector(vec![1.0]);
        store.params_mut()[a.index()].grad = Tensor::vector(vec![1.0]);
        adam.step(&mut store);
        assert!(store.value(a).item() < 1.0);
        assert_eq!(store.value(b).item(), 1.0);
    }
}

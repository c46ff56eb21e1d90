use crate::numerics::params::ParameterStore;
use crate::numerics::tensor::Tensor;
use crate::scalar::Scalar;

/// RMSProp with PyTorch semantics: v ← ρv + (1−ρ)g², θ ← θ − lr·g/(√v + ε).
#[derive(Debug, Clone)]
pub struct RmsProp<T> {
    pub lr: T,
    pub rho: T,
    pub eps: T,
    square_avg: Vec<Tensor<T>>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(lr: T) -> Self {
        Self {
            lr,
            rho: T::lit(0.99),
            eps: T::lit(1e-8),
            square_avg: Vec::new(),
        }
    }

    /// Applies the accumulated gradients of `store` and clears them.
    pub fn step(&mut self, store: &mut ParameterStore<T>) {
        if self.square_avg.len() != store.len() {
            self.square_avg = store
                .ids()
                .map(|id| Tensor::zeros(store.value(id).shape()))
                .collect();
        }
        let one = T::one();
        for id in store.ids().collect::<Vec<_>>() {
            let g = store.grad(id).data().to_vec();
            let v = self.square_avg[id.index()].data_mut();
            for (vi, gi) in v.iter_mut().zip(&g) {
                *vi = self.rho * *vi + (one - self.rho) * *gi * *gi;
            }
            if self.lr != T::zero() {
                let v = self.square_avg[id.index()].data().to_vec();
                let w = store.value_mut(id).data_mut();
                for ((wi, gi), vi) in w.iter_mut().zip(&g).zip(&v) {
                    *wi = *wi - self.lr * *gi / (vi.sqrt() + self.eps);
                }
            }
        }
        store.zero_grads();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_ten_lr() {
        let mut s = ParameterStore::<f64>::new();
        let id = s.insert("w", Tensor::vector(vec![1.0])).unwrap();
        let mut opt = RmsProp::new(1e-3);
        let mut g = crate::numerics::graph::Graph::new();
        let w = s.var(&mut g, id);
        let y = g.scale(w, 2.0).unwrap();
        let y = g.sum(y).unwrap();
        let grads = g.backward(y).unwrap();
        s.accumulate(&g, &grads);
        opt.step(&mut s);
        // v = 0.01·4, step = lr·2/0.2 = 10·lr
        assert!((s.value(id).get(0) - (1.0 - 1e-2)).abs() < 1e-9);
        assert_eq!(s.grad(id).get(0), 0.0);
    }
}

//! SGD with classical momentum and decoupled-from-nothing weight decay.

use super::{Gradients, ModelParams, TensorKey};
use crate::numerics::Matrix;
use crate::Scalar;
use std::collections::BTreeMap;

/// Optimizer state: hyperparameters plus per-tensor velocity buffers.
///
/// Update rule per tensor: `v = momentum * v + (g + weight_decay * w)`,
/// then `w -= learning_rate * v`. Velocities are created lazily with the
/// shape of their tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState<F = f64> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: BTreeMap<TensorKey, Matrix<F>>,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        assert!(learning_rate > 0.0);
        assert!((0.0..1.0).contains(&momentum));
        assert!(weight_decay >= 0.0);
        OptimizerState {
            learning_rate,
            momentum,
            weight_decay,
            velocity: BTreeMap::new(),
        }
    }

    pub fn velocity(&self, key: TensorKey) -> Option<&Matrix<F>> {
        self.velocity.get(&key)
    }
}

/// One SGD step over the gradient set. Frozen tensors are untouched even if
/// a gradient is (incorrectly) supplied for them.
pub fn sgd_step<F: Scalar>(
    params: &mut ModelParams<F>,
    grads: &Gradients<F>,
    opt: &mut OptimizerState<F>,
) {
    let lr = F::from_f64(opt.learning_rate);
    let mu = F::from_f64(opt.momentum);
    let wd = F::from_f64(opt.weight_decay);
    for (key, g) in grads.iter() {
        if params.freeze.is_frozen(key) {
            continue;
        }
        let w = params.tensor_mut(key);
        assert_eq!(
            (g.rows(), g.cols()),
            (w.rows(), w.cols()),
            "gradient shape mismatch for {}",
            key.name()
        );
        let v = opt
            .velocity
            .entry(key)
            .or_insert_with(|| Matrix::zeros(w.rows(), w.cols()));
        for i in 0..v.data().len() {
            let g_eff = g.data()[i] + wd * w.data()[i];
            let vi = mu * v.data()[i] + g_eff;
            v.data_mut()[i] = vi;
            w.data_mut()[i] -= lr * vi;
        }
    }
}

use ndarray::ArrayD;

use super::params::Parameters;

/// RMSProp hyper-parameters and per-tensor squared-gradient accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub acc: Vec<ArrayD<f64>>,
}

/// One RMSProp update on flat buffers:
/// `acc = decay*acc + (1-decay)*g^2`, `param -= lr*g / (sqrt(acc) + eps)`.
pub fn rmsprop_step(
    acc: &mut [f64],
    param: &mut [f64],
    grad: &[f64],
    lr: f64,
    decay: f64,
    eps: f64,
) {
    assert!(acc.len() == param.len() && param.len() == grad.len());
    for ((a, p), &g) in acc.iter_mut().zip(param.iter_mut()).zip(grad) {
        *a = decay * *a + (1.0 - decay) * g * g;
        *p -= lr * g / (a.sqrt() + eps);
    }
}

/// RMSProp over a whole [`Parameters`] struct.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub state: OptState,
}

impl RmsProp {
    pub fn new(lr: f64, decay: f64, eps: f64) -> Self {
        RmsProp {
            state: OptState {
                lr,
                decay,
                eps,
                acc: Vec::new(),
            },
        }
    }

    /// Apply one update; `grads` must have the same structure as `params`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        let grads = grads.params();
        let params = params.params_mut();
        assert_eq!(grads.len(), params.len(), "parameter structure mismatch");
        if self.state.acc.is_empty() {
            self.state.acc = grads
                .iter()
                .map(|(_, g)| ArrayD::zeros(g.raw_dim()))
                .collect();
        }
        let OptState {
            lr,
            decay,
            eps,
            acc,
        } = &mut self.state;
        for ((acc, (_, mut p)), (_, g)) in acc.iter_mut().zip(params).zip(grads) {
            let g = g.as_standard_layout();
            rmsprop_step(
                acc.as_slice_mut().expect("contiguous accumulator"),
                p.as_slice_mut().expect("contiguous parameter"),
                g.as_slice().expect("contiguous gradient"),
                *lr,
                *decay,
                *eps,
            );
        }
    }
}

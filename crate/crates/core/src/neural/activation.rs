use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use super::Rng;
use crate::error::{Error, Result};

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-element scale factors applied by a dropout pass. `None` means the pass
/// was the identity.
#[derive(Debug, Clone)]
pub struct DropoutMask(Option<Array2<f64>>);

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask(None)
    }

    /// Backward pass: the same element-wise scaling as the forward pass.
    pub fn apply(&self, grad: &mut Array2<f64>) {
        if let Some(mask) = &self.0 {
            *grad *= mask;
        }
    }
}

/// Inverted dropout: in training mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`. Inference mode and
/// `rate == 0` are exact identities and draw nothing from `rng`.
pub fn dropout(
    x: ArrayView2<f64>,
    rate: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<(Array2<f64>, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((x.to_owned(), DropoutMask::identity()));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    });
    let out = &x * &mask;
    Ok((out, DropoutMask(Some(mask))))
}

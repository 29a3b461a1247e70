use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};

use super::init::{xavier_uniform, Rng};
use super::params::{join, Parameters};
use crate::error::{Error, Result};

/// Affine map `y = x W + b` applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    /// `in x out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearParams {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        LinearParams {
            weight: Array2::zeros((input_dim, output_dim)),
            bias: Array1::zeros(output_dim),
        }
    }

    pub fn init(input_dim: usize, output_dim: usize, rng: &mut Rng) -> Self {
        LinearParams {
            weight: xavier_uniform(input_dim, output_dim, input_dim, output_dim, rng),
            bias: Array1::zeros(output_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "linear layer expects input dim {}, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weight) + &self.bias)
    }

    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        d_out: ArrayView2<f64>,
        grads: &mut LinearParams,
    ) -> Array2<f64> {
        grads.weight += &x.t().dot(&d_out);
        grads.bias += &d_out.sum_axis(Axis(0));
        d_out.dot(&self.weight.t())
    }
}

impl Parameters for LinearParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        out.push((join(prefix, "weight"), self.weight.view().into_dyn()));
        out.push((join(prefix, "bias"), self.bias.view().into_dyn()));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        out.push((join(prefix, "weight"), self.weight.view_mut().into_dyn()));
        out.push((join(prefix, "bias"), self.bias.view_mut().into_dyn()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{finite_diff_check, flatten, set_flat, zeros_like};
    use rand::{Rng as _, SeedableRng};

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::seed_from_u64(9);
        let p = LinearParams::init(4, 3, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let loss = |p: &LinearParams| (p.forward(x.view()).unwrap() * &w).sum();

        let mut grads = zeros_like(&p);
        p.backward(x.view(), w.view(), &mut grads);
        let check = finite_diff_check(
            |v| {
                let mut q = p.clone();
                set_flat(&mut q, v);
                loss(&q)
            },
            &flatten(&p),
            &flatten(&grads),
            1e-5,
        );
        assert!(check.max_rel_error < 1e-8, "{check:?}");
    }
}

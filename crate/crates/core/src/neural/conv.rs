use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD};

use super::activation::{leaky_relu, leaky_relu_grad};
use super::init::{xavier_uniform, Rng};
use super::params::{join, Parameters};
use crate::error::{Error, Result};

/// Filters of one window width. `weight` rows are the flattened window,
/// `width * d_in` of them, one column per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvFilter {
    pub width: usize,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ConvFilter {
    fn input_dim(&self) -> usize {
        self.weight.nrows() / self.width
    }

    fn n_filters(&self) -> usize {
        self.weight.ncols()
    }
}

/// Text-CNN feature block: one [`ConvFilter`] per window width, each followed
/// by Leaky ReLU and max-over-time pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlockParams {
    pub filters: Vec<ConvFilter>,
    pub leaky_slope: f64,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    padded: Array2<f64>,
    valid_rows: usize,
    // Per filter group: pre-activation at the argmax row, and the argmax row.
    winners: Vec<Vec<(usize, f64)>>,
}

impl ConvBlockParams {
    pub fn zeros(input_dim: usize, widths: &[usize], n_filters: usize, leaky_slope: f64) -> Self {
        let filters = widths
            .iter()
            .map(|&w| ConvFilter {
                width: w,
                weight: Array2::zeros((w * input_dim, n_filters)),
                bias: Array1::zeros(n_filters),
            })
            .collect();
        ConvBlockParams {
            filters,
            leaky_slope,
        }
    }

    pub fn init(
        input_dim: usize,
        widths: &[usize],
        n_filters: usize,
        leaky_slope: f64,
        rng: &mut Rng,
    ) -> Self {
        let filters = widths
            .iter()
            .map(|&w| ConvFilter {
                width: w,
                weight: xavier_uniform(w * input_dim, n_filters, w * input_dim, n_filters, rng),
                bias: Array1::zeros(n_filters),
            })
            .collect();
        ConvBlockParams {
            filters,
            leaky_slope,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.filters.first().map_or(0, ConvFilter::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.filters.iter().map(ConvFilter::n_filters).sum()
    }

    fn max_width(&self) -> usize {
        self.filters.iter().map(|f| f.width).max().unwrap_or(1)
    }

    /// Pooled features of `x` (`N x d_in`). Inputs shorter than the widest
    /// window are zero-padded at the end.
    pub fn forward_train(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, ConvCache)> {
        let d = self.input_dim();
        if x.ncols() != d {
            return Err(Error::Shape(format!(
                "conv block expects input dim {d}, got {}",
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Shape("conv block needs at least one row".into()));
        }
        let rows = x.nrows().max(self.max_width());
        let mut padded = Array2::zeros((rows, d));
        padded.slice_mut(s![..x.nrows(), ..]).assign(&x);

        let mut out = Array1::zeros(self.output_dim());
        let mut winners = Vec::with_capacity(self.filters.len());
        let mut offset = 0;
        for filter in &self.filters {
            let positions = rows - filter.width + 1;
            let mut pre = Array2::zeros((positions, filter.n_filters()));
            pre += &filter.bias;
            for k in 0..filter.width {
                let xs = padded.slice(s![k..k + positions, ..]);
                let wk = filter.weight.slice(s![k * d..(k + 1) * d, ..]);
                pre += &xs.dot(&wk);
            }
            let mut best = Vec::with_capacity(filter.n_filters());
            for f in 0..filter.n_filters() {
                let col = pre.column(f);
                let mut arg = 0;
                let mut val = f64::NEG_INFINITY;
                for (t, &v) in col.iter().enumerate() {
                    let a = leaky_relu(v, self.leaky_slope);
                    if a > val {
                        val = a;
                        arg = t;
                    }
                }
                out[offset + f] = val;
                best.push((arg, col[arg]));
            }
            offset += filter.n_filters();
            winners.push(best);
        }
        Ok((
            out,
            ConvCache {
                padded,
                valid_rows: x.nrows(),
                winners,
            },
        ))
    }

    /// Accumulates parameter gradients and returns `d loss / d x` for the
    /// unpadded rows.
    pub fn backward(
        &self,
        cache: &ConvCache,
        d_out: ArrayView1<f64>,
        grads: &mut ConvBlockParams,
    ) -> Array2<f64> {
        let d = self.input_dim();
        let mut dx = Array2::<f64>::zeros(cache.padded.raw_dim());
        let mut offset = 0;
        for ((filter, g), best) in self
            .filters
            .iter()
            .zip(grads.filters.iter_mut())
            .zip(&cache.winners)
        {
            for (f, &(t, pre)) in best.iter().enumerate() {
                let dpre = d_out[offset + f] * leaky_relu_grad(pre, self.leaky_slope);
                if dpre == 0.0 {
                    continue;
                }
                g.bias[f] += dpre;
                for k in 0..filter.width {
                    let xrow = cache.padded.row(t + k);
                    for j in 0..d {
                        g.weight[[k * d + j, f]] += dpre * xrow[j];
                        dx[[t + k, j]] += dpre * filter.weight[[k * d + j, f]];
                    }
                }
            }
            offset += filter.n_filters();
        }
        dx.slice(s![..cache.valid_rows, ..]).to_owned()
    }
}

impl Parameters for ConvBlockParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        for f in &self.filters {
            let p = join(prefix, &format!("w{}", f.width));
            out.push((join(&p, "weight"), f.weight.view().into_dyn()));
            out.push((join(&p, "bias"), f.bias.view().into_dyn()));
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        for f in &mut self.filters {
            let p = join(prefix, &format!("w{}", f.width));
            out.push((join(&p, "weight"), f.weight.view_mut().into_dyn()));
            out.push((join(&p, "bias"), f.bias.view_mut().into_dyn()));
        }
    }
}

/// Convolution over time, Leaky ReLU, then max-over-time pooling per filter;
/// the per-width results are concatenated.
pub fn conv_maxpool(params: &ConvBlockParams, input: ArrayView2<f64>) -> Result<Array1<f64>> {
    Ok(params.forward_train(input)?.0)
}

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, Zip};

use super::activation::sigmoid;
use super::init::{xavier_uniform, Rng};
use super::params::{join, Parameters};
use crate::error::{Error, Result};

/// One LSTM direction. Gate columns are laid out as `[input | forget | output | candidate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    /// `d_in x 4h`
    pub w_input: Array2<f64>,
    /// `h x 4h`
    pub w_hidden: Array2<f64>,
    /// `4h`
    pub bias: Array1<f64>,
}

impl LstmDirection {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmDirection {
            w_input: Array2::zeros((input_dim, 4 * hidden_dim)),
            w_hidden: Array2::zeros((hidden_dim, 4 * hidden_dim)),
            bias: Array1::zeros(4 * hidden_dim),
        }
    }

    /// Glorot-uniform weights per gate block, zero biases except the forget
    /// gate, which starts at `+1`.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let h = hidden_dim;
        let w_input = xavier_uniform(input_dim, 4 * h, input_dim, h, rng);
        let w_hidden = xavier_uniform(h, 4 * h, h, h, rng);
        let mut bias = Array1::zeros(4 * h);
        bias.slice_mut(s![h..2 * h]).fill(1.0);
        LstmDirection {
            w_input,
            w_hidden,
            bias,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.nrows()
    }

    fn run(&self, x: ArrayView2<f64>) -> DirectionCache {
        let h = self.hidden_dim();
        let n = x.nrows();
        let mut pre = x.dot(&self.w_input);
        pre += &self.bias;

        let mut gates = Array2::zeros((n, 4 * h));
        let mut cells = Array2::zeros((n, h));
        let mut tanh_cells = Array2::zeros((n, h));
        let mut hidden = Array2::zeros((n, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);

        for t in 0..n {
            let mut z = pre.row(t).to_owned();
            if t > 0 {
                z += &h_prev.dot(&self.w_hidden);
            }
            let mut g_row = gates.row_mut(t);
            for j in 0..3 * h {
                g_row[j] = sigmoid(z[j]);
            }
            for j in 3 * h..4 * h {
                g_row[j] = z[j].tanh();
            }
            for j in 0..h {
                let (i, f, o, g) = (g_row[j], g_row[h + j], g_row[2 * h + j], g_row[3 * h + j]);
                let c = f * c_prev[j] + i * g;
                let tc = c.tanh();
                cells[[t, j]] = c;
                tanh_cells[[t, j]] = tc;
                hidden[[t, j]] = o * tc;
                c_prev[j] = c;
                h_prev[j] = o * tc;
            }
        }

        DirectionCache {
            x: x.to_owned(),
            gates,
            cells,
            tanh_cells,
            hidden,
        }
    }

    fn backprop(
        &self,
        cache: &DirectionCache,
        d_hidden: ArrayView2<f64>,
        grads: &mut LstmDirection,
    ) -> Array2<f64> {
        let h = self.hidden_dim();
        let n = cache.x.nrows();
        let mut dz_all = Array2::<f64>::zeros((n, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);

        for t in (0..n).rev() {
            let g_row = cache.gates.row(t);
            let mut dz = dz_all.row_mut(t);
            for j in 0..h {
                let (i, f, o, g) = (g_row[j], g_row[h + j], g_row[2 * h + j], g_row[3 * h + j]);
                let tc = cache.tanh_cells[[t, j]];
                let c_prev = if t > 0 { cache.cells[[t - 1, j]] } else { 0.0 };
                let dh = d_hidden[[t, j]] + dh_next[j];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev;
                dz[j] = d_i * i * (1.0 - i);
                dz[h + j] = d_f * f * (1.0 - f);
                dz[2 * h + j] = d_o * o * (1.0 - o);
                dz[3 * h + j] = d_g * (1.0 - g * g);
                dc_next[j] = dc * f;
            }
            if t > 0 {
                let h_prev = cache.hidden.row(t - 1);
                let dz = dz_all.row(t);
                // w_hidden += h_prev^T dz
                Zip::from(grads.w_hidden.rows_mut())
                    .and(&h_prev)
                    .for_each(|mut row, &hp| row.scaled_add(hp, &dz));
                dh_next = self.w_hidden.dot(&dz);
            } else {
                dh_next.fill(0.0);
            }
        }

        grads.w_input += &cache.x.t().dot(&dz_all);
        grads.bias += &dz_all.sum_axis(Axis(0));
        dz_all.dot(&self.w_input.t())
    }
}

impl Parameters for LstmDirection {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        out.push((join(prefix, "w_input"), self.w_input.view().into_dyn()));
        out.push((join(prefix, "w_hidden"), self.w_hidden.view().into_dyn()));
        out.push((join(prefix, "bias"), self.bias.view().into_dyn()));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        out.push((join(prefix, "w_input"), self.w_input.view_mut().into_dyn()));
        out.push((join(prefix, "w_hidden"), self.w_hidden.view_mut().into_dyn()));
        out.push((join(prefix, "bias"), self.bias.view_mut().into_dyn()));
    }
}

#[derive(Debug, Clone)]
struct DirectionCache {
    x: Array2<f64>,
    gates: Array2<f64>,
    cells: Array2<f64>,
    tanh_cells: Array2<f64>,
    hidden: Array2<f64>,
}

/// A bidirectional LSTM. Output row `i` is `[forward_i | backward_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

/// Saved activations of a [`LstmParams::forward_train`] call.
#[derive(Debug, Clone)]
pub struct BiLstmCache {
    forward: DirectionCache,
    // Computed on the row-reversed input.
    backward: DirectionCache,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            forward: LstmDirection::zeros(input_dim, hidden_dim),
            backward: LstmDirection::zeros(input_dim, hidden_dim),
        }
    }

    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let forward = LstmDirection::init(input_dim, hidden_dim, rng);
        let backward = LstmDirection::init(input_dim, hidden_dim, rng);
        LstmParams { forward, backward }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    /// Per-direction hidden size.
    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "BiLSTM expects input dim {}, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Forward pass over every row of `x`, keeping what the backward pass needs.
    pub fn forward_train(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, BiLstmCache)> {
        self.check_input(&x)?;
        let h = self.hidden_dim();
        let fwd = self.forward.run(x);
        let reversed = x.slice(s![..;-1, ..]);
        let bwd = self.backward.run(reversed);
        let mut out = Array2::zeros((x.nrows(), 2 * h));
        out.slice_mut(s![.., ..h]).assign(&fwd.hidden);
        out.slice_mut(s![.., h..]).assign(&bwd.hidden.slice(s![..;-1, ..]));
        Ok((
            out,
            BiLstmCache {
                forward: fwd,
                backward: bwd,
            },
        ))
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_train(x)?.0)
    }

    /// Accumulates parameter gradients into `grads` and returns `d loss / d x`.
    pub fn backward(
        &self,
        cache: &BiLstmCache,
        d_out: ArrayView2<f64>,
        grads: &mut LstmParams,
    ) -> Array2<f64> {
        let h = self.hidden_dim();
        let dx_fwd = self
            .forward
            .backprop(&cache.forward, d_out.slice(s![.., ..h]), &mut grads.forward);
        let d_bwd = d_out.slice(s![..;-1, h..]);
        let dx_bwd = self
            .backward
            .backprop(&cache.backward, d_bwd, &mut grads.backward);
        dx_fwd + dx_bwd.slice(s![..;-1, ..])
    }
}

impl Parameters for LstmParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        self.forward.visit(&join(prefix, "forward"), out);
        self.backward.visit(&join(prefix, "backward"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        self.forward.visit_mut(&join(prefix, "forward"), out);
        self.backward.visit_mut(&join(prefix, "backward"), out);
    }
}

/// BiLSTM over a padded sequence. Rows whose `mask` entry is false are
/// skipped entirely: they never enter the recurrence and their output rows
/// are zero.
pub fn bilstm_forward(
    params: &LstmParams,
    input: ArrayView2<f64>,
    mask: &[bool],
) -> Result<Array2<f64>> {
    params.check_input(&input)?;
    if mask.len() != input.nrows() {
        return Err(Error::Shape(format!(
            "mask of length {} for {} rows",
            mask.len(),
            input.nrows()
        )));
    }
    let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let mut out = Array2::zeros((input.nrows(), params.output_dim()));
    if valid.is_empty() {
        return Ok(out);
    }
    let packed = input.select(Axis(0), &valid);
    let packed_out = params.forward(packed.view())?;
    for (row, &i) in valid.iter().enumerate() {
        out.row_mut(i).assign(&packed_out.row(row));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{finite_diff_check, flatten, set_flat, zeros_like};
    use rand::{Rng as _, SeedableRng};

    fn random_input(n: usize, d: usize, rng: &mut Rng) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn output_shape() {
        let mut rng = Rng::seed_from_u64(0);
        let p = LstmParams::init(250, 125, &mut rng);
        let x = random_input(4, 250, &mut rng);
        let y = bilstm_forward(&p, x.view(), &[true; 4]).unwrap();
        assert_eq!(y.dim(), (4, 250));
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let p = LstmParams::zeros(6, 3);
        let mut rng = Rng::seed_from_u64(1);
        let x = random_input(5, 6, &mut rng);
        let y = p.forward(x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = LstmParams::zeros(6, 3);
        let x = Array2::zeros((2, 5));
        assert!(matches!(p.forward(x.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn reversal_swaps_directions() {
        let mut rng = Rng::seed_from_u64(2);
        let p = LstmParams::init(5, 4, &mut rng);
        let x = random_input(6, 5, &mut rng);
        let y = p.forward(x.view()).unwrap();

        let swapped = LstmParams {
            forward: p.backward.clone(),
            backward: p.forward.clone(),
        };
        let x_rev = x.slice(s![..;-1, ..]).to_owned();
        let y_rev = swapped.forward(x_rev.view()).unwrap();
        for i in 0..6 {
            for j in 0..4 {
                assert!((y[[i, j]] - y_rev[[5 - i, 4 + j]]).abs() < 1e-12);
                assert!((y[[i, 4 + j]] - y_rev[[5 - i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn padding_does_not_leak() {
        let mut rng = Rng::seed_from_u64(3);
        let p = LstmParams::init(4, 3, &mut rng);
        let mut x = random_input(7, 4, &mut rng);
        let mask = [true, true, false, true, true, false, false];
        let a = bilstm_forward(&p, x.view(), &mask).unwrap();
        for i in [2, 5, 6] {
            x.row_mut(i).fill(123.0);
        }
        let b = bilstm_forward(&p, x.view(), &mask).unwrap();
        assert_eq!(a, b);
        assert!(a.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::seed_from_u64(4);
        let p = LstmParams::init(3, 2, &mut rng);
        let x = random_input(4, 3, &mut rng);
        let w = random_input(4, 4, &mut rng);

        let loss = |p: &LstmParams, x: &Array2<f64>| (p.forward(x.view()).unwrap() * &w).sum();

        let (_, cache) = p.forward_train(x.view()).unwrap();
        let mut grads = zeros_like(&p);
        let dx = p.backward(&cache, w.view(), &mut grads);

        let flat = flatten(&p);
        let check = finite_diff_check(
            |v| {
                let mut q = p.clone();
                set_flat(&mut q, v);
                loss(&q, &x)
            },
            &flat,
            &flatten(&grads),
            1e-5,
        );
        assert!(check.max_rel_error < 1e-6, "{check:?}");

        let check = finite_diff_check(
            |v| {
                let xv = Array2::from_shape_vec(x.raw_dim(), v.to_vec()).unwrap();
                loss(&p, &xv)
            },
            x.as_slice().unwrap(),
            dx.as_slice().unwrap(),
            1e-5,
        );
        assert!(check.max_rel_error < 1e-6, "{check:?}");
    }
}

//! Linear-chain CRF over boundary labels.
//!
//! The global score of a labeling `y` of an `N x L` emission matrix is
//! `begin[y_0] + sum_i em[i, y_i] + sum_i trans[y_i, y_{i+1}] + end[y_{N-1}]`.
//! Training minimises `log Z - score(y)`.

use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::neural::{join_name, Parameters, Rng};

/// Number of labels in the boundary task.
pub const NUM_LABELS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    /// `trans[a, b]` scores label `a` followed by label `b`.
    pub transitions: Array2<f64>,
    pub begin: Array1<f64>,
    pub end: Array1<f64>,
}

impl CrfParams {
    pub fn zeros(num_labels: usize) -> Self {
        CrfParams {
            transitions: Array2::zeros((num_labels, num_labels)),
            begin: Array1::zeros(num_labels),
            end: Array1::zeros(num_labels),
        }
    }

    pub fn init(num_labels: usize, rng: &mut Rng) -> Self {
        let mut draw = || rng.random_range(-0.1..0.1);
        CrfParams {
            transitions: Array2::from_shape_simple_fn((num_labels, num_labels), &mut draw),
            begin: Array1::from_shape_simple_fn(num_labels, &mut draw),
            end: Array1::from_shape_simple_fn(num_labels, &mut draw),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.begin.len()
    }

    fn check(&self, em: &ArrayView2<f64>) -> Result<()> {
        if em.nrows() == 0 {
            return Err(Error::Shape("emission matrix has no rows".into()));
        }
        if em.ncols() != self.num_labels() {
            return Err(Error::Shape(format!(
                "emissions have {} labels, CRF has {}",
                em.ncols(),
                self.num_labels()
            )));
        }
        Ok(())
    }

    fn check_labels(&self, em: &ArrayView2<f64>, y: &[usize]) -> Result<()> {
        self.check(em)?;
        if y.len() != em.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} positions",
                y.len(),
                em.nrows()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= self.num_labels()) {
            return Err(Error::Shape(format!("label {bad} out of range")));
        }
        Ok(())
    }
}

impl Parameters for CrfParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        out.push((join_name(prefix, "transitions"), self.transitions.view().into_dyn()));
        out.push((join_name(prefix, "begin"), self.begin.view().into_dyn()));
        out.push((join_name(prefix, "end"), self.end.view().into_dyn()));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        out.push((join_name(prefix, "transitions"), self.transitions.view_mut().into_dyn()));
        out.push((join_name(prefix, "begin"), self.begin.view_mut().into_dyn()));
        out.push((join_name(prefix, "end"), self.end.view_mut().into_dyn()));
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn sequence_score(em: ArrayView2<f64>, crf: &CrfParams, y: &[usize]) -> Result<f64> {
    crf.check_labels(&em, y)?;
    let mut score = crf.begin[y[0]] + crf.end[y[y.len() - 1]];
    for (i, &label) in y.iter().enumerate() {
        score += em[[i, label]];
    }
    for pair in y.windows(2) {
        score += crf.transitions[[pair[0], pair[1]]];
    }
    Ok(score)
}

/// Forward log-potentials `alpha[i, y]`: log of the summed scores of every
/// prefix ending in label `y` at position `i`.
fn forward_table(em: &ArrayView2<f64>, crf: &CrfParams) -> Array2<f64> {
    let (n, l) = em.dim();
    let mut alpha = Array2::zeros((n, l));
    for y in 0..l {
        alpha[[0, y]] = crf.begin[y] + em[[0, y]];
    }
    for i in 1..n {
        for y in 0..l {
            let prev = (0..l).map(|p| alpha[[i - 1, p]] + crf.transitions[[p, y]]);
            alpha[[i, y]] = log_sum_exp(prev) + em[[i, y]];
        }
    }
    alpha
}

fn backward_table(em: &ArrayView2<f64>, crf: &CrfParams) -> Array2<f64> {
    let (n, l) = em.dim();
    let mut beta = Array2::zeros((n, l));
    for y in 0..l {
        beta[[n - 1, y]] = crf.end[y];
    }
    for i in (0..n - 1).rev() {
        for y in 0..l {
            let next =
                (0..l).map(|q| crf.transitions[[y, q]] + em[[i + 1, q]] + beta[[i + 1, q]]);
            beta[[i, y]] = log_sum_exp(next);
        }
    }
    beta
}

fn log_z(alpha: &Array2<f64>, crf: &CrfParams) -> f64 {
    let last = alpha.nrows() - 1;
    log_sum_exp((0..crf.num_labels()).map(|y| alpha[[last, y]] + crf.end[y]))
}

/// `log sum_y exp(score(y))` by the forward algorithm in log space.
pub fn log_partition(em: ArrayView2<f64>, crf: &CrfParams) -> Result<f64> {
    crf.check(&em)?;
    Ok(log_z(&forward_table(&em, crf), crf))
}

/// Negative log-likelihood of `y`; never negative.
pub fn crf_nll(em: ArrayView2<f64>, crf: &CrfParams, y: &[usize]) -> Result<f64> {
    let score = sequence_score(em, crf, y)?;
    if crf.num_labels() == 1 {
        return Ok(0.0);
    }
    let z = log_partition(em, crf)?;
    Ok((z - score).max(0.0))
}

/// Negative log-likelihood plus its gradient. CRF parameter gradients are
/// added to `grads`; the emission gradient is returned.
pub fn crf_nll_backward(
    em: ArrayView2<f64>,
    crf: &CrfParams,
    y: &[usize],
    grads: &mut CrfParams,
) -> Result<(f64, Array2<f64>)> {
    let score = sequence_score(em, crf, y)?;
    let (n, l) = em.dim();
    let alpha = forward_table(&em, crf);
    let beta = backward_table(&em, crf);
    let z = log_z(&alpha, crf);

    let mut d_em = Array2::zeros((n, l));
    for i in 0..n {
        for label in 0..l {
            d_em[[i, label]] = (alpha[[i, label]] + beta[[i, label]] - z).exp();
        }
        d_em[[i, y[i]]] -= 1.0;
    }
    for label in 0..l {
        grads.begin[label] += d_em[[0, label]] + if label == y[0] { 1.0 } else { 0.0 };
        grads.end[label] += d_em[[n - 1, label]] + if label == y[n - 1] { 1.0 } else { 0.0 };
    }
    grads.begin[y[0]] -= 1.0;
    grads.end[y[n - 1]] -= 1.0;
    for i in 0..n.saturating_sub(1) {
        for a in 0..l {
            for b in 0..l {
                let log_p = alpha[[i, a]] + crf.transitions[[a, b]] + em[[i + 1, b]]
                    + beta[[i + 1, b]]
                    - z;
                grads.transitions[[a, b]] += log_p.exp();
            }
        }
        grads.transitions[[y[i], y[i + 1]]] -= 1.0;
    }
    Ok(((z - score).max(0.0), d_em))
}

/// Highest-scoring labeling. Ties go to the lower label index, both for the
/// final label and at every backtrack step.
pub fn viterbi(em: ArrayView2<f64>, crf: &CrfParams) -> Result<Vec<usize>> {
    crf.check(&em)?;
    let (n, l) = em.dim();
    let mut delta = Array2::zeros((n, l));
    let mut back = Array2::<usize>::zeros((n, l));
    for y in 0..l {
        delta[[0, y]] = crf.begin[y] + em[[0, y]];
    }
    for i in 1..n {
        for y in 0..l {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for p in 0..l {
                let v = delta[[i - 1, p]] + crf.transitions[[p, y]];
                if v > best_val {
                    best_val = v;
                    best = p;
                }
            }
            delta[[i, y]] = best_val + em[[i, y]];
            back[[i, y]] = best;
        }
    }
    let mut last = 0;
    let mut best_val = f64::NEG_INFINITY;
    for y in 0..l {
        let v = delta[[n - 1, y]] + crf.end[y];
        if v > best_val {
            best_val = v;
            last = y;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for i in (1..n).rev() {
        path[i - 1] = back[[i, path[i]]];
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params(t: Array2<f64>, b: Array1<f64>, e: Array1<f64>) -> CrfParams {
        CrfParams {
            transitions: t,
            begin: b,
            end: e,
        }
    }

    #[test]
    fn single_position_score() {
        let em = array![[0.5, 1.0]];
        let crf = params(Array2::zeros((2, 2)), array![0.1, 0.2], array![0.3, 0.4]);
        let s = sequence_score(em.view(), &crf, &[1]).unwrap();
        assert!((s - 1.6).abs() < 1e-12);
        // log(e^0.9 + e^1.6), enumerated
        let z = log_partition(em.view(), &crf).unwrap();
        assert!((z - (0.9f64.exp() + 1.6f64.exp()).ln()).abs() < 1e-12);
        assert!((z - 2.003_186_048_885_458).abs() < 1e-12);
        let nll = crf_nll(em.view(), &crf, &[1]).unwrap();
        assert!((nll - 0.403_186_048_885_457_7).abs() < 1e-12);
    }

    #[test]
    fn two_position_score() {
        let em = array![[1.0, 0.0], [0.0, 1.0]];
        let crf = params(array![[0.5, -0.5], [0.2, 0.1]], Array1::zeros(2), Array1::zeros(2));
        let s = sequence_score(em.view(), &crf, &[0, 1]).unwrap();
        assert!((s - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_parameters() {
        let crf = CrfParams::zeros(2);
        let em = Array2::zeros((3, 2));
        assert_eq!(sequence_score(em.view(), &crf, &[0, 1, 1]).unwrap(), 0.0);
        let z = log_partition(em.view(), &crf).unwrap();
        assert!((z - 8f64.ln()).abs() < 1e-12);
        let nll = crf_nll(em.view(), &crf, &[1, 0, 1]).unwrap();
        assert!((nll - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_label_has_zero_loss() {
        let crf = params(array![[0.3]], array![0.1], array![-0.2]);
        let em = array![[1.0], [2.0], [-1.0]];
        assert_eq!(crf_nll(em.view(), &crf, &[0, 0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn viterbi_simple_cases() {
        let crf = CrfParams::zeros(2);
        assert_eq!(viterbi(array![[0.5, 1.0]].view(), &crf).unwrap(), vec![1]);
        let em = array![[0.2, -0.1], [0.0, 3.0], [1.0, 1.0], [-1.0, 0.5]];
        // decoupled chain: per-row argmax, ties to label 0
        assert_eq!(viterbi(em.view(), &crf).unwrap(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn shape_errors() {
        let crf = CrfParams::zeros(2);
        let em = Array2::zeros((2, 2));
        assert!(sequence_score(em.view(), &crf, &[0]).is_err());
        assert!(sequence_score(em.view(), &crf, &[0, 2]).is_err());
        assert!(log_partition(Array2::zeros((0, 2)).view(), &crf).is_err());
        assert!(viterbi(Array2::zeros((2, 3)).view(), &crf).is_err());
    }
}

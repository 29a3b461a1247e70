//! Language critic for the Wasserstein adversarial objective.
//!
//! The critic scores a sentence's common features: higher means more
//! English-like. Its objective is `mean(score(en)) - mean(score(zh))`, which
//! critic steps maximise and generator steps (scaled by lambda) minimise. The
//! weights are clipped to `[-c, c]` after each critic update.

use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD};

use crate::error::{Error, Result};
use crate::neural::{
    join_name, sigmoid, ConvBlockParams, ConvCache, LinearParams, Parameters, Rng,
};

pub const DEFAULT_CLIP: f64 = 0.01;
pub const WINDOW_SIZES: [usize; 3] = [3, 4, 5];

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub conv: ConvBlockParams,
    pub output: LinearParams,
    pub clip: f64,
    /// Squash the score through a sigmoid. Off by default: the Wasserstein
    /// objective needs an unbounded critic.
    pub sigmoid_output: bool,
}

/// Saved state of one [`Discriminator::score_train`] call.
#[derive(Debug, Clone)]
pub struct CriticCache {
    conv: ConvCache,
    pooled: Array1<f64>,
    score: f64,
}

impl Discriminator {
    pub fn init(
        feature_dim: usize,
        n_filters: usize,
        leaky_slope: f64,
        clip: f64,
        sigmoid_output: bool,
        rng: &mut Rng,
    ) -> Self {
        let conv = ConvBlockParams::init(feature_dim, &WINDOW_SIZES, n_filters, leaky_slope, rng);
        let output = LinearParams::init(conv.output_dim(), 1, rng);
        let mut q = Discriminator {
            conv,
            output,
            clip,
            sigmoid_output,
        };
        clip_weights(&mut q, clip);
        q
    }

    pub fn zeros(feature_dim: usize, n_filters: usize, leaky_slope: f64) -> Self {
        let conv = ConvBlockParams::zeros(feature_dim, &WINDOW_SIZES, n_filters, leaky_slope);
        let output = LinearParams::zeros(conv.output_dim(), 1);
        Discriminator {
            conv,
            output,
            clip: DEFAULT_CLIP,
            sigmoid_output: false,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.conv.input_dim()
    }

    pub fn score_train(&self, features: ArrayView2<f64>) -> Result<(f64, CriticCache)> {
        if features.ncols() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "critic expects feature dim {}, got {}",
                self.feature_dim(),
                features.ncols()
            )));
        }
        let (pooled, conv) = self.conv.forward_train(features)?;
        let linear = pooled.dot(&self.output.weight.column(0)) + self.output.bias[0];
        let score = if self.sigmoid_output {
            sigmoid(linear)
        } else {
            linear
        };
        Ok((
            score,
            CriticCache {
                conv,
                pooled,
                score,
            },
        ))
    }

    /// Backward pass of `d_score * score`. Parameter gradients go to `grads`
    /// when given; the feature gradient is returned.
    pub fn backward(
        &self,
        cache: &CriticCache,
        d_score: f64,
        grads: Option<&mut Discriminator>,
    ) -> Array2<f64> {
        let d_linear = if self.sigmoid_output {
            d_score * cache.score * (1.0 - cache.score)
        } else {
            d_score
        };
        let d_pooled = self.output.weight.column(0).to_owned() * d_linear;
        match grads {
            Some(g) => {
                g.output
                    .weight
                    .column_mut(0)
                    .scaled_add(d_linear, &cache.pooled);
                g.output.bias[0] += d_linear;
                self.conv.backward(&cache.conv, d_pooled.view(), &mut g.conv)
            }
            None => {
                let mut scratch = crate::neural::zeros_like(&self.conv);
                self.conv.backward(&cache.conv, d_pooled.view(), &mut scratch)
            }
        }
    }
}

impl Parameters for Discriminator {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        self.conv.visit(&join_name(prefix, "conv"), out);
        self.output.visit(&join_name(prefix, "output"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        self.conv.visit_mut(&join_name(prefix, "conv"), out);
        self.output.visit_mut(&join_name(prefix, "output"), out);
    }
}

/// Common features of a batch of sentences from each language.
#[derive(Debug, Clone, Default)]
pub struct CriticBatch {
    pub en_features: Vec<Array2<f64>>,
    pub zh_features: Vec<Array2<f64>>,
}

pub fn critic_score(q: &Discriminator, features: ArrayView2<f64>) -> Result<f64> {
    Ok(q.score_train(features)?.0)
}

/// `mean(score(en)) - mean(score(zh))`.
pub fn critic_objective(q: &Discriminator, batch: &CriticBatch) -> Result<f64> {
    if batch.en_features.is_empty() || batch.zh_features.is_empty() {
        return Err(Error::Usage(
            "critic objective needs sentences from both languages".into(),
        ));
    }
    let mean = |side: &[Array2<f64>]| -> Result<f64> {
        let mut total = 0.0;
        for f in side {
            total += critic_score(q, f.view())?;
        }
        Ok(total / side.len() as f64)
    };
    Ok(mean(&batch.en_features)? - mean(&batch.zh_features)?)
}

/// Gradient of the critic objective with respect to the critic parameters.
/// Returns the objective and the gradient of `-objective`, ready for a
/// minimising optimizer step.
pub fn critic_ascent_gradient(q: &Discriminator, batch: &CriticBatch) -> Result<(f64, Discriminator)> {
    if batch.en_features.is_empty() || batch.zh_features.is_empty() {
        return Err(Error::Usage(
            "critic objective needs sentences from both languages".into(),
        ));
    }
    let mut grads = crate::neural::zeros_like(q);
    let mut objective = 0.0;
    for (side, sign) in [(&batch.en_features, 1.0), (&batch.zh_features, -1.0)] {
        let weight = sign / side.len() as f64;
        for f in side {
            let (score, cache) = q.score_train(f.view())?;
            objective += weight * score;
            q.backward(&cache, -weight, Some(&mut grads));
        }
    }
    Ok((objective, grads))
}

/// Clamp every critic parameter into `[-c, c]`.
pub fn clip_weights(q: &mut Discriminator, c: f64) {
    for (_, mut t) in q.params_mut() {
        t.mapv_inplace(|v| v.clamp(-c, c));
    }
}

//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng as _, SeedableRng};

use xseg::config::{Regime, TrainingConfig};
use xseg::corpus::{Corpus, LabeledSentence, Language, Token};
use xseg::crf::CrfParams;
use xseg::embeddings::EmbeddingTable;
use xseg::eval::{evaluate, Metrics};
use xseg::neural::Rng;
use xseg::synthetic::{generate_splits, make_embeddings, SyntheticSpec};
use xseg::trainer::{train, SegmenterModel, TrainReport, TrainingData};

pub const TRANSFER_LAMBDA: f64 = 100.0;

/// Paired toy languages at the size used by the transfer experiments.
pub struct Toy {
    pub words: Arc<EmbeddingTable>,
    pub en: Corpus,
    pub zh_unlabeled: Corpus,
    /// Target labeled pool; experiments take prefixes of it.
    pub zh_pool: Corpus,
    pub zh_val: Corpus,
    pub zh_test: Corpus,
}

impl Toy {
    pub fn new() -> Toy {
        let spec = SyntheticSpec::default();
        let words = Arc::new(make_embeddings(&spec).unwrap());
        let en = generate_splits(&spec, Language::En, &[2000]).unwrap().remove(0);
        let mut zh = generate_splits(&spec, Language::Zh, &[2000, 200, 200, 1000]).unwrap();
        let zh_test = zh.pop().unwrap();
        let zh_val = zh.pop().unwrap();
        let zh_pool = zh.pop().unwrap();
        let zh_unlabeled = zh.pop().unwrap().without_labels();
        Toy {
            words,
            en,
            zh_unlabeled,
            zh_pool,
            zh_val,
            zh_test,
        }
    }

    pub fn config(&self, regime: Regime, seed: u64) -> TrainingConfig {
        TrainingConfig {
            regime,
            seed,
            lambda: TRANSFER_LAMBDA,
            word_dim: self.words.dim(),
            pos_dim: 8,
            n_filters: 16,
            max_epochs: 10,
            patience: 5,
            ..TrainingConfig::default()
        }
    }

    /// Train with `n_labeled` target sentences (ignored by the zero-label
    /// regimes) and score on the target test split.
    pub fn run(&self, cfg: &TrainingConfig, n_labeled: usize) -> (SegmenterModel, TrainReport, Metrics) {
        let labeled = self.zh_pool.take(n_labeled);
        let data = TrainingData {
            en_labeled: &self.en,
            zh_labeled: cfg.regime.uses_target_labels().then_some(&labeled),
            zh_unlabeled: (cfg.regime == Regime::Zl).then_some(&self.zh_unlabeled),
            val: &self.zh_val,
        };
        let (model, report) = train(self.words.clone(), &data, cfg).unwrap();
        let metrics = evaluate(&model.segment_corpus(&self.zh_test).unwrap(), &self.zh_test).unwrap();
        (model, report, metrics)
    }
}

/// A small synthetic setup: word vectors of dimension 4, a handful of
/// sentences per language.
pub struct Tiny {
    pub words: Arc<EmbeddingTable>,
    pub en: Corpus,
    pub zh: Corpus,
}

impl Tiny {
    pub fn new(n: usize) -> Tiny {
        let spec = SyntheticSpec {
            word_dim: 4,
            edus_per_sentence: (1, 2),
            edu_length: (2, 3),
            ..SyntheticSpec::default()
        };
        let words = Arc::new(make_embeddings(&spec).unwrap());
        let en = generate_splits(&spec, Language::En, &[n]).unwrap().remove(0);
        let zh = generate_splits(&spec, Language::Zh, &[n]).unwrap().remove(0);
        Tiny { words, en, zh }
    }

    pub fn config(&self, regime: Regime) -> TrainingConfig {
        TrainingConfig {
            regime,
            seed: 3,
            lambda: 1.0,
            batch: 4,
            word_dim: self.words.dim(),
            pos_dim: 2,
            n_filters: 2,
            max_epochs: 5,
            patience: 5,
            ..TrainingConfig::default()
        }
    }
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

pub fn random_crf(num_labels: usize, scale: f64, rng: &mut Rng) -> CrfParams {
    let mut crf = CrfParams::zeros(num_labels);
    crf.transitions = random_matrix(num_labels, num_labels, scale, rng);
    crf.begin = crf.begin.mapv(|_| rng.random_range(-scale..scale));
    crf.end = crf.end.mapv(|_| rng.random_range(-scale..scale));
    crf
}

/// Every labeling of `n` positions over `l` labels, in lexicographic order.
pub fn all_labelings(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..l).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// A sentence of one-character tokens with the given labels.
pub fn sentence(surfaces: &[&str], language: Language, labels: Option<Vec<usize>>) -> LabeledSentence {
    let tokens = surfaces
        .iter()
        .map(|s| Token::new(*s, "X").unwrap())
        .collect();
    LabeledSentence::new(tokens, language, labels).unwrap()
}

pub mod grad {
    use ndarray::{Array1, Array2};

    use super::*;
    use xseg::adversarial::Discriminator;
    use xseg::adversarial::WINDOW_SIZES;
    use xseg::crf::{crf_nll, crf_nll_backward};
    use xseg::neural::{
        finite_diff_check, flatten, parameter_count, set_flat, zeros_like, ConvBlockParams,
        LinearParams, LstmParams, Parameters,
    };

    pub const H: f64 = 1e-5;
    pub const MAX_PARAMS: usize = 2000;

    /// Worst relative error and the number of checked coordinates.
    #[derive(Debug, Clone, Copy)]
    pub struct Outcome {
        pub max_rel_error: f64,
        pub checked: usize,
    }

    fn weights(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn merge(a: Outcome, b: Outcome) -> Outcome {
        Outcome {
            max_rel_error: a.max_rel_error.max(b.max_rel_error),
            checked: a.checked + b.checked,
        }
    }

    fn check(f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> Outcome {
        Outcome {
            max_rel_error: finite_diff_check(f, x, analytic, H).max_rel_error,
            checked: x.len(),
        }
    }

    /// Check `params` and an input matrix for a loss `loss(params, x)` whose
    /// analytic gradients come from `backward(params, x) -> (grads, dx)`.
    fn check_layer<P: Parameters + Clone>(
        params: &P,
        x: &Array2<f64>,
        loss: impl Fn(&P, &Array2<f64>) -> f64,
        backward: impl Fn(&P, &Array2<f64>) -> (P, Array2<f64>),
    ) -> Outcome {
        assert!(parameter_count(params) <= MAX_PARAMS);
        let (g, dx) = backward(params, x);
        let p0 = flatten(params);
        let by_params = check(
            |v| {
                let mut p = params.clone();
                set_flat(&mut p, v);
                loss(&p, x)
            },
            &p0,
            &flatten(&g),
        );
        let x0: Vec<f64> = x.iter().copied().collect();
        let by_input = check(
            |v| loss(params, &Array2::from_shape_vec(x.raw_dim(), v.to_vec()).unwrap()),
            &x0,
            &dx.iter().copied().collect::<Vec<_>>(),
        );
        merge(by_params, by_input)
    }

    pub fn crf(seed: u64) -> Outcome {
        let mut r = rng(seed);
        let n = 6;
        let em = random_matrix(n, 2, 2.0, &mut r);
        let crf = random_crf(2, 1.0, &mut r);
        let y: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        let mut g = CrfParams::zeros(2);
        let (_, d_em) = crf_nll_backward(em.view(), &crf, &y, &mut g).unwrap();
        let by_params = check(
            |v| {
                let mut c = crf.clone();
                set_flat(&mut c, v);
                crf_nll(em.view(), &c, &y).unwrap()
            },
            &flatten(&crf),
            &flatten(&g),
        );
        let by_em = check(
            |v| {
                let e = Array2::from_shape_vec((n, 2), v.to_vec()).unwrap();
                crf_nll(e.view(), &crf, &y).unwrap()
            },
            &em.iter().copied().collect::<Vec<_>>(),
            &d_em.iter().copied().collect::<Vec<_>>(),
        );
        merge(by_params, by_em)
    }

    pub fn bilstm(seed: u64) -> Outcome {
        let mut r = rng(seed);
        let (n, d, h) = (5, 4, 3);
        let params = LstmParams::init(d, h, &mut r);
        let x = random_matrix(n, d, 1.0, &mut r);
        let w = weights(n * 2 * h, seed + 1);
        check_layer(
            &params,
            &x,
            |p, x| dot(p.forward(x.view()).unwrap().as_slice().unwrap(), &w),
            |p, x| {
                let (_, cache) = p.forward_train(x.view()).unwrap();
                let d_out = Array2::from_shape_vec((n, 2 * h), w.clone()).unwrap();
                let mut g = zeros_like(p);
                let dx = p.backward(&cache, d_out.view(), &mut g);
                (g, dx)
            },
        )
    }

    pub fn conv(seed: u64) -> Outcome {
        let mut r = rng(seed);
        let (n, d, filters) = (7, 3, 3);
        let params = ConvBlockParams::init(d, &WINDOW_SIZES, filters, 0.01, &mut r);
        let x = random_matrix(n, d, 1.0, &mut r);
        let w = weights(params.output_dim(), seed + 1);
        check_layer(
            &params,
            &x,
            |p, x| dot(p.forward_train(x.view()).unwrap().0.as_slice().unwrap(), &w),
            |p, x| {
                let (_, cache) = p.forward_train(x.view()).unwrap();
                let mut g = zeros_like(p);
                let dx = p.backward(&cache, Array1::from(w.clone()).view(), &mut g);
                (g, dx)
            },
        )
    }

    pub fn linear(seed: u64) -> Outcome {
        let mut r = rng(seed);
        let (n, d, o) = (4, 5, 3);
        let params = LinearParams::init(d, o, &mut r);
        let x = random_matrix(n, d, 1.0, &mut r);
        let w = weights(n * o, seed + 1);
        check_layer(
            &params,
            &x,
            |p, x| dot(p.forward(x.view()).unwrap().as_slice().unwrap(), &w),
            |p, x| {
                let d_out = Array2::from_shape_vec((n, o), w.clone()).unwrap();
                let mut g = zeros_like(p);
                let dx = p.backward(x.view(), d_out.view(), &mut g);
                (g, dx)
            },
        )
    }

    /// The full generator objective, labeled cross-entropy plus the
    /// adversarial term, against every generator parameter. The critic is
    /// re-drawn with a wide clip so the adversarial gradient is not lost in
    /// rounding noise.
    pub fn generator(regime: Regime, seed: u64) -> Outcome {
        let tiny = Tiny::new(3);
        let cfg = tiny.config(regime);
        let mut model = SegmenterModel::new(&cfg, tiny.words.clone(), &xseg::corpus::UNIVERSAL_TAGS.map(String::from)).unwrap();
        model.critic = Discriminator::init(
            model.critic.feature_dim(),
            cfg.n_filters,
            cfg.leaky_slope,
            0.5,
            false,
            &mut rng(seed),
        );
        assert!(parameter_count(&model.generator) <= MAX_PARAMS);
        let en: Vec<&LabeledSentence> = tiny.en.sentences().iter().collect();
        let unlabeled = tiny.zh.without_labels();
        let zh: Vec<&LabeledSentence> = if regime.uses_target_labels() {
            tiny.zh.sentences().iter().collect()
        } else {
            unlabeled.sentences().iter().collect()
        };
        let step = model.generator_step(&en, &zh, None, None).unwrap();
        if regime.is_adversarial() {
            assert!(step.jq.is_some());
        }
        check(
            |v| {
                let mut m = model.clone();
                set_flat(&mut m.generator, v);
                m.generator_step(&en, &zh, None, None).unwrap().loss
            },
            &flatten(&model.generator),
            &flatten(&step.grads),
        )
    }
}

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::adversarial::Discriminator;
use crate::config::{Regime, TrainingConfig};
use crate::corpus::{Corpus, Language, LabeledSentence, BOUNDARY, UNIVERSAL_TAGS};
use crate::crf::{crf_nll_backward, viterbi, CrfParams, NUM_LABELS};
use crate::embeddings::{encode_sentence, EmbeddingTable, InputEncoding, PosTable};
use crate::error::{Error, Result};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::{
    dropout, join_name, zeros_like, BiLstmCache, DropoutMask, LinearParams, LstmParams,
    Parameters, Rng,
};

use super::rng_stream;
use super::streams;

/// What the segmenter reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Wiring {
    /// `F(x)` only: both languages share every segmenter input.
    CommonOnly,
    /// `[F(x) | H_lang(x)]`.
    Concat,
}

impl Wiring {
    pub fn for_regime(regime: Regime) -> Self {
        if regime.uses_target_labels() {
            Wiring::Concat
        } else {
            Wiring::CommonOnly
        }
    }
}

/// Everything the generator objective trains.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub pos: PosTable,
    pub common: LstmParams,
    pub private_zh: LstmParams,
    pub private_en: LstmParams,
    pub segmenter: LstmParams,
    pub projection: LinearParams,
    pub crf: CrfParams,
}

impl GeneratorParams {
    pub fn private_for(&self, language: &Language) -> Option<&LstmParams> {
        match language {
            Language::Zh => Some(&self.private_zh),
            Language::En => Some(&self.private_en),
            Language::Other(_) => None,
        }
    }

    fn private_for_mut(&mut self, language: &Language) -> Option<&mut LstmParams> {
        match language {
            Language::Zh => Some(&mut self.private_zh),
            Language::En => Some(&mut self.private_en),
            Language::Other(_) => None,
        }
    }
}

impl Parameters for GeneratorParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        self.pos.visit(&join_name(prefix, "pos"), out);
        self.common.visit(&join_name(prefix, "common"), out);
        self.private_zh.visit(&join_name(prefix, "private.zh"), out);
        self.private_en.visit(&join_name(prefix, "private.en"), out);
        self.segmenter.visit(&join_name(prefix, "segmenter"), out);
        self.projection.visit(&join_name(prefix, "projection"), out);
        self.crf.visit(&join_name(prefix, "crf"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        self.pos.visit_mut(&join_name(prefix, "pos"), out);
        self.common.visit_mut(&join_name(prefix, "common"), out);
        self.private_zh.visit_mut(&join_name(prefix, "private.zh"), out);
        self.private_en.visit_mut(&join_name(prefix, "private.en"), out);
        self.segmenter.visit_mut(&join_name(prefix, "segmenter"), out);
        self.projection.visit_mut(&join_name(prefix, "projection"), out);
        self.crf.visit_mut(&join_name(prefix, "crf"), out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterModel {
    pub config: TrainingConfig,
    pub wiring: Wiring,
    pub words: Arc<EmbeddingTable>,
    pub generator: GeneratorParams,
    pub critic: Discriminator,
    /// Extra key-value pairs echoed into checkpoints (data paths and such).
    pub provenance: serde_json::Map<String, serde_json::Value>,
}

/// Forward state of the common extractor for one sentence.
#[derive(Debug, Clone)]
pub struct CommonPass {
    pub encoding: InputEncoding,
    cache: BiLstmCache,
    mask: DropoutMask,
    /// `F(x)` after dropout.
    pub features: Array2<f64>,
}

#[derive(Debug, Clone)]
struct SegmenterPass {
    private: Option<(BiLstmCache, DropoutMask)>,
    seg_cache: BiLstmCache,
    seg_mask: DropoutMask,
    seg_out: Array2<f64>,
    emissions: Array2<f64>,
}

/// Result of one generator objective evaluation.
#[derive(Debug, Clone)]
pub struct GeneratorStep {
    /// Mean CRF negative log-likelihood over the labeled sentences.
    pub jp: f64,
    /// Critic objective on the step's batches, when adversarial.
    pub jq: Option<f64>,
    /// `jp + lambda * jq`.
    pub loss: f64,
    pub grads: GeneratorParams,
}

pub(crate) fn tags_for(cfg: &TrainingConfig, corpora: &[&Corpus]) -> Vec<String> {
    match cfg.pos_tagset {
        crate::config::PosTagset::Universal => {
            UNIVERSAL_TAGS.iter().map(|t| t.to_string()).collect()
        }
        crate::config::PosTagset::LanguageSpecific => {
            let mut tags: Vec<String> = corpora
                .iter()
                .flat_map(|c| c.sentences())
                .flat_map(|s| s.tokens())
                .map(|t| t.upos().to_string())
                .collect();
            tags.sort();
            tags.dedup();
            tags
        }
    }
}

impl SegmenterModel {
    /// Freshly initialised model. Components are always drawn in the same
    /// order from the init stream, so regimes sharing a seed share initial
    /// weights wherever their shapes agree.
    pub fn new(cfg: &TrainingConfig, words: Arc<EmbeddingTable>, pos_tags: &[String]) -> Result<Self> {
        cfg.validate()?;
        if words.dim() != cfg.word_dim {
            return Err(Error::Config(format!(
                "word_dim is {} but the embeddings have dimension {}",
                cfg.word_dim,
                words.dim()
            )));
        }
        let wiring = Wiring::for_regime(cfg.regime);
        let d_in = cfg.word_dim + cfg.pos_dim;
        let seg_in = match wiring {
            Wiring::CommonOnly => d_in,
            Wiring::Concat => 2 * d_in,
        };
        let mut rng = rng_stream(cfg.seed, streams::INIT);
        let pos = PosTable::new(pos_tags, cfg.pos_dim, &mut rng)?;
        let common = LstmParams::init(d_in, d_in / 2, &mut rng);
        let private_zh = LstmParams::init(d_in, d_in / 2, &mut rng);
        let private_en = LstmParams::init(d_in, d_in / 2, &mut rng);
        let segmenter = LstmParams::init(seg_in, seg_in / 2, &mut rng);
        let projection = LinearParams::init(segmenter.output_dim(), NUM_LABELS, &mut rng);
        let crf = CrfParams::init(NUM_LABELS, &mut rng);
        let critic = Discriminator::init(
            common.output_dim(),
            cfg.n_filters,
            cfg.leaky_slope,
            cfg.clip_c,
            cfg.sigmoid_output,
            &mut rng,
        );
        Ok(SegmenterModel {
            config: cfg.clone(),
            wiring,
            words,
            generator: GeneratorParams {
                pos,
                common,
                private_zh,
                private_en,
                segmenter,
                projection,
                crf,
            },
            critic,
            provenance: serde_json::Map::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.word_dim + self.config.pos_dim
    }

    /// `F(x)`, with dropout when `rng` is given.
    pub fn common_pass(&self, sentence: &LabeledSentence, rng: Option<&mut Rng>) -> Result<CommonPass> {
        let encoding = encode_sentence(sentence, &self.words, &self.generator.pos);
        let (out, cache) = self.generator.common.forward_train(encoding.matrix.view())?;
        let (features, mask) = apply_dropout(out.view(), self.config.dropout, rng)?;
        Ok(CommonPass {
            encoding,
            cache,
            mask,
            features,
        })
    }

    fn segmenter_pass(
        &self,
        sentence: &LabeledSentence,
        common: &CommonPass,
        mut rng: Option<&mut Rng>,
    ) -> Result<SegmenterPass> {
        let (seg_in, private) = match self.wiring {
            Wiring::CommonOnly => (common.features.clone(), None),
            Wiring::Concat => {
                let h = self.generator.private_for(sentence.language()).ok_or_else(|| {
                    Error::Usage(format!(
                        "no private extractor for language {}",
                        sentence.language()
                    ))
                })?;
                let (out, cache) = h.forward_train(common.encoding.matrix.view())?;
                let (out, mask) = apply_dropout(out.view(), self.config.dropout, rng.as_deref_mut())?;
                let joined = ndarray::concatenate(Axis(1), &[common.features.view(), out.view()])
                    .expect("row counts agree");
                (joined, Some((cache, mask)))
            }
        };
        let (out, seg_cache) = self.generator.segmenter.forward_train(seg_in.view())?;
        let (seg_out, seg_mask) = apply_dropout(out.view(), self.config.dropout, rng)?;
        let emissions = self.generator.projection.forward(seg_out.view())?;
        Ok(SegmenterPass {
            private,
            seg_cache,
            seg_mask,
            seg_out,
            emissions,
        })
    }

    /// Backward through the segmenter (when labeled) and the extractors.
    fn backward(
        &self,
        sentence: &LabeledSentence,
        common: &CommonPass,
        seg: Option<(&SegmenterPass, &Array2<f64>)>,
        d_features_extra: Option<Array2<f64>>,
        grads: &mut GeneratorParams,
    ) {
        let d_in = self.input_dim();
        let mut d_features = d_features_extra.unwrap_or_else(|| Array2::zeros(common.features.raw_dim()));
        let mut d_input = Array2::<f64>::zeros(common.encoding.matrix.raw_dim());
        if let Some((pass, d_em)) = seg {
            let mut d_seg_out =
                self.generator
                    .projection
                    .backward(pass.seg_out.view(), d_em.view(), &mut grads.projection);
            pass.seg_mask.apply(&mut d_seg_out);
            let d_seg_in =
                self.generator
                    .segmenter
                    .backward(&pass.seg_cache, d_seg_out.view(), &mut grads.segmenter);
            d_features += &d_seg_in.slice(s![.., ..d_in]);
            if let Some((cache, mask)) = &pass.private {
                let mut d_h = d_seg_in.slice(s![.., d_in..]).to_owned();
                mask.apply(&mut d_h);
                let h = self
                    .generator
                    .private_for(sentence.language())
                    .expect("checked in the forward pass");
                let g = grads
                    .private_for_mut(sentence.language())
                    .expect("checked in the forward pass");
                d_input += &h.backward(cache, d_h.view(), g);
            }
        }
        common.mask.apply(&mut d_features);
        d_input += &self
            .generator
            .common
            .backward(&common.cache, d_features.view(), &mut grads.common);
        if self.generator.pos.trainable {
            let dw = self.config.word_dim;
            for (i, &row) in common.encoding.pos_rows.iter().enumerate() {
                let mut target = grads.pos.vectors.row_mut(row);
                target += &d_input.slice(s![i, dw..]);
            }
        }
    }

    /// The generator objective
    /// `mean NLL(labeled) + lambda * (mean Q(F(en)) - mean Q(F(zh)))`
    /// and its gradient with the critic frozen.
    ///
    /// `en` sentences are labeled; `zh` sentences are labeled under the LL
    /// wirings and unlabeled under ZL. The adversarial term is present only
    /// for adversarial regimes with both sides non-empty. Labeled passes
    /// draw dropout from `dropout_rng`, unlabeled target passes from
    /// `unlabeled_rng`; `None` disables dropout.
    pub fn generator_step(
        &self,
        en: &[&LabeledSentence],
        zh: &[&LabeledSentence],
        mut dropout_rng: Option<&mut Rng>,
        mut unlabeled_rng: Option<&mut Rng>,
    ) -> Result<GeneratorStep> {
        let lambda = self.config.lambda;
        let adversarial = self.config.regime.is_adversarial() && !en.is_empty() && !zh.is_empty();
        let n_labeled = en.iter().chain(zh).filter(|s| s.is_labeled()).count();
        if n_labeled == 0 {
            return Err(Error::Usage("a generator step needs labeled sentences".into()));
        }
        let mut grads = zeros_like(&self.generator);
        let mut jp = 0.0;
        let mut jq = 0.0;
        for (side, sign) in [(en, 1.0), (zh, -1.0)] {
            for sentence in side {
                let labeled = sentence.is_labeled();
                let mut rng = if labeled {
                    dropout_rng.as_deref_mut()
                } else {
                    unlabeled_rng.as_deref_mut()
                };
                let common = self.common_pass(sentence, rng.as_deref_mut())?;
                let mut d_extra = None;
                if adversarial {
                    let weight = sign / side.len() as f64;
                    let (score, cache) = self.critic.score_train(common.features.view())?;
                    jq += weight * score;
                    if lambda != 0.0 {
                        d_extra = Some(self.critic.backward(&cache, lambda * weight, None));
                    }
                }
                let seg = match sentence.labels() {
                    Some(y) => {
                        let pass = self.segmenter_pass(sentence, &common, rng)?;
                        let (nll, mut d_em) = crf_nll_backward(
                            pass.emissions.view(),
                            &self.generator.crf,
                            y,
                            &mut grads.crf,
                        )?;
                        jp += nll / n_labeled as f64;
                        d_em /= n_labeled as f64;
                        Some((pass, d_em))
                    }
                    None => None,
                };
                if seg.is_none() && d_extra.is_none() {
                    continue;
                }
                let seg_ref = seg.as_ref().map(|(p, d)| (p, d));
                self.backward(sentence, &common, seg_ref, d_extra, &mut grads);
            }
        }
        // CRF gradients were accumulated unscaled.
        for (_, mut t) in grads.crf.params_mut() {
            t /= n_labeled as f64;
        }
        let jq = adversarial.then_some(jq);
        Ok(GeneratorStep {
            jp,
            jq,
            loss: jp + lambda * jq.unwrap_or(0.0),
            grads,
        })
    }

    /// Emission scores for a sentence, without dropout.
    pub fn emissions(&self, sentence: &LabeledSentence) -> Result<Array2<f64>> {
        let common = self.common_pass(sentence, None)?;
        Ok(self.segmenter_pass(sentence, &common, None)?.emissions)
    }

    /// Viterbi labels with the final label forced to a boundary.
    pub fn predict(&self, sentence: &LabeledSentence) -> Result<Vec<usize>> {
        let em = self.emissions(sentence)?;
        let mut labels = viterbi(em.view(), &self.generator.crf)?;
        if let Some(last) = labels.last_mut() {
            *last = BOUNDARY;
        }
        Ok(labels)
    }

    pub fn segment_corpus(&self, corpus: &Corpus) -> Result<Corpus> {
        let sentences = corpus
            .sentences()
            .iter()
            .map(|s| s.with_labels(self.predict(s)?))
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(corpus.language().clone(), sentences)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({
            "format": "xseg-model",
            "config": self.config.to_map(),
            "wiring": self.wiring,
            "pos_tags": self.generator.pos.tags(),
            "pos_trainable": self.generator.pos.trainable,
            "embeddings_fingerprint": self.words.fingerprint(),
            "seed": self.config.seed,
            "provenance": self.provenance,
        });
        let mut ck = Checkpoint::new(meta);
        ck.tensors.push((
            "words.unk".to_string(),
            self.words.unk_vector().to_owned().into_dyn(),
        ));
        ck.add_params("generator", &self.generator);
        ck.add_params("critic", &self.critic);
        ck
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    /// Rebuild a model from a checkpoint and the (frozen) word embeddings it
    /// was trained with.
    pub fn from_checkpoint(ck: &Checkpoint, mut words: EmbeddingTable) -> Result<Self> {
        let meta = &ck.meta;
        if meta.get("format").and_then(|v| v.as_str()) != Some("xseg-model") {
            return Err(Error::Format("not a segmenter model checkpoint".into()));
        }
        let config_map: std::collections::BTreeMap<String, String> =
            serde_json::from_value(meta["config"].clone())
                .map_err(|e| Error::Format(format!("invalid config echo: {e}")))?;
        let cfg = TrainingConfig::from_map(&config_map)
            .map_err(|e| Error::Format(format!("invalid config echo: {e}")))?;
        let pos_tags: Vec<String> = serde_json::from_value(meta["pos_tags"].clone())
            .map_err(|e| Error::Format(format!("invalid POS tag list: {e}")))?;
        let expected = meta["embeddings_fingerprint"].as_str().unwrap_or_default();
        if words.fingerprint() != expected {
            return Err(Error::Format(
                "word embeddings differ from the ones the model was trained with".into(),
            ));
        }
        let unk = ck
            .get("words.unk")
            .ok_or_else(|| Error::Format("missing tensor words.unk".into()))?;
        let unk = unk
            .clone()
            .into_dimensionality::<ndarray::Ix1>()
            .map_err(|e| Error::Format(format!("words.unk: {e}")))?;
        words.set_unk_vector(unk)?;

        let mut model = SegmenterModel::new(&cfg, Arc::new(words), &pos_tags)?;
        ck.restore_params("generator", &mut model.generator)?;
        ck.restore_params("critic", &mut model.critic)?;
        model.generator.pos.trainable = meta["pos_trainable"].as_bool().unwrap_or(true);
        if let Some(p) = meta.get("provenance").and_then(|v| v.as_object()) {
            model.provenance = p.clone();
        }
        Ok(model)
    }

    pub fn load(path: impl AsRef<std::path::Path>, words: EmbeddingTable) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, words)
    }
}

fn apply_dropout(
    x: ArrayView2<f64>,
    rate: f64,
    rng: Option<&mut Rng>,
) -> Result<(Array2<f64>, DropoutMask)> {
    match rng {
        Some(rng) => dropout(x, rate, true, rng),
        None => {
            let mut unused = Rng::seed_from_u64(0);
            dropout(x, rate, false, &mut unused)
        }
    }
}

/// Free-function form of [`SegmenterModel::predict`].
pub fn forward_segment(model: &SegmenterModel, sentence: &LabeledSentence) -> Result<Vec<usize>> {
    model.predict(sentence)
}

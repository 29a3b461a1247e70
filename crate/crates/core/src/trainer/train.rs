use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::model::{tags_for, SegmenterModel};
use super::report::{EpochRecord, StepCounters, TrainReport};
use super::{balance_duplicate, rng_stream, streams};
use crate::adversarial::{clip_weights, critic_ascent_gradient, CriticBatch};
use crate::config::{Regime, TrainingConfig};
use crate::corpus::{Corpus, LabeledSentence, Language};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics};
use crate::neural::{fingerprint, max_abs, RmsProp, Rng};

/// Corpora for one training run. Which of the optional corpora are needed
/// depends on the regime.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub en_labeled: &'a Corpus,
    pub zh_labeled: Option<&'a Corpus>,
    pub zh_unlabeled: Option<&'a Corpus>,
    pub val: &'a Corpus,
}

/// Endless reshuffled pass over `0..n`.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(n: usize) -> Self {
        Sampler {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next_batch(&mut self, size: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn require_language(corpus: &Corpus, language: Language, what: &str) -> Result<()> {
    if *corpus.language() != language {
        return Err(Error::Config(format!(
            "{what} must be {language}, got {}",
            corpus.language()
        )));
    }
    Ok(())
}

fn check_data(data: &TrainingData<'_>, regime: Regime) -> Result<()> {
    let en = data.en_labeled;
    require_language(en, Language::En, "en_labeled")?;
    if en.is_empty() || !en.is_fully_labeled() {
        return Err(Error::Config("en_labeled must be a non-empty labeled corpus".into()));
    }
    if data.val.is_empty() || !data.val.is_fully_labeled() {
        return Err(Error::Config("val must be a non-empty labeled corpus".into()));
    }
    match regime {
        Regime::Zl => {
            if data.zh_labeled.is_some() {
                return Err(Error::Config("ZL must not be given zh_labeled".into()));
            }
            match data.zh_unlabeled {
                Some(c) if !c.is_empty() => require_language(c, Language::Zh, "zh_unlabeled")?,
                _ => return Err(Error::Config("ZL requires a non-empty zh_unlabeled corpus".into())),
            }
        }
        Regime::NoAdversZ => {
            if data.zh_labeled.is_some() {
                return Err(Error::Config("NOADVERS_Z must not be given zh_labeled".into()));
            }
        }
        Regime::Ll | Regime::NoAdversL => match data.zh_labeled {
            Some(c) if !c.is_empty() && c.is_fully_labeled() => {
                require_language(c, Language::Zh, "zh_labeled")?;
                if data.zh_unlabeled.is_some() {
                    log::info!("{regime} ignores zh_unlabeled");
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "{regime} requires a non-empty labeled zh_labeled corpus"
                )))
            }
        },
    }
    Ok(())
}

/// Train a segmenter under `cfg.regime` and return the checkpoint with the
/// best validation F together with the training report.
pub fn train(
    words: Arc<EmbeddingTable>,
    data: &TrainingData<'_>,
    cfg: &TrainingConfig,
) -> Result<(SegmenterModel, TrainReport)> {
    cfg.validate()?;
    let regime = cfg.regime;
    check_data(data, regime)?;
    let started = Instant::now();

    let words = if words.lowercase_en() == cfg.lowercase_en {
        words
    } else {
        let mut w = (*words).clone();
        w.set_lowercase_en(cfg.lowercase_en);
        Arc::new(w)
    };

    let en = data.en_labeled.sentences();
    // The target-side corpus each step draws from: duplicated labeled data
    // for LL wirings, unlabeled text for ZL, nothing for NOADVERS_Z.
    let zh_corpus: Option<Corpus> = match regime {
        Regime::Ll | Regime::NoAdversL => Some(balance_duplicate(
            data.zh_labeled.expect("checked"),
            data.en_labeled.len(),
        )?),
        Regime::Zl => Some(data.zh_unlabeled.expect("checked").without_labels()),
        Regime::NoAdversZ => None,
    };
    let zh: &[LabeledSentence] = zh_corpus.as_ref().map(|c| c.sentences()).unwrap_or(&[]);

    let mut tag_sources = vec![data.en_labeled, data.val];
    tag_sources.extend(data.zh_labeled);
    tag_sources.extend(zh_corpus.as_ref());
    let tags = tags_for(cfg, &tag_sources);
    let mut model = SegmenterModel::new(cfg, words, &tags)?;

    let mut en_rng = rng_stream(cfg.seed, streams::EN_SHUFFLE);
    let mut zh_rng = rng_stream(cfg.seed, streams::ZH_SHUFFLE);
    let mut dropout_rng = rng_stream(cfg.seed, streams::DROPOUT);
    let mut unlabeled_rng = rng_stream(cfg.seed, streams::UNLABELED_DROPOUT);
    let mut critic_rng = rng_stream(cfg.seed, streams::CRITIC);

    let mut zh_sampler = Sampler::new(zh.len());
    let mut critic_en = Sampler::new(en.len());
    let mut critic_zh = Sampler::new(zh.len());
    let mut gen_opt = RmsProp::new(cfg.lr, cfg.decay, cfg.eps);
    let mut critic_opt = RmsProp::new(cfg.lr, cfg.decay, cfg.eps);
    let adversarial = regime.is_adversarial();

    let mut counters = StepCounters::default();
    let mut epochs = Vec::new();
    let mut best: Option<(SegmenterModel, usize, Metrics)> = None;
    let mut best_f = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut clip_violations = 0;
    let mut max_critic_abs: f64 = 0.0;

    let mut en_order: Vec<usize> = (0..en.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        en_order.shuffle(&mut en_rng);
        let (mut jp_sum, mut jq_sum, mut steps) = (0.0, 0.0, 0usize);
        let (mut critic_sum, mut critic_n) = (0.0, 0usize);

        for chunk in en_order.chunks(cfg.batch) {
            let en_batch: Vec<&LabeledSentence> = chunk.iter().map(|&i| &en[i]).collect();
            let zh_batch: Vec<&LabeledSentence> = zh_sampler
                .next_batch(cfg.batch, &mut zh_rng)
                .into_iter()
                .map(|i| &zh[i])
                .collect();
            let step = model.generator_step(
                &en_batch,
                &zh_batch,
                Some(&mut dropout_rng),
                Some(&mut unlabeled_rng),
            )?;
            if !step.loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite generator loss {} (J_p {}, J_q {:?}) at epoch {epoch}, step {}",
                    step.loss,
                    step.jp,
                    step.jq,
                    counters.generator_steps + 1
                )));
            }
            gen_opt.step(&mut model.generator, &step.grads);
            counters.generator_steps += 1;
            counters.en_batches += 1;
            if !zh_batch.is_empty() {
                counters.zh_batches += 1;
            }
            jp_sum += step.jp;
            jq_sum += step.jq.unwrap_or(0.0);
            steps += 1;

            if adversarial && counters.generator_steps % cfg.k == 0 {
                for _ in 0..cfg.critic_steps {
                    let en_idx = critic_en.next_batch(cfg.batch, &mut critic_rng);
                    let zh_idx = critic_zh.next_batch(cfg.batch, &mut critic_rng);
                    let mut batch = CriticBatch::default();
                    for i in en_idx {
                        batch
                            .en_features
                            .push(model.common_pass(&en[i], Some(&mut critic_rng))?.features);
                    }
                    for i in zh_idx {
                        batch
                            .zh_features
                            .push(model.common_pass(&zh[i], Some(&mut critic_rng))?.features);
                    }
                    let (objective, grads) = critic_ascent_gradient(&model.critic, &batch)?;
                    if !objective.is_finite() {
                        return Err(Error::Training(format!(
                            "non-finite critic objective at epoch {epoch}, critic step {}",
                            counters.critic_steps + 1
                        )));
                    }
                    critic_opt.step(&mut model.critic, &grads);
                    clip_weights(&mut model.critic, cfg.clip_c);
                    let bound = max_abs(&model.critic);
                    if bound > cfg.clip_c {
                        clip_violations += 1;
                        log::error!("critic weight {bound} exceeds clip bound {}", cfg.clip_c);
                    }
                    max_critic_abs = max_critic_abs.max(bound);
                    counters.critic_steps += 1;
                    counters.critic_en_batches += 1;
                    counters.critic_zh_batches += 1;
                    critic_sum += objective;
                    critic_n += 1;
                }
            }
        }

        let val = evaluate(&model.segment_corpus(data.val)?, data.val)?;
        let improved = val.f_measure > best_f;
        let record = EpochRecord {
            epoch,
            mean_jp: jp_sum / steps as f64,
            mean_jq: adversarial.then(|| jq_sum / steps as f64),
            mean_critic_objective: (critic_n > 0).then(|| critic_sum / critic_n as f64),
            val,
            improved,
            private_zh_fingerprint: fingerprint(&model.generator.private_zh),
        };
        log::info!(
            "{regime} epoch {epoch}: J_p {:.4} J_q {:?} val F {:.4}",
            record.mean_jp,
            record.mean_jq,
            val.f_measure
        );
        epochs.push(record);
        if improved {
            best_f = val.f_measure;
            best = Some((model.clone(), epoch, val));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::info!("stopping after {stale} evaluations without improvement");
                break;
            }
        }
    }

    let (best_model, best_epoch, best_val) = best.expect("at least one epoch ran");
    let report = TrainReport {
        regime,
        seed: cfg.seed,
        epochs,
        best_epoch,
        best_val,
        counters,
        clip_violations,
        max_critic_abs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((best_model, report))
}

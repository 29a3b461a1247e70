//! Cross-lingual discourse segmentation.
//!
//! Every token of a sentence receives a boundary label: `1` when an elementary
//! discourse unit (EDU) ends right after the token, `0` otherwise. The model is
//! a shared-private BiLSTM-CRF: a common extractor trained adversarially against
//! a Wasserstein language critic, one private extractor per language, and a
//! BiLSTM + linear-chain CRF segmenter over their concatenated features.
//!
//! Module map:
//!
//! * [`corpus`]: token-per-line corpora, bracketed EDU text, POS tag conversion.
//! * [`embeddings`]: frozen bilingual word vectors, trainable POS vectors.
//! * [`neural`]: BiLSTM, text-CNN pooling, linear layers, dropout, RMSProp,
//!   finite-difference gradient checks and checkpoints.
//! * [`crf`]: scoring, forward algorithm, negative log-likelihood, Viterbi.
//! * [`adversarial`]: the language critic and its objective.
//! * [`trainer`]: model assembly and the ZL / LL / NoAdvers training regimes.
//! * [`eval`]: rule baselines, boundary P/R/F and ablation runs.
//! * [`synthetic`]: paired toy languages for desk-scale transfer experiments.

pub mod adversarial;
pub mod config;
pub mod corpus;
pub mod crf;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod neural;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};

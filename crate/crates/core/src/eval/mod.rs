//! Boundary-level evaluation, rule baselines and ablation runs.

mod ablation;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{boundaries_from_labels, Corpus, LabeledSentence, BOUNDARY, NO_BOUNDARY};
use crate::error::{Error, Result};

pub use ablation::{
    run_ablation, AblationRow, AblationSpec, AblationTable, AblationVariable, DataBundle,
    SeedPolicy,
};

/// Micro-averaged boundary precision, recall and F-measure.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Metrics {
    /// Derive P/R/F from pooled counts. No predictions gives `P = 0`; no gold
    /// boundaries gives `R = 0`.
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        Metrics {
            precision,
            recall,
            f_measure: harmonic_mean(precision, recall),
            matched,
            predicted,
            gold,
        }
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P {:.2}%  R {:.2}%  F {:.2}%  (matched {}, predicted {}, gold {})",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f_measure,
            self.matched,
            self.predicted,
            self.gold
        )
    }
}

/// `2PR / (P + R)`, or 0 when `P + R = 0`.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Pool matches over aligned per-sentence boundary sets.
pub fn evaluate_boundaries(pred: &[BTreeSet<usize>], gold: &[BTreeSet<usize>]) -> Result<Metrics> {
    if pred.len() != gold.len() {
        return Err(Error::Usage(format!(
            "{} predicted sentences vs {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    let (mut matched, mut predicted, mut gold_count) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        matched += p.intersection(g).count();
        predicted += p.len();
        gold_count += g.len();
    }
    Ok(Metrics::from_counts(matched, predicted, gold_count))
}

/// Compare two labeled corpora sentence by sentence, sentence-final
/// boundaries included.
pub fn evaluate(pred: &Corpus, gold: &Corpus) -> Result<Metrics> {
    if pred.len() != gold.len() {
        return Err(Error::Usage(format!(
            "{} predicted sentences vs {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    let mut pred_sets = Vec::with_capacity(pred.len());
    let mut gold_sets = Vec::with_capacity(gold.len());
    for (i, (p, g)) in pred.sentences().iter().zip(gold.sentences()).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Usage(format!(
                "sentence {}: {} predicted tokens vs {} gold tokens",
                i + 1,
                p.len(),
                g.len()
            )));
        }
        let (Some(pl), Some(gl)) = (p.labels(), g.labels()) else {
            return Err(Error::Usage(format!("sentence {} is unlabeled", i + 1)));
        };
        pred_sets.push(boundaries_from_labels(pl));
        gold_sets.push(boundaries_from_labels(gl));
    }
    evaluate_boundaries(&pred_sets, &gold_sets)
}

/// Which tokens the P-baseline splits after.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PunctuationPolicy {
    split_set: BTreeSet<String>,
    exclude_set: BTreeSet<String>,
}

impl PunctuationPolicy {
    pub fn new(
        split_set: impl IntoIterator<Item = impl Into<String>>,
        exclude_set: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self> {
        let split_set: BTreeSet<String> = split_set.into_iter().map(Into::into).collect();
        let exclude_set: BTreeSet<String> = exclude_set.into_iter().map(Into::into).collect();
        if let Some(both) = split_set.intersection(&exclude_set).next() {
            return Err(Error::Config(format!(
                "{both:?} is in both the split and the exclude set"
            )));
        }
        Ok(PunctuationPolicy {
            split_set,
            exclude_set,
        })
    }

    pub fn split_set(&self) -> &BTreeSet<String> {
        &self.split_set
    }

    pub fn exclude_set(&self) -> &BTreeSet<String> {
        &self.exclude_set
    }

    pub fn splits_after(&self, surface: &str) -> bool {
        self.split_set.contains(surface) && !self.exclude_set.contains(surface)
    }
}

impl Default for PunctuationPolicy {
    fn default() -> Self {
        PunctuationPolicy::new(["，", "。", "；", "：", "？", "！"], ["“", "”", "、"])
            .expect("default sets are disjoint")
    }
}

/// Each sentence is one EDU.
pub fn s_baseline(sentence: &LabeledSentence) -> Vec<usize> {
    let mut labels = vec![NO_BOUNDARY; sentence.len()];
    if let Some(last) = labels.last_mut() {
        *last = BOUNDARY;
    }
    labels
}

/// A boundary after every splitting punctuation mark, plus the final token.
pub fn p_baseline(sentence: &LabeledSentence, policy: &PunctuationPolicy) -> Vec<usize> {
    let mut labels: Vec<usize> = sentence
        .tokens()
        .iter()
        .map(|t| {
            if policy.splits_after(t.surface()) {
                BOUNDARY
            } else {
                NO_BOUNDARY
            }
        })
        .collect();
    if let Some(last) = labels.last_mut() {
        *last = BOUNDARY;
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Sentence,
    Punctuation,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s" | "sentence" => Ok(BaselineKind::Sentence),
            "p" | "punctuation" => Ok(BaselineKind::Punctuation),
            _ => Err(Error::Usage(format!("unknown baseline {s:?}; expected s or p"))),
        }
    }
}

/// Label every sentence of `corpus` with a rule baseline.
pub fn baseline_corpus(corpus: &Corpus, kind: BaselineKind, policy: &PunctuationPolicy) -> Result<Corpus> {
    let sentences = corpus
        .sentences()
        .iter()
        .map(|s| {
            let labels = match kind {
                BaselineKind::Sentence => s_baseline(s),
                BaselineKind::Punctuation => p_baseline(s, policy),
            };
            s.with_labels(labels)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(corpus.language().clone(), sentences)
}

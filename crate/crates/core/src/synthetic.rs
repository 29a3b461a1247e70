//! Paired toy languages with controllable boundary cues.
//!
//! Every EDU is a run of filler tokens closed by a cue token, so gold labels
//! are `1` exactly at cues (the last EDU's cue closes the sentence).
//!
//! * Shared cues (`c0`, `c1`, ...) occur in both languages, carry the same
//!   surface, tag and vector in both.
//! * Private cues exist in one language only and are tagged `SCONJ`.
//! * Fillers carry ordinary content tags; one filler per EDU is a `VERB`.
//! * Distractors are fillers that share a cue tag (`PUNCT` or `SCONJ`) but
//!   never end an EDU, so the tag alone does not decide a boundary.
//!
//! In the generated embeddings, axis 0 is a language axis: English fillers
//! and distractors sit at `+offset`, Chinese ones at `-offset`, cues at `0`.
//! A source-only model can separate cues from English distractors along that
//! axis, and the same rule misfires on Chinese distractors.

use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::corpus::{Corpus, Language, LabeledSentence, Token, BOUNDARY, NO_BOUNDARY};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::neural::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Filler vocabulary size per language.
    pub filler_vocab: usize,
    /// Distractor vocabulary size per language.
    pub distractor_vocab: usize,
    pub shared_cues: Vec<String>,
    pub private_cues_en: Vec<String>,
    pub private_cues_zh: Vec<String>,
    /// Inclusive range of EDUs per sentence.
    pub edus_per_sentence: (usize, usize),
    /// Inclusive range of tokens per EDU, cue included.
    pub edu_length: (usize, usize),
    /// Probability that an EDU closes with a private rather than a shared cue.
    pub private_cue_rate: f64,
    /// Probability that a filler slot holds a distractor.
    pub distractor_rate: f64,
    pub word_dim: usize,
    /// Magnitude of the language offset on embedding axis 0.
    pub language_offset: f64,
    /// Standard deviation of the random embedding components.
    pub vector_scale: f64,
    /// Emit treebank-style tags (PTB-like for English, CTB-like for
    /// Chinese) instead of universal tags.
    pub language_specific_tags: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            filler_vocab: 60,
            distractor_vocab: 8,
            shared_cues: (0..4).map(|i| format!("c{i}")).collect(),
            private_cues_en: (0..2).map(|i| format!("ep{i}")).collect(),
            private_cues_zh: (0..2).map(|i| format!("zp{i}")).collect(),
            edus_per_sentence: (1, 3),
            edu_length: (3, 6),
            private_cue_rate: 0.2,
            distractor_rate: 0.15,
            word_dim: 16,
            language_offset: 1.0,
            vector_scale: 0.5,
            language_specific_tags: false,
        }
    }
}

const FILLER_TAGS: [&str; 3] = ["NOUN", "ADJ", "ADV"];

fn prefix(language: &Language) -> Result<&'static str> {
    match language {
        Language::En => Ok("e"),
        Language::Zh => Ok("z"),
        Language::Other(code) => Err(Error::Usage(format!(
            "synthetic data exists for en and zh only, not {code}"
        ))),
    }
}

/// Treebank-style rendering of a universal tag.
fn specific_tag(tag: &str, language: &Language) -> &'static str {
    match (language, tag) {
        (Language::Zh, "NOUN") => "NN",
        (Language::Zh, "ADJ") => "VA",
        (Language::Zh, "ADV") => "AD",
        (Language::Zh, "VERB") => "VV",
        (Language::Zh, "PUNCT") => "PU",
        (Language::Zh, "SCONJ") => "CS",
        (_, "NOUN") => "NN",
        (_, "ADJ") => "JJ",
        (_, "ADV") => "RB",
        (_, "VERB") => "VB",
        (_, "PUNCT") => ".",
        (_, "SCONJ") => "IN",
        _ => "X",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Filler,
    Distractor,
    SharedCue,
    PrivateCue,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.edus_per_sentence;
        let (elo, ehi) = self.edu_length;
        if lo == 0 || lo > hi || elo == 0 || elo > ehi {
            return Err(Error::Config("synthetic length ranges must be non-empty and >= 1".into()));
        }
        if self.shared_cues.is_empty() || self.filler_vocab == 0 || self.word_dim < 2 {
            return Err(Error::Config(
                "synthetic spec needs shared cues, fillers and word_dim >= 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.private_cue_rate) || !(0.0..=1.0).contains(&self.distractor_rate) {
            return Err(Error::Config("synthetic rates must be in [0, 1]".into()));
        }
        if self.distractor_rate > 0.0 && self.distractor_vocab == 0 {
            return Err(Error::Config("distractor_rate > 0 needs distractor_vocab > 0".into()));
        }
        let fillers = ["ew", "zw", "ed", "zd"];
        for cue in self
            .shared_cues
            .iter()
            .chain(&self.private_cues_en)
            .chain(&self.private_cues_zh)
        {
            if fillers.iter().any(|f| cue.starts_with(f)) {
                return Err(Error::Config(format!("cue {cue:?} collides with filler vocabulary")));
            }
        }
        Ok(())
    }

    fn private_cues(&self, language: &Language) -> &[String] {
        match language {
            Language::Zh => &self.private_cues_zh,
            _ => &self.private_cues_en,
        }
    }

    fn tag(&self, universal: &str, language: &Language) -> String {
        if self.language_specific_tags {
            specific_tag(universal, language).to_string()
        } else {
            universal.to_string()
        }
    }

    fn token(&self, kind: Kind, index: usize, verb: bool, language: &Language) -> Result<Token> {
        let p = prefix(language)?;
        let (surface, tag) = match kind {
            Kind::Filler => (
                format!("{p}w{index}"),
                if verb { "VERB" } else { FILLER_TAGS[index % FILLER_TAGS.len()] },
            ),
            // Distractors alternate between the two cue tags.
            Kind::Distractor => (
                format!("{p}d{index}"),
                if index % 2 == 0 { "PUNCT" } else { "SCONJ" },
            ),
            Kind::SharedCue => (self.shared_cues[index].clone(), "PUNCT"),
            Kind::PrivateCue => (self.private_cues(language)[index].clone(), "SCONJ"),
        };
        Token::new(surface, self.tag(tag, language))
    }
}

fn language_stream(language: &Language) -> u64 {
    match language {
        Language::En => 101,
        Language::Zh => 102,
        Language::Other(_) => 103,
    }
}

/// `n` labeled sentences of `language`, a pure function of the spec.
pub fn generate(spec: &SyntheticSpec, n_sentences: usize, language: Language) -> Result<Corpus> {
    spec.validate()?;
    if n_sentences == 0 {
        return Err(Error::Usage("n_sentences must be >= 1".into()));
    }
    prefix(&language)?;
    let mut rng = Rng::seed_from_u64(spec.seed);
    rng.set_stream(language_stream(&language));
    let private = spec.private_cues(&language);
    let mut sentences = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        let n_edus = rng.random_range(spec.edus_per_sentence.0..=spec.edus_per_sentence.1);
        let mut tokens = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n_edus {
            let len = rng.random_range(spec.edu_length.0..=spec.edu_length.1);
            let n_fill = len - 1;
            let verb_at = if n_fill > 0 { rng.random_range(0..n_fill) } else { 0 };
            for j in 0..n_fill {
                let is_verb = j == verb_at;
                let kind = if !is_verb && rng.random_bool(spec.distractor_rate) {
                    Kind::Distractor
                } else {
                    Kind::Filler
                };
                let vocab = match kind {
                    Kind::Distractor => spec.distractor_vocab,
                    _ => spec.filler_vocab,
                };
                let index = rng.random_range(0..vocab);
                tokens.push(spec.token(kind, index, is_verb, &language)?);
                labels.push(NO_BOUNDARY);
            }
            let cue = if !private.is_empty() && rng.random_bool(spec.private_cue_rate) {
                spec.token(Kind::PrivateCue, rng.random_range(0..private.len()), false, &language)?
            } else {
                spec.token(
                    Kind::SharedCue,
                    rng.random_range(0..spec.shared_cues.len()),
                    false,
                    &language,
                )?
            };
            tokens.push(cue);
            labels.push(BOUNDARY);
        }
        sentences.push(LabeledSentence::new(tokens, language.clone(), Some(labels))?);
    }
    Corpus::new(language, sentences)
}

/// Consecutive disjoint slices of one generated corpus.
pub fn generate_splits(spec: &SyntheticSpec, language: Language, sizes: &[usize]) -> Result<Vec<Corpus>> {
    let total: usize = sizes.iter().sum();
    let all = generate(spec, total.max(1), language.clone())?.into_sentences();
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &n in sizes {
        out.push(Corpus::new(language.clone(), all[start..start + n].to_vec())?);
        start += n;
    }
    Ok(out)
}

/// Word vectors for every synthetic surface. Shared cues appear once and so
/// have one vector for both languages; everything else is language-disjoint.
pub fn make_embeddings(spec: &SyntheticSpec) -> Result<EmbeddingTable> {
    spec.validate()?;
    let mut rng = Rng::seed_from_u64(spec.seed);
    rng.set_stream(100);
    let normal = Normal::new(0.0, spec.vector_scale)
        .map_err(|e| Error::Config(format!("vector_scale: {e}")))?;
    let mut vector = |axis0: f64| -> Vec<f64> {
        let mut v: Vec<f64> = (0..spec.word_dim).map(|_| normal.sample(&mut rng)).collect();
        v[0] = axis0;
        v
    };
    let mut entries = Vec::new();
    for cue in &spec.shared_cues {
        entries.push((cue.clone(), vector(0.0)));
    }
    for (language, sign) in [(Language::En, 1.0), (Language::Zh, -1.0)] {
        let p = prefix(&language)?;
        let offset = sign * spec.language_offset;
        for i in 0..spec.filler_vocab {
            entries.push((format!("{p}w{i}"), vector(offset)));
        }
        for i in 0..spec.distractor_vocab {
            entries.push((format!("{p}d{i}"), vector(offset)));
        }
        for cue in spec.private_cues(&language) {
            entries.push((cue.clone(), vector(0.0)));
        }
    }
    EmbeddingTable::from_entries(entries, spec.word_dim, spec.seed)
}

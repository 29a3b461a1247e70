//! Segmentation corpora.
//!
//! The canonical on-disk format is one token per line:
//!
//! ```text
//! surface<TAB>upos[<TAB>label]
//! ```
//!
//! with a blank line between sentences. A label of `1` marks the last token of
//! an EDU, so every labeled sentence ends with `1`. Sentences are either fully
//! labeled or fully unlabeled.
//!
//! The bracketed format (`[a b] [c]`) is for display only.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The universal POS inventory shared by all languages.
pub const UNIVERSAL_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "SYM", "VERB", "X",
];

/// Tag used for anything unmapped or unknown.
pub const FALLBACK_TAG: &str = "X";

/// A boundary label: `1` if an EDU ends after the token.
pub const BOUNDARY: usize = 1;
pub const NO_BOUNDARY: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    Zh,
    En,
    Other(String),
}

impl Language {
    pub fn code(&self) -> &str {
        match self {
            Language::Zh => "zh",
            Language::En => "en",
            Language::Other(code) => code,
        }
    }

    /// Whether tokens are written with spaces between them.
    pub fn space_separated(&self) -> bool {
        !matches!(self, Language::Zh)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let code = s.trim().to_ascii_lowercase();
        match code.as_str() {
            "zh" | "ch" | "chinese" => Ok(Language::Zh),
            "en" | "english" => Ok(Language::En),
            "" => Err(Error::Usage("empty language tag".into())),
            _ if code.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') => {
                Ok(Language::Other(code))
            }
            _ => Err(Error::Usage(format!("invalid language tag {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    surface: String,
    upos: String,
}

impl Token {
    /// Surfaces must be non-empty and free of tabs and line breaks, since they
    /// are stored one per TSV line.
    pub fn new(surface: impl Into<String>, upos: impl Into<String>) -> Result<Self> {
        let surface = surface.into();
        let upos = upos.into();
        if surface.is_empty() {
            return Err(Error::Usage("token surface must be non-empty".into()));
        }
        if surface.contains(['\t', '\n', '\r']) {
            return Err(Error::Usage(format!(
                "token surface {surface:?} contains a tab or line break"
            )));
        }
        if upos.is_empty() || upos.contains(['\t', '\n', '\r', ' ']) {
            return Err(Error::Usage(format!("invalid POS tag {upos:?}")));
        }
        Ok(Token { surface, upos })
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn upos(&self) -> &str {
        &self.upos
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    tokens: Vec<Token>,
    language: Language,
    labels: Option<Vec<usize>>,
}

impl LabeledSentence {
    pub fn new(tokens: Vec<Token>, language: Language, labels: Option<Vec<usize>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Usage("a sentence needs at least one token".into()));
        }
        if let Some(labels) = &labels {
            check_labels(labels, tokens.len())?;
        }
        Ok(LabeledSentence {
            tokens,
            language,
            labels,
        })
    }

    pub fn unlabeled(tokens: Vec<Token>, language: Language) -> Result<Self> {
        Self::new(tokens, language, None)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn language(&self) -> &Language {
        &self.language
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.tokens.clone(), self.language.clone(), Some(labels))
    }

    pub fn without_labels(&self) -> Self {
        LabeledSentence {
            tokens: self.tokens.clone(),
            language: self.language.clone(),
            labels: None,
        }
    }

    pub fn with_language(&self, language: Language) -> Self {
        LabeledSentence {
            tokens: self.tokens.clone(),
            language,
            labels: self.labels.clone(),
        }
    }

    /// Replace every POS tag, keeping surfaces and labels.
    pub fn map_tags(&self, mut f: impl FnMut(&str) -> String) -> Result<Self> {
        let tokens = self
            .tokens
            .iter()
            .map(|t| Token::new(t.surface.clone(), f(&t.upos)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tokens, self.language.clone(), self.labels.clone())
    }
}

fn check_labels(labels: &[usize], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {} tokens",
            labels.len(),
            n
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > BOUNDARY) {
        return Err(Error::Usage(format!("label {bad} is not in {{0,1}}")));
    }
    if labels.last() != Some(&BOUNDARY) {
        return Err(Error::Usage(
            "sentence-final token must be a boundary".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    language: Language,
    sentences: Vec<LabeledSentence>,
}

impl Corpus {
    pub fn new(language: Language, sentences: Vec<LabeledSentence>) -> Result<Self> {
        if let Some(s) = sentences.iter().find(|s| s.language != language) {
            return Err(Error::Usage(format!(
                "sentence in language {} inside a {} corpus",
                s.language, language
            )));
        }
        Ok(Corpus {
            language,
            sentences,
        })
    }

    pub fn empty(language: Language) -> Self {
        Corpus {
            language,
            sentences: Vec::new(),
        }
    }

    pub fn language(&self) -> &Language {
        &self.language
    }

    pub fn sentences(&self) -> &[LabeledSentence] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<LabeledSentence> {
        self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.sentences.iter().all(LabeledSentence::is_labeled)
    }

    pub fn without_labels(&self) -> Corpus {
        Corpus {
            language: self.language.clone(),
            sentences: self.sentences.iter().map(|s| s.without_labels()).collect(),
        }
    }

    /// First `n` sentences (or all, if fewer).
    pub fn take(&self, n: usize) -> Corpus {
        Corpus {
            language: self.language.clone(),
            sentences: self.sentences.iter().take(n).cloned().collect(),
        }
    }

    pub fn map_tags(&self, mut f: impl FnMut(&str) -> String) -> Result<Corpus> {
        let sentences = self
            .sentences
            .iter()
            .map(|s| s.map_tags(&mut f))
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(self.language.clone(), sentences)
    }

    /// Total number of tokens.
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(LabeledSentence::len).sum()
    }
}

/// Parse a token-per-line corpus from text. `source_name` is used in error
/// messages only.
pub fn parse_conll_corpus(text: &str, language: Language, source_name: &str) -> Result<Corpus> {
    struct Pending {
        tokens: Vec<Token>,
        labels: Vec<usize>,
        labeled: Option<bool>,
        last_line: usize,
    }

    fn finish(
        pending: &mut Pending,
        language: &Language,
        source_name: &str,
        out: &mut Vec<LabeledSentence>,
    ) -> Result<()> {
        if pending.tokens.is_empty() {
            return Ok(());
        }
        let tokens = std::mem::take(&mut pending.tokens);
        let labels = std::mem::take(&mut pending.labels);
        let labels = match pending.labeled.take() {
            Some(true) => {
                if labels.last() != Some(&BOUNDARY) {
                    return Err(Error::parse(
                        source_name,
                        pending.last_line,
                        "sentence-final token must be a boundary",
                    ));
                }
                Some(labels)
            }
            _ => None,
        };
        let sentence = LabeledSentence::new(tokens, language.clone(), labels)
            .map_err(|e| Error::parse(source_name, pending.last_line, e.to_string()))?;
        out.push(sentence);
        Ok(())
    }

    let mut sentences = Vec::new();
    let mut pending = Pending {
        tokens: Vec::new(),
        labels: Vec::new(),
        labeled: None,
        last_line: 0,
    };

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            finish(&mut pending, &language, source_name, &mut sentences)?;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (surface, upos, label) = match cols.as_slice() {
            [s, t] => (*s, *t, None),
            [s, t, l] => (*s, *t, Some(*l)),
            _ => {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("expected 2 or 3 tab-separated columns, found {}", cols.len()),
                ))
            }
        };
        let has_label = label.is_some();
        match pending.labeled {
            None => pending.labeled = Some(has_label),
            Some(prev) if prev != has_label => {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    "mixed labeled and unlabeled tokens in one sentence",
                ))
            }
            Some(_) => {}
        }
        if let Some(label) = label {
            let value = match label.trim() {
                "0" => NO_BOUNDARY,
                "1" => BOUNDARY,
                other => {
                    return Err(Error::parse(
                        source_name,
                        line_no,
                        format!("label {other:?} is not 0 or 1"),
                    ))
                }
            };
            pending.labels.push(value);
        }
        let token = Token::new(surface, upos.trim())
            .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        pending.tokens.push(token);
        pending.last_line = line_no;
    }
    finish(&mut pending, &language, source_name, &mut sentences)?;
    Corpus::new(language, sentences)
}

pub fn load_conll_corpus(path: impl AsRef<Path>, language: Language) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll_corpus(&text, language, &path.display().to_string())
}

/// Serialize a corpus in the token-per-line format.
pub fn write_conll_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for sentence in corpus.sentences() {
        push_conll_sentence(&mut out, sentence);
    }
    out
}

fn push_conll_sentence(out: &mut String, sentence: &LabeledSentence) {
    for (i, token) in sentence.tokens().iter().enumerate() {
        out.push_str(token.surface());
        out.push('\t');
        out.push_str(token.upos());
        if let Some(labels) = sentence.labels() {
            out.push('\t');
            out.push_str(if labels[i] == BOUNDARY { "1" } else { "0" });
        }
        out.push('\n');
    }
    out.push('\n');
}

pub fn save_conll_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_conll_corpus(corpus)).map_err(|e| Error::io(path, e))
}

/// Render a labeled sentence as bracketed EDUs, e.g. `[a] [b c]` for English
/// or `[他说，][我走。]` for Chinese.
pub fn write_bracketed(sentence: &LabeledSentence) -> Result<String> {
    let labels = sentence
        .labels()
        .ok_or_else(|| Error::Usage("cannot bracket an unlabeled sentence".into()))?;
    let sep = if sentence.language().space_separated() {
        " "
    } else {
        ""
    };
    let mut out = String::new();
    let mut open = false;
    for (token, &label) in sentence.tokens().iter().zip(labels) {
        if open {
            out.push_str(sep);
        } else {
            if !out.is_empty() {
                out.push_str(sep);
            }
            out.push('[');
            open = true;
        }
        out.push_str(token.surface());
        if label == BOUNDARY {
            out.push(']');
            open = false;
        }
    }
    Ok(out)
}

/// Split bracketed text back into EDU contents. Whitespace between EDUs is
/// ignored; the contents are returned verbatim.
pub fn parse_bracketed(text: &str) -> Result<Vec<String>> {
    let mut edus = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let body = rest
            .strip_prefix('[')
            .ok_or_else(|| Error::Usage(format!("expected '[' at {rest:?}")))?;
        let end = body
            .find(']')
            .ok_or_else(|| Error::Usage("unterminated EDU bracket".into()))?;
        edus.push(body[..end].to_string());
        rest = body[end + 1..].trim_start();
    }
    Ok(edus)
}

/// Source-tagset to universal-tag mapping. Total: unmapped tags go to the
/// fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosConversionMap {
    entries: HashMap<String, String>,
    fallback: String,
}

const CTB_TO_UPOS: &str = include_str!("../data/ctb_to_upos.tsv");

impl PosConversionMap {
    pub fn new(entries: HashMap<String, String>, fallback: impl Into<String>) -> Self {
        PosConversionMap {
            entries,
            fallback: fallback.into(),
        }
    }

    /// The bundled Chinese Penn Treebank conversion table.
    pub fn chinese_treebank() -> Self {
        Self::parse(CTB_TO_UPOS, "ctb_to_upos.tsv").expect("bundled conversion map is valid")
    }

    /// Parse `source<TAB>universal` lines; `#` starts a comment.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t').map(str::trim).filter(|c| !c.is_empty());
            match (cols.next(), cols.next(), cols.next()) {
                (Some(src), Some(dst), None) => {
                    entries.insert(src.to_string(), dst.to_string());
                }
                _ => {
                    return Err(Error::parse(
                        source_name,
                        idx + 1,
                        "expected \"source<TAB>universal\"",
                    ))
                }
            }
        }
        Ok(PosConversionMap::new(entries, FALLBACK_TAG))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn fallback(&self) -> &str {
        &self.fallback
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn convert_pos<'a>(tag: &str, map: &'a PosConversionMap) -> &'a str {
    map.entries
        .get(tag)
        .map(String::as_str)
        .unwrap_or(&map.fallback)
}

pub fn boundaries_from_labels(labels: &[usize]) -> BTreeSet<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == BOUNDARY)
        .map(|(i, _)| i)
        .collect()
}

/// Inverse of [`boundaries_from_labels`] for a sentence of length `n`.
/// Indices `>= n` are ignored.
pub fn labels_from_boundaries(boundaries: &BTreeSet<usize>, n: usize) -> Vec<usize> {
    let mut labels = vec![NO_BOUNDARY; n];
    for &i in boundaries.range(..n) {
        labels[i] = BOUNDARY;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str, t: &str) -> Token {
        Token::new(s, t).unwrap()
    }

    #[test]
    fn loads_labeled_sentence() {
        let c = parse_conll_corpus("他\tPRON\t0\n走\tVERB\t1\n\n", Language::Zh, "t").unwrap();
        assert_eq!(c.len(), 1);
        let s = &c.sentences()[0];
        assert_eq!(s.labels(), Some(&[0, 1][..]));
        assert_eq!(s.tokens()[0].surface(), "他");
        assert_eq!(s.tokens()[1].upos(), "VERB");
    }

    #[test]
    fn rejects_final_zero() {
        let err = parse_conll_corpus("a\tX\t1\nb\tX\t0\n", Language::En, "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sentence-final token must be a boundary"), "{msg}");
        assert!(msg.contains("t:2"), "{msg}");
    }

    #[test]
    fn loads_unlabeled() {
        let c = parse_conll_corpus("He\tPRON\nleft\tVERB\n", Language::En, "t").unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.sentences()[0].labels().is_none());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_conll_corpus("a\tX\t1\n\nb\n", Language::En, "f").unwrap_err();
        assert!(err.to_string().starts_with("f:3:"), "{err}");

        let err = parse_conll_corpus("a\tX\t2\n", Language::En, "f").unwrap_err();
        assert!(err.to_string().contains("not 0 or 1"), "{err}");

        let err = parse_conll_corpus("a\tX\t0\nb\tX\n", Language::En, "f").unwrap_err();
        assert!(err.to_string().contains("mixed"), "{err}");

        let err = parse_conll_corpus("a\tX\t1\tzz\n", Language::En, "f").unwrap_err();
        assert!(err.to_string().contains("columns"), "{err}");
    }

    #[test]
    fn blank_runs_and_crlf_are_tolerated() {
        let text = "\n\na\tX\t1\r\n\n\n\nb\tX\t0\r\nc\tX\t1\r\n";
        let c = parse_conll_corpus(text, Language::En, "t").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.sentences()[1].labels(), Some(&[0, 1][..]));
    }

    #[test]
    fn bracketed_output() {
        let s = LabeledSentence::new(
            vec![tok("他", "PRON"), tok("走", "VERB")],
            Language::Zh,
            Some(vec![0, 1]),
        )
        .unwrap();
        assert_eq!(write_bracketed(&s).unwrap(), "[他走]");

        let s = LabeledSentence::new(
            vec![tok("a", "X"), tok("b", "X"), tok("c", "X")],
            Language::En,
            Some(vec![1, 0, 1]),
        )
        .unwrap();
        let text = write_bracketed(&s).unwrap();
        assert_eq!(text, "[a] [b c]");
        assert_eq!(parse_bracketed(&text).unwrap(), vec!["a", "b c"]);

        let unlabeled = s.without_labels();
        assert!(matches!(write_bracketed(&unlabeled), Err(Error::Usage(_))));
    }

    #[test]
    fn chinese_brackets_concatenate() {
        let s = LabeledSentence::new(
            vec![
                tok("他", "PRON"),
                tok("说", "VERB"),
                tok("，", "PUNCT"),
                tok("我", "PRON"),
                tok("走", "VERB"),
                tok("。", "PUNCT"),
            ],
            Language::Zh,
            Some(vec![0, 0, 1, 0, 0, 1]),
        )
        .unwrap();
        let text = write_bracketed(&s).unwrap();
        assert_eq!(text, "[他说，][我走。]");
        assert_eq!(parse_bracketed(&text).unwrap(), vec!["他说，", "我走。"]);
    }

    #[test]
    fn pos_conversion() {
        let map = PosConversionMap::chinese_treebank();
        assert_eq!(convert_pos("VV", &map), "VERB");
        assert_eq!(convert_pos("NN", &map), "NOUN");
        assert_eq!(convert_pos("ZZZ", &map), "X");
        for tag in map.entries.values() {
            assert!(UNIVERSAL_TAGS.contains(&tag.as_str()), "{tag}");
        }
    }

    #[test]
    fn conversion_map_file_format() {
        let map = PosConversionMap::parse("# comment\nVV\tVERB  # trailing\n\nNN\tNOUN\n", "m")
            .unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(convert_pos("VV", &map), "VERB");
        assert!(PosConversionMap::parse("VV VERB\n", "m").is_err());
    }

    #[test]
    fn boundaries() {
        assert_eq!(
            boundaries_from_labels(&[0, 1, 0, 1]),
            BTreeSet::from([1, 3])
        );
        assert_eq!(boundaries_from_labels(&[1, 1]), BTreeSet::from([0, 1]));
        assert!(boundaries_from_labels(&[0, 0]).is_empty());
        assert_eq!(labels_from_boundaries(&BTreeSet::from([1, 3]), 4), vec![0, 1, 0, 1]);
    }

    #[test]
    fn corpus_language_is_uniform() {
        let s = LabeledSentence::unlabeled(vec![tok("a", "X")], Language::En).unwrap();
        assert!(Corpus::new(Language::Zh, vec![s]).is_err());
    }

    #[test]
    fn token_validation() {
        assert!(Token::new("", "X").is_err());
        assert!(Token::new("a\tb", "X").is_err());
        assert!(Token::new("a", "").is_err());
    }

    #[test]
    fn language_tags() {
        assert_eq!("ZH".parse::<Language>().unwrap(), Language::Zh);
        assert_eq!("en".parse::<Language>().unwrap(), Language::En);
        assert_eq!(
            "de".parse::<Language>().unwrap(),
            Language::Other("de".into())
        );
        assert!("".parse::<Language>().is_err());
    }
}

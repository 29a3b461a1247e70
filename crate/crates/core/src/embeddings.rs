//! Word and POS embeddings and the per-token input encoding.
//!
//! Word vectors live in a shared bilingual space and are consumed from a text
//! file (`count dim` header, then `word v1 .. v_dim` lines). They are never
//! updated. POS vectors are trainable.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD};
use rand::{Rng as _, SeedableRng};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Language, LabeledSentence, FALLBACK_TAG, UNIVERSAL_TAGS};
use crate::error::{Error, Result};
use crate::neural::{Parameters, Rng};

pub const DEFAULT_WORD_DIM: usize = 200;
pub const DEFAULT_POS_DIM: usize = 50;

/// Range of the uniform draw for the UNK vector and fresh POS vectors.
const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocabulary: HashMap<String, usize>,
    vectors: Array2<f64>,
    unk_vector: Array1<f64>,
    lowercase_en: bool,
}

impl EmbeddingTable {
    /// Build a table from `(word, vector)` pairs. Later duplicates replace
    /// earlier ones. The UNK vector is drawn from `U(-0.1, 0.1)` with `seed`.
    pub fn from_entries(
        entries: Vec<(String, Vec<f64>)>,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("word embedding dimension must be > 0".into()));
        }
        let mut vocabulary = HashMap::with_capacity(entries.len());
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(entries.len());
        for (word, vector) in entries {
            if vector.len() != dim {
                return Err(Error::Shape(format!(
                    "vector for {word:?} has {} values, expected {dim}",
                    vector.len()
                )));
            }
            let key = normalize(&word);
            match vocabulary.get(&key) {
                Some(&idx) => {
                    log::warn!("duplicate embedding for {key:?}; keeping the last one");
                    rows[idx] = vector;
                }
                None => {
                    vocabulary.insert(key, rows.len());
                    rows.push(vector);
                }
            }
        }
        let n = rows.len();
        let vectors = Array2::from_shape_vec((n, dim), rows.into_iter().flatten().collect())
            .expect("rows have uniform length");
        let mut rng = Rng::seed_from_u64(seed);
        let unk_vector = Array1::from_shape_fn(dim, |_| rng.random_range(-INIT_RANGE..INIT_RANGE));
        Ok(EmbeddingTable {
            vocabulary,
            vectors,
            unk_vector,
            lowercase_en: true,
        })
    }

    pub fn parse(text: &str, seed: u64, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "missing \"count dim\" header"))?;
        let header: Vec<&str> = header.split_whitespace().collect();
        let (count, dim) = match header.as_slice() {
            [c, d] => (
                c.parse::<usize>()
                    .map_err(|_| Error::parse(source_name, 1, "bad word count in header"))?,
                d.parse::<usize>()
                    .map_err(|_| Error::parse(source_name, 1, "bad dimension in header"))?,
            ),
            _ => return Err(Error::parse(source_name, 1, "expected header \"count dim\"")),
        };
        if dim == 0 {
            return Err(Error::parse(source_name, 1, "dimension must be > 0"));
        }
        let mut entries = Vec::with_capacity(count);
        for (idx, line) in lines {
            let mut parts = line.split_whitespace();
            let word = parts.next().expect("non-blank line has a field");
            let values = parts
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(source_name, idx + 1, format!("bad value: {e}")))?;
            if values.len() != dim {
                return Err(Error::parse(
                    source_name,
                    idx + 1,
                    format!("expected {dim} values, found {}", values.len()),
                ));
            }
            entries.push((word.to_string(), values));
        }
        if entries.len() != count {
            log::warn!(
                "{source_name}: header announces {count} words, file has {}",
                entries.len()
            );
        }
        Self::from_entries(entries, dim, seed)
    }

    /// Whether English lookups are lowercased (default true).
    pub fn set_lowercase_en(&mut self, lowercase: bool) {
        self.lowercase_en = lowercase;
    }

    pub fn lowercase_en(&self) -> bool {
        self.lowercase_en
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn unk_vector(&self) -> ArrayView1<'_, f64> {
        self.unk_vector.view()
    }

    pub fn set_unk_vector(&mut self, unk: Array1<f64>) -> Result<()> {
        if unk.len() != self.dim() {
            return Err(Error::Shape(format!(
                "UNK vector of length {} for dimension {}",
                unk.len(),
                self.dim()
            )));
        }
        self.unk_vector = unk;
        Ok(())
    }

    fn key(&self, word: &str, language: &Language) -> String {
        let key = normalize(word);
        if self.lowercase_en && *language == Language::En {
            key.to_lowercase()
        } else {
            key
        }
    }

    pub fn contains(&self, word: &str, language: &Language) -> bool {
        self.vocabulary.contains_key(&self.key(word, language))
    }

    /// The vector for `word`, or the UNK vector when it is not in the table.
    pub fn lookup(&self, word: &str, language: &Language) -> ArrayView1<'_, f64> {
        match self.vocabulary.get(&self.key(word, language)) {
            Some(&i) => self.vectors.row(i),
            None => self.unk_vector.view(),
        }
    }

    /// SHA-256 over the vocabulary and vectors (not the UNK vector).
    pub fn fingerprint(&self) -> String {
        let mut words: Vec<(&String, &usize)> = self.vocabulary.iter().collect();
        words.sort();
        let mut hasher = Sha256::new();
        for (word, &i) in words {
            hasher.update(word.as_bytes());
            hasher.update([0]);
            for v in self.vectors.row(i) {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        crate::neural::params_hex(hasher)
    }

    /// Serialize in the text word-vector format, rows in index order.
    pub fn to_text(&self) -> String {
        let mut words: Vec<(&String, &usize)> = self.vocabulary.iter().collect();
        words.sort_by_key(|(_, &i)| i);
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for (word, &i) in words {
            out.push_str(word);
            for v in self.vectors.row(i) {
                // `{}` on f64 prints the shortest representation that
                // parses back to the same bits.
                write!(out, " {v}").expect("write to String");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn normalize(word: &str) -> String {
    word.nfc().collect()
}

pub fn load_word_embeddings(path: impl AsRef<Path>, seed: u64) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(&text, seed, &path.display().to_string())
}

/// Trainable POS-tag vectors. Unknown tags use the `X` row.
#[derive(Debug, Clone, PartialEq)]
pub struct PosTable {
    tags: Vec<String>,
    index: HashMap<String, usize>,
    pub vectors: Array2<f64>,
    pub trainable: bool,
}

impl PosTable {
    /// Random table over `tags`; `X` is appended if missing.
    pub fn new(tags: &[String], dim: usize, rng: &mut Rng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("POS embedding dimension must be > 0".into()));
        }
        let mut ordered: Vec<String> = Vec::with_capacity(tags.len() + 1);
        for t in tags {
            if !ordered.contains(t) {
                ordered.push(t.clone());
            }
        }
        if !ordered.iter().any(|t| t == FALLBACK_TAG) {
            ordered.push(FALLBACK_TAG.to_string());
        }
        let index = ordered
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let vectors = Array2::from_shape_fn((ordered.len(), dim), |_| {
            rng.random_range(-INIT_RANGE..INIT_RANGE)
        });
        Ok(PosTable {
            tags: ordered,
            index,
            vectors,
            trainable: true,
        })
    }

    pub fn universal(dim: usize, rng: &mut Rng) -> Result<Self> {
        let tags: Vec<String> = UNIVERSAL_TAGS.iter().map(|t| t.to_string()).collect();
        Self::new(&tags, dim, rng)
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row_of(&self, tag: &str) -> usize {
        self.index
            .get(tag)
            .copied()
            .unwrap_or_else(|| self.index[FALLBACK_TAG])
    }
}

impl Parameters for PosTable {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        out.push((
            crate::neural::join_name(prefix, "vectors"),
            self.vectors.view().into_dyn(),
        ));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        out.push((
            crate::neural::join_name(prefix, "vectors"),
            self.vectors.view_mut().into_dyn(),
        ));
    }
}

/// Per-token input rows `[word vector | POS vector]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEncoding {
    pub matrix: Array2<f64>,
    pub mask: Vec<bool>,
    /// POS-table row used by each token, for routing gradients.
    pub pos_rows: Vec<usize>,
}

impl InputEncoding {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }
}

pub fn encode_sentence(
    sentence: &LabeledSentence,
    words: &EmbeddingTable,
    pos: &PosTable,
) -> InputEncoding {
    let (dw, dp) = (words.dim(), pos.dim());
    let n = sentence.len();
    let mut matrix = Array2::zeros((n, dw + dp));
    let mut pos_rows = Vec::with_capacity(n);
    for (i, token) in sentence.tokens().iter().enumerate() {
        let w = words.lookup(token.surface(), sentence.language());
        let p = pos.row_of(token.upos());
        matrix.slice_mut(s![i, ..dw]).assign(&w);
        matrix.slice_mut(s![i, dw..]).assign(&pos.vectors.row(p));
        pos_rows.push(p);
    }
    InputEncoding {
        matrix,
        mask: vec![true; n],
        pos_rows,
    }
}

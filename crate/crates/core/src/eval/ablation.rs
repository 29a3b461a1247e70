use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate, Metrics};
use crate::config::{PosTagset, Regime, TrainingConfig};
use crate::corpus::Corpus;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::trainer::{train, TrainingData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariable {
    ZhLabeledSize,
    PosTagset,
}

impl fmt::Display for AblationVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationVariable::ZhLabeledSize => "zh_labeled_size",
            AblationVariable::PosTagset => "pos_tagset",
        })
    }
}

impl std::str::FromStr for AblationVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zh_labeled_size" => Ok(AblationVariable::ZhLabeledSize),
            "pos_tagset" => Ok(AblationVariable::PosTagset),
            _ => Err(Error::Config(format!(
                "unknown ablation variable {s:?}; expected zh_labeled_size or pos_tagset"
            ))),
        }
    }
}

/// How each ablation value is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SeedPolicy {
    /// Every value uses the configured seed.
    #[default]
    Shared,
    /// Value `i` uses `seed + i`.
    PerValue,
}

/// Corpora for one ablation value. `zh_labeled` holds the pool that size
/// ablations draw prefixes from.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub en_labeled: Corpus,
    pub zh_labeled: Option<Corpus>,
    pub zh_unlabeled: Option<Corpus>,
    pub val: Corpus,
    pub test: Corpus,
}

#[derive(Debug, Clone)]
pub enum AblationSpec {
    ZhLabeledSize {
        sizes: Vec<usize>,
        data: DataBundle,
    },
    /// One bundle per tagset, tagged accordingly; `None` marks a missing
    /// dataset.
    PosTagset {
        variants: Vec<(PosTagset, Option<DataBundle>)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: String,
    pub regime: Regime,
    pub seed: u64,
    pub metrics: Metrics,
    pub best_epoch: usize,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub variable: AblationVariable,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Aligned-column text report.
    pub fn to_text(&self) -> String {
        let header = [
            self.variable.to_string(),
            "regime".into(),
            "seed".into(),
            "P".into(),
            "R".into(),
            "F".into(),
        ];
        let rows: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.value.clone(),
                    r.regime.to_string(),
                    r.seed.to_string(),
                    format!("{:.2}%", 100.0 * r.metrics.precision),
                    format!("{:.2}%", 100.0 * r.metrics.recall),
                    format!("{:.2}%", 100.0 * r.metrics.f_measure),
                ]
            })
            .collect();
        let mut widths = header.clone().map(|h| h.chars().count());
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&rows) {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// One JSON record per row.
    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| {
                let mut v = serde_json::to_value(r).expect("row serializes");
                v["variable"] = self.variable.to_string().into();
                v.to_string() + "\n"
            })
            .collect()
    }

    pub fn save(&self, text_path: impl AsRef<Path>, records_path: impl AsRef<Path>) -> Result<()> {
        let (t, r) = (text_path.as_ref(), records_path.as_ref());
        std::fs::write(t, self.to_text()).map_err(|e| Error::io(t, e))?;
        std::fs::write(r, self.to_jsonl()).map_err(|e| Error::io(r, e))
    }
}

fn run_one(
    words: &Arc<EmbeddingTable>,
    cfg: &TrainingConfig,
    bundle: &DataBundle,
    zh_labeled: Option<&Corpus>,
    value: String,
) -> Result<AblationRow> {
    let started = Instant::now();
    let data = TrainingData {
        en_labeled: &bundle.en_labeled,
        zh_labeled,
        zh_unlabeled: if cfg.regime == Regime::Zl {
            bundle.zh_unlabeled.as_ref()
        } else {
            None
        },
        val: &bundle.val,
    };
    let (model, report) = train(words.clone(), &data, cfg)?;
    let metrics = evaluate(&model.segment_corpus(&bundle.test)?, &bundle.test)?;
    Ok(AblationRow {
        value,
        regime: cfg.regime,
        seed: cfg.seed,
        metrics,
        best_epoch: report.best_epoch,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Train and test once per ablation value. Values whose data is missing
/// are skipped with a warning.
pub fn run_ablation(
    cfg: &TrainingConfig,
    words: Arc<EmbeddingTable>,
    spec: &AblationSpec,
    seed_policy: SeedPolicy,
) -> Result<AblationTable> {
    let seeded = |i: usize| match seed_policy {
        SeedPolicy::Shared => cfg.seed,
        SeedPolicy::PerValue => cfg.seed.wrapping_add(i as u64),
    };
    let mut rows = Vec::new();
    let variable = match spec {
        AblationSpec::ZhLabeledSize { sizes, data } => {
            for (i, &size) in sizes.iter().enumerate() {
                let mut run = cfg.clone();
                run.regime = cfg.regime.for_target_size(size);
                run.seed = seeded(i);
                let zh_labeled = if size == 0 {
                    None
                } else {
                    match &data.zh_labeled {
                        Some(pool) if pool.len() >= size => Some(pool.take(size)),
                        _ => {
                            log::warn!("no {size} target labeled sentences available; skipping");
                            continue;
                        }
                    }
                };
                if run.regime == Regime::Zl && data.zh_unlabeled.is_none() {
                    log::warn!("size 0 under ZL needs zh_unlabeled; skipping");
                    continue;
                }
                rows.push(run_one(&words, &run, data, zh_labeled.as_ref(), size.to_string())?);
            }
            AblationVariable::ZhLabeledSize
        }
        AblationSpec::PosTagset { variants } => {
            for (i, (tagset, bundle)) in variants.iter().enumerate() {
                let Some(bundle) = bundle else {
                    log::warn!("no dataset for POS tagset {tagset}; skipping");
                    continue;
                };
                let mut run = cfg.clone();
                run.pos_tagset = *tagset;
                run.seed = seeded(i);
                let zh_labeled = if run.regime.uses_target_labels() {
                    bundle.zh_labeled.as_ref()
                } else {
                    None
                };
                rows.push(run_one(&words, &run, bundle, zh_labeled, tagset.to_string())?);
            }
            AblationVariable::PosTagset
        }
    };
    Ok(AblationTable { variable, rows })
}

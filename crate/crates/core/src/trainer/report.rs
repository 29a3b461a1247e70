use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Regime;
use crate::error::{Error, Result};
use crate::eval::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepCounters {
    pub generator_steps: usize,
    pub critic_steps: usize,
    /// Minibatches drawn by generator steps.
    pub en_batches: usize,
    pub zh_batches: usize,
    /// Minibatches drawn by critic steps.
    pub critic_en_batches: usize,
    pub critic_zh_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-step segmentation loss.
    pub mean_jp: f64,
    /// Mean critic objective seen by generator steps.
    pub mean_jq: Option<f64>,
    /// Mean critic objective at critic steps (before the update).
    pub mean_critic_objective: Option<f64>,
    pub val: Metrics,
    pub improved: bool,
    /// Fingerprint of the Chinese private extractor after the epoch.
    pub private_zh_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub regime: Regime,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: Metrics,
    pub counters: StepCounters,
    /// Critic steps after which some weight exceeded the clip bound.
    pub clip_violations: usize,
    /// Largest absolute critic weight seen after any critic step.
    pub max_critic_abs: f64,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// The report with timing zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> TrainReport {
        TrainReport {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }

    /// One JSON record per epoch followed by a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            let mut v = serde_json::to_value(e).expect("epoch record serializes");
            v["record"] = "epoch".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let summary = serde_json::json!({
            "record": "summary",
            "regime": self.regime,
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "best_val": self.best_val,
            "counters": self.counters,
            "clip_violations": self.clip_violations,
            "max_critic_abs": self.max_critic_abs,
            "wall_clock_secs": self.wall_clock_secs,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

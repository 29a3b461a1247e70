//! Model assembly and the alternating generator / critic training loop.

mod model;
mod report;
mod train;

use rand::SeedableRng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::neural::Rng;

pub use model::{forward_segment, CommonPass, GeneratorParams, GeneratorStep, SegmenterModel, Wiring};
pub use report::{EpochRecord, StepCounters, TrainReport};
pub use train::{train, TrainingData};

/// Independent random streams derived from the root seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const EN_SHUFFLE: u64 = 1;
    pub const ZH_SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const CRITIC: u64 = 4;
    pub const UNLABELED_DROPOUT: u64 = 5;
}

/// ChaCha8 seeded with `seed`, positioned on stream `stream`.
pub fn rng_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Repeat `small` until it has `large_count` sentences, truncating the last
/// repetition.
pub fn balance_duplicate(small: &Corpus, large_count: usize) -> Result<Corpus> {
    if small.is_empty() {
        return Err(Error::Usage("cannot duplicate an empty corpus".into()));
    }
    let sentences = small
        .sentences()
        .iter()
        .cycle()
        .take(large_count)
        .cloned()
        .collect();
    Corpus::new(small.language().clone(), sentences)
}

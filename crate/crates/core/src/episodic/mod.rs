//! Source/target data, few-shot episode sampling, support/unlabeled blending,
//! classifier fine-tuning, and a synthetic domain-shift generator.

mod blend;
mod dataset;
mod episode;
mod finetune;
mod synthetic;

pub use blend::{blend, make_pseudo_support, BlendConfig};
pub use dataset::{CsvTable, DatasetTable, Domain, LABEL_COLUMN};
pub use episode::{sample_episode, Episode, EpisodeSpec};
pub use finetune::{finetune, FinetuneTrace, FULL_BATCH_LIMIT, MINI_BATCH};
pub use synthetic::{make_synthetic_domains, SyntheticConfig, SyntheticDomains};

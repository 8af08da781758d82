//! Mixed-policy group-relative policy optimization on a closed synthetic
//! radiology report world.
//!
//! The crate is organized bottom-up:
//!
//! - [`ontology`]: findings, entity lexemes with embeddings, sentence templates.
//! - [`extract`]: lexicon entity extraction with negation cues and label vectors.
//! - [`edit`]: the sentence-level post-rollout edit cascade.
//! - [`rewards`]: clinical reward analogs and their composition.
//! - [`world`]: synthetic cases with controllable class imbalance.
//! - [`policy`]: a linear autoregressive sentence policy with exact gradients.
//! - [`trainer`]: SFT, GRPO, Dr.GRPO and EditGRPO training plus evaluation.
//! - [`probe`]: seeded random edit instances.
//! - [`stats`]: Wilcoxon signed-rank testing and run aggregation.
//! - [`config`] and [`io`]: run configuration and on-disk formats.

pub mod config;
pub mod edit;
pub mod error;
pub mod extract;
pub mod io;
pub mod ontology;
pub mod plot;
pub mod policy;
pub mod probe;
pub mod rewards;
pub mod rng;
pub mod stats;
pub mod trainer;
pub mod world;

pub use config::RunConfig;
pub use edit::{edit, paragraph_edit, EditConfig, EditOutcome, EditRule, EditStep, EditTrace};
pub use error::{Error, Result};
pub use extract::{extract_report, extract_sentence_entities, labels_14, Entity, ExtractionMode};
pub use ontology::{build_default_ontology, cosine, segment_report, FindingId, Ontology, Presence};
pub use policy::{PolicyParams, Trajectory, TrajectoryOrigin};
pub use rewards::{composite_reward, RewardBreakdown, RewardComponent, RewardParams};
pub use stats::{wilcoxon_signed_rank, WilcoxonResult};
pub use trainer::{TrainerConfig, Variant};
pub use world::{Case, WorldConfig};

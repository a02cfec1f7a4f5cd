//! Conversational knowledge engine: a typed knowledge graph organized into
//! narrative bubbles, a translational embedding of that graph that absorbs
//! new entities without retraining, and a recommender that blends
//! embedding plausibility with affective (valence/arousal/dominance)
//! similarity.

pub mod corpus;
pub mod dynamic;
pub mod embedding;
pub mod emotion;
pub mod recommend;
pub mod store;
pub mod text;

pub use embedding::{EmbeddingError, EmbeddingSpace, TrainConfig, TrainReport};
pub use emotion::{Lexicon, VadScore};
pub use store::{Bubble, BubbleId, Entity, EntityId, EntityKind, RelationKind, Store, StoreError, Triple};
pub use corpus::{BubbleDraft, CorpusError, IngestStats};
pub use dynamic::{UpdateError, UpdatePolicy, Updater};
pub use recommend::{RecommendConfig, RecommendError, Recommendation, RecommendedItem, Subject};

//! Engine state and the two-pass chat turn.

use bubblekg_core::recommend::{recommend_bubble, recommend_knowledge, RecommendedItem, Subject};
use bubblekg_core::{
    BubbleId, CorpusError, EmbeddingError, EmbeddingSpace, EntityKind, Lexicon, RecommendConfig, RecommendError,
    Recommendation, Store, StoreError, UpdateError, Updater, VadScore,
};
use bubblekg_core::emotion::EmotionError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EngineConfig};
use crate::generator::{ContextItem, ContextTag, Generator, TemplateGenerator};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("not enough triples for a held-out split of {0}")]
    NotEnoughTriples(f64),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Emotion(#[from] EmotionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Update(#[from] UpdateError),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
}

impl EngineError {
    /// Stable machine-readable name, used in service error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::EmptyInput => "EmptyInput",
            EngineError::NotEnoughTriples(_) => "NotEnoughTriples",
            EngineError::Config(_) => "InvalidConfig",
            EngineError::Store(_) => "StoreError",
            EngineError::Embedding(_) => "EmbeddingError",
            EngineError::Emotion(_) => "EmotionError",
            EngineError::Corpus(_) => "CorpusError",
            EngineError::Update(UpdateError::EmptySpace) => "EmptySpace",
            EngineError::Update(_) => "UpdateError",
            EngineError::Recommend(e) => match e {
                RecommendError::NoCandidates => "NoCandidates",
                RecommendError::EmptySpace => "EmptySpace",
                RecommendError::NoBubbles => "NoBubbles",
                RecommendError::InvalidConfig(_) => "InvalidConfig",
                RecommendError::Update(UpdateError::EmptySpace) => "EmptySpace",
                _ => "RecommendError",
            },
        }
    }
}

/// Everything one chat turn produced, in the order it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub input: String,
    pub input_vad: VadScore,
    pub preliminary: String,
    pub bubble: BubbleId,
    /// Members of the recalled bubble: summary, facts, then utterances.
    pub recall: Vec<RecommendedItem>,
    pub knowledge: Recommendation,
    #[serde(rename = "final")]
    pub final_text: String,
}

pub struct Engine {
    pub config: EngineConfig,
    pub graph: Store,
    pub space: EmbeddingSpace,
    pub lexicon: Lexicon,
    generator: Box<dyn Generator>,
    last_trace: Option<TurnTrace>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("entities", &self.graph.entity_count())
            .field("vectors", &self.space.entity_count())
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(config: EngineConfig, graph: Store, space: EmbeddingSpace, lexicon: Lexicon) -> Self {
        Engine {
            config,
            graph,
            space,
            lexicon,
            generator: Box::new(TemplateGenerator::new()),
            last_trace: None,
        }
    }

    /// Loads the store, embeddings and lexicon named by `config`. A missing
    /// embeddings file yields an empty space, so recommending fails with
    /// `EmptySpace` until the graph has been trained.
    pub fn open(config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let graph = Store::load(&config.store)?;
        let space = if config.embeddings.exists() {
            EmbeddingSpace::load(&config.embeddings)?
        } else {
            EmbeddingSpace::empty(config.dim, config.train.seed)?
        };
        let lexicon = match &config.lexicon {
            Some(path) => Lexicon::load(path)?,
            None => Lexicon::new(),
        };
        Ok(Self::new(config, graph, space, lexicon))
    }

    /// Writes the store, and the embeddings when there are any.
    pub fn save(&self) -> Result<(), EngineError> {
        self.graph.save(&self.config.store)?;
        if !self.space.is_empty() {
            self.space.save(&self.config.embeddings)?;
        }
        Ok(())
    }

    pub fn with_generator(mut self, generator: Box<dyn Generator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn updater(&self) -> Updater {
        Updater::new(self.config.policy.clone(), self.config.train.clone())
    }

    pub fn last_trace(&self) -> Option<&TurnTrace> {
        self.last_trace.as_ref()
    }

    pub fn recommend(&mut self, text: &str, cfg: &RecommendConfig) -> Result<Recommendation, EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::EmptyInput);
        }
        let updater = self.updater();
        Ok(recommend_knowledge(&mut self.graph, &mut self.space, &self.lexicon, &updater, text, cfg)?)
    }

    /// Preliminary response, bubble recall from it, knowledge for the raw
    /// input, then the final response over both. Both the preliminary text
    /// and the input stay in the graph as utterances.
    pub fn chat_turn(&mut self, input: &str) -> Result<TurnTrace, EngineError> {
        let input = input.trim();
        if input.is_empty() {
            return Err(EngineError::EmptyInput);
        }
        let cfg = self.config.recommend.clone();
        cfg.validate()?;
        if self.space.is_empty() {
            return Err(RecommendError::EmptySpace.into());
        }
        let updater = self.updater();
        self.generator.observe(&self.graph);
        let preliminary = self.generator.generate(input, &[]);
        let (bubble, recall) =
            recommend_bubble(&mut self.graph, &mut self.space, &self.lexicon, &updater, &preliminary, &cfg)?;
        let knowledge = recommend_knowledge(&mut self.graph, &mut self.space, &self.lexicon, &updater, input, &cfg)?;

        let mut context = Vec::with_capacity(recall.items.len() + knowledge.items.len());
        for item in &recall.items {
            let Subject::Entity(id) = item.subject else { continue };
            let tag = match self.graph.require(id)?.kind {
                EntityKind::Summary => ContextTag::Summary,
                EntityKind::Fact => ContextTag::Fact,
                EntityKind::Utterance => ContextTag::Utterance,
                EntityKind::Concept => continue,
            };
            context.push(ContextItem::new(tag, item.verbalization.clone()));
        }
        for item in &knowledge.items {
            context.push(ContextItem::new(ContextTag::Knowledge, item.verbalization.clone()));
        }
        let final_text = self.generator.generate(input, &context);

        let trace = TurnTrace {
            input: input.to_owned(),
            input_vad: knowledge.query_vad,
            preliminary,
            bubble,
            recall: recall.items,
            knowledge,
            final_text,
        };
        self.last_trace = Some(trace.clone());
        Ok(trace)
    }
}

//! The Source's daily context, per-person episode summaries and the general
//! passerby summary.

mod context;
mod store;
mod summarize;

use thiserror::Error;

pub use context::{load_context, ActiveContext, RelationshipEntry, UserContext};
pub use store::{redact, EpisodeSummary, GeneralSummary, MemoryStore, PersonMemory, EPISODE_SEPARATOR, GENERAL_CAP};
pub use summarize::{
    recurring_words, summarize_episode, EpisodeInput, ExternalSummarizer, Summarizer, SummaryOutcome,
    TemplateSummarizer,
};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("{0} required")]
    Missing(String),
    #[error("{0} has the wrong type")]
    WrongType(String),
    #[error("duplicate Who {0:?}")]
    DuplicateWho(String),
    #[error("malformed document: {0}")]
    Syntax(String),
    #[error("summarizer failed: {0}")]
    Summarizer(String),
    #[error("memory io: {0}")]
    Io(#[from] std::io::Error),
}

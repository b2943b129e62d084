//! Engine for an embodied hallway agent that stands in for a remote
//! colleague: proxemic sensing, a natural-language journal, the engagement
//! state machine, conversation turn management and episodic memory.

pub mod config;
pub mod conversation;
pub mod engagement;
pub mod harness;
pub mod journal;
pub mod llm;
pub mod memory;
pub mod proxemics;
pub mod runtime;
pub mod wire;

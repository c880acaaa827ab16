//! Reasoning contract, the digital twin and the domain agent.

mod domain;
mod humanize;
mod memory;
mod reasoner;
mod twin;

pub use domain::{DomainAgent, DEFAULT_KB_LIMIT};
pub use humanize::{describe, error_placeholder, placeholder, service_name, Humanizer, DEFAULT_TEMPLATES};
pub use memory::{HistoryEntry, SessionMemory, StoredFact};
pub use reasoner::{
    CannedAnswer, LexicalReasoner, Reasoned, Reasoner, ReasonerScript, RevisePolicy, ScriptedReasoner,
};
pub use twin::{classify, fact_key, DeferredRequest, DigitalTwin, MediatorFactory, RetryPolicy, Route, MEDIATOR_PREFIX};

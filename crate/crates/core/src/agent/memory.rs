use serde::{Deserialize, Serialize};

use crate::message::Fact;
use crate::text;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredFact {
    pub key: String,
    pub value: String,
    pub tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub request_id: String,
    pub user_text: String,
    pub final_answer: String,
}

/// What the digital twin remembers about its user. Append-only.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMemory {
    pub session_id: String,
    facts: Vec<StoredFact>,
    history: Vec<HistoryEntry>,
}

impl SessionMemory {
    pub fn new(session_id: &str) -> Self {
        SessionMemory {
            session_id: session_id.to_owned(),
            ..Self::default()
        }
    }

    pub fn store(&mut self, key: &str, value: &str, tick: u64) {
        self.facts.push(StoredFact {
            key: key.to_owned(),
            value: value.to_owned(),
            tick,
        });
    }

    /// Newest value stored under `key`.
    pub fn recall(&self, key: &str) -> Option<&str> {
        self.facts
            .iter()
            .rev()
            .find(|f| f.key == key)
            .map(|f| f.value.as_str())
    }

    pub fn facts(&self) -> &[StoredFact] {
        &self.facts
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn record(&mut self, request_id: &str, user_text: &str, final_answer: &str) {
        self.history.push(HistoryEntry {
            request_id: request_id.to_owned(),
            user_text: user_text.to_owned(),
            final_answer: final_answer.to_owned(),
        });
    }

    /// Current facts whose key shares a token with `text`, one per key,
    /// ordered by key.
    pub fn matching(&self, text: &str) -> Vec<Fact> {
        let wanted = text::token_set(text);
        let mut keys: Vec<&str> = self.facts.iter().map(|f| f.key.as_str()).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .filter(|k| text::tokenize(k).iter().any(|t| wanted.contains(t)))
            .filter_map(|k| {
                self.recall(k).map(|v| Fact {
                    key: k.to_owned(),
                    value: v.to_owned(),
                })
            })
            .collect()
    }
}

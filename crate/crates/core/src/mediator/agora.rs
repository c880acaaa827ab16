use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::ErrorCode;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgoraEntry {
    pub seq: u64,
    pub author: String,
    pub stage: u8,
    pub round: u32,
    pub content: String,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum AgoraError {
    #[error("`{0}` is not a participant of this agora")]
    NotAParticipant(String),
    #[error("agora `{0}` has been published and is read-only")]
    BoardClosed(String),
    #[error("no agora named `{0}`")]
    UnknownBoard(String),
}

impl AgoraError {
    pub fn code(&self) -> ErrorCode {
        match self {
            AgoraError::NotAParticipant(_) | AgoraError::UnknownBoard(_) => ErrorCode::NotAParticipant,
            AgoraError::BoardClosed(_) => ErrorCode::BoardClosed,
        }
    }
}

/// Shared context a mediator opens for one request. Entries are append-only
/// and the board becomes read-only once published.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgoraBoard {
    pub agora_id: String,
    pub request_id: String,
    pub mediator: String,
    pub participants: BTreeSet<String>,
    pub entries: Vec<AgoraEntry>,
    pub published: Option<BTreeMap<String, String>>,
}

impl AgoraBoard {
    pub fn new(agora_id: &str, request_id: &str, mediator: &str) -> Self {
        AgoraBoard {
            agora_id: agora_id.to_owned(),
            request_id: request_id.to_owned(),
            mediator: mediator.to_owned(),
            participants: BTreeSet::new(),
            entries: Vec::new(),
            published: None,
        }
    }

    fn may_access(&self, who: &str) -> bool {
        who == self.mediator || self.participants.contains(who)
    }

    pub fn is_published(&self) -> bool {
        self.published.is_some()
    }

    pub fn add_participant(&mut self, name: &str) {
        self.participants.insert(name.to_owned());
    }

    pub fn remove_participant(&mut self, name: &str) {
        self.participants.remove(name);
    }

    pub fn post(
        &mut self,
        author: &str,
        stage: u8,
        round: u32,
        content: &str,
    ) -> Result<u64, AgoraError> {
        if self.is_published() {
            return Err(AgoraError::BoardClosed(self.agora_id.clone()));
        }
        if !self.may_access(author) {
            return Err(AgoraError::NotAParticipant(author.to_owned()));
        }
        let seq = self.entries.len() as u64 + 1;
        self.entries.push(AgoraEntry {
            seq,
            author: author.to_owned(),
            stage,
            round,
            content: content.to_owned(),
        });
        Ok(seq)
    }

    /// The full entry list; there is no partial visibility within a board.
    pub fn read(&self, reader: &str) -> Result<&[AgoraEntry], AgoraError> {
        if !self.may_access(reader) {
            return Err(AgoraError::NotAParticipant(reader.to_owned()));
        }
        Ok(&self.entries)
    }

    /// Latest entry per author, keyed by author.
    pub fn latest(&self) -> BTreeMap<&str, &AgoraEntry> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            out.insert(e.author.as_str(), e);
        }
        out
    }

    pub fn publish(&mut self, by: &str, bundle: BTreeMap<String, String>) -> Result<(), AgoraError> {
        if self.is_published() {
            return Err(AgoraError::BoardClosed(self.agora_id.clone()));
        }
        if by != self.mediator {
            return Err(AgoraError::NotAParticipant(by.to_owned()));
        }
        self.published = Some(bundle);
        Ok(())
    }

    /// The board document served to operators.
    pub fn export(&self) -> serde_json::Value {
        serde_json::json!({
            "agora_id": self.agora_id,
            "request_id": self.request_id,
            "mediator": self.mediator,
            "participants": self.participants,
            "entries": self.entries,
            "published": self.published,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct AgoraStore {
    boards: BTreeMap<String, AgoraBoard>,
}

impl AgoraStore {
    pub fn open(&mut self, board: AgoraBoard) -> &mut AgoraBoard {
        let id = board.agora_id.clone();
        self.boards.entry(id).or_insert(board)
    }

    pub fn get(&self, id: &str) -> Option<&AgoraBoard> {
        self.boards.get(id)
    }

    pub fn get_mut(&mut self, id: &str) -> Result<&mut AgoraBoard, AgoraError> {
        self.boards
            .get_mut(id)
            .ok_or_else(|| AgoraError::UnknownBoard(id.to_owned()))
    }

    pub fn boards(&self) -> impl Iterator<Item = &AgoraBoard> {
        self.boards.values()
    }
}

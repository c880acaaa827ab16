//! User-visible events: everything the digital twin tells its user.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// A mediator accepted a task and is working on it.
    Ack,
    Answer,
    /// The system needs more information from the user.
    IntegrationRequest,
    /// Something went wrong but the request is parked for retry.
    Notice,
    Failure,
    Publish,
    BudgetExhausted,
}

impl EventKind {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            EventKind::Answer | EventKind::Failure | EventKind::Publish | EventKind::BudgetExhausted
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub request_id: String,
    pub payload: Value,
}

impl UserEvent {
    pub fn new(kind: EventKind, request_id: &str, payload: Value) -> Self {
        UserEvent {
            kind,
            request_id: request_id.to_owned(),
            payload,
        }
    }

    /// The `text` field of the payload, when there is one.
    pub fn text(&self) -> Option<&str> {
        self.payload.get("text").and_then(Value::as_str)
    }
}

//! The envelope every agent exchanges, and the typed bodies it carries.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::acl::UserAttributes;
use crate::code::ErrorCode;
use crate::mediator::AgoraEntry;
use crate::topology::CapabilityProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    UserQuery,
    SubQuery,
    Answer,
    IntegrationRequest,
    IntegrationResponse,
    TaskRequest,
    Recruit,
    InitialSolution,
    Revision,
    FinalSolution,
    Publish,
    ErrorNotice,
    JoinNotify,
    CapabilityAnnounce,
    Ack,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A remembered `key → value` pair about the user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub key: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub request_id: String,
    pub author: String,
    pub text: String,
    pub cited: Vec<String>,
    pub confidence: f64,
    /// Matching items withheld from the user by their role conditions.
    #[serde(default)]
    pub denied: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryBody {
    pub text: String,
    pub attrs: UserAttributes,
    #[serde(default)]
    pub facts: Vec<Fact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubQueryBody {
    pub text: String,
    pub attrs: UserAttributes,
    /// Facts the facilitator already resolved for this request.
    #[serde(default)]
    pub context: Vec<Fact>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default)]
    pub detail: String,
    /// Underlying failures, e.g. one per child for `AllChildrenFailed`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub causes: Vec<ErrorBody>,
}

impl ErrorBody {
    pub fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        ErrorBody {
            code,
            domain: None,
            detail: detail.into(),
            causes: Vec::new(),
        }
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = Some(domain.into());
        self
    }

    /// Whether this error, or any cause, says a domain is down.
    pub fn is_transient(&self) -> bool {
        match self.code {
            ErrorCode::AllChildrenFailed => self.causes.iter().any(ErrorBody::is_transient),
            code => code.is_transient(),
        }
    }

    /// The first domain named in this error or its causes.
    pub fn first_domain(&self) -> Option<&str> {
        self.domain
            .as_deref()
            .or_else(|| self.causes.iter().find_map(ErrorBody::first_domain))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum RevisionBody {
    /// Mediator → agent: the other participants' latest entries.
    Request {
        agora_id: String,
        round: u32,
        own: String,
        peers: Vec<AgoraEntry>,
    },
    /// Agent → mediator; `revised` is empty when the agent keeps its solution.
    Reply { round: u32, revised: Option<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishBody {
    pub agora_id: String,
    /// Agent → final solution, ordered by agent name.
    pub bundle: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body")]
pub enum Payload {
    UserQuery(QueryBody),
    SubQuery(SubQueryBody),
    Answer(Answer),
    IntegrationRequest { segments: Vec<String>, prompt: String },
    IntegrationResponse { text: String },
    TaskRequest(QueryBody),
    Recruit { task: String, agora_id: String },
    InitialSolution { text: String },
    Revision(RevisionBody),
    FinalSolution { text: String },
    Publish(PublishBody),
    ErrorNotice(ErrorBody),
    JoinNotify { agent: String, domain: Option<String> },
    CapabilityAnnounce(CapabilityProfile),
    Ack { text: String },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::UserQuery(_) => MessageKind::UserQuery,
            Payload::SubQuery(_) => MessageKind::SubQuery,
            Payload::Answer(_) => MessageKind::Answer,
            Payload::IntegrationRequest { .. } => MessageKind::IntegrationRequest,
            Payload::IntegrationResponse { .. } => MessageKind::IntegrationResponse,
            Payload::TaskRequest(_) => MessageKind::TaskRequest,
            Payload::Recruit { .. } => MessageKind::Recruit,
            Payload::InitialSolution { .. } => MessageKind::InitialSolution,
            Payload::Revision(_) => MessageKind::Revision,
            Payload::FinalSolution { .. } => MessageKind::FinalSolution,
            Payload::Publish(_) => MessageKind::Publish,
            Payload::ErrorNotice(_) => MessageKind::ErrorNotice,
            Payload::JoinNotify { .. } => MessageKind::JoinNotify,
            Payload::CapabilityAnnounce(_) => MessageKind::CapabilityAnnounce,
            Payload::Ack { .. } => MessageKind::Ack,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub message_id: String,
    pub request_id: String,
    pub sender: String,
    pub recipient: String,
    #[serde(flatten)]
    pub payload: Payload,
    pub sent_at: u64,
}

impl Envelope {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }

    /// `m12 SubQuery facilitator->isp-hr-expert`, the detail text of Sent and
    /// Received trace records.
    pub fn summary(&self) -> String {
        format!(
            "{} {} {}->{}",
            self.message_id,
            self.kind(),
            self.sender,
            self.recipient
        )
    }
}

/// An envelope before the bus stamps it with an id and a send time.
#[derive(Clone, Debug, PartialEq)]
pub struct Outgoing {
    pub request_id: String,
    pub recipient: String,
    pub payload: Payload,
}

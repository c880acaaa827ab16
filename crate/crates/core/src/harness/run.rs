use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::SessionMemory;
use crate::bus::{TraceRecord, TraceStore};
use crate::event::UserEvent;
use crate::runtime::{DeployError, Deployment, Pause, Session};

use super::scenario::Scenario;

/// One line of what the user saw or said.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(rename = "type")]
    pub kind: String,
    pub request_id: String,
    pub payload: Value,
}

impl From<UserEvent> for TranscriptEntry {
    fn from(e: UserEvent) -> Self {
        let kind = serde_json::to_value(e.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        TranscriptEntry {
            kind,
            request_id: e.request_id,
            payload: e.payload,
        }
    }
}

impl TranscriptEntry {
    pub fn text(&self) -> Option<&str> {
        self.payload.get("text").and_then(Value::as_str)
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.kind.as_str(), "answer" | "failure" | "publish" | "budget_exhausted")
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub scenario: String,
    pub seed: u64,
    pub transcript: Vec<TranscriptEntry>,
    pub trace: Vec<TraceRecord>,
    /// Request ids in turn order.
    pub requests: Vec<String>,
    pub dropped: u64,
    /// Step budget hit during the run.
    pub exhausted: bool,
    /// Ticks of the clock when the run ended.
    pub final_tick: u64,
}

impl RunOutput {
    pub fn transcript_jsonl(&self) -> String {
        self.transcript
            .iter()
            .map(|e| serde_json::to_string(e).expect("entries serialize") + "\n")
            .collect()
    }

    /// Last terminal entry for `request_id`.
    pub fn final_entry(&self, request_id: &str) -> Option<&TranscriptEntry> {
        self.transcript
            .iter()
            .rev()
            .find(|e| e.request_id == request_id && e.is_terminal())
    }

    pub fn last_request(&self) -> Option<&str> {
        self.requests.last().map(String::as_str)
    }
}

/// Builds the deployment a scenario describes.
pub fn deployment(s: &Scenario) -> Result<Deployment, DeployError> {
    Ok(Deployment::new(s.topology.clone(), s.kb.clone())?
        .with_scripts(s.scripts.clone())
        .with_templates(s.templates.clone())
        .with_settings(s.settings))
}

/// Starts a session with the scenario's user attributes and facts.
pub fn start_session(s: &Scenario, trace: TraceStore) -> Result<Session, DeployError> {
    let mut memory = SessionMemory::new(&s.name);
    for f in &s.user.facts {
        memory.store(&f.key, &f.value, 0);
    }
    deployment(s)?.start(s.user.attributes.clone(), memory, trace)
}

/// Plays every turn to quiescence. Everything is deterministic, so the
/// seed only labels the run.
pub fn run_scenario(s: &Scenario, seed: u64) -> Result<RunOutput, DeployError> {
    run_with_trace(s, seed, TraceStore::new())
}

pub fn run_with_trace(s: &Scenario, seed: u64, trace: TraceStore) -> Result<RunOutput, DeployError> {
    let mut session = start_session(s, trace)?;
    session.take_events();
    let mut transcript = Vec::new();
    let mut requests = Vec::new();
    let mut exhausted = false;
    for turn in &s.user.turns {
        let rid = match session.submit(&turn.text) {
            Ok(rid) => rid,
            Err(err) => {
                transcript.push(TranscriptEntry {
                    kind: "rejected".into(),
                    request_id: String::new(),
                    payload: json!({ "text": turn.text, "code": err.code }),
                });
                continue;
            }
        };
        transcript.push(TranscriptEntry {
            kind: "user".into(),
            request_id: rid.clone(),
            payload: json!({ "text": turn.text }),
        });
        requests.push(rid.clone());
        let mut replies = turn.integration_replies.iter();
        loop {
            let pause = session.run_until_user();
            transcript.extend(session.take_events().into_iter().map(TranscriptEntry::from));
            match pause {
                Err(_) => {
                    exhausted = true;
                    break;
                }
                Ok(Pause::Quiescent) => break,
                Ok(Pause::AwaitingUser) => {
                    let waiting: Vec<String> = session
                        .twin()
                        .open_requests()
                        .filter(|r| session.twin().is_awaiting_integration(r))
                        .map(str::to_owned)
                        .collect();
                    match (waiting.first(), replies.next()) {
                        (Some(r), Some(reply)) => {
                            transcript.push(TranscriptEntry {
                                kind: "user_integration".into(),
                                request_id: r.clone(),
                                payload: json!({ "text": reply }),
                            });
                            let _ = session.integrate(r, reply);
                        }
                        _ => {
                            // Nobody answers: let the wait run out.
                            if session.run().is_err() {
                                exhausted = true;
                            }
                            transcript.extend(session.take_events().into_iter().map(TranscriptEntry::from));
                            break;
                        }
                    }
                }
            }
        }
        if exhausted {
            break;
        }
    }
    let _ = session.flush_trace();
    Ok(RunOutput {
        scenario: s.name.clone(),
        seed,
        transcript,
        trace: session.trace().to_vec(),
        requests,
        dropped: session.bus().dropped(),
        exhausted,
        final_tick: session.now(),
    })
}

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use henry_core::acl::UserAttributes;
use henry_core::agent::SessionMemory;
use henry_core::bus::trace::{agents_involved, for_request, stage_sequence};
use henry_core::bus::TraceStore;
use henry_core::code::ErrorCode;
use henry_core::event::UserEvent;
use henry_core::runtime::{Deployment, Pause, Session};
use henry_core::topology::TWIN;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::watch;

use crate::error::ApiError;

#[derive(Clone, Copy, Debug)]
pub struct GatewayConfig {
    /// Wall-clock time a session waits for an integration reply before the
    /// request continues without it.
    pub integration_wait: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            integration_wait: Duration::from_secs(120),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub attributes: UserAttributes,
    pub created_tick: u64,
    pub twin: String,
}

/// One user's session: its own bus, plus every event it has emitted.
pub(crate) struct Slot {
    handle: SessionHandle,
    session: Session,
    requests: BTreeSet<String>,
    events: Vec<UserEvent>,
    /// Number of events emitted so far; stream readers wait on it.
    emitted: watch::Sender<usize>,
}

impl Slot {
    /// Runs until the session needs the user or has nothing left to do, and
    /// publishes what the user should see. Returns requests awaiting a reply.
    fn pump(&mut self, let_wait_expire: bool) -> Vec<String> {
        // A step-budget stop already emitted budget_exhausted events.
        let _ = if let_wait_expire {
            self.session.run().map(|_| Pause::Quiescent)
        } else {
            self.session.run_until_user()
        };
        let fresh = self.session.take_events();
        if !fresh.is_empty() {
            self.events.extend(fresh);
            self.emitted.send_replace(self.events.len());
        }
        let twin = self.session.twin();
        twin.open_requests()
            .filter(|r| twin.is_awaiting_integration(r))
            .map(str::to_owned)
            .collect()
    }
}

pub type SharedSlot = Arc<Mutex<Slot>>;

/// All live sessions against one deployment.
pub struct Gateway {
    deployment: Deployment,
    config: GatewayConfig,
    sessions: Mutex<BTreeMap<String, SharedSlot>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// 128 random bits, hex encoded.
fn new_session_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

impl Gateway {
    pub fn new(deployment: Deployment, config: GatewayConfig) -> Arc<Self> {
        Arc::new(Gateway {
            deployment,
            config,
            sessions: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn session_count(&self) -> usize {
        lock(&self.sessions).len()
    }

    fn slot(&self, session_id: &str) -> Result<SharedSlot, ApiError> {
        lock(&self.sessions)
            .get(session_id)
            .cloned()
            .ok_or_else(|| ApiError::new(ErrorCode::UnknownSession))
    }

    pub fn create_session(&self, attributes: UserAttributes) -> Result<SessionHandle, ApiError> {
        if attributes.invalid_name().is_some() {
            return Err(ApiError::new(ErrorCode::BadAttributes));
        }
        let id = new_session_id();
        let session = self
            .deployment
            .start(attributes.clone(), SessionMemory::new(&id), TraceStore::new())
            .map_err(|e| ApiError {
                code: ErrorCode::NoUpstream,
                message: e.to_string(),
            })?
            .with_request_prefix(&format!("{}-", &id[..8]));
        let handle = SessionHandle {
            session_id: id.clone(),
            attributes,
            created_tick: session.now(),
            twin: TWIN.to_owned(),
        };
        let slot = Slot {
            handle: handle.clone(),
            session,
            requests: BTreeSet::new(),
            events: Vec::new(),
            emitted: watch::Sender::new(0),
        };
        lock(&self.sessions).insert(id, Arc::new(Mutex::new(slot)));
        Ok(handle)
    }

    pub fn handle(&self, session_id: &str) -> Result<SessionHandle, ApiError> {
        let slot = self.slot(session_id)?;
        let handle = lock(&slot).handle.clone();
        Ok(handle)
    }

    /// Hands `text` to the session's twin and runs the session. Events
    /// appear on the session's stream.
    pub fn post_message(self: &Arc<Self>, session_id: &str, text: &str) -> Result<String, ApiError> {
        let slot = self.slot(session_id)?;
        let mut guard = lock(&slot);
        let rid = guard.session.submit(text)?;
        guard.requests.insert(rid.clone());
        let waiting = guard.pump(false);
        drop(guard);
        self.expire_later(&slot, waiting);
        Ok(rid)
    }

    pub fn post_integration(self: &Arc<Self>, session_id: &str, request_id: &str, text: &str) -> Result<(), ApiError> {
        let slot = self.slot(session_id)?;
        let mut guard = lock(&slot);
        if !guard.requests.contains(request_id) {
            return Err(ApiError::new(ErrorCode::NoOutstandingIntegration));
        }
        guard.session.integrate(request_id, text)?;
        let waiting = guard.pump(false);
        drop(guard);
        self.expire_later(&slot, waiting);
        Ok(())
    }

    /// Once the wait is over, requests still waiting continue without the
    /// reply. Sessions run on logical time, so this is what lets it pass.
    fn expire_later(self: &Arc<Self>, slot: &SharedSlot, waiting: Vec<String>) {
        if waiting.is_empty() {
            return;
        }
        let Ok(runtime) = tokio::runtime::Handle::try_current() else {
            return;
        };
        let slot = Arc::clone(slot);
        let wait = self.config.integration_wait;
        runtime.spawn(async move {
            tokio::time::sleep(wait).await;
            let mut guard = lock(&slot);
            let twin = guard.session.twin();
            if waiting.iter().any(|r| twin.is_awaiting_integration(r)) {
                guard.pump(true);
            }
        });
    }

    /// Trace records of one request (or of the whole session), with the
    /// agents involved and mediator stages.
    pub fn trace(&self, session_id: &str, request_id: Option<&str>) -> Result<Value, ApiError> {
        let slot = self.slot(session_id)?;
        let guard = lock(&slot);
        let trace = guard.session.trace();
        Ok(match request_id {
            Some(rid) => {
                if !guard.requests.contains(rid) {
                    return Err(ApiError::new(ErrorCode::UnknownRequest));
                }
                json!({
                    "request_id": rid,
                    "records": for_request(trace, rid).collect::<Vec<_>>(),
                    "agents_involved": agents_involved(trace, rid),
                    "stage_sequence": stage_sequence(trace, rid),
                })
            }
            None => json!({ "records": trace }),
        })
    }

    /// Boards live inside the session that opened them; anything else is
    /// reported as belonging to someone else.
    pub fn agora(&self, session_id: &str, agora_id: &str) -> Result<Value, ApiError> {
        let slot = self.slot(session_id)?;
        let guard = lock(&slot);
        match guard.session.agora(agora_id) {
            Some(board) if guard.requests.contains(&board.request_id) => Ok(board.export()),
            _ => Err(ApiError::new(ErrorCode::NotYourBoard)),
        }
    }

    /// The session's slot and a receiver that changes whenever new events
    /// are appended.
    pub(crate) fn subscribe(&self, session_id: &str) -> Result<(SharedSlot, watch::Receiver<usize>), ApiError> {
        let slot = self.slot(session_id)?;
        let rx = lock(&slot).emitted.subscribe();
        Ok((slot, rx))
    }

    /// Events emitted from index `from` on.
    pub(crate) fn events_since(slot: &SharedSlot, from: usize) -> Vec<UserEvent> {
        lock(slot).events.get(from..).map(<[_]>::to_vec).unwrap_or_default()
    }
}

//! The digital twin: the user's stand-in inside the system.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::acl::UserAttributes;
use crate::bus::{Agent, Context, TraceAction};
use crate::code::ErrorCode;
use crate::event::{EventKind, UserEvent};
use crate::message::{Answer, Envelope, ErrorBody, Payload, PublishBody, QueryBody};
use crate::text;

use super::humanize::{describe, Humanizer};
use super::memory::SessionMemory;

/// Builds a fresh mediator named by the first argument, reporting to the
/// twin named by the second.
pub type MediatorFactory = Arc<dyn Fn(&str, &str) -> Box<dyn Agent> + Send + Sync>;

pub const MEDIATOR_PREFIX: &str = "mediator";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Delay before the first retry; each later retry doubles it.
    pub base: u64,
    /// Total attempts, the original one included.
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: 8,
            max_attempts: 3,
        }
    }
}

impl RetryPolicy {
    /// Due tick after the `failures`-th failure. The first delay counts
    /// from `anchor` = the failure tick, later ones from the previous due
    /// tick, so retries land at +8, +24, +56, … of the first failure.
    pub fn next_due(&self, anchor: u64, failures: u32) -> u64 {
        let shift = failures.saturating_sub(1).min(32);
        anchor.saturating_add(self.base.saturating_mul(1 << shift))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Question,
    Task,
}

/// Imperative task verb anywhere in the message → task.
pub fn classify(text: &str) -> Route {
    if text::words(text).iter().any(|w| text::TASK_VERBS.contains(&w.as_str())) {
        Route::Task
    } else {
        Route::Question
    }
}

/// A request stored for later resubmission.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeferredRequest {
    pub request_id: String,
    pub text: String,
    pub attempts: u32,
    pub next_due: u64,
}

#[derive(Clone, Debug)]
struct OpenRequest {
    text: String,
    route: Route,
    /// Failed attempts so far.
    failures: u32,
    next_due: Option<u64>,
}

#[derive(Clone, Debug)]
struct Awaiting {
    from: String,
    segments: Vec<String>,
}

pub struct DigitalTwin {
    name: String,
    attrs: UserAttributes,
    memory: SessionMemory,
    humanizer: Humanizer,
    retry: RetryPolicy,
    facilitator: Option<String>,
    mediator: Option<MediatorFactory>,
    open: BTreeMap<String, OpenRequest>,
    awaiting: BTreeMap<String, Awaiting>,
    /// Timer token → request id.
    timers: BTreeMap<u64, String>,
    next_token: u64,
}

impl DigitalTwin {
    pub fn new(name: &str, attrs: UserAttributes, memory: SessionMemory) -> Self {
        DigitalTwin {
            name: name.to_owned(),
            attrs,
            memory,
            humanizer: Humanizer::default(),
            retry: RetryPolicy::default(),
            facilitator: None,
            mediator: None,
            open: BTreeMap::new(),
            awaiting: BTreeMap::new(),
            timers: BTreeMap::new(),
            next_token: 0,
        }
    }

    pub fn with_facilitator(mut self, name: &str) -> Self {
        self.facilitator = Some(name.to_owned());
        self
    }

    pub fn with_mediator(mut self, factory: MediatorFactory) -> Self {
        self.mediator = Some(factory);
        self
    }

    pub fn with_humanizer(mut self, humanizer: Humanizer) -> Self {
        self.humanizer = humanizer;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn memory(&self) -> &SessionMemory {
        &self.memory
    }

    pub fn attrs(&self) -> &UserAttributes {
        &self.attrs
    }

    pub fn is_open(&self, request_id: &str) -> bool {
        self.open.contains_key(request_id)
    }

    pub fn open_requests(&self) -> impl Iterator<Item = &str> {
        self.open.keys().map(String::as_str)
    }

    pub fn deferred(&self) -> Vec<DeferredRequest> {
        self.open
            .iter()
            .filter_map(|(rid, r)| {
                r.next_due.map(|due| DeferredRequest {
                    request_id: rid.clone(),
                    text: r.text.clone(),
                    attempts: r.failures,
                    next_due: due,
                })
            })
            .collect()
    }

    pub fn is_awaiting_integration(&self, request_id: &str) -> bool {
        self.awaiting.contains_key(request_id)
    }

    pub fn has_awaiting(&self) -> bool {
        !self.awaiting.is_empty()
    }

    /// Forgets every open request, returning their ids.
    pub fn abandon_open(&mut self) -> Vec<String> {
        self.awaiting.clear();
        self.timers.clear();
        std::mem::take(&mut self.open).into_keys().collect()
    }

    /// Routes one user message. Exactly one envelope leaves the twin for
    /// every accepted message.
    pub fn handle_user(&mut self, request_id: &str, text: &str, ctx: &mut Context<'_>) -> Result<Route, ErrorBody> {
        if text.trim().is_empty() {
            return Err(ErrorBody::new(ErrorCode::EmptyMessage, "message is empty"));
        }
        if self.facilitator.is_none() && self.mediator.is_none() {
            return Err(ErrorBody::new(ErrorCode::NoUpstream, "no facilitator or mediator configured"));
        }
        let route = classify(text);
        self.open.insert(
            request_id.to_owned(),
            OpenRequest {
                text: text.to_owned(),
                route,
                failures: 0,
                next_due: None,
            },
        );
        self.dispatch(request_id, ctx);
        Ok(route)
    }

    fn dispatch(&mut self, request_id: &str, ctx: &mut Context<'_>) {
        let Some(req) = self.open.get(request_id) else { return };
        let body = QueryBody {
            text: req.text.clone(),
            attrs: self.attrs.clone(),
            facts: self.memory.matching(&req.text),
        };
        match (req.route, &self.facilitator, &self.mediator) {
            (Route::Question, Some(f), _) | (Route::Task, Some(f), None) => {
                ctx.send(f, request_id, Payload::UserQuery(body));
            }
            (_, _, Some(factory)) => {
                let name = ctx.unique_name(MEDIATOR_PREFIX);
                ctx.spawn(factory(&name, &self.name), None);
                ctx.send(&name, request_id, Payload::TaskRequest(body));
            }
            (_, None, None) => unreachable!("checked by handle_user"),
        }
    }

    /// Passes the user's reply to the facilitator waiting on it and keeps
    /// it as a fact for later requests.
    pub fn answer_integration(&mut self, request_id: &str, reply: &str, ctx: &mut Context<'_>) -> Result<(), ErrorBody> {
        if reply.trim().is_empty() {
            return Err(ErrorBody::new(ErrorCode::EmptyMessage, "reply is empty"));
        }
        let Some(waiting) = self.awaiting.remove(request_id) else {
            return Err(ErrorBody::new(
                ErrorCode::NoOutstandingIntegration,
                format!("nothing is waiting for an answer on {request_id}"),
            ));
        };
        let key = fact_key(&waiting.segments);
        if !key.is_empty() {
            self.memory.store(&key, reply.trim(), ctx.now());
        }
        ctx.send(
            &waiting.from,
            request_id,
            Payload::IntegrationResponse {
                text: reply.trim().to_owned(),
            },
        );
        Ok(())
    }

    fn on_answer(&mut self, answer: &Answer, ctx: &mut Context<'_>) {
        let rid = answer.request_id.clone();
        let Some(req) = self.open.remove(&rid) else { return };
        self.awaiting.remove(&rid);
        let text = self.humanizer.humanize_placeholders(&answer.text);
        self.memory.record(&rid, &req.text, &text);
        ctx.notify_user(UserEvent::new(
            EventKind::Answer,
            &rid,
            json!({
                "text": text,
                "author": answer.author,
                "cited": answer.cited,
                "confidence": answer.confidence,
                "attempts": req.failures + 1,
            }),
        ));
    }

    fn on_error(&mut self, rid: &str, err: &ErrorBody, ctx: &mut Context<'_>) {
        let Some(req) = self.open.get_mut(rid) else { return };
        self.awaiting.remove(rid);
        if !err.is_transient() {
            let req = self.open.remove(rid).expect("present");
            let text = self.humanizer.humanize(err);
            self.memory.record(rid, &req.text, &text);
            ctx.notify_user(failure_event(rid, err, text));
            return;
        }
        req.failures += 1;
        if req.failures >= self.retry.max_attempts {
            let req = self.open.remove(rid).expect("present");
            let mut final_err = ErrorBody::new(
                ErrorCode::RetriesExhausted,
                format!("gave up after {} attempts", req.failures),
            );
            final_err.domain = err.first_domain().map(str::to_owned);
            final_err.causes = vec![err.clone()];
            let text = self.humanizer.humanize(&final_err);
            self.memory.record(rid, &req.text, &text);
            ctx.notify_user(failure_event(rid, &final_err, text));
            return;
        }
        let anchor = match req.next_due {
            Some(prev) if req.failures > 1 => prev,
            _ => ctx.now(),
        };
        let due = self.retry.next_due(anchor, req.failures).max(ctx.now());
        req.next_due = Some(due);
        let failures = req.failures;
        self.next_token += 1;
        self.timers.insert(self.next_token, rid.to_owned());
        ctx.set_timer(due, self.next_token);
        let (code, _) = describe(err);
        ctx.trace(
            rid,
            TraceAction::Deferred,
            format!("attempt {failures} failed with {code}; retry at {due}"),
        );
        ctx.notify_user(UserEvent::new(
            EventKind::Notice,
            rid,
            json!({
                "text": self.humanizer.humanize(err),
                "code": code,
                "attempt": failures,
                "next_due": due,
            }),
        ));
    }

    fn on_publish(&mut self, rid: &str, body: &PublishBody, ctx: &mut Context<'_>) {
        let Some(req) = self.open.remove(rid) else { return };
        let text = body
            .bundle
            .iter()
            .map(|(agent, solution)| format!("{agent}: {solution}"))
            .collect::<Vec<_>>()
            .join("\n");
        self.memory.record(rid, &req.text, &text);
        ctx.notify_user(UserEvent::new(
            EventKind::Publish,
            rid,
            json!({
                "text": text,
                "agora_id": body.agora_id,
                "bundle": body.bundle,
                "attempts": req.failures + 1,
            }),
        ));
    }
}

fn failure_event(rid: &str, err: &ErrorBody, text: String) -> UserEvent {
    UserEvent::new(
        EventKind::Failure,
        rid,
        json!({ "text": text, "code": err.code }),
    )
}

/// Memory key for a reply covering `segments`: their tokens, joined by `_`.
pub fn fact_key(segments: &[String]) -> String {
    let mut seen = Vec::new();
    for token in segments.iter().flat_map(|s| text::tokenize(s)) {
        if !seen.contains(&token) {
            seen.push(token);
        }
    }
    seen.join("_")
}

impl Agent for DigitalTwin {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, env: Envelope, ctx: &mut Context<'_>) {
        let rid = env.request_id.as_str();
        match &env.payload {
            Payload::Answer(answer) => {
                let mut answer = answer.clone();
                answer.request_id = rid.to_owned();
                self.on_answer(&answer, ctx);
            }
            Payload::ErrorNotice(err) => self.on_error(rid, err, ctx),
            Payload::Publish(body) => self.on_publish(rid, body, ctx),
            Payload::Ack { text } if self.open.contains_key(rid) => {
                ctx.notify_user(UserEvent::new(EventKind::Ack, rid, json!({ "text": text })));
            }
            Payload::IntegrationRequest { segments, prompt } if self.open.contains_key(rid) => {
                self.awaiting.insert(
                    rid.to_owned(),
                    Awaiting {
                        from: env.sender.clone(),
                        segments: segments.clone(),
                    },
                );
                ctx.notify_user(UserEvent::new(
                    EventKind::IntegrationRequest,
                    rid,
                    json!({ "text": prompt, "segments": segments }),
                ));
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut Context<'_>) {
        let Some(rid) = self.timers.remove(&token) else { return };
        let Some(req) = self.open.get_mut(&rid) else { return };
        req.next_due = req.next_due.or(Some(ctx.now()));
        let attempt = req.failures + 1;
        ctx.trace(&rid, TraceAction::Resubmitted, format!("attempt {attempt}"));
        self.dispatch(&rid, ctx);
    }
}

impl std::fmt::Debug for DigitalTwin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DigitalTwin")
            .field("name", &self.name)
            .field("facilitator", &self.facilitator)
            .field("open", &self.open.keys().collect::<Vec<_>>())
            .finish()
    }
}

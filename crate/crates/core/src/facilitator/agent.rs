use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::acl::UserAttributes;
use crate::agent::{error_placeholder, placeholder};
use crate::bus::{Agent, Context, BUS};
use crate::code::ErrorCode;
use crate::message::{Answer, Envelope, ErrorBody, Fact, Payload, SubQueryBody};
use crate::topology::{summarize_children, CapabilityProfile, DEFAULT_PROFILE_SIZE};

use super::plan::{best_child, decompose, fact_resolves, Assignment, DecompositionPlan, DEFAULT_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacilitatorSettings {
    pub threshold: f64,
    /// Ticks to wait for the user's reply to an integration request.
    pub integration_budget: u64,
    pub profile_size: usize,
}

impl Default for FacilitatorSettings {
    fn default() -> Self {
        FacilitatorSettings {
            threshold: DEFAULT_THRESHOLD,
            integration_budget: 64,
            profile_size: DEFAULT_PROFILE_SIZE,
        }
    }
}

/// How a fused part came out.
#[derive(Clone, Debug, PartialEq)]
enum Part {
    Answered(Answer),
    Failed(ErrorBody),
}

#[derive(Clone, Debug)]
struct PendingRequest {
    origin: String,
    attrs: UserAttributes,
    facts: Vec<Fact>,
    plan: DecompositionPlan,
    /// Uncovered segments no fact resolved.
    unresolved: Vec<String>,
    /// Facts matched to uncovered segments, plus the integration reply.
    context: Vec<Fact>,
    may_integrate: bool,
    integration_used: bool,
    integration_timer: Option<u64>,
    timed_out: bool,
    parts: BTreeMap<String, Part>,
    awaiting: BTreeSet<String>,
}

/// Parent node over a set of children: decomposes questions into
/// child-targeted sub-queries and fuses what comes back.
pub struct FacilitatorAgent {
    name: String,
    parent: Option<String>,
    settings: FacilitatorSettings,
    children: BTreeMap<String, CapabilityProfile>,
    pending: BTreeMap<String, PendingRequest>,
    timers: BTreeMap<u64, String>,
    next_token: u64,
}

impl FacilitatorAgent {
    pub fn new(name: &str, parent: Option<&str>, settings: FacilitatorSettings) -> Self {
        FacilitatorAgent {
            name: name.to_owned(),
            parent: parent.map(str::to_owned),
            settings,
            children: BTreeMap::new(),
            pending: BTreeMap::new(),
            timers: BTreeMap::new(),
            next_token: 0,
        }
    }

    pub fn children(&self) -> &BTreeMap<String, CapabilityProfile> {
        &self.children
    }

    /// What this node announces upward: the merged profiles of its children.
    pub fn summary(&self) -> CapabilityProfile {
        let profiles: Vec<CapabilityProfile> = self.children.values().cloned().collect();
        summarize_children(&self.name, &profiles, self.settings.profile_size)
    }

    pub fn pending_requests(&self) -> impl Iterator<Item = &str> {
        self.pending.keys().map(String::as_str)
    }

    fn announce(&self, ctx: &mut Context<'_>) {
        if let Some(parent) = &self.parent {
            let rid = format!("join:{}", self.name);
            ctx.send(parent, &rid, Payload::CapabilityAnnounce(self.summary()));
        }
    }

    fn on_question(&mut self, env: &Envelope, text: &str, attrs: &UserAttributes, facts: Vec<Fact>, ctx: &mut Context<'_>) {
        let rid = env.request_id.clone();
        if self.children.is_empty() {
            let err = ErrorBody::new(ErrorCode::NoAgentsAvailable, format!("{} has no children yet", self.name));
            ctx.send(&env.sender, &rid, Payload::ErrorNotice(err));
            return;
        }
        let plan = decompose(text, &self.children, self.settings.threshold);
        let mut pending = PendingRequest {
            origin: env.sender.clone(),
            attrs: attrs.clone(),
            facts,
            plan,
            unresolved: Vec::new(),
            context: Vec::new(),
            // Only the twin can put a question to the user.
            may_integrate: matches!(env.payload, Payload::UserQuery(_)),
            integration_used: false,
            integration_timer: None,
            timed_out: false,
            parts: BTreeMap::new(),
            awaiting: BTreeSet::new(),
        };
        resolve_with_facts(&mut pending);
        if !pending.unresolved.is_empty() && pending.may_integrate {
            pending.integration_used = true;
            self.next_token += 1;
            let timer = ctx.set_user_timer(ctx.now() + self.settings.integration_budget, self.next_token);
            self.timers.insert(self.next_token, rid.clone());
            pending.integration_timer = Some(timer);
            let prompt = integration_prompt(&pending.unresolved);
            ctx.send(
                &pending.origin,
                &rid,
                Payload::IntegrationRequest {
                    segments: pending.unresolved.clone(),
                    prompt,
                },
            );
            self.pending.insert(rid, pending);
            return;
        }
        self.dispatch(&rid, pending, ctx);
    }

    fn on_integration_response(&mut self, rid: &str, reply: &str, ctx: &mut Context<'_>) {
        let Some(mut pending) = self.pending.remove(rid) else { return };
        let Some(timer) = pending.integration_timer.take() else {
            // Already dispatched (e.g. timed out); the reply comes too late.
            self.pending.insert(rid.to_owned(), pending);
            return;
        };
        ctx.cancel_timer(timer);
        self.timers.retain(|_, r| r != rid);
        let key = crate::agent::fact_key(&pending.unresolved);
        let fact = Fact {
            key,
            value: reply.to_owned(),
        };
        // Each open segment is scored again with the reply appended; what
        // still routes nowhere counts as answered by the reply itself.
        let open = std::mem::take(&mut pending.unresolved);
        let threshold = self.settings.threshold;
        for seg in &open {
            let augmented = format!("{seg} {reply}");
            if let Some((child, s)) = best_child(&augmented, &self.children) {
                if s > 0.0 && s >= threshold {
                    pending.plan.assignments.push(Assignment {
                        segment: augmented,
                        child: child.to_owned(),
                        score: s,
                    });
                }
            }
        }
        pending.plan.uncovered.retain(|s| !open.contains(s));
        pending.context.push(fact.clone());
        pending.facts.push(fact);
        self.dispatch(rid, pending, ctx);
    }

    fn dispatch(&mut self, rid: &str, mut pending: PendingRequest, ctx: &mut Context<'_>) {
        for (child, segments) in pending.plan.by_child() {
            ctx.send(
                child,
                rid,
                Payload::SubQuery(SubQueryBody {
                    text: segments.join(" "),
                    attrs: pending.attrs.clone(),
                    context: pending.context.clone(),
                }),
            );
            pending.awaiting.insert(child.to_owned());
        }
        if pending.awaiting.is_empty() {
            self.finish(rid, pending, ctx);
        } else {
            self.pending.insert(rid.to_owned(), pending);
        }
    }

    fn on_part(&mut self, rid: &str, child: &str, part: Part, ctx: &mut Context<'_>) {
        let Some(pending) = self.pending.get_mut(rid) else { return };
        if !pending.awaiting.remove(child) {
            return;
        }
        pending.parts.insert(child.to_owned(), part);
        if pending.awaiting.is_empty() {
            let pending = self.pending.remove(rid).expect("present");
            self.finish(rid, pending, ctx);
        }
    }

    fn finish(&mut self, rid: &str, pending: PendingRequest, ctx: &mut Context<'_>) {
        let payload = match aggregate(rid, &self.name, &pending) {
            Ok(answer) => Payload::Answer(answer),
            Err(err) => Payload::ErrorNotice(err),
        };
        ctx.send(&pending.origin, rid, payload);
    }
}

/// Moves uncovered segments some fact answers out of `unresolved`, keeping
/// the matching facts as sub-query context.
fn resolve_with_facts(pending: &mut PendingRequest) {
    pending.unresolved.clear();
    for seg in &pending.plan.uncovered {
        let matching: Vec<&Fact> = pending.facts.iter().filter(|f| fact_resolves(f, seg)).collect();
        if matching.is_empty() {
            pending.unresolved.push(seg.clone());
        }
        for f in matching {
            if !pending.context.contains(f) {
                pending.context.push(f.clone());
            }
        }
    }
}

fn integration_prompt(segments: &[String]) -> String {
    let quoted: Vec<String> = segments.iter().map(|s| format!("\"{s}\"")).collect();
    format!("Could you tell me more about {}?", quoted.join(" and "))
}

/// Fuses the parts of a finished request: one line per child in plan
/// order, prefixed by its segments; failed parts become placeholders.
fn aggregate(rid: &str, me: &str, pending: &PendingRequest) -> Result<Answer, ErrorBody> {
    let mut lines = Vec::new();
    let mut cited: Vec<String> = Vec::new();
    let mut confidence: Option<f64> = None;
    let mut denied = 0;
    let mut failures = Vec::new();
    let routed = pending.plan.by_child();
    for (child, segments) in &routed {
        let prefix = segments.join(" ");
        match pending.parts.get(*child) {
            Some(Part::Answered(a)) => {
                denied += a.denied;
                let text = if a.cited.is_empty() && a.denied > 0 {
                    placeholder(ErrorCode::AclDeniedAll.as_str(), None)
                } else {
                    a.text.clone()
                };
                lines.push(format!("{prefix}: {text}"));
                for id in &a.cited {
                    if !cited.contains(id) {
                        cited.push(id.clone());
                    }
                }
                confidence = Some(confidence.map_or(a.confidence, |c: f64| c.min(a.confidence)));
            }
            Some(Part::Failed(err)) => {
                lines.push(format!("{prefix}: {}", error_placeholder(err)));
                failures.push(err.clone());
            }
            None => {}
        }
    }
    if !routed.is_empty() && failures.len() == routed.len() {
        let mut err = ErrorBody::new(ErrorCode::AllChildrenFailed, format!("all {} children failed", failures.len()));
        err.causes = failures;
        return Err(err);
    }
    for seg in &pending.unresolved {
        lines.push(format!("{seg}: {}", placeholder("Uncovered", None)));
    }
    if pending.timed_out {
        lines.push(placeholder(ErrorCode::IntegrationTimeout.as_str(), None));
    }
    Ok(Answer {
        request_id: rid.to_owned(),
        author: me.to_owned(),
        text: lines.join("\n"),
        cited,
        confidence: confidence.unwrap_or(0.0),
        denied,
    })
}

impl Agent for FacilitatorAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, env: Envelope, ctx: &mut Context<'_>) {
        let rid = env.request_id.clone();
        match &env.payload {
            Payload::UserQuery(q) => {
                let (text, attrs, facts) = (q.text.clone(), q.attrs.clone(), q.facts.clone());
                self.on_question(&env, &text, &attrs, facts, ctx);
            }
            Payload::SubQuery(q) => {
                let (text, attrs, facts) = (q.text.clone(), q.attrs.clone(), q.context.clone());
                self.on_question(&env, &text, &attrs, facts, ctx);
            }
            Payload::IntegrationResponse { text } => self.on_integration_response(&rid, text, ctx),
            Payload::Answer(a) => self.on_part(&rid, &env.sender, Part::Answered(a.clone()), ctx),
            Payload::ErrorNotice(err) if env.sender == BUS => {
                // Bounced sub-query: the detail names the missing child.
                if let Some(child) = err.detail.rsplit(' ').next() {
                    let child = child.to_owned();
                    self.on_part(&rid, &child, Part::Failed(err.clone()), ctx);
                }
            }
            Payload::ErrorNotice(err) => self.on_part(&rid, &env.sender, Part::Failed(err.clone()), ctx),
            Payload::JoinNotify { agent, .. } => {
                self.children
                    .entry(agent.clone())
                    .or_insert_with(|| CapabilityProfile::empty(agent.clone()));
            }
            Payload::CapabilityAnnounce(profile) => {
                self.children.insert(env.sender.clone(), profile.clone());
                self.announce(ctx);
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut Context<'_>) {
        let Some(rid) = self.timers.remove(&token) else { return };
        let Some(mut pending) = self.pending.remove(&rid) else { return };
        if pending.integration_timer.take().is_none() {
            self.pending.insert(rid, pending);
            return;
        }
        pending.timed_out = true;
        self.dispatch(&rid, pending, ctx);
    }
}

impl std::fmt::Debug for FacilitatorAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FacilitatorAgent")
            .field("name", &self.name)
            .field("parent", &self.parent)
            .field("children", &self.children.keys().collect::<Vec<_>>())
            .field("pending", &self.pending.keys().collect::<Vec<_>>())
            .finish()
    }
}

use std::sync::Arc;

use crate::acl::{kb_query, KnowledgeItem, UserAttributes};
use crate::bus::{Agent, Context, TraceAction};
use crate::code::ErrorCode;
use crate::message::{Answer, Envelope, ErrorBody, Payload, RevisionBody, SubQueryBody};
use crate::topology::CapabilityProfile;

use super::reasoner::{Reasoner, ReasonerScript};

pub const DEFAULT_KB_LIMIT: usize = 3;

/// A leaf agent interfacing one domain's knowledge base. It also takes part
/// in mediated tasks when recruited.
pub struct DomainAgent {
    name: String,
    domain: Option<String>,
    profile: CapabilityProfile,
    kb: Arc<Vec<KnowledgeItem>>,
    kb_limit: usize,
    reasoner: Box<dyn Reasoner>,
    /// Only the offline controls are read from here.
    script: ReasonerScript,
    queries_seen: u32,
}

impl DomainAgent {
    pub fn new(
        name: &str,
        domain: Option<&str>,
        profile: CapabilityProfile,
        kb: Arc<Vec<KnowledgeItem>>,
        reasoner: Box<dyn Reasoner>,
        script: ReasonerScript,
    ) -> Self {
        DomainAgent {
            name: name.to_owned(),
            domain: domain.map(str::to_owned),
            profile,
            kb,
            kb_limit: DEFAULT_KB_LIMIT,
            reasoner,
            script,
            queries_seen: 0,
        }
    }

    pub fn with_kb_limit(mut self, limit: usize) -> Self {
        self.kb_limit = limit.max(1);
        self
    }

    pub fn profile(&self) -> &CapabilityProfile {
        &self.profile
    }

    fn domain_items(&self) -> impl Iterator<Item = &KnowledgeItem> {
        let domain = self.domain.as_deref();
        self.kb.iter().filter(move |i| Some(i.domain.as_str()) == domain)
    }

    /// Answers from the items `attrs` may see, tracing the read and every
    /// denial.
    pub fn domain_answer(
        &mut self,
        request_id: &str,
        subq: &SubQueryBody,
        attrs: &UserAttributes,
        ctx: &mut Context<'_>,
    ) -> Answer {
        let kb = Arc::clone(&self.kb);
        let domain = self.domain.clone();
        let items = kb.iter().filter(|i| Some(i.domain.as_str()) == domain.as_deref());
        // Facts the facilitator resolved narrow retrieval down.
        let mut query = subq.text.clone();
        for fact in &subq.context {
            query.push(' ');
            query.push_str(&fact.value);
        }
        let result = kb_query(items, &query, attrs, self.kb_limit);
        let hit_ids: Vec<&str> = result.hits.iter().map(|h| h.item.id.as_str()).collect();
        ctx.trace(
            request_id,
            TraceAction::KbRead,
            format!("{query} hits=[{}]", hit_ids.join(",")),
        );
        for id in &result.denied {
            ctx.trace(request_id, TraceAction::AclDenied, format!("item {id}"));
        }
        let reasoned = self.reasoner.answer(&query, &result.hits);
        Answer {
            request_id: request_id.to_owned(),
            author: self.name.clone(),
            text: reasoned.text,
            cited: reasoned.cited,
            confidence: result.hits.first().map_or(0.0, |h| h.score),
            denied: result.denied.len(),
        }
    }

    fn on_subquery(&mut self, env: &Envelope, subq: &SubQueryBody, ctx: &mut Context<'_>) {
        self.queries_seen += 1;
        if self.script.is_offline(self.queries_seen, ctx.now()) {
            let mut err = ErrorBody::new(ErrorCode::DomainUnavailable, format!("{} is offline", self.name));
            err.domain = self.domain.clone();
            ctx.send(&env.sender, &env.request_id, Payload::ErrorNotice(err));
            return;
        }
        let answer = self.domain_answer(&env.request_id, subq, &subq.attrs, ctx);
        ctx.send(&env.sender, &env.request_id, Payload::Answer(answer));
    }

    fn post(&mut self, agora_id: &str, request_id: &str, stage: u8, round: u32, content: &str, ctx: &mut Context<'_>) -> bool {
        let me = self.name.clone();
        let outcome = ctx
            .services()
            .agoras
            .get_mut(agora_id)
            .and_then(|b| b.post(&me, stage, round, content));
        match outcome {
            Ok(seq) => {
                ctx.trace(
                    request_id,
                    TraceAction::AgoraPost,
                    format!("{agora_id}#{seq} stage={stage} round={round}"),
                );
                true
            }
            Err(e) => {
                ctx.trace(request_id, TraceAction::AclDenied, format!("{agora_id}: {e}"));
                false
            }
        }
    }
}

impl Agent for DomainAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_register(&mut self, parent: Option<&str>, ctx: &mut Context<'_>) {
        let Some(parent) = parent else { return };
        ctx.services()
            .registry
            .insert(self.name.clone(), self.profile.clone());
        let rid = format!("join:{}", self.name);
        ctx.send(parent, &rid, Payload::CapabilityAnnounce(self.profile.clone()));
    }

    fn handle(&mut self, env: Envelope, ctx: &mut Context<'_>) {
        match &env.payload {
            Payload::SubQuery(subq) => self.on_subquery(&env, subq, ctx),
            Payload::Recruit { task, agora_id } => {
                let view = ctx
                    .services()
                    .agoras
                    .get(agora_id)
                    .and_then(|b| b.read(&self.name).ok().map(<[_]>::to_vec))
                    .unwrap_or_default();
                let text = self.reasoner.propose(task, &view);
                if self.post(agora_id, &env.request_id, 2, 0, &text, ctx) {
                    ctx.send(&env.sender, &env.request_id, Payload::InitialSolution { text });
                }
            }
            Payload::Revision(RevisionBody::Request {
                agora_id,
                round,
                own,
                peers,
            }) => {
                let revised = match self.reasoner.revise(own, peers) {
                    Some(text) if self.post(agora_id, &env.request_id, 3, *round, &text, ctx) => Some(text),
                    _ => None,
                };
                ctx.send(
                    &env.sender,
                    &env.request_id,
                    Payload::Revision(RevisionBody::Reply {
                        round: *round,
                        revised,
                    }),
                );
            }
            _ => {}
        }
    }
}

impl std::fmt::Debug for DomainAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainAgent")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("items", &self.domain_items().count())
            .finish()
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{DomainAgent, ReasonerScript, ScriptedReasoner};
use crate::bus::{Agent, Context, TraceAction};
use crate::code::ErrorCode;
use crate::facilitator::{score, DEFAULT_THRESHOLD};
use crate::message::{Envelope, ErrorBody, Payload, PublishBody, QueryBody, RevisionBody};
use crate::topology::{build_capability_profile, AgentDecl, CapabilityProfile, DEFAULT_PROFILE_SIZE};

use super::agora::AgoraBoard;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediatorSettings {
    pub recruit_threshold: f64,
    /// Agents instantiated from templates when nobody can be recruited.
    pub create_count: usize,
    /// Ticks an agent has to answer a recruit or revision request.
    pub response_timeout: u64,
    pub max_rounds: u32,
}

impl Default for MediatorSettings {
    fn default() -> Self {
        MediatorSettings {
            recruit_threshold: DEFAULT_THRESHOLD,
            create_count: 2,
            response_timeout: 16,
            max_rounds: 3,
        }
    }
}

/// Blueprint for agents a mediator creates on demand.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentTemplate {
    /// Instances are named `prefix-N`.
    pub prefix: String,
    pub description: String,
    pub example_questions: Vec<String>,
    pub script: ReasonerScript,
}

impl AgentTemplate {
    pub fn instantiate(&self, name: &str) -> DomainAgent {
        let decl = AgentDecl {
            name: name.to_owned(),
            parent: String::new(),
            description: self.description.clone(),
            example_questions: self.example_questions.clone(),
        };
        DomainAgent::new(
            name,
            None,
            build_capability_profile(&decl, DEFAULT_PROFILE_SIZE),
            Arc::new(Vec::new()),
            Box::new(ScriptedReasoner::new(self.script.clone())),
            self.script.clone(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Prepare = 1,
    Collect = 2,
    Discuss = 3,
    Publish = 4,
    Done = 5,
}

#[derive(Clone, Debug)]
struct TaskState {
    request_id: String,
    task: String,
    agora_id: String,
    roster: Vec<String>,
    created: Vec<String>,
    round: u32,
    awaiting: BTreeSet<String>,
    revised_this_round: bool,
    timer: Option<u64>,
}

/// Ephemeral agent that runs one task through prepare → collect →
/// discuss → publish on its own agora, then unregisters itself.
pub struct MediatorAgent {
    name: String,
    twin: String,
    settings: MediatorSettings,
    templates: Arc<Vec<AgentTemplate>>,
    stage: Option<Stage>,
    state: Option<TaskState>,
}

impl MediatorAgent {
    pub fn new(name: &str, twin: &str, settings: MediatorSettings, templates: Arc<Vec<AgentTemplate>>) -> Self {
        MediatorAgent {
            name: name.to_owned(),
            twin: twin.to_owned(),
            settings,
            templates,
            stage: None,
            state: None,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        self.stage
    }

    fn enter(&mut self, stage: Stage, detail: String, ctx: &mut Context<'_>) {
        self.stage = Some(stage);
        if stage == Stage::Done {
            return;
        }
        let rid = self.state.as_ref().map_or("", |s| s.request_id.as_str()).to_owned();
        ctx.trace(&rid, TraceAction::StageEntered, format!("stage {} {detail}", stage as u8));
    }

    fn fail(&mut self, rid: &str, err: ErrorBody, ctx: &mut Context<'_>) {
        ctx.send(&self.twin, rid, Payload::ErrorNotice(err));
        if let Some(state) = self.state.take() {
            for name in &state.created {
                ctx.unregister(name);
            }
        }
        self.stage = Some(Stage::Done);
        ctx.unregister(&self.name);
    }

    fn prepare(&mut self, rid: &str, body: &QueryBody, ctx: &mut Context<'_>) {
        let registry: Vec<(String, CapabilityProfile)> = ctx
            .services()
            .registry
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut roster: Vec<String> = registry
            .iter()
            .filter(|(_, p)| {
                let s = score(&body.text, p);
                s > 0.0 && s >= self.settings.recruit_threshold
            })
            .map(|(n, _)| n.clone())
            .collect();
        let mut created = Vec::new();
        if roster.is_empty() {
            let n = self.settings.create_count.min(self.templates.len());
            for template in self.templates.iter().take(n) {
                let name = ctx.unique_name(&template.prefix);
                ctx.spawn(Box::new(template.instantiate(&name)), None);
                created.push(name.clone());
                roster.push(name);
            }
        }
        let agora_id = format!("agora-{}", self.name);
        self.state = Some(TaskState {
            request_id: rid.to_owned(),
            task: body.text.clone(),
            agora_id: agora_id.clone(),
            roster: roster.clone(),
            created: created.clone(),
            round: 0,
            awaiting: BTreeSet::new(),
            revised_this_round: false,
            timer: None,
        });
        self.enter(
            Stage::Prepare,
            format!("prepare roster=[{}] created=[{}]", roster.join(","), created.join(",")),
            ctx,
        );
        if roster.is_empty() {
            let err = ErrorBody::new(ErrorCode::NoAgentsAvailable, "no agent matches the task and no template is configured");
            self.fail(rid, err, ctx);
            return;
        }
        let board = ctx.services().agoras.open(AgoraBoard::new(&agora_id, rid, &self.name));
        for name in &roster {
            board.add_participant(name);
        }
        ctx.send(
            &self.twin,
            rid,
            Payload::Ack {
                text: format!("Working on it with {}.", roster.join(" and ")),
            },
        );
        self.collect(ctx);
    }

    fn arm_timer(&mut self, ctx: &mut Context<'_>) {
        let at = ctx.now() + self.settings.response_timeout;
        let state = self.state.as_mut().expect("task running");
        if let Some(old) = state.timer.take() {
            ctx.cancel_timer(old);
        }
        state.timer = Some(ctx.set_timer(at, 0));
    }

    fn collect(&mut self, ctx: &mut Context<'_>) {
        self.enter(Stage::Collect, "collect".to_owned(), ctx);
        let state = self.state.as_mut().expect("task running");
        state.awaiting = state.roster.iter().cloned().collect();
        for name in &state.roster {
            ctx.send(
                name,
                &state.request_id,
                Payload::Recruit {
                    task: state.task.clone(),
                    agora_id: state.agora_id.clone(),
                },
            );
        }
        self.arm_timer(ctx);
    }

    /// Drops agents that never answered; `false` when nobody is left.
    fn drop_silent(&mut self, ctx: &mut Context<'_>) -> bool {
        let state = self.state.as_mut().expect("task running");
        let silent: Vec<String> = std::mem::take(&mut state.awaiting).into_iter().collect();
        if silent.is_empty() {
            return true;
        }
        state.roster.retain(|n| !silent.contains(n));
        if let Ok(board) = ctx.services().agoras.get_mut(&state.agora_id) {
            for name in &silent {
                board.remove_participant(name);
            }
        }
        !state.roster.is_empty()
    }

    fn discuss(&mut self, ctx: &mut Context<'_>) {
        self.enter(Stage::Discuss, "discuss".to_owned(), ctx);
        self.next_round(ctx);
    }

    fn next_round(&mut self, ctx: &mut Context<'_>) {
        let state = self.state.as_mut().expect("task running");
        state.round += 1;
        state.revised_this_round = false;
        // Everyone reads the same snapshot for the round.
        let latest: BTreeMap<String, crate::mediator::AgoraEntry> = ctx
            .services()
            .agoras
            .get(&state.agora_id)
            .map(|b| {
                b.latest()
                    .into_iter()
                    .map(|(k, v)| (k.to_owned(), v.clone()))
                    .collect()
            })
            .unwrap_or_default();
        state.awaiting = state.roster.iter().cloned().collect();
        for name in &state.roster {
            let own = latest.get(name).map(|e| e.content.clone()).unwrap_or_default();
            let peers = latest
                .iter()
                .filter(|(author, _)| *author != name && state.roster.contains(author))
                .map(|(_, e)| e.clone())
                .collect();
            ctx.send(
                name,
                &state.request_id,
                Payload::Revision(RevisionBody::Request {
                    agora_id: state.agora_id.clone(),
                    round: state.round,
                    own,
                    peers,
                }),
            );
        }
        self.arm_timer(ctx);
    }

    fn end_round(&mut self, ctx: &mut Context<'_>) {
        let state = self.state.as_ref().expect("task running");
        let rid = state.request_id.clone();
        if state.roster.is_empty() {
            let err = ErrorBody::new(ErrorCode::RosterCollapsed, "every agent stopped responding");
            self.fail(&rid, err, ctx);
        } else if state.revised_this_round && state.round < self.settings.max_rounds {
            self.next_round(ctx);
        } else {
            self.publish(ctx);
        }
    }

    fn publish(&mut self, ctx: &mut Context<'_>) {
        let rounds = self.state.as_ref().map_or(0, |s| s.round);
        self.enter(Stage::Publish, format!("publish after {rounds} round(s)"), ctx);
        let state = self.state.take().expect("task running");
        if let Some(t) = state.timer {
            ctx.cancel_timer(t);
        }
        let me = self.name.clone();
        let bundle: BTreeMap<String, String> = ctx
            .services()
            .agoras
            .get(&state.agora_id)
            .map(|b| {
                b.latest()
                    .into_iter()
                    .filter(|(author, _)| state.roster.iter().any(|r| r == author))
                    .map(|(k, v)| (k.to_owned(), v.content.clone()))
                    .collect()
            })
            .unwrap_or_default();
        let published = ctx
            .services()
            .agoras
            .get_mut(&state.agora_id)
            .and_then(|b| b.publish(&me, bundle.clone()));
        if let Err(e) = published {
            let err = ErrorBody::new(e.code(), e.to_string());
            self.fail(&state.request_id, err, ctx);
            return;
        }
        ctx.trace(
            &state.request_id,
            TraceAction::Published,
            format!("{} solutions={}", state.agora_id, bundle.len()),
        );
        ctx.send(
            &self.twin,
            &state.request_id,
            Payload::Publish(PublishBody {
                agora_id: state.agora_id.clone(),
                bundle,
            }),
        );
        for name in &state.created {
            ctx.unregister(name);
        }
        self.stage = Some(Stage::Done);
        ctx.unregister(&me);
    }
}

impl Agent for MediatorAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, env: Envelope, ctx: &mut Context<'_>) {
        let in_task = |s: &Option<TaskState>| s.as_ref().is_some_and(|s| s.request_id == env.request_id);
        match (&env.payload, self.stage) {
            (Payload::TaskRequest(body), None) => {
                let body = body.clone();
                self.prepare(&env.request_id, &body, ctx);
            }
            (Payload::InitialSolution { .. }, Some(Stage::Collect)) if in_task(&self.state) => {
                let state = self.state.as_mut().expect("checked");
                state.awaiting.remove(&env.sender);
                if state.awaiting.is_empty() {
                    self.discuss(ctx);
                }
            }
            (Payload::Revision(RevisionBody::Reply { round, revised }), Some(Stage::Discuss))
                if in_task(&self.state) =>
            {
                let state = self.state.as_mut().expect("checked");
                if *round != state.round || !state.awaiting.remove(&env.sender) {
                    return;
                }
                state.revised_this_round |= revised.is_some();
                if state.awaiting.is_empty() {
                    self.end_round(ctx);
                }
            }
            (Payload::ErrorNotice(_), Some(Stage::Collect | Stage::Discuss)) if in_task(&self.state) => {
                // An agent that cannot take part counts as silent.
                let state = self.state.as_mut().expect("checked");
                if state.awaiting.contains(&env.sender) {
                    state.roster.retain(|n| *n != env.sender);
                    state.awaiting.remove(&env.sender);
                    if state.awaiting.is_empty() {
                        if let Some(t) = state.timer.take() {
                            ctx.cancel_timer(t);
                        }
                        self.advance(ctx);
                    }
                }
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, _token: u64, ctx: &mut Context<'_>) {
        if let Some(state) = self.state.as_mut() {
            state.timer = None;
            self.advance(ctx);
        }
    }
}

impl MediatorAgent {
    /// Moves on once a stage's wait is over, dropping whoever stayed silent.
    fn advance(&mut self, ctx: &mut Context<'_>) {
        let Some(state) = self.state.as_ref() else { return };
        let rid = state.request_id.clone();
        let alive = self.drop_silent(ctx);
        match self.stage {
            Some(Stage::Collect) if alive => self.discuss(ctx),
            Some(Stage::Collect) => {
                let err = ErrorBody::new(ErrorCode::RosterCollapsed, "no agent proposed a solution in time");
                self.fail(&rid, err, ctx);
            }
            Some(Stage::Discuss) => self.end_round(ctx),
            _ => {}
        }
    }
}

impl std::fmt::Debug for MediatorAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MediatorAgent")
            .field("name", &self.name)
            .field("stage", &self.stage)
            .finish()
    }
}

//! Turns a validated topology into a running session: one bus, one twin,
//! and every facilitator and domain agent the document declares.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::acl::{KnowledgeItem, UserAttributes};
use crate::agent::{
    DigitalTwin, DomainAgent, Humanizer, LexicalReasoner, MediatorFactory, Reasoner, ReasonerScript, RetryPolicy,
    ScriptedReasoner, SessionMemory, DEFAULT_KB_LIMIT,
};
use crate::bus::{Bus, BusError, TraceRecord, TraceStore};
use crate::code::ErrorCode;
use crate::event::{EventKind, UserEvent};
use crate::facilitator::{FacilitatorAgent, FacilitatorSettings};
use crate::mediator::{AgentTemplate, AgoraBoard, MediatorAgent, MediatorSettings};
use crate::message::ErrorBody;
use crate::topology::{
    build_capability_profile, validate_topology, Role, TopologyConfig, TopologyError, ValidatedTopology, TWIN,
};

pub const DEFAULT_MAX_STEPS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub facilitator: FacilitatorSettings,
    pub mediator: MediatorSettings,
    pub retry: RetryPolicy,
    pub kb_limit: usize,
    /// Bus steps one [`Session::run`] may take before giving up.
    pub max_steps: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            facilitator: FacilitatorSettings::default(),
            mediator: MediatorSettings::default(),
            retry: RetryPolicy::default(),
            kb_limit: DEFAULT_KB_LIMIT,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("topology is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Topology(Vec<TopologyError>),
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Everything needed to start sessions against one topology.
#[derive(Clone)]
pub struct Deployment {
    pub config: TopologyConfig,
    pub topology: ValidatedTopology,
    pub kb: Arc<Vec<KnowledgeItem>>,
    pub scripts: BTreeMap<String, ReasonerScript>,
    pub templates: Arc<Vec<AgentTemplate>>,
    pub settings: Settings,
    pub humanizer: Humanizer,
}

impl Deployment {
    pub fn new(config: TopologyConfig, kb: Vec<KnowledgeItem>) -> Result<Self, DeployError> {
        let topology = validate_topology(&config).map_err(DeployError::Topology)?;
        Ok(Deployment {
            config,
            topology,
            kb: Arc::new(kb),
            scripts: BTreeMap::new(),
            templates: Arc::new(Vec::new()),
            settings: Settings::default(),
            humanizer: Humanizer::default(),
        })
    }

    pub fn with_scripts(mut self, scripts: BTreeMap<String, ReasonerScript>) -> Self {
        self.scripts = scripts;
        self
    }

    pub fn with_templates(mut self, templates: Vec<AgentTemplate>) -> Self {
        self.templates = Arc::new(templates);
        self
    }

    pub fn with_settings(mut self, settings: Settings) -> Self {
        self.settings = settings;
        self
    }

    /// Registers the twin, then root facilitators, then every agent in
    /// walk order (parents before children), and lets joins settle.
    pub fn start(&self, attrs: UserAttributes, memory: SessionMemory, trace: TraceStore) -> Result<Session, DeployError> {
        let mut bus = Bus::with_trace(trace);
        let settings = self.settings;
        let templates = Arc::clone(&self.templates);
        let factory: MediatorFactory = Arc::new(move |name: &str, twin: &str| {
            Box::new(MediatorAgent::new(name, twin, settings.mediator, Arc::clone(&templates)))
                as Box<dyn crate::bus::Agent>
        });
        let mut twin = DigitalTwin::new(TWIN, attrs, memory)
            .with_humanizer(self.humanizer.clone())
            .with_retry(settings.retry)
            .with_mediator(factory);
        if let Some(root) = self.topology.root_facilitators.first() {
            twin = twin.with_facilitator(root);
        }
        bus.register(Box::new(twin), None)?;

        for name in self.topology.walk() {
            let node = self.topology.node(&name).expect("walk yields known nodes");
            let parent = node.parent.as_deref();
            if node.role == Role::Facilitator || node.is_facilitator_capable() {
                bus.register(Box::new(FacilitatorAgent::new(&name, parent, settings.facilitator)), parent)?;
                continue;
            }
            let decl = self.config.agent(&name).expect("domain agents are declared");
            let script = self.scripts.get(&name).cloned();
            let reasoner: Box<dyn Reasoner> = match &script {
                Some(s) => Box::new(ScriptedReasoner::new(s.clone())),
                None => Box::new(LexicalReasoner),
            };
            let agent = DomainAgent::new(
                &name,
                node.domain.as_deref(),
                build_capability_profile(decl, settings.facilitator.profile_size),
                Arc::clone(&self.kb),
                reasoner,
                script.unwrap_or_default(),
            )
            .with_kb_limit(settings.kb_limit);
            bus.register(Box::new(agent), parent)?;
        }
        // Join traffic is bounded by the topology, not by the request budget.
        bus.run_until_quiescent(DEFAULT_MAX_STEPS.max(settings.max_steps))?;
        Ok(Session {
            bus,
            twin: TWIN.to_owned(),
            settings,
            humanizer: self.humanizer.clone(),
            request_prefix: String::new(),
            next_request: 0,
        })
    }
}

/// Why [`Session::run_until_user`] stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pause {
    /// Nothing queued and no timer pending.
    Quiescent,
    /// The twin waits for the user to answer an integration request.
    AwaitingUser,
}

/// One user's live system: a bus with the twin and every agent on it.
pub struct Session {
    bus: Bus,
    twin: String,
    settings: Settings,
    humanizer: Humanizer,
    request_prefix: String,
    next_request: u64,
}

impl Session {
    /// Request ids become `{prefix}r{n}`.
    pub fn with_request_prefix(mut self, prefix: &str) -> Self {
        self.request_prefix = prefix.to_owned();
        self
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn now(&self) -> u64 {
        self.bus.now()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.bus.trace()
    }

    pub fn twin(&self) -> &DigitalTwin {
        self.bus.agent::<DigitalTwin>(&self.twin).expect("the twin never leaves")
    }

    pub fn agora(&self, agora_id: &str) -> Option<&AgoraBoard> {
        self.bus.services.agoras.get(agora_id)
    }

    pub fn agoras(&self) -> impl Iterator<Item = &AgoraBoard> {
        self.bus.services.agoras.boards()
    }

    pub fn flush_trace(&mut self) -> std::io::Result<()> {
        self.bus.services.trace.flush()
    }

    /// Hands a user message to the twin. Nothing runs until the next
    /// [`Session::run`].
    pub fn submit(&mut self, text: &str) -> Result<String, ErrorBody> {
        self.next_request += 1;
        let rid = format!("{}r{}", self.request_prefix, self.next_request);
        let twin = self.twin.clone();
        self.bus
            .with_agent::<DigitalTwin, _>(&twin, |t, ctx| t.handle_user(&rid, text, ctx))
            .expect("the twin never leaves")?;
        Ok(rid)
    }

    /// Answers an outstanding integration request.
    pub fn integrate(&mut self, request_id: &str, text: &str) -> Result<(), ErrorBody> {
        let twin = self.twin.clone();
        self.bus
            .with_agent::<DigitalTwin, _>(&twin, |t, ctx| t.answer_integration(request_id, text, ctx))
            .expect("the twin never leaves")
    }

    /// Runs to quiescence, letting integration requests time out.
    pub fn run(&mut self) -> Result<usize, BusError> {
        self.pump(false).map(|(steps, _)| steps)
    }

    /// Runs until quiescent or until the user's input is needed.
    pub fn run_until_user(&mut self) -> Result<Pause, BusError> {
        self.pump(true).map(|(_, pause)| pause)
    }

    fn pump(&mut self, stop_for_user: bool) -> Result<(usize, Pause), BusError> {
        // Only deadlines on user replies wait; other requests keep going.
        self.bus.hold_user_timers(stop_for_user);
        let mut steps = 0;
        loop {
            if self.bus.is_idle() {
                let pause = if self.bus.is_quiescent() {
                    Pause::Quiescent
                } else {
                    Pause::AwaitingUser
                };
                return Ok((steps, pause));
            }
            if steps == self.settings.max_steps {
                self.abandon_open();
                return Err(BusError::BudgetExhausted(steps));
            }
            self.bus.step();
            steps += 1;
        }
    }

    /// Closes every open request with a budget-exhausted event.
    fn abandon_open(&mut self) {
        let twin = self.twin.clone();
        let abandoned = self
            .bus
            .with_agent::<DigitalTwin, _>(&twin, |t, _| t.abandon_open())
            .unwrap_or_default();
        let text = self.humanizer.humanize_code(ErrorCode::BudgetExhausted.as_str(), None);
        for rid in abandoned {
            self.bus.services.outbox.push(UserEvent::new(
                EventKind::BudgetExhausted,
                &rid,
                json!({ "text": text, "code": ErrorCode::BudgetExhausted }),
            ));
        }
    }

    pub fn take_events(&mut self) -> Vec<UserEvent> {
        self.bus.take_user_events()
    }
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("now", &self.bus.now())
            .field("agents", &self.bus.agent_names().collect::<Vec<_>>())
            .finish()
    }
}

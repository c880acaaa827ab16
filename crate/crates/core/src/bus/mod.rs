//! Deterministic message bus with logical time.
//!
//! Envelopes sit in one global queue ordered by `(sent_at, seq)`. Each
//! [`Bus::step`] either fires a due timer or dequeues exactly one envelope,
//! advancing the clock by one tick. When only timers remain, the clock jumps
//! to the earliest one. Handlers never run concurrently; everything they
//! emit is buffered in a [`Context`] and applied once the handler returns.

pub mod trace;

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::code::ErrorCode;
use crate::event::UserEvent;
use crate::mediator::AgoraStore;
use crate::message::{Envelope, ErrorBody, Outgoing, Payload};
use crate::topology::CapabilityProfile;
pub use trace::{TraceAction, TraceRecord, TraceStore};

/// Pseudo-actor that bounces undeliverable envelopes.
pub const BUS: &str = "bus";

pub trait Agent: Any + Send {
    fn name(&self) -> &str;

    fn handle(&mut self, env: Envelope, ctx: &mut Context<'_>);

    fn on_timer(&mut self, _token: u64, _ctx: &mut Context<'_>) {}

    /// Called right after registration, once the bus has queued the
    /// `JoinNotify` to the configured parent.
    fn on_register(&mut self, _parent: Option<&str>, _ctx: &mut Context<'_>) {}
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("agent `{0}` is already registered")]
    DuplicateName(String),
    #[error("sender `{0}` is not registered")]
    UnknownSender(String),
    #[error("step budget of {0} exhausted with work still queued")]
    BudgetExhausted(usize),
}

impl BusError {
    pub fn code(&self) -> ErrorCode {
        match self {
            BusError::DuplicateName(_) => ErrorCode::DuplicateName,
            BusError::UnknownSender(_) => ErrorCode::UnknownSender,
            BusError::BudgetExhausted(_) => ErrorCode::BudgetExhausted,
        }
    }
}

/// Shared state every handler may touch through its [`Context`].
#[derive(Debug, Default)]
pub struct Services {
    pub trace: TraceStore,
    pub agoras: AgoraStore,
    /// Latest capability profile announced by each domain agent.
    pub registry: BTreeMap<String, CapabilityProfile>,
    /// Events addressed to the human user, in emission order.
    pub outbox: Vec<UserEvent>,
    name_counters: BTreeMap<String, u64>,
}

#[derive(Default)]
struct Pending {
    sends: Vec<Outgoing>,
    spawns: Vec<(Box<dyn Agent>, Option<String>)>,
    unregisters: Vec<String>,
    timers: Vec<(u64, u64, u64, bool)>,
    cancels: Vec<u64>,
}

pub struct Context<'a> {
    me: &'a str,
    now: u64,
    next_timer: &'a mut u64,
    agents: &'a BTreeMap<String, Box<dyn Agent>>,
    services: &'a mut Services,
    pending: Pending,
}

impl<'a> Context<'a> {
    pub fn me(&self) -> &str {
        self.me
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn send(&mut self, recipient: &str, request_id: &str, payload: Payload) {
        self.pending.sends.push(Outgoing {
            request_id: request_id.to_owned(),
            recipient: recipient.to_owned(),
            payload,
        });
    }

    pub fn trace(&mut self, request_id: &str, action: TraceAction, detail: impl Into<String>) -> u64 {
        self.services
            .trace
            .append(self.now, request_id, self.me, action, detail)
    }

    pub fn services(&mut self) -> &mut Services {
        self.services
    }

    pub fn notify_user(&mut self, event: UserEvent) {
        self.services.outbox.push(event);
    }

    pub fn is_registered(&self, name: &str) -> bool {
        self.agents.contains_key(name)
            || name == self.me
            || self.pending.spawns.iter().any(|(a, _)| a.name() == name)
    }

    /// `prefix-N` with the smallest counter not already in use.
    pub fn unique_name(&mut self, prefix: &str) -> String {
        loop {
            let n = self
                .services
                .name_counters
                .entry(prefix.to_owned())
                .or_default();
            *n += 1;
            let candidate = format!("{prefix}-{n}");
            if !self.is_registered(&candidate) {
                return candidate;
            }
        }
    }

    /// Registers `agent` after this handler returns.
    pub fn spawn(&mut self, agent: Box<dyn Agent>, parent: Option<&str>) {
        self.pending.spawns.push((agent, parent.map(str::to_owned)));
    }

    /// Removes `name` (possibly the caller itself) after this handler returns.
    pub fn unregister(&mut self, name: &str) {
        self.pending.unregisters.push(name.to_owned());
    }

    /// Schedules [`Agent::on_timer`] at logical tick `at`; returns a handle
    /// for [`Context::cancel_timer`].
    pub fn set_timer(&mut self, at: u64, token: u64) -> u64 {
        self.push_timer(at, token, false)
    }

    /// Like [`Context::set_timer`], for a deadline on a reply from the human
    /// user. The bus can hold such timers while the user is thinking.
    pub fn set_user_timer(&mut self, at: u64, token: u64) -> u64 {
        self.push_timer(at, token, true)
    }

    fn push_timer(&mut self, at: u64, token: u64, for_user: bool) -> u64 {
        *self.next_timer += 1;
        let id = *self.next_timer;
        self.pending.timers.push((id, at.max(self.now), token, for_user));
        id
    }

    pub fn cancel_timer(&mut self, id: u64) {
        self.pending.cancels.push(id);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Timer {
    id: u64,
    agent: String,
    token: u64,
    for_user: bool,
}

/// What one [`Bus::step`] did.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Delivered(Envelope),
    /// The recipient was not registered; a notice went back to the sender.
    Dropped(Envelope),
    Timer { agent: String, token: u64 },
}

#[derive(Default)]
pub struct Bus {
    agents: BTreeMap<String, Box<dyn Agent>>,
    queue: BTreeMap<(u64, u64), Envelope>,
    timers: BTreeMap<(u64, u64), Timer>,
    tick: u64,
    next_seq: u64,
    next_message: u64,
    next_timer: u64,
    dropped: u64,
    hold_user_timers: bool,
    pub services: Services,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_trace(trace: TraceStore) -> Self {
        Bus {
            services: Services {
                trace,
                ..Services::default()
            },
            ..Bus::default()
        }
    }

    pub fn now(&self) -> u64 {
        self.tick
    }

    pub fn is_registered(&self, name: &str) -> bool {
        self.agents.contains_key(name)
    }

    pub fn agent_names(&self) -> impl Iterator<Item = &str> {
        self.agents.keys().map(String::as_str)
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.services.trace.records()
    }

    /// Envelopes dequeued for an unregistered recipient.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn has_queued(&self) -> bool {
        !self.queue.is_empty()
    }

    pub fn has_timers(&self) -> bool {
        !self.timers.is_empty()
    }

    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty() && self.timers.is_empty()
    }

    /// While set, timers waiting on the user neither fire nor let the
    /// clock jump to them; everything else keeps running.
    pub fn hold_user_timers(&mut self, hold: bool) {
        self.hold_user_timers = hold;
    }

    /// Nothing left to do short of held timers.
    pub fn is_idle(&self) -> bool {
        self.queue.is_empty() && self.next_timer().is_none()
    }

    fn next_timer(&self) -> Option<(u64, u64)> {
        self.timers
            .iter()
            .find(|(_, t)| !(self.hold_user_timers && t.for_user))
            .map(|(&key, _)| key)
    }

    pub fn take_user_events(&mut self) -> Vec<UserEvent> {
        std::mem::take(&mut self.services.outbox)
    }

    /// Registers an agent. When `parent` is given, a `JoinNotify` is queued
    /// to it before the agent's own [`Agent::on_register`] hook runs.
    pub fn register(&mut self, agent: Box<dyn Agent>, parent: Option<&str>) -> Result<(), BusError> {
        let name = agent.name().to_owned();
        if self.agents.contains_key(&name) {
            return Err(BusError::DuplicateName(name));
        }
        self.agents.insert(name.clone(), agent);
        if let Some(p) = parent {
            self.enqueue(
                &name,
                Outgoing {
                    request_id: format!("join:{name}"),
                    recipient: p.to_owned(),
                    payload: Payload::JoinNotify {
                        agent: name.clone(),
                        domain: None,
                    },
                },
            );
        }
        self.with_agent_dyn(&name, |agent, ctx| agent.on_register(parent, ctx));
        Ok(())
    }

    pub fn unregister(&mut self, name: &str) -> bool {
        self.timers.retain(|_, t| t.agent != name);
        self.agents.remove(name).is_some()
    }

    /// Queues an envelope on behalf of a registered agent.
    pub fn send(&mut self, sender: &str, msg: Outgoing) -> Result<String, BusError> {
        if !self.agents.contains_key(sender) {
            return Err(BusError::UnknownSender(sender.to_owned()));
        }
        Ok(self.enqueue(sender, msg))
    }

    fn enqueue(&mut self, sender: &str, msg: Outgoing) -> String {
        self.next_seq += 1;
        self.next_message += 1;
        let env = Envelope {
            message_id: format!("m{}", self.next_message),
            request_id: msg.request_id,
            sender: sender.to_owned(),
            recipient: msg.recipient,
            payload: msg.payload,
            sent_at: self.tick,
        };
        self.services
            .trace
            .append(self.tick, &env.request_id, sender, TraceAction::Sent, env.summary());
        let id = env.message_id.clone();
        self.queue.insert((env.sent_at, self.next_seq), env);
        id
    }

    /// Runs `f` against a registered agent of concrete type `A` with a live
    /// context, then applies whatever it emitted. `None` when the agent is
    /// absent or of another type.
    pub fn with_agent<A: Agent, R>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut A, &mut Context<'_>) -> R,
    ) -> Option<R> {
        let is_a = {
            let agent = self.agents.get_mut(name)?;
            let any: &mut dyn Any = agent.as_mut();
            any.is::<A>()
        };
        if !is_a {
            return None;
        }
        self.with_agent_dyn(name, |agent, ctx| {
            let any: &mut dyn Any = agent;
            f(any.downcast_mut::<A>().expect("type checked above"), ctx)
        })
    }

    pub fn agent<A: Agent>(&self, name: &str) -> Option<&A> {
        let any: &dyn Any = self.agents.get(name)?.as_ref();
        any.downcast_ref::<A>()
    }

    fn with_agent_dyn<R>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Agent, &mut Context<'_>) -> R,
    ) -> Option<R> {
        let mut agent = self.agents.remove(name)?;
        let mut ctx = Context {
            me: name,
            now: self.tick,
            next_timer: &mut self.next_timer,
            agents: &self.agents,
            services: &mut self.services,
            pending: Pending::default(),
        };
        let out = f(agent.as_mut(), &mut ctx);
        let pending = ctx.pending;
        self.agents.insert(name.to_owned(), agent);
        self.apply(name, pending);
        Some(out)
    }

    fn apply(&mut self, me: &str, pending: Pending) {
        for msg in pending.sends {
            self.enqueue(me, msg);
        }
        for (id, at, token, for_user) in pending.timers {
            self.timers.insert(
                (at, id),
                Timer {
                    id,
                    agent: me.to_owned(),
                    token,
                    for_user,
                },
            );
        }
        for id in pending.cancels {
            self.timers.retain(|_, t| t.id != id);
        }
        for (agent, parent) in pending.spawns {
            // Names come from `unique_name`, so a clash is a caller bug.
            let name = agent.name().to_owned();
            if let Err(e) = self.register(agent, parent.as_deref()) {
                panic!("spawn of `{name}` failed: {e}");
            }
        }
        for name in pending.unregisters {
            self.unregister(&name);
        }
    }

    /// Fires one due timer or delivers one envelope. `None` when idle.
    pub fn step(&mut self) -> Option<Step> {
        let due_timer = self
            .next_timer()
            .filter(|&(at, _)| at <= self.tick || self.queue.is_empty());
        if let Some(key @ (at, _)) = due_timer {
            let timer = self.timers.remove(&key).expect("peeked");
            self.tick = self.tick.max(at);
            let token = timer.token;
            self.with_agent_dyn(&timer.agent, |agent, ctx| agent.on_timer(token, ctx));
            return Some(Step::Timer {
                agent: timer.agent,
                token,
            });
        }

        let (_, env) = self.queue.pop_first()?;
        self.tick += 1;
        if !self.agents.contains_key(&env.recipient) {
            self.dropped += 1;
            self.bounce(&env);
            return Some(Step::Dropped(env));
        }
        self.services.trace.append(
            self.tick,
            &env.request_id,
            &env.recipient,
            TraceAction::Received,
            env.summary(),
        );
        let recipient = env.recipient.clone();
        let delivered = env.clone();
        self.with_agent_dyn(&recipient, |agent, ctx| agent.handle(env, ctx));
        Some(Step::Delivered(delivered))
    }

    fn bounce(&mut self, env: &Envelope) {
        // Never bounce a bounce; a lost notice just stays lost.
        if env.sender == BUS {
            return;
        }
        let body = ErrorBody::new(
            ErrorCode::UnknownRecipient,
            format!("{} could not be delivered to {}", env.message_id, env.recipient),
        );
        self.enqueue(
            BUS,
            Outgoing {
                request_id: env.request_id.clone(),
                recipient: env.sender.clone(),
                payload: Payload::ErrorNotice(body),
            },
        );
    }

    /// Steps until nothing is queued and no timer is pending, held timers
    /// aside.
    pub fn run_until_quiescent(&mut self, max_steps: usize) -> Result<usize, BusError> {
        let mut steps = 0;
        while !self.is_idle() {
            if steps == max_steps {
                return Err(BusError::BudgetExhausted(max_steps));
            }
            self.step();
            steps += 1;
        }
        Ok(steps)
    }

    /// Names that any Received record was addressed to.
    pub fn receivers(&self) -> BTreeSet<&str> {
        self.trace()
            .iter()
            .filter(|r| r.action == TraceAction::Received)
            .map(|r| r.actor.as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::MessageKind;

    /// Records what it receives; replies `Ack` to anything but an Ack.
    struct Echo {
        name: String,
        seen: Vec<MessageKind>,
    }

    impl Echo {
        fn boxed(name: &str) -> Box<dyn Agent> {
            Box::new(Echo {
                name: name.into(),
                seen: vec![],
            })
        }
    }

    impl Agent for Echo {
        fn name(&self) -> &str {
            &self.name
        }

        fn handle(&mut self, env: Envelope, ctx: &mut Context<'_>) {
            self.seen.push(env.kind());
            if !matches!(env.payload, Payload::Ack { .. } | Payload::ErrorNotice(_)) {
                ctx.send(&env.sender, &env.request_id, Payload::Ack { text: "ok".into() });
            }
        }
    }

    /// Always answers with another Ack.
    struct PingPong(String);

    impl Agent for PingPong {
        fn name(&self) -> &str {
            &self.0
        }

        fn handle(&mut self, env: Envelope, ctx: &mut Context<'_>) {
            ctx.send(&env.sender, &env.request_id, Payload::Ack { text: "again".into() });
        }
    }

    fn ack(to: &str, rid: &str) -> Outgoing {
        Outgoing {
            request_id: rid.into(),
            recipient: to.into(),
            payload: Payload::Ack { text: "hi".into() },
        }
    }

    #[test]
    fn registered_agent_receives() {
        let mut bus = Bus::new();
        bus.register(Echo::boxed("facilitator"), None).unwrap();
        bus.register(Echo::boxed("twin"), None).unwrap();
        bus.send(
            "twin",
            Outgoing {
                request_id: "r1".into(),
                recipient: "facilitator".into(),
                payload: Payload::InitialSolution { text: "x".into() },
            },
        )
        .unwrap();
        assert_eq!(bus.run_until_quiescent(10), Ok(2));
        assert_eq!(bus.agent::<Echo>("facilitator").unwrap().seen, vec![MessageKind::InitialSolution]);
        assert_eq!(bus.agent::<Echo>("twin").unwrap().seen, vec![MessageKind::Ack]);
        let actions: Vec<_> = bus.trace().iter().map(|r| (r.action, r.tick)).collect();
        assert_eq!(
            actions,
            vec![
                (TraceAction::Sent, 0),
                (TraceAction::Received, 1),
                (TraceAction::Sent, 1),
                (TraceAction::Received, 2)
            ]
        );
        assert!(bus.trace().iter().all(|r| r.request_id == "r1"));
    }

    #[test]
    fn duplicate_and_unknown_sender() {
        let mut bus = Bus::new();
        bus.register(Echo::boxed("a"), None).unwrap();
        assert_eq!(
            bus.register(Echo::boxed("a"), None),
            Err(BusError::DuplicateName("a".into()))
        );
        assert_eq!(bus.send("ghost", ack("a", "r")), Err(BusError::UnknownSender("ghost".into())));
    }

    #[test]
    fn unknown_recipient_bounces_error_notice() {
        let mut bus = Bus::new();
        bus.register(Echo::boxed("a"), None).unwrap();
        bus.send("a", ack("nobody", "r1")).unwrap();
        bus.run_until_quiescent(10).unwrap();
        assert_eq!(bus.agent::<Echo>("a").unwrap().seen, vec![MessageKind::ErrorNotice]);
        assert_eq!(bus.dropped(), 1);
        let c = trace::conservation(bus.trace());
        assert_eq!(c.sent, c.received + bus.dropped() as usize);
        assert_eq!(c.undelivered.len(), 1);
    }

    #[test]
    fn same_tick_sends_keep_seq_order() {
        let mut bus = Bus::new();
        bus.register(Echo::boxed("a"), None).unwrap();
        bus.register(Echo::boxed("b"), None).unwrap();
        bus.send("a", ack("b", "first")).unwrap();
        bus.send("a", ack("b", "second")).unwrap();
        let Some(Step::Delivered(e1)) = bus.step() else { panic!() };
        let Some(Step::Delivered(e2)) = bus.step() else { panic!() };
        assert_eq!((e1.request_id.as_str(), e2.request_id.as_str()), ("first", "second"));
    }

    #[test]
    fn empty_queue_takes_no_steps() {
        let mut bus = Bus::new();
        assert_eq!(bus.run_until_quiescent(1), Ok(0));
        assert_eq!(bus.step(), None);
    }

    #[test]
    fn ping_pong_exhausts_budget() {
        let mut bus = Bus::new();
        bus.register(Box::new(PingPong("p".into())), None).unwrap();
        bus.register(Box::new(PingPong("q".into())), None).unwrap();
        bus.send("p", ack("q", "loop")).unwrap();
        assert_eq!(bus.run_until_quiescent(100), Err(BusError::BudgetExhausted(100)));
        assert_eq!(bus.now(), 100);
    }

    #[test]
    fn join_notify_goes_to_parent() {
        let mut bus = Bus::new();
        bus.register(Echo::boxed("facilitator"), None).unwrap();
        bus.register(Echo::boxed("leaf"), Some("facilitator")).unwrap();
        bus.step();
        assert_eq!(bus.agent::<Echo>("facilitator").unwrap().seen, vec![MessageKind::JoinNotify]);
    }

    struct Sleeper {
        fired: Vec<(u64, u64)>,
    }

    impl Agent for Sleeper {
        fn name(&self) -> &str {
            "sleeper"
        }
        fn handle(&mut self, _env: Envelope, ctx: &mut Context<'_>) {
            let now = ctx.now();
            ctx.set_timer(now + 8, 1);
            let cancelled = ctx.set_timer(now + 4, 2);
            ctx.cancel_timer(cancelled);
        }
        fn on_timer(&mut self, token: u64, ctx: &mut Context<'_>) {
            self.fired.push((ctx.now(), token));
        }
    }

    #[test]
    fn idle_clock_jumps_to_timers() {
        let mut bus = Bus::new();
        bus.register(Box::new(Sleeper { fired: vec![] }), None).unwrap();
        bus.register(Echo::boxed("x"), None).unwrap();
        bus.send("x", ack("sleeper", "r")).unwrap();
        bus.run_until_quiescent(10).unwrap();
        assert_eq!(bus.agent::<Sleeper>("sleeper").unwrap().fired, vec![(9, 1)]);
    }

    struct Waiter {
        fired: Vec<(u64, u64)>,
    }

    impl Agent for Waiter {
        fn name(&self) -> &str {
            "waiter"
        }
        fn handle(&mut self, _env: Envelope, ctx: &mut Context<'_>) {
            let now = ctx.now();
            ctx.set_user_timer(now + 4, 1);
            ctx.set_timer(now + 8, 2);
        }
        fn on_timer(&mut self, token: u64, ctx: &mut Context<'_>) {
            self.fired.push((ctx.now(), token));
        }
    }

    #[test]
    fn held_user_timers_let_others_run() {
        let mut bus = Bus::new();
        bus.register(Box::new(Waiter { fired: vec![] }), None).unwrap();
        bus.register(Echo::boxed("x"), None).unwrap();
        bus.send("x", ack("waiter", "r")).unwrap();
        bus.hold_user_timers(true);
        bus.run_until_quiescent(10).unwrap();
        assert!(bus.is_idle() && !bus.is_quiescent());
        assert_eq!(bus.agent::<Waiter>("waiter").unwrap().fired, vec![(9, 2)]);
        bus.hold_user_timers(false);
        bus.run_until_quiescent(10).unwrap();
        assert_eq!(bus.agent::<Waiter>("waiter").unwrap().fired, vec![(9, 2), (9, 1)]);
    }
}

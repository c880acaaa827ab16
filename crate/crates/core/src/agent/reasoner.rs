//! The behaviour contract behind every agent's "thinking", and the two
//! deterministic implementations shipped with the runtime.

use serde::{Deserialize, Serialize};

use crate::acl::ScoredItem;
use crate::mediator::AgoraEntry;
use crate::text;

#[derive(Clone, Debug, PartialEq)]
pub struct Reasoned {
    pub text: String,
    pub cited: Vec<String>,
}

/// Must be deterministic: the same call history yields the same outputs.
pub trait Reasoner: Send {
    /// Answers a sub-query from the items the user may see. Implementations
    /// must only cite ids from `items`.
    fn answer(&mut self, query: &str, items: &[ScoredItem<'_>]) -> Reasoned;

    /// Initial solution for a mediated task.
    fn propose(&mut self, task: &str, view: &[AgoraEntry]) -> String;

    /// `None` keeps the current solution.
    fn revise(&mut self, own: &str, peers: &[AgoraEntry]) -> Option<String>;
}

const NOTHING_FOUND: &str = "I could not find anything I can share on that.";

/// Answers by quoting the best accessible items; never revises.
#[derive(Clone, Debug, Default)]
pub struct LexicalReasoner;

impl Reasoner for LexicalReasoner {
    fn answer(&mut self, _query: &str, items: &[ScoredItem<'_>]) -> Reasoned {
        if items.is_empty() {
            return Reasoned {
                text: NOTHING_FOUND.to_owned(),
                cited: Vec::new(),
            };
        }
        Reasoned {
            text: items
                .iter()
                .map(|h| h.item.text.trim())
                .collect::<Vec<_>>()
                .join(" "),
            cited: items.iter().map(|h| h.item.id.clone()).collect(),
        }
    }

    fn propose(&mut self, task: &str, _view: &[AgoraEntry]) -> String {
        format!("Proposal: {task}")
    }

    fn revise(&mut self, _own: &str, _peers: &[AgoraEntry]) -> Option<String> {
        None
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CannedAnswer {
    /// Keywords matched against the sub-query's tokens.
    pub when: String,
    pub text: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisePolicy {
    #[default]
    Never,
    /// Revise on every request, appending a round marker.
    Always,
}

/// Scripted behaviour for one agent, as written in scenario files.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerScript {
    pub answers: Vec<CannedAnswer>,
    pub default_answer: Option<String>,
    pub propose: Option<String>,
    /// Successive revisions; once exhausted the agent stops revising unless
    /// `revise` is `always`.
    pub revisions: Vec<String>,
    pub revise: RevisePolicy,
    /// Harness control: fail the first N sub-queries with DomainUnavailable.
    pub offline_first: u32,
    pub offline_always: bool,
    /// Harness control: inclusive tick windows during which the agent is down.
    pub offline_windows: Vec<(u64, u64)>,
}

impl ReasonerScript {
    pub fn is_offline(&self, queries_seen: u32, now: u64) -> bool {
        self.offline_always
            || queries_seen <= self.offline_first
            || self.offline_windows.iter().any(|&(a, b)| (a..=b).contains(&now))
    }
}

/// Lookup-table reasoner driven by a [`ReasonerScript`].
#[derive(Clone, Debug)]
pub struct ScriptedReasoner {
    script: ReasonerScript,
    revisions_made: usize,
}

impl ScriptedReasoner {
    pub fn new(script: ReasonerScript) -> Self {
        ScriptedReasoner {
            script,
            revisions_made: 0,
        }
    }

    /// Entry sharing the most tokens with `query`; earlier entries win ties.
    fn lookup(&self, query: &str) -> Option<&CannedAnswer> {
        let q = text::token_set(query);
        let mut best: Option<(usize, &CannedAnswer)> = None;
        for entry in &self.script.answers {
            let overlap = text::token_set(&entry.when).intersection(&q).count();
            if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
                best = Some((overlap, entry));
            }
        }
        best.map(|(_, e)| e)
    }
}

impl Reasoner for ScriptedReasoner {
    fn answer(&mut self, query: &str, items: &[ScoredItem<'_>]) -> Reasoned {
        // Scripted text stands in for what a model would say about the
        // retrieved items, so without accessible items there is nothing to say.
        if items.is_empty() {
            return LexicalReasoner.answer(query, items);
        }
        let text = match (self.lookup(query), &self.script.default_answer) {
            (Some(entry), _) => entry.text.clone(),
            (None, Some(default)) => default.clone(),
            (None, None) => return LexicalReasoner.answer(query, items),
        };
        Reasoned {
            text,
            cited: items.iter().map(|h| h.item.id.clone()).collect(),
        }
    }

    fn propose(&mut self, task: &str, view: &[AgoraEntry]) -> String {
        match &self.script.propose {
            Some(p) => p.clone(),
            None => LexicalReasoner.propose(task, view),
        }
    }

    fn revise(&mut self, own: &str, _peers: &[AgoraEntry]) -> Option<String> {
        if let Some(next) = self.script.revisions.get(self.revisions_made) {
            self.revisions_made += 1;
            return Some(next.clone());
        }
        match self.script.revise {
            RevisePolicy::Never => None,
            RevisePolicy::Always => {
                self.revisions_made += 1;
                Some(format!("{own} (revision {})", self.revisions_made))
            }
        }
    }
}

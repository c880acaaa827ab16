use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bus::trace::{agents_involved, for_request, stage_sequence};
use crate::bus::TraceAction;
use crate::code::ErrorCode;

use super::run::RunOutput;

/// A machine-checkable claim about a finished run. `request` defaults to
/// the last turn's request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    AgentsInvolved {
        #[serde(default)]
        request: Option<String>,
        agents: BTreeSet<String>,
    },
    FinalAnswerContains {
        #[serde(default)]
        request: Option<String>,
        text: String,
    },
    StageSequence {
        #[serde(default)]
        request: Option<String>,
        stages: Vec<u8>,
    },
    TraceCountAtMost {
        #[serde(default)]
        request: Option<String>,
        action: TraceAction,
        /// Only records whose detail contains this text count.
        #[serde(default)]
        contains: Option<String>,
        max: usize,
    },
    ErrorSurfaced {
        #[serde(default)]
        request: Option<String>,
        code: ErrorCode,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpectationResult {
    pub expectation: Expectation,
    pub passed: bool,
    pub detail: String,
}

impl Expectation {
    fn request(&self) -> Option<&str> {
        match self {
            Expectation::AgentsInvolved { request, .. }
            | Expectation::FinalAnswerContains { request, .. }
            | Expectation::StageSequence { request, .. }
            | Expectation::TraceCountAtMost { request, .. }
            | Expectation::ErrorSurfaced { request, .. } => request.as_deref(),
        }
    }

    pub fn check(&self, run: &RunOutput) -> ExpectationResult {
        let rid = self.request().or(run.last_request()).unwrap_or_default();
        let (passed, detail) = match self {
            Expectation::AgentsInvolved { agents, .. } => {
                let got = agents_involved(&run.trace, rid);
                (got == *agents, format!("{rid}: agents {got:?}"))
            }
            Expectation::FinalAnswerContains { text, .. } => {
                let got = run.final_entry(rid).and_then(|e| e.text()).unwrap_or_default();
                (got.contains(text.as_str()), format!("{rid}: final text {got:?}"))
            }
            Expectation::StageSequence { stages, .. } => {
                let got = stage_sequence(&run.trace, rid);
                (got == *stages, format!("{rid}: stages {got:?}"))
            }
            Expectation::TraceCountAtMost {
                action, contains, max, ..
            } => {
                let n = for_request(&run.trace, rid)
                    .filter(|r| r.action == *action)
                    .filter(|r| contains.as_ref().is_none_or(|c| r.detail.contains(c.as_str())))
                    .count();
                (n <= *max, format!("{rid}: {n} {action:?} record(s), at most {max}"))
            }
            Expectation::ErrorSurfaced { code, .. } => {
                let seen = run
                    .transcript
                    .iter()
                    .filter(|e| e.request_id == rid)
                    .any(|e| e.payload.get("code").and_then(|c| c.as_str()) == Some(code.as_str()));
                (seen, format!("{rid}: error {code} surfaced = {seen}"))
            }
        };
        ExpectationResult {
            expectation: self.clone(),
            passed,
            detail,
        }
    }
}

pub fn assert_expectations(expectations: &[Expectation], run: &RunOutput) -> Vec<ExpectationResult> {
    expectations.iter().map(|e| e.check(run)).collect()
}

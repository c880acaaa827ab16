//! Declarative scenarios: load, run deterministically, check expectations.

mod expect;
mod run;
mod scenario;

use std::path::Path;

pub use expect::{assert_expectations, Expectation, ExpectationResult};
pub use run::{deployment, run_scenario, run_with_trace, start_session, RunOutput, TranscriptEntry};
pub use scenario::{check, load_scenario, parse_scenario, Scenario, ScenarioError, Turn, UserSpec, REFERENCE_KEYWORD};

/// Scenarios bundled with the library, by name. All are self-contained.
pub const SHIPPED: &[(&str, &str)] = &[
    ("fig3-hr-cv", include_str!("../../scenarios/fig3-hr-cv.yaml")),
    ("fig4-mediator", include_str!("../../scenarios/fig4-mediator.yaml")),
    ("integration", include_str!("../../scenarios/integration.yaml")),
    ("deferred", include_str!("../../scenarios/deferred.yaml")),
];

pub fn shipped(name: &str) -> Option<Scenario> {
    let (_, text) = SHIPPED.iter().find(|(n, _)| *n == name)?;
    Some(parse_scenario(text, Path::new(".")).expect("shipped scenarios are valid"))
}

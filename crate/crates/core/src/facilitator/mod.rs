//! Question decomposition across child agents and answer fusion.

mod agent;
mod plan;

pub use agent::{FacilitatorAgent, FacilitatorSettings};
pub use plan::{
    best_child, decompose, fact_resolves, score, segment, Assignment, DecompositionPlan, DEFAULT_THRESHOLD,
};

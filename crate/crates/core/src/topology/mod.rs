//! Topology document: parsing, validation into an agent forest, and
//! capability profiles.

mod config;
mod profile;
mod validate;

pub use config::{
    from_value, parse_topology, render_topology, to_value, AgentDecl, ConfigError, DomainDecl,
    FacilitatorDecl, TopologyConfig,
};
pub use profile::{
    build_capability_profile, summarize_children, CapabilityProfile, WeightedTerm,
    DEFAULT_PROFILE_SIZE,
};
pub use validate::{validate_topology, Node, Role, TopologyError, ValidatedTopology, TWIN};

/// The reference deployment document with two domains (HR and CV), one agent
/// each, under a single facilitator. Kept byte-for-byte, including the
/// `vesion` spelling.
pub const REFERENCE_TOPOLOGY: &str = include_str!("../../data/reference-topology.yaml");

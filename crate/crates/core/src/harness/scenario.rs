use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_yaml::Value;
use thiserror::Error;

use crate::acl::{index_items, load_kb, KnowledgeItem, UserAttributes};
use crate::agent::ReasonerScript;
use crate::code::ErrorCode;
use crate::mediator::AgentTemplate;
use crate::message::Fact;
use crate::runtime::Settings;
use crate::topology::{from_value, parse_topology, validate_topology, TopologyConfig, REFERENCE_TOPOLOGY};

use super::expect::Expectation;

/// `topology: reference` selects the bundled two-domain document.
pub const REFERENCE_KEYWORD: &str = "reference";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("dangling reference: {0}")]
    Dangling(String),
}

impl ScenarioError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ScenarioError::Malformed(_) => ErrorCode::MalformedScenario,
            ScenarioError::Dangling(_) => ErrorCode::DanglingReference,
        }
    }
}

fn malformed(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Malformed(e.to_string())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Turn {
    pub text: String,
    /// Replies given, in order, whenever the system asks the user for more.
    pub integration_replies: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserSpec {
    pub attributes: UserAttributes,
    /// Facts the twin already remembers when the run starts.
    pub facts: Vec<Fact>,
    pub turns: Vec<Turn>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub topology: TopologyConfig,
    pub kb: Vec<KnowledgeItem>,
    pub user: UserSpec,
    pub scripts: BTreeMap<String, ReasonerScript>,
    pub templates: Vec<AgentTemplate>,
    pub settings: Settings,
    pub expectations: Vec<Expectation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    topology: Value,
    #[serde(default)]
    kb: Option<Value>,
    user: UserSpec,
    #[serde(default)]
    scripts: BTreeMap<String, ReasonerScript>,
    #[serde(default)]
    templates: Vec<AgentTemplate>,
    #[serde(default)]
    settings: Settings,
    #[serde(default, with = "serde_yaml::with::singleton_map_recursive")]
    expectations: Vec<Expectation>,
}

/// Reads a scenario file; relative `topology` and `kb` paths resolve
/// against the file's directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| malformed(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scenario(&text, &base)
}

pub fn parse_scenario(text: &str, base: &Path) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = serde_yaml::from_str(text).map_err(malformed)?;
    let topology = match &raw.topology {
        Value::String(s) if s == REFERENCE_KEYWORD => parse_topology(REFERENCE_TOPOLOGY).map_err(malformed)?,
        Value::String(p) => {
            let path = resolve(base, p);
            let doc = fs::read_to_string(&path).map_err(|e| malformed(format!("{}: {e}", path.display())))?;
            parse_topology(&doc).map_err(malformed)?
        }
        inline @ Value::Mapping(_) => from_value(inline).map_err(malformed)?,
        _ => return Err(malformed("`topology` must be `reference`, a path or a mapping")),
    };
    let kb = match raw.kb {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(p)) => {
            let path = resolve(base, &p);
            let file = fs::File::open(&path).map_err(|e| malformed(format!("{}: {e}", path.display())))?;
            load_kb(BufReader::new(file)).map_err(malformed)?
        }
        Some(v @ Value::Sequence(_)) => {
            let items: Vec<KnowledgeItem> = serde_yaml::from_value(v).map_err(malformed)?;
            index_items(items)
        }
        Some(_) => return Err(malformed("`kb` must be a path or a list of items")),
    };
    let scenario = Scenario {
        name: raw.name,
        description: raw.description,
        topology,
        kb,
        user: raw.user,
        scripts: raw.scripts,
        templates: raw.templates,
        settings: raw.settings,
        expectations: raw.expectations,
    };
    check(&scenario)?;
    Ok(scenario)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Cross-reference checks every loaded scenario must pass.
pub fn check(s: &Scenario) -> Result<(), ScenarioError> {
    if s.user.turns.is_empty() {
        return Err(malformed("a scenario needs at least one user turn"));
    }
    if let Some(t) = s.user.turns.iter().position(|t| t.text.trim().is_empty()) {
        return Err(malformed(format!("turn {} has no text", t + 1)));
    }
    if let Some(name) = s.user.attributes.invalid_name() {
        return Err(malformed(format!("bad attribute name `{name}`")));
    }
    if let Err(errors) = validate_topology(&s.topology) {
        let list: Vec<String> = errors.iter().map(ToString::to_string).collect();
        return Err(malformed(format!("topology: {}", list.join("; "))));
    }
    let agents: BTreeSet<&str> = s.topology.agents().map(|(_, a)| a.name.as_str()).collect();
    if let Some(name) = s.scripts.keys().find(|k| !agents.contains(k.as_str())) {
        return Err(ScenarioError::Dangling(format!("script for unknown agent `{name}`")));
    }
    let domains: BTreeSet<&str> = s.topology.domains.iter().map(|d| d.name.as_str()).collect();
    if let Some(item) = s.kb.iter().find(|i| !domains.contains(i.domain.as_str())) {
        return Err(ScenarioError::Dangling(format!(
            "knowledge item `{}` names unknown domain `{}`",
            item.id, item.domain
        )));
    }
    let mut ids = BTreeSet::new();
    if let Some(item) = s.kb.iter().find(|i| !ids.insert(i.id.as_str())) {
        return Err(malformed(format!("duplicate knowledge item id `{}`", item.id)));
    }
    if let Some(t) = s.templates.iter().find(|t| t.prefix.trim().is_empty()) {
        return Err(malformed(format!("template `{}` has an empty prefix", t.description)));
    }
    Ok(())
}

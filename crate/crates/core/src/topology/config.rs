use serde_yaml::{Mapping, Value};
use thiserror::Error;

use crate::code::ErrorCode;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopologyConfig {
    pub webapp_active: bool,
    pub webapp_version: String,
    pub twin_version: String,
    pub twin_replicas: u32,
    pub facilitators: Vec<FacilitatorDecl>,
    pub domains: Vec<DomainDecl>,
    /// Unknown keys found while parsing, e.g. "unknown key `twin.image`".
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FacilitatorDecl {
    pub name: String,
    pub replicas: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainDecl {
    pub name: String,
    pub agents: Vec<AgentDecl>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentDecl {
    pub name: String,
    pub parent: String,
    pub description: String,
    pub example_questions: Vec<String>,
}

impl TopologyConfig {
    pub fn agents(&self) -> impl Iterator<Item = (&DomainDecl, &AgentDecl)> {
        self.domains
            .iter()
            .flat_map(|d| d.agents.iter().map(move |a| (d, a)))
    }

    pub fn agent(&self, name: &str) -> Option<&AgentDecl> {
        self.agents().map(|(_, a)| a).find(|a| a.name == name)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("bad value at `{path}`: {reason}")]
    BadValue { path: String, reason: String },
}

impl ConfigError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ConfigError::MalformedDocument(_) => ErrorCode::MalformedDocument,
            ConfigError::MissingField(_) => ErrorCode::MissingField,
            ConfigError::BadValue { .. } => ErrorCode::BadValue,
        }
    }

    fn bad(path: &str, reason: impl Into<String>) -> Self {
        ConfigError::BadValue {
            path: path.to_owned(),
            reason: reason.into(),
        }
    }
}

/// Parses a topology document (Helm-values style YAML).
pub fn parse_topology(text: &str) -> Result<TopologyConfig, ConfigError> {
    let doc: Value =
        serde_yaml::from_str(text).map_err(|e| ConfigError::MalformedDocument(e.to_string()))?;
    from_value(&doc)
}

/// Maps an already-parsed YAML tree onto a [`TopologyConfig`].
pub fn from_value(doc: &Value) -> Result<TopologyConfig, ConfigError> {
    let mut warnings = Vec::new();
    let root = Section::new(doc, "")?;

    let webapp = root.section("webapp")?;
    let webapp_active = webapp.bool("active")?;
    let webapp_version = if webapp.has("vesion") {
        webapp.version("vesion")?
    } else {
        webapp.version("version")?
    };
    webapp.finish(&["active", "vesion", "version"], &mut warnings);

    let twin = root.section("twin")?;
    let twin_version = twin.version("version")?;
    let pods = twin.section("podTemplates")?;
    let twin_replicas = pods.replicas("replicaCount")?;
    pods.finish(&["replicaCount"], &mut warnings);
    twin.finish(&["version", "podTemplates"], &mut warnings);

    let mut facilitators = Vec::new();
    for item in root.list("facilitators")? {
        let f = item;
        let name = f.identifier("name")?;
        let pods = f.section("podTemplates")?;
        let replicas = pods.replicas("replicaCount")?;
        pods.finish(&["replicaCount"], &mut warnings);
        f.finish(&["name", "podTemplates"], &mut warnings);
        facilitators.push(FacilitatorDecl { name, replicas });
    }

    let mut domains = Vec::new();
    for d in root.list("domains")? {
        let name = d.identifier("name")?;
        let mut agents = Vec::new();
        for a in d.list("agents")? {
            let agent_name = a.identifier("name")?;
            let parent = a.identifier("parent")?;
            let info = a.section("info")?;
            let description = info.string("agentDescription")?;
            if description.trim().is_empty() {
                return Err(ConfigError::bad(
                    &info.child_path("agentDescription"),
                    "description must not be empty",
                ));
            }
            let example_questions = info.questions("exampleQuestions")?;
            info.finish(&["agentDescription", "exampleQuestions"], &mut warnings);
            a.finish(&["name", "parent", "info"], &mut warnings);
            agents.push(AgentDecl {
                name: agent_name,
                parent,
                description,
                example_questions,
            });
        }
        d.finish(&["name", "agents"], &mut warnings);
        domains.push(DomainDecl { name, agents });
    }
    root.finish(&["webapp", "twin", "facilitators", "domains"], &mut warnings);

    Ok(TopologyConfig {
        webapp_active,
        webapp_version,
        twin_version,
        twin_replicas,
        facilitators,
        domains,
        warnings,
    })
}

/// Serializes a config back into the document format. Warnings are not emitted.
pub fn render_topology(cfg: &TopologyConfig) -> String {
    serde_yaml::to_string(&to_value(cfg)).expect("yaml serialization of plain mapping")
}

pub fn to_value(cfg: &TopologyConfig) -> Value {
    fn map<const N: usize>(entries: [(&str, Value); N]) -> Value {
        let mut m = Mapping::new();
        for (k, v) in entries {
            m.insert(Value::from(k), v);
        }
        Value::Mapping(m)
    }
    let pods = |n: u32| map([("replicaCount", Value::from(n))]);

    let facilitators = cfg
        .facilitators
        .iter()
        .map(|f| map([("name", f.name.as_str().into()), ("podTemplates", pods(f.replicas))]))
        .collect::<Vec<_>>();
    let domains = cfg
        .domains
        .iter()
        .map(|d| {
            let agents = d
                .agents
                .iter()
                .map(|a| {
                    let questions: String = a
                        .example_questions
                        .iter()
                        .map(|q| format!("- {q}\n"))
                        .collect();
                    map([
                        ("name", a.name.as_str().into()),
                        ("parent", a.parent.as_str().into()),
                        (
                            "info",
                            map([
                                ("agentDescription", a.description.as_str().into()),
                                ("exampleQuestions", questions.into()),
                            ]),
                        ),
                    ])
                })
                .collect::<Vec<_>>();
            map([("name", d.name.as_str().into()), ("agents", Value::Sequence(agents))])
        })
        .collect::<Vec<_>>();

    map([
        (
            "webapp",
            map([
                ("active", Value::Bool(cfg.webapp_active)),
                ("version", cfg.webapp_version.as_str().into()),
            ]),
        ),
        (
            "twin",
            map([
                ("version", cfg.twin_version.as_str().into()),
                ("podTemplates", pods(cfg.twin_replicas)),
            ]),
        ),
        ("facilitators", Value::Sequence(facilitators)),
        ("domains", Value::Sequence(domains)),
    ])
}

/// A mapping node plus its dotted path, for error messages.
struct Section<'a> {
    map: &'a Mapping,
    path: String,
}

impl<'a> Section<'a> {
    fn new(value: &'a Value, path: &str) -> Result<Self, ConfigError> {
        match value {
            Value::Mapping(map) => Ok(Section {
                map,
                path: path.to_owned(),
            }),
            Value::Null if path.is_empty() => Err(ConfigError::MalformedDocument(
                "document is empty".into(),
            )),
            _ => Err(ConfigError::bad(
                if path.is_empty() { "<root>" } else { path },
                "expected a mapping",
            )),
        }
    }

    fn child_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_owned()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn get(&self, key: &str) -> Result<&'a Value, ConfigError> {
        self.map
            .get(key)
            .ok_or_else(|| ConfigError::MissingField(self.child_path(key)))
    }

    fn section(&self, key: &str) -> Result<Section<'a>, ConfigError> {
        let value = self.get(key)?;
        Section::new(value, &self.child_path(key))
    }

    fn list(&self, key: &str) -> Result<Vec<Section<'a>>, ConfigError> {
        let path = self.child_path(key);
        match self.get(key)? {
            Value::Sequence(items) => items
                .iter()
                .enumerate()
                .map(|(i, v)| Section::new(v, &format!("{path}[{i}]")))
                .collect(),
            Value::Null => Ok(Vec::new()),
            _ => Err(ConfigError::bad(&path, "expected a list")),
        }
    }

    fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        match self.get(key)? {
            Value::Bool(b) => Ok(*b),
            _ => Err(ConfigError::bad(&self.child_path(key), "expected true or false")),
        }
    }

    fn string(&self, key: &str) -> Result<String, ConfigError> {
        match self.get(key)? {
            Value::String(s) => Ok(s.clone()),
            _ => Err(ConfigError::bad(&self.child_path(key), "expected a string")),
        }
    }

    fn identifier(&self, key: &str) -> Result<String, ConfigError> {
        let s = self.string(key)?;
        if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c.is_control()) {
            return Err(ConfigError::bad(
                &self.child_path(key),
                "expected a nonempty name without whitespace",
            ));
        }
        Ok(s)
    }

    /// Versions like `0.1.1.dev33` are strings in YAML, but `1.2` reads as a float.
    fn version(&self, key: &str) -> Result<String, ConfigError> {
        let s = match self.get(key)? {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(ConfigError::bad(&self.child_path(key), "expected a version")),
        };
        if s.is_empty() || s.chars().any(char::is_whitespace) {
            return Err(ConfigError::bad(&self.child_path(key), "expected a version"));
        }
        Ok(s)
    }

    fn replicas(&self, key: &str) -> Result<u32, ConfigError> {
        let path = self.child_path(key);
        let n = self
            .get(key)?
            .as_i64()
            .ok_or_else(|| ConfigError::bad(&path, "expected an integer"))?;
        if n < 1 {
            return Err(ConfigError::bad(&path, format!("replica count must be >= 1, got {n}")));
        }
        u32::try_from(n).map_err(|_| ConfigError::bad(&path, "replica count too large"))
    }

    /// `exampleQuestions` is a block string of `- ` prefixed lines in the
    /// reference document; a plain YAML list is accepted as well.
    fn questions(&self, key: &str) -> Result<Vec<String>, ConfigError> {
        let path = self.child_path(key);
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(Vec::new()),
            Some(Value::String(s)) => Ok(s
                .lines()
                .map(|l| {
                    let l = l.trim();
                    l.strip_prefix("- ").or_else(|| l.strip_prefix('-')).unwrap_or(l).trim()
                })
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect()),
            Some(Value::Sequence(items)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(|s| s.trim().to_owned())
                        .ok_or_else(|| ConfigError::bad(&path, "expected a list of strings"))
                })
                .collect(),
            Some(_) => Err(ConfigError::bad(&path, "expected a string or list")),
        }
    }

    fn finish(&self, known: &[&str], warnings: &mut Vec<String>) {
        for key in self.map.keys() {
            let name = match key {
                Value::String(s) => s.clone(),
                other => format!("{other:?}"),
            };
            if !known.contains(&name.as_str()) {
                warnings.push(format!("unknown key `{}`", self.child_path(&name)));
            }
        }
    }
}

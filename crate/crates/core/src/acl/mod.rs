//! Attribute-based access control over the knowledge base.

mod condition;
mod kb;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use condition::{eval_condition, parse_condition, Atom, AtomTest, ParseError, RoleCondition};
pub use kb::{index_items, kb_query, load_kb, KbLoadError, KbQueryResult, KnowledgeItem, ScoredItem};

/// Attribute name → value, e.g. `division = hr`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserAttributes(BTreeMap<String, String>);

impl UserAttributes {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.insert(name.into(), value.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// First attribute name that is not a lowercase identifier, if any.
    pub fn invalid_name(&self) -> Option<&str> {
        self.0.keys().map(String::as_str).find(|k| !is_attribute_name(k))
    }
}

pub fn is_attribute_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for UserAttributes {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        UserAttributes(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::condition::{eval_condition, RoleCondition};
use super::UserAttributes;
use crate::text;

/// One tagged piece of domain knowledge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub id: String,
    pub domain: String,
    pub text: String,
    pub condition: RoleCondition,
    #[serde(skip)]
    terms: BTreeSet<String>,
}

impl KnowledgeItem {
    pub fn new(id: &str, domain: &str, text: &str, condition: RoleCondition) -> Self {
        KnowledgeItem {
            id: id.to_owned(),
            domain: domain.to_owned(),
            text: text.to_owned(),
            condition,
            terms: text::token_set(text),
        }
    }

    pub fn terms(&self) -> &BTreeSet<String> {
        &self.terms
    }

    fn index(mut self) -> Self {
        self.terms = text::token_set(&self.text);
        self
    }
}

#[derive(Debug, Error)]
pub enum KbLoadError {
    #[error("knowledge base line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error("duplicate knowledge item id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads line-delimited JSON items `{id, domain, text, condition}`. Blank
/// lines are skipped.
pub fn load_kb(reader: impl BufRead) -> Result<Vec<KnowledgeItem>, KbLoadError> {
    let mut items: Vec<KnowledgeItem> = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: KnowledgeItem = serde_json::from_str(&line).map_err(|e| KbLoadError::BadLine {
            line: n + 1,
            message: e.to_string(),
        })?;
        if !ids.insert(item.id.clone()) {
            return Err(KbLoadError::DuplicateId(item.id));
        }
        items.push(item.index());
    }
    Ok(items)
}

/// Re-derives token sets after deserializing items through some other path.
pub fn index_items(items: Vec<KnowledgeItem>) -> Vec<KnowledgeItem> {
    items.into_iter().map(KnowledgeItem::index).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredItem<'a> {
    pub item: &'a KnowledgeItem,
    /// Share of distinct query tokens the item contains, in (0, 1].
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KbQueryResult<'a> {
    pub hits: Vec<ScoredItem<'a>>,
    /// Items that matched the query but whose condition denied the user, by id.
    pub denied: Vec<&'a str>,
}

/// Lexical retrieval restricted to items the user may see. Zero-overlap items
/// are neither returned nor counted as denied.
pub fn kb_query<'a>(
    items: impl IntoIterator<Item = &'a KnowledgeItem>,
    query: &str,
    attrs: &UserAttributes,
    limit: usize,
) -> KbQueryResult<'a> {
    let q = text::token_set(query);
    let mut result = KbQueryResult::default();
    if q.is_empty() {
        return result;
    }
    for item in items {
        let overlap = item.terms.intersection(&q).count();
        if overlap == 0 {
            continue;
        }
        if eval_condition(&item.condition, attrs) {
            result.hits.push(ScoredItem {
                item,
                score: overlap as f64 / q.len() as f64,
            });
        } else {
            result.denied.push(&item.id);
        }
    }
    result.hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.item.id.cmp(&b.item.id))
    });
    result.hits.truncate(limit.max(1));
    result.denied.sort_unstable();
    result
}

//! Capability profiles: a truncated, weighted-term summary of what a node can
//! answer. Agents announce one to their parent on join; parents merge their
//! children's profiles and announce the summary further up.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::AgentDecl;
use crate::text;

pub const DEFAULT_PROFILE_SIZE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapabilityProfile {
    pub owner: String,
    /// Sorted by weight descending, then term ascending. The first weight is 1
    /// whenever the list is nonempty.
    pub terms: Vec<WeightedTerm>,
}

impl CapabilityProfile {
    pub fn empty(owner: impl Into<String>) -> Self {
        CapabilityProfile {
            owner: owner.into(),
            terms: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn weight(&self, term: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.term == term).map(|t| t.weight)
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// Builds a profile from raw term weights: sort, keep the top `k`, scale
    /// so the largest weight is 1.
    pub fn from_weights(owner: impl Into<String>, weights: BTreeMap<String, f64>, k: usize) -> Self {
        let mut terms: Vec<WeightedTerm> = weights
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(term, weight)| WeightedTerm { term, weight })
            .collect();
        terms.sort_by(|a, b| {
            b.weight
                .partial_cmp(&a.weight)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.term.cmp(&b.term))
        });
        terms.truncate(k);
        if let Some(max) = terms.first().map(|t| t.weight) {
            for t in &mut terms {
                t.weight /= max;
            }
        }
        CapabilityProfile {
            owner: owner.into(),
            terms,
        }
    }
}

pub fn build_capability_profile(decl: &AgentDecl, k: usize) -> CapabilityProfile {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    let texts = std::iter::once(decl.description.as_str())
        .chain(decl.example_questions.iter().map(String::as_str));
    for t in texts {
        for token in text::tokenize(t) {
            *counts.entry(token).or_default() += 1.0;
        }
    }
    CapabilityProfile::from_weights(decl.name.clone(), counts, k)
}

/// Merges child profiles into the summary `owner` announces upward.
pub fn summarize_children(
    owner: &str,
    profiles: &[CapabilityProfile],
    k: usize,
) -> CapabilityProfile {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for p in profiles {
        for t in &p.terms {
            *sums.entry(t.term.clone()).or_default() += t.weight;
        }
    }
    CapabilityProfile::from_weights(owner, sums, k)
}

//! Question segmentation, child scoring and decomposition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::message::Fact;
use crate::text;
use crate::topology::CapabilityProfile;

pub const DEFAULT_THRESHOLD: f64 = 0.15;

/// Relative slack under which two scores count as equal.
const TIE_EPSILON: f64 = 1e-9;

const TERMINATORS: [char; 3] = ['.', '?', '!'];

/// Splits a question into sentences, then splits sentences on `and` / `;`
/// where the left side carries a clause marker and the right side opens
/// with one (`… and what are …`, `…; do we …`). Pieces keep their original text.
pub fn segment(question: &str) -> Vec<String> {
    let mut out = Vec::new();
    for sentence in sentences(question) {
        out.extend(split_clauses(sentence));
    }
    out
}

fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if TERMINATORS.contains(&c) {
            // Keep runs like "?!" together.
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if !TERMINATORS.contains(&d) {
                    break;
                }
                end = j + d.len_utf8();
                chars.next();
            }
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, piece: &'a str) {
    let piece = piece.trim();
    if piece.chars().any(char::is_alphanumeric) {
        out.push(piece);
    }
}

fn is_clause_marker(word: &str) -> bool {
    text::CLAUSE_MARKERS.binary_search(&word).is_ok()
}

fn has_clause_marker(piece: &str) -> bool {
    text::words(piece).iter().any(|w| is_clause_marker(w))
}

fn opens_clause(piece: &str) -> bool {
    text::words(piece).first().is_some_and(|w| is_clause_marker(w))
}

/// Byte ranges `(start, end)` of every `;` and standalone `and`.
fn conjunctions(sentence: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let bytes = sentence.as_bytes();
    for (i, c) in sentence.char_indices() {
        if c == ';' {
            out.push((i, i + 1));
        } else if sentence[i..].len() >= 3 && sentence[i..i + 3].eq_ignore_ascii_case("and") {
            let before = i == 0 || !bytes[i - 1].is_ascii_alphanumeric();
            let after = i + 3 == bytes.len() || !bytes[i + 3].is_ascii_alphanumeric();
            if before && after {
                out.push((i, i + 3));
            }
        }
    }
    out
}

fn split_clauses(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    for (a, b) in conjunctions(sentence) {
        let left = &sentence[start..a];
        let right = &sentence[b..];
        if has_clause_marker(left) && opens_clause(right) {
            out.push(left.trim().trim_end_matches(',').trim_end().to_owned());
            start = b;
        }
    }
    let last = sentence[start..].trim();
    if !last.is_empty() {
        out.push(last.to_owned());
    }
    out
}

/// Share of `profile`'s total weight carried by terms in `segment`.
pub fn score(segment: &str, profile: &CapabilityProfile) -> f64 {
    let total = profile.total_weight();
    if total <= 0.0 {
        return 0.0;
    }
    let tokens = text::token_set(segment);
    let shared = profile
        .terms
        .iter()
        .filter(|t| tokens.contains(&t.term))
        .fold(0.0, |acc, t| acc + t.weight);
    (shared / total).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub segment: String,
    pub child: String,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPlan {
    pub segments: Vec<String>,
    /// In segment order.
    pub assignments: Vec<Assignment>,
    /// Segments no child scored high enough on, in segment order.
    pub uncovered: Vec<String>,
}

impl DecompositionPlan {
    /// Children in order of their first assignment, each with the segments
    /// routed to it.
    pub fn by_child(&self) -> Vec<(&str, Vec<&str>)> {
        let mut out: Vec<(&str, Vec<&str>)> = Vec::new();
        for a in &self.assignments {
            match out.iter_mut().find(|(c, _)| *c == a.child) {
                Some((_, segs)) => segs.push(&a.segment),
                None => out.push((&a.child, vec![&a.segment])),
            }
        }
        out
    }
}

/// Best-scoring child for `segment`; ties go to the smaller name.
pub fn best_child<'a>(segment: &str, children: &'a BTreeMap<String, CapabilityProfile>) -> Option<(&'a str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for (name, profile) in children {
        let s = score(segment, profile);
        match best {
            Some((_, b)) if s <= b + TIE_EPSILON * b.max(1.0) => {}
            _ => best = Some((name, s)),
        }
    }
    best
}

pub fn decompose(question: &str, children: &BTreeMap<String, CapabilityProfile>, threshold: f64) -> DecompositionPlan {
    let mut plan = DecompositionPlan {
        segments: segment(question),
        ..DecompositionPlan::default()
    };
    for seg in &plan.segments {
        match best_child(seg, children) {
            Some((child, s)) if s > 0.0 && s + TIE_EPSILON >= threshold => plan.assignments.push(Assignment {
                segment: seg.clone(),
                child: child.to_owned(),
                score: s,
            }),
            _ => plan.uncovered.push(seg.clone()),
        }
    }
    plan
}

/// Whether `fact` answers `segment`: its key shares a token with it.
pub fn fact_resolves(fact: &Fact, segment: &str) -> bool {
    let seg = text::token_set(segment);
    text::tokenize(&fact.key.replace('_', " "))
        .iter()
        .any(|t| seg.contains(t))
}

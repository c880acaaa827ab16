//! Generators and oracles shared by the property and acceptance suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::OnceLock;

use henry_core::acl::{Atom, AtomTest, RoleCondition, UserAttributes};
use henry_core::bus::{TraceAction, TraceRecord};
use henry_core::topology::{AgentDecl, CapabilityProfile, DomainDecl, FacilitatorDecl, TopologyConfig, WeightedTerm};
use proptest::prelude::*;

pub const WORDS: &[&str] = &[
    "salary", "benefits", "candidate", "education", "experience", "contract", "budget", "invoice", "travel",
    "policy", "training", "laptop", "office", "payroll", "holiday", "bonus", "team", "project", "customer",
    "report",
];

pub const ATTRIBUTES: &[&str] = &["division", "role", "site", "level"];
pub const VALUES: &[&str] = &["hr", "it", "sales"];

fn phrase(min: usize, max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), min..=max).prop_map(|w| w.join(" "))
}

/// Valid configs: unique names, parents are facilitators or earlier agents.
pub fn topology_config() -> impl Strategy<Value = TopologyConfig> {
    let agent = (phrase(1, 6), prop::collection::vec(phrase(1, 5), 0..3), any::<prop::sample::Index>());
    (
        any::<bool>(),
        (0u32..20, 0u32..20),
        1u32..5,
        prop::collection::vec(1u32..4, 1..4),
        prop::collection::vec(prop::collection::vec(agent, 0..4), 0..4),
    )
        .prop_map(|(active, (major, minor), twin_replicas, fac_replicas, domains)| {
            let facilitators: Vec<FacilitatorDecl> = fac_replicas
                .iter()
                .enumerate()
                .map(|(i, &replicas)| FacilitatorDecl {
                    name: format!("facilitator-{i}"),
                    replicas,
                })
                .collect();
            let mut parents: Vec<String> = facilitators.iter().map(|f| f.name.clone()).collect();
            let domains = domains
                .into_iter()
                .enumerate()
                .map(|(d, agents)| DomainDecl {
                    name: format!("domain-{d}"),
                    agents: agents
                        .into_iter()
                        .enumerate()
                        .map(|(a, (description, questions, parent))| {
                            let name = format!("agent-{d}-{a}");
                            let decl = AgentDecl {
                                name: name.clone(),
                                parent: parent.get(&parents).clone(),
                                description: format!("Answers about {description}."),
                                example_questions: questions.into_iter().map(|q| format!("What about {q}?")).collect(),
                            };
                            parents.push(name);
                            decl
                        })
                        .collect(),
                })
                .collect();
            TopologyConfig {
                webapp_active: active,
                webapp_version: format!("{major}.{minor}.1.dev{minor}"),
                twin_version: format!("{major}.{minor}"),
                twin_replicas,
                facilitators,
                domains,
                warnings: Vec::new(),
            }
        })
        .prop_filter("needs an agent", |c| c.agents().next().is_some())
}

/// Conditions over at most four attributes, never with empty and/or lists.
pub fn condition() -> impl Strategy<Value = RoleCondition> {
    let value = prop::sample::select(VALUES).prop_map(str::to_owned);
    let atom = (prop::sample::select(ATTRIBUTES), 0u8..3, value, prop::collection::btree_set(prop::sample::select(VALUES), 1..3))
        .prop_map(|(attribute, op, v, set)| {
            let test = match op {
                0 => AtomTest::Eq(v),
                1 => AtomTest::Ne(v),
                _ => AtomTest::In(set.into_iter().map(str::to_owned).collect()),
            };
            RoleCondition::Atom(Atom {
                attribute: attribute.to_owned(),
                test,
            })
        });
    let leaf = prop_oneof![
        1 => Just(RoleCondition::True),
        1 => Just(RoleCondition::False),
        8 => atom,
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(RoleCondition::And),
            prop::collection::vec(inner.clone(), 1..4).prop_map(RoleCondition::Or),
            inner.prop_map(|c| !c),
        ]
    })
}

/// Each attribute absent or set to one of the values (or an outsider).
pub fn attributes() -> impl Strategy<Value = UserAttributes> {
    prop::collection::vec(prop::option::of(prop::sample::select(&["hr", "it", "sales", "legal"][..])), ATTRIBUTES.len())
        .prop_map(|slots| assignment(&slots))
}

pub fn assignment(slots: &[Option<&str>]) -> UserAttributes {
    let mut attrs = UserAttributes::default();
    for (name, v) in ATTRIBUTES.iter().zip(slots) {
        if let Some(v) = v {
            attrs.insert(*name, *v);
        }
    }
    attrs
}

/// Truth table of `cond` over every assignment of [`ATTRIBUTES`], each slot
/// absent or one of [`VALUES`] plus an outsider value. Built bottom-up as
/// row bitmaps, independently of the evaluator under test.
pub struct TruthTable {
    rows: Vec<bool>,
}

const SLOT_VALUES: &[Option<&str>] = &[None, Some("hr"), Some("it"), Some("sales"), Some("legal")];

fn table_rows() -> &'static [Vec<Option<&'static str>>] {
    static ROWS: OnceLock<Vec<Vec<Option<&'static str>>>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let n = SLOT_VALUES.len();
        (0..n.pow(ATTRIBUTES.len() as u32))
            .map(|mut row| {
                (0..ATTRIBUTES.len())
                    .map(|_| {
                        let v = SLOT_VALUES[row % n];
                        row /= n;
                        v
                    })
                    .collect()
            })
            .collect()
    })
}

impl TruthTable {
    pub fn build(cond: &RoleCondition) -> Self {
        TruthTable { rows: Self::sat(cond) }
    }

    fn sat(cond: &RoleCondition) -> Vec<bool> {
        let rows = table_rows();
        match cond {
            RoleCondition::True => vec![true; rows.len()],
            RoleCondition::False => vec![false; rows.len()],
            RoleCondition::Atom(atom) => {
                let slot = ATTRIBUTES.iter().position(|a| *a == atom.attribute).expect("known attribute");
                rows.iter()
                    .map(|slots| match slots[slot] {
                        None => false,
                        Some(v) => match &atom.test {
                            AtomTest::Eq(x) => v == x,
                            AtomTest::Ne(x) => v != x,
                            AtomTest::In(xs) => xs.iter().any(|x| x == v),
                        },
                    })
                    .collect()
            }
            RoleCondition::And(cs) => cs.iter().fold(vec![true; rows.len()], |acc, c| {
                acc.iter().zip(Self::sat(c)).map(|(a, b)| *a && b).collect()
            }),
            RoleCondition::Or(cs) => cs.iter().fold(vec![false; rows.len()], |acc, c| {
                acc.iter().zip(Self::sat(c)).map(|(a, b)| *a || b).collect()
            }),
            RoleCondition::Not(c) => Self::sat(c).into_iter().map(|b| !b).collect(),
        }
    }

    pub fn allows(&self, attrs: &UserAttributes) -> bool {
        let n = SLOT_VALUES.len();
        let row = ATTRIBUTES.iter().rev().fold(0, |acc, a| {
            let v = attrs.get(a);
            acc * n + SLOT_VALUES.iter().position(|s| *s == v).expect("value in table")
        });
        self.rows[row]
    }

    /// Whether two conditions agree on every row.
    pub fn same_as(&self, other: &TruthTable) -> bool {
        self.rows == other.rows
    }
}

/// A question of one to four sentences over [`WORDS`], plus one to four
/// child profiles with random positive weights.
pub fn decomposition_instance() -> impl Strategy<Value = (String, BTreeMap<String, CapabilityProfile>)> {
    let sentences = prop::collection::vec(phrase(1, 5), 1..5)
        .prop_map(|s| s.into_iter().map(|p| format!("What {p}?")).collect::<Vec<_>>().join(" "));
    let profile = prop::collection::btree_map(prop::sample::select(WORDS).prop_map(str::to_owned), 0.05f64..5.0, 1..8);
    let profiles = prop::collection::vec(profile, 1..5).prop_map(|ps| {
        ps.into_iter()
            .enumerate()
            .map(|(i, w)| {
                let name = format!("child-{i}");
                (name.clone(), CapabilityProfile::from_weights(name, w, 16))
            })
            .collect()
    });
    (sentences, profiles)
}

pub fn scaled(p: &CapabilityProfile, factor: f64) -> CapabilityProfile {
    CapabilityProfile {
        owner: p.owner.clone(),
        terms: p
            .terms
            .iter()
            .map(|t| WeightedTerm {
                term: t.term.clone(),
                weight: t.weight * factor,
            })
            .collect(),
    }
}

/// Problems with envelope accounting and ordering, if any.
pub fn conservation_problems(trace: &[TraceRecord], dropped: u64) -> Vec<String> {
    let mut out = Vec::new();
    let count = |a| trace.iter().filter(|r| r.action == a).count() as u64;
    let (sent, received) = (count(TraceAction::Sent), count(TraceAction::Received));
    if sent != received + dropped {
        out.push(format!("Sent {sent} != Received {received} + dropped {dropped}"));
    }
    for w in trace.windows(2) {
        if w[1].seq <= w[0].seq {
            out.push(format!("seq {} follows {}", w[1].seq, w[0].seq));
        }
        if w[1].tick < w[0].tick {
            out.push(format!("tick {} follows {} at seq {}", w[1].tick, w[0].tick, w[1].seq));
        }
    }
    out
}

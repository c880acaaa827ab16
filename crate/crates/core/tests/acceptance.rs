//! One PASS/FAIL line per acceptance criterion of the core runtime.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::collections::BTreeSet;

use henry_core::acl::{eval_condition, kb_query, KnowledgeItem};
use henry_core::agent::RevisePolicy;
use henry_core::bus::trace::stage_sequence;
use henry_core::bus::TraceAction;
use henry_core::code::ErrorCode;
use henry_core::facilitator::{decompose, DEFAULT_THRESHOLD};
use henry_core::harness::{run_scenario, shipped, RunOutput, Scenario};
use henry_core::message::Fact;
use henry_core::topology::{parse_topology, render_topology, to_value, validate_topology, REFERENCE_TOPOLOGY};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use common::*;

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn property<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Outcome) -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |v| test(v).map_err(TestCaseError::fail))
        .map_err(|e| e.to_string())
}

fn run(s: &Scenario) -> Result<RunOutput, String> {
    let out = run_scenario(s, 0).map_err(|e| e.to_string())?;
    ensure(!out.exhausted, || "step budget exhausted".into())?;
    Ok(out)
}

fn scenario(name: &str) -> Result<Scenario, String> {
    shipped(name).ok_or_else(|| format!("scenario {name} not shipped"))
}

fn count(out: &RunOutput, rid: &str, action: TraceAction, contains: &str) -> usize {
    out.trace
        .iter()
        .filter(|r| r.request_id == rid && r.action == action && r.detail.contains(contains))
        .count()
}

fn terminal_events(out: &RunOutput, rid: &str) -> Vec<String> {
    out.transcript
        .iter()
        .filter(|e| e.request_id == rid && e.is_terminal())
        .map(|e| e.kind.clone())
        .collect()
}

fn config_fidelity() -> Outcome {
    let cfg = parse_topology(REFERENCE_TOPOLOGY).map_err(|e| e.to_string())?;
    validate_topology(&cfg).map_err(|e| format!("{e:?}"))?;
    property(1000, topology_config(), |cfg| {
        let back = parse_topology(&render_topology(&cfg)).map_err(|e| e.to_string())?;
        ensure(back == cfg, || "round trip changed the config".into())
    })?;
    property(1000, (topology_config(), any::<prop::sample::Index>(), 0u8..3), |(cfg, i, mutation)| {
        let agents: Vec<(usize, usize, String)> = cfg
            .domains
            .iter()
            .enumerate()
            .flat_map(|(d, dom)| dom.agents.iter().enumerate().map(move |(a, ag)| (d, a, ag.name.clone())))
            .collect();
        let (d, a, name) = i.get(&agents).clone();
        let mut doc = to_value(&cfg);
        let node = doc["domains"][d]["agents"][a].as_mapping_mut().expect("agent mapping");
        let expected = match mutation {
            0 => {
                node.remove("name");
                ErrorCode::MissingField
            }
            1 => {
                node.insert("parent".into(), "nobody-here".into());
                ErrorCode::UnknownParent
            }
            _ => {
                node.insert("parent".into(), name.as_str().into());
                ErrorCode::CycleDetected
            }
        };
        let text = serde_yaml::to_string(&doc).map_err(|e| e.to_string())?;
        let codes: Vec<ErrorCode> = match parse_topology(&text) {
            Err(e) => vec![e.code()],
            Ok(cfg) => validate_topology(&cfg).err().unwrap_or_default().iter().map(|e| e.code()).collect(),
        };
        ensure(codes.contains(&expected), || format!("{expected} expected, got {codes:?}"))
    })
}

fn fig3_golden() -> Outcome {
    let s = scenario("fig3-hr-cv")?;
    ensure(s.user.attributes.get("division") == Some("hr"), || "attributes are not {division: hr}".into())?;
    let first = run(&s)?;
    let rid = first.last_request().ok_or("no request")?.to_owned();
    let answer = first.final_entry(&rid).ok_or("no final answer")?;
    ensure(answer.kind == "answer", || format!("final event is {}", answer.kind))?;
    let cited: Vec<&str> = answer.payload["cited"]
        .as_array()
        .ok_or("no citations")?
        .iter()
        .filter_map(|v| v.as_str())
        .collect();
    let domain_of = |id: &str| s.kb.iter().find(|i| i.id == id).map(|i| i.domain.as_str());
    ensure(cited.iter().any(|c| domain_of(c) == Some("hr-domain")), || format!("no HR citation in {cited:?}"))?;
    ensure(cited.iter().any(|c| domain_of(c) == Some("cv-domain")), || format!("no CV citation in {cited:?}"))?;
    let agents = henry_core::bus::trace::agents_involved(&first.trace, &rid);
    let expected: BTreeSet<String> = ["twin", "facilitator", "isp-hr-expert", "isp-cv-expert"]
        .map(String::from)
        .into();
    ensure(agents == expected, || format!("agents involved {agents:?}"))?;
    let second = run(&s)?;
    ensure(first.transcript_jsonl() == second.transcript_jsonl(), || "transcripts differ between runs".into())
}

fn fig4_golden() -> Outcome {
    let out = run(&scenario("fig4-mediator")?)?;
    let rid = out.last_request().ok_or("no request")?;
    let stage1: Vec<&str> = out
        .trace
        .iter()
        .filter(|r| r.request_id == rid && r.action == TraceAction::StageEntered && r.detail.starts_with("stage 1"))
        .map(|r| r.detail.as_str())
        .collect();
    let [detail] = stage1[..] else {
        return Err(format!("stage 1 entered {} times", stage1.len()));
    };
    let created = detail
        .split("created=[")
        .nth(1)
        .and_then(|s| s.split(']').next())
        .ok_or("no created list")?;
    let created: Vec<&str> = created.split(',').filter(|s| !s.is_empty()).collect();
    ensure(created.len() == 2, || format!("created {created:?}"))?;
    let stages = stage_sequence(&out.trace, rid);
    ensure(stages == [1, 2, 3, 4], || format!("stages {stages:?}"))?;
    let published: Vec<_> = out.trace.iter().filter(|r| r.action == TraceAction::Published).collect();
    ensure(published.len() == 1, || format!("{} Published records", published.len()))?;
    let publishes = out.transcript.iter().filter(|e| e.kind == "publish").count();
    ensure(publishes == 1, || format!("{publishes} publish events"))?;
    let mediator = &published[0].actor;
    let late = out
        .trace
        .iter()
        .filter(|r| r.seq > published[0].seq && r.action == TraceAction::Received && &r.actor == mediator)
        .count();
    ensure(late == 0, || format!("{late} envelope(s) delivered to {mediator} after publishing"))
}

fn acl_soundness() -> Outcome {
    property(10_000, (condition(), attributes()), |(cond, attrs)| {
        ensure(cond.attributes().len() <= 4, || "too many attributes".into())?;
        let oracle = TruthTable::build(&cond).allows(&attrs);
        ensure(eval_condition(&cond, &attrs) == oracle, || format!("{cond} disagrees with oracle"))
    })?;
    let kb = prop::collection::vec(
        (prop::collection::vec(prop::sample::select(WORDS), 1..6), condition()),
        1..12,
    );
    let query = prop::collection::vec(prop::sample::select(WORDS), 0..5);
    property(2_000, (kb, query, attributes()), |(items, query, attrs)| {
        let items: Vec<KnowledgeItem> = items
            .into_iter()
            .enumerate()
            .map(|(i, (words, cond))| KnowledgeItem::new(&format!("item-{i:02}"), "domain", &words.join(" "), cond))
            .collect();
        let result = kb_query(&items, &query.join(" "), &attrs, 8);
        match result.hits.iter().find(|h| !eval_condition(&h.item.condition, &attrs)) {
            Some(h) => Err(format!("denied item {} returned", h.item.id)),
            None => Ok(()),
        }
    })
}

fn decomposition_invariants() -> Outcome {
    property(1000, (decomposition_instance(), 0.01f64..100.0), |((question, children), factor)| {
        let plan = decompose(&question, &children, DEFAULT_THRESHOLD);
        let mut placed: Vec<&String> = plan.assignments.iter().map(|a| &a.segment).collect();
        placed.extend(&plan.uncovered);
        placed.sort();
        let mut segments: Vec<&String> = plan.segments.iter().collect();
        segments.sort();
        ensure(placed == segments, || "segments not partitioned exactly once".into())?;

        let rescaled = children.iter().map(|(n, p)| (n.clone(), scaled(p, factor))).collect();
        let again = decompose(&question, &rescaled, DEFAULT_THRESHOLD);
        let routes = |p: &henry_core::facilitator::DecompositionPlan| {
            p.assignments.iter().map(|a| (a.segment.clone(), a.child.clone())).collect::<Vec<_>>()
        };
        ensure(routes(&plan) == routes(&again), || format!("scaling by {factor} changed the routing"))?;

        let (source, profile) = children.iter().next_back().expect("at least one child");
        let mut tied = children.clone();
        let mut clone = profile.clone();
        clone.owner = "aaa-clone".into();
        tied.insert("aaa-clone".into(), clone);
        let plan = decompose(&question, &tied, DEFAULT_THRESHOLD);
        match plan.assignments.iter().find(|a| &a.child == source) {
            Some(a) => Err(format!("tie on {:?} went to {source}", a.segment)),
            None => Ok(()),
        }
    })
}

fn integration_parsimony() -> Outcome {
    let mut s = scenario("integration")?;
    s.user.turns.truncate(1);
    let asks = |out: &RunOutput| {
        let rid = out.last_request().unwrap_or_default();
        count(out, rid, TraceAction::Sent, "IntegrationRequest")
    };
    let without = run(&s)?;
    ensure(asks(&without) == 1, || format!("{} integration requests without the fact", asks(&without)))?;
    s.user.facts.push(Fact {
        key: "position".into(),
        value: "senior analyst".into(),
    });
    s.user.turns[0].integration_replies.clear();
    let with = run(&s)?;
    ensure(asks(&with) == 0, || format!("{} integration requests with the fact", asks(&with)))?;
    let rid = with.last_request().unwrap_or_default();
    let text = with.final_entry(rid).and_then(|e| e.text()).unwrap_or_default();
    ensure(text.contains("55,000-62,000"), || format!("answer without the remembered fact: {text:?}"))
}

fn deferred_retry() -> Outcome {
    let s = scenario("deferred")?;
    let out = run(&s)?;
    let rid = out.last_request().ok_or("no request")?;
    let first_failure = out
        .trace
        .iter()
        .find(|r| r.request_id == rid && r.action == TraceAction::Deferred)
        .map(|r| r.tick)
        .ok_or("never deferred")?;
    let retries: Vec<u64> = out
        .trace
        .iter()
        .filter(|r| r.request_id == rid && r.action == TraceAction::Resubmitted)
        .map(|r| r.tick)
        .collect();
    let expected = vec![first_failure + 8, first_failure + 24];
    ensure(retries == expected, || format!("retries at {retries:?}, expected {expected:?}"))?;
    let terminal = terminal_events(&out, rid);
    ensure(terminal == ["answer"], || format!("terminal events {terminal:?}"))?;

    let mut down = s.clone();
    let script = down.scripts.get_mut("isp-hr-expert").ok_or("no hr script")?;
    script.offline_first = 0;
    script.offline_always = true;
    let out = run(&down)?;
    let rid = out.last_request().ok_or("no request")?;
    let attempts = count(&out, rid, TraceAction::Sent, "UserQuery twin->");
    ensure(attempts == 3, || format!("{attempts} attempts"))?;
    let terminal = terminal_events(&out, rid);
    ensure(terminal == ["failure"], || format!("terminal events {terminal:?}"))
}

fn mediator_bounds() -> Outcome {
    let base = scenario("fig4-mediator")?;
    let entries = |out: &RunOutput| {
        let rid = out.last_request().unwrap_or_default();
        count(out, rid, TraceAction::AgoraPost, "")
    };

    let mut always = base.clone();
    always.settings.mediator.max_rounds = 3;
    for t in &mut always.templates {
        t.script.revise = RevisePolicy::Always;
    }
    let out = run(&always)?;
    let roster = always.templates.len().min(always.settings.mediator.create_count);
    ensure(entries(&out) == roster * 4, || format!("{} entries for roster {roster}", entries(&out)))?;
    let terminal = terminal_events(&out, out.last_request().unwrap_or_default());
    ensure(terminal == ["publish"], || format!("terminal events {terminal:?}"))?;

    let mut never = base;
    for t in &mut never.templates {
        t.script.revise = RevisePolicy::Never;
        t.script.revisions.clear();
    }
    let out = run(&never)?;
    let rid = out.last_request().unwrap_or_default();
    let rounds = count(&out, rid, TraceAction::StageEntered, "after 1 round(s)");
    ensure(rounds == 1, || "discussion did not end at round 1".into())?;
    ensure(entries(&out) == roster, || format!("{} entries for roster {roster}", entries(&out)))
}

fn trace_conservation() -> Outcome {
    for name in henry_core::harness::SHIPPED.iter().map(|(n, _)| *n) {
        let out = run(&scenario(name)?)?;
        let problems = conservation_problems(&out.trace, out.dropped);
        ensure(problems.is_empty(), || format!("{name}: {}", problems.join("; ")))?;
    }
    Ok(())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("config fidelity", config_fidelity),
        ("fig 3 golden scenario", fig3_golden),
        ("fig 4 golden scenario", fig4_golden),
        ("acl soundness", acl_soundness),
        ("decomposition invariants", decomposition_invariants),
        ("integration parsimony", integration_parsimony),
        ("deferred retry", deferred_retry),
        ("mediator bounds", mediator_bounds),
        ("trace conservation", trace_conservation),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

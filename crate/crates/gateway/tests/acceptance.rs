//! PASS/FAIL line for the gateway acceptance criterion.
//! Run with `cargo test --test acceptance -- --nocapture` to see it.

mod common;

use std::collections::BTreeSet;
use std::time::Duration;

use henry_core::harness::{run_scenario, shipped};
use serde_json::json;

use common::{start, WAIT};

type Outcome = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// The golden question over HTTP gives the local run's answer and trace.
async fn fig3_over_http() -> Outcome {
    let golden = shipped("fig3-hr-cv").ok_or("fig3 scenario missing")?;
    let local = run_scenario(&golden, 0).map_err(|e| e.to_string())?;
    let expected = local.final_entry("r1").ok_or("no local answer")?;

    let server = start("fig3-hr-cv", WAIT).await;
    let sid = server.session(json!({ "division": "hr" })).await;
    let mut stream = server.events(&sid, None).await;
    let rid = server.message(&sid, &golden.user.turns[0].text).await;
    let frames = stream.until(WAIT, |f| f.is_terminal()).await;
    let last = frames.last().ok_or("no events")?;
    ensure(last.event == "answer" && last.request_id() == rid, || format!("last event {last:?}"))?;
    ensure(last.data["payload"] == expected.payload, || "answer differs from the local run".into())?;
    let trace = server.get(&format!("/sessions/{sid}/trace?request={rid}")).await;
    let agents: BTreeSet<String> = serde_json::from_value(trace.body["agents_involved"].clone()).map_err(|e| e.to_string())?;
    let want: BTreeSet<String> = ["twin", "facilitator", "isp-hr-expert", "isp-cv-expert"].map(String::from).into();
    ensure(agents == want, || format!("agents {agents:?}"))
}

/// Another session's boards and traces are refused.
async fn isolation() -> Outcome {
    let server = start("fig4-mediator", WAIT).await;
    let alice = server.session(json!({ "division": "hr" })).await;
    let bob = server.session(json!({ "division": "hr" })).await;
    let mut stream = server.events(&alice, None).await;
    let rid = server.message(&alice, "Schedule a two-day onboarding workshop for the new hires.").await;
    let frames = stream.until(WAIT, |f| f.is_terminal()).await;
    let agora = frames
        .last()
        .and_then(|f| f.data["payload"]["agora_id"].as_str())
        .ok_or("no publish event")?
        .to_owned();
    let own = server.get(&format!("/sessions/{alice}/agora/{agora}")).await;
    ensure(own.status == 200, || format!("own board: {}", own.status))?;
    let board = server.get(&format!("/sessions/{bob}/agora/{agora}")).await;
    ensure(board.error_code() == "NotYourBoard", || format!("foreign board: {:?}", board.body))?;
    let trace = server.get(&format!("/sessions/{bob}/trace?request={rid}")).await;
    ensure(trace.error_code() == "UnknownRequest", || format!("foreign trace: {:?}", trace.body))?;
    let mut bob_events = server.events(&bob, None).await;
    ensure(bob_events.next(Duration::from_millis(200)).await.is_none(), || "foreign events leaked".into())
}

/// Answers, prompts that expire, retries and tasks all end in exactly one
/// terminal event per request.
async fn completeness() -> Outcome {
    for (scenario, texts) in [
        ("deferred", &["What is the standard salary range for this position in our company?", "Who is Jane?"][..]),
        ("fig4-mediator", &["Schedule a two-day onboarding workshop for the new hires.", "What salary can we offer?"][..]),
        ("integration", &["What salary should we offer and what is the position?"][..]),
    ] {
        let server = start(scenario, Duration::from_millis(100)).await;
        let sid = server.session(json!({ "division": "hr" })).await;
        let mut stream = server.events(&sid, None).await;
        let mut open = BTreeSet::new();
        for text in texts {
            open.insert(server.message(&sid, text).await);
        }
        let mut done = BTreeSet::new();
        while done.len() < open.len() {
            let f = stream.next(WAIT).await.ok_or_else(|| format!("{scenario}: open requests {open:?}, done {done:?}"))?;
            if f.is_terminal() && !done.insert(f.request_id().to_owned()) {
                return Err(format!("{scenario}: second terminal event for {}", f.request_id()));
            }
        }
        ensure(done == open, || format!("{scenario}: terminal events for {done:?}, requests {open:?}"))?;
    }
    Ok(())
}

#[tokio::test]
async fn acceptance() {
    let checks = [
        ("fig 3 over http", fig3_over_http().await),
        ("session isolation", isolation().await),
        ("stream completeness", completeness().await),
    ];
    let failures: Vec<String> = checks
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    if failures.is_empty() {
        println!("PASS gateway contract");
    } else {
        println!("FAIL gateway contract: {}", failures.join("; "));
    }
    assert!(failures.is_empty(), "{failures:?}");
}

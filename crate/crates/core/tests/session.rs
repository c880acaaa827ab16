use henry_core::acl::UserAttributes;
use henry_core::bus::TraceAction;
use henry_core::code::ErrorCode;
use henry_core::event::EventKind;
use henry_core::harness::{run_scenario, shipped, start_session};
use henry_core::runtime::Pause;

fn terminal(events: &[henry_core::event::UserEvent], rid: &str) -> Vec<EventKind> {
    events
        .iter()
        .filter(|e| e.request_id == rid && e.kind.is_terminal())
        .map(|e| e.kind)
        .collect()
}

#[test]
fn blank_message_is_rejected_without_side_effects() {
    let s = shipped("fig3-hr-cv").unwrap();
    let mut session = start_session(&s, Default::default()).unwrap();
    let before = session.trace().len();
    let err = session.submit("   ").unwrap_err();
    assert_eq!(err.code, ErrorCode::EmptyMessage);
    assert_eq!(session.run().unwrap(), 0);
    assert_eq!(session.trace().len(), before);
}

#[test]
fn integration_reply_needs_an_open_prompt() {
    let s = shipped("fig3-hr-cv").unwrap();
    let mut session = start_session(&s, Default::default()).unwrap();
    let err = session.integrate("r1", "anything").unwrap_err();
    assert_eq!(err.code, ErrorCode::NoOutstandingIntegration);
}

#[test]
fn request_ids_carry_the_session_prefix() {
    let s = shipped("fig3-hr-cv").unwrap();
    let mut session = start_session(&s, Default::default()).unwrap().with_request_prefix("s7-");
    assert_eq!(session.submit("What salary can we offer?").unwrap(), "s7-r1");
    assert_eq!(session.submit("What education does the candidate have?").unwrap(), "s7-r2");
    session.run().unwrap();
    let events = session.take_events();
    assert_eq!(terminal(&events, "s7-r1"), [EventKind::Answer]);
    assert_eq!(terminal(&events, "s7-r2"), [EventKind::Answer]);
}

#[test]
fn other_divisions_do_not_see_restricted_items() {
    let mut s = shipped("fig3-hr-cv").unwrap();
    s.scripts.clear();
    s.user.attributes = UserAttributes::default();
    s.user.attributes.insert("division", "sales");
    let out = run_scenario(&s, 0).unwrap();
    let rid = out.last_request().unwrap();
    let answer = out.final_entry(rid).unwrap();
    let cited: Vec<&str> = answer.payload["cited"].as_array().unwrap().iter().filter_map(|v| v.as_str()).collect();
    assert_eq!(cited, ["cv-education"]);
    let text = answer.text().unwrap();
    assert!(!text.contains("55,000"), "{text}");
    assert!(!text.contains("five years"), "{text}");
    let denied = out.trace.iter().filter(|r| r.action == TraceAction::AclDenied).count();
    assert!(denied >= 2, "{denied} denials traced");
}

#[test]
fn unanswered_integration_times_out_with_a_partial_answer() {
    let mut s = shipped("integration").unwrap();
    s.user.turns.truncate(1);
    s.user.turns[0].integration_replies.clear();
    let out = run_scenario(&s, 0).unwrap();
    let kinds: Vec<&str> = out.transcript.iter().map(|e| e.kind.as_str()).collect();
    assert_eq!(kinds, ["user", "integration_request", "answer"]);
    let text = out.transcript[2].text().unwrap();
    assert!(text.contains("in time"), "{text}");
}

#[test]
fn session_pauses_for_the_user_and_resumes() {
    let s = shipped("integration").unwrap();
    let mut session = start_session(&s, Default::default()).unwrap();
    let rid = session.submit(&s.user.turns[0].text).unwrap();
    assert_eq!(session.run_until_user().unwrap(), Pause::AwaitingUser);
    assert!(session.twin().is_awaiting_integration(&rid));
    let paused_at = session.now();
    assert_eq!(session.run_until_user().unwrap(), Pause::AwaitingUser);
    assert_eq!(session.now(), paused_at, "waiting for the user costs no time");
    session.integrate(&rid, "senior analyst").unwrap();
    assert_eq!(session.run_until_user().unwrap(), Pause::Quiescent);
    let events = session.take_events();
    assert_eq!(terminal(&events, &rid), [EventKind::Answer]);
    assert_eq!(session.twin().memory().matching("position").len(), 1);
}

#[test]
fn step_budget_closes_open_requests() {
    let mut s = shipped("fig3-hr-cv").unwrap();
    s.settings.max_steps = 3;
    let out = run_scenario(&s, 0).unwrap();
    assert!(out.exhausted);
    let last = out.transcript.last().unwrap();
    assert_eq!(last.kind, "budget_exhausted");
    assert_eq!(last.payload["code"], "BudgetExhausted");
}

#[test]
fn domain_down_for_good_ends_in_one_humanized_failure() {
    let mut s = shipped("deferred").unwrap();
    let script = s.scripts.get_mut("isp-hr-expert").unwrap();
    script.offline_always = true;
    let out = run_scenario(&s, 0).unwrap();
    let rid = out.last_request().unwrap();
    let last = out.final_entry(rid).unwrap();
    assert_eq!(last.kind, "failure");
    assert_eq!(last.payload["code"], "RetriesExhausted");
    assert!(last.text().unwrap().contains("HR service"), "{:?}", last.text());
    let notices = out.transcript.iter().filter(|e| e.kind == "notice").count();
    assert_eq!(notices, 2);
}

#[test]
fn mediator_cleans_up_but_the_board_stays_readable() {
    let s = shipped("fig4-mediator").unwrap();
    let mut session = start_session(&s, Default::default()).unwrap();
    let rid = session.submit(&s.user.turns[0].text).unwrap();
    session.run().unwrap();
    let events = session.take_events();
    assert_eq!(terminal(&events, &rid), [EventKind::Publish]);
    for gone in ["mediator-1", "agenda-planner-1", "logistics-planner-1"] {
        assert!(!session.bus().is_registered(gone), "{gone} still registered");
    }
    let board = session.agora("agora-mediator-1").unwrap();
    assert!(board.is_published());
    assert_eq!(board.read("agenda-planner-1").unwrap().len(), 4);
    assert_eq!(board.read("intruder").unwrap_err().code(), ErrorCode::NotAParticipant);
}

#[test]
fn tasks_with_nobody_to_help_fail_cleanly() {
    let mut s = shipped("fig4-mediator").unwrap();
    s.templates.clear();
    let out = run_scenario(&s, 0).unwrap();
    let rid = out.last_request().unwrap();
    let kinds: Vec<&str> = out.transcript.iter().filter(|e| e.request_id == rid).map(|e| e.kind.as_str()).collect();
    assert!(!out.exhausted);
    assert_eq!(kinds.iter().filter(|k| ["answer", "failure", "publish"].contains(k)).count(), 1, "{kinds:?}");
}

#[test]
fn a_pending_prompt_blocks_nothing_else() {
    let s = shipped("deferred").unwrap();
    let mut session = start_session(&s, Default::default()).unwrap();
    let asks = session.submit("Who is Jane?").unwrap();
    let salary = session.submit(&s.user.turns[0].text).unwrap();
    assert_eq!(session.run_until_user().unwrap(), Pause::AwaitingUser);
    let events = session.take_events();
    assert_eq!(terminal(&events, &salary), [EventKind::Answer], "retries ran while the user was asked");
    assert!(terminal(&events, &asks).is_empty());
    assert!(session.twin().is_awaiting_integration(&asks));
}

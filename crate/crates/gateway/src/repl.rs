//! Line-oriented chat against a local session.
//!
//! Each line is a message to the twin. While the twin waits for more
//! information, the next line answers it instead. `:trace` shows who worked
//! on the last request, `:quit` ends the session.

use std::io::{self, BufRead, Write};

use henry_core::bus::trace::{agents_involved, stage_sequence};
use henry_core::event::{EventKind, UserEvent};
use henry_core::runtime::Session;

pub fn render_event(e: &UserEvent) -> String {
    let text = e.text().unwrap_or_default();
    match e.kind {
        EventKind::IntegrationRequest => format!("[{}] ? {text}", e.request_id),
        EventKind::Publish => {
            let mut out = format!("[{}] published {}", e.request_id, e.payload["agora_id"].as_str().unwrap_or_default());
            if let Some(bundle) = e.payload["bundle"].as_object() {
                for (author, solution) in bundle {
                    out.push_str(&format!("\n  {author}: {}", solution.as_str().unwrap_or_default()));
                }
            }
            out
        }
        _ => format!("[{}] {text}", e.request_id),
    }
}

fn awaiting(session: &Session) -> Option<String> {
    let twin = session.twin();
    twin.open_requests().find(|r| twin.is_awaiting_integration(r)).map(str::to_owned)
}

fn flush_events(session: &mut Session, out: &mut impl Write) -> io::Result<()> {
    for e in session.take_events() {
        writeln!(out, "{}", render_event(&e))?;
    }
    Ok(())
}

pub fn repl(session: &mut Session, input: impl BufRead, out: &mut impl Write) -> io::Result<()> {
    let mut last: Option<String> = None;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        match line {
            "" => continue,
            ":quit" | ":q" => break,
            ":trace" => {
                match &last {
                    Some(rid) => {
                        let agents: Vec<String> = agents_involved(session.trace(), rid).into_iter().collect();
                        writeln!(out, "agents: {}", agents.join(", "))?;
                        let stages = stage_sequence(session.trace(), rid);
                        if !stages.is_empty() {
                            let stages: Vec<String> = stages.iter().map(u8::to_string).collect();
                            writeln!(out, "stages: {}", stages.join(" "))?;
                        }
                    }
                    None => writeln!(out, "no request yet")?,
                }
                continue;
            }
            _ => {}
        }
        let outcome = match awaiting(session) {
            Some(rid) => session.integrate(&rid, line),
            None => session.submit(line).map(|rid| last = Some(rid)),
        };
        if let Err(err) = outcome {
            writeln!(out, "error {}: {}", err.code, err.detail)?;
            continue;
        }
        if session.run_until_user().is_err() {
            writeln!(out, "step budget exhausted")?;
        }
        flush_events(session, out)?;
    }
    if awaiting(session).is_some() {
        let _ = session.run();
        flush_events(session, out)?;
    }
    Ok(())
}

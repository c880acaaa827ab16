use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TraceAction {
    Sent,
    Received,
    KbRead,
    AclDenied,
    StageEntered,
    AgoraPost,
    Deferred,
    Resubmitted,
    Published,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub tick: u64,
    pub request_id: String,
    pub actor: String,
    pub action: TraceAction,
    pub detail: String,
}

/// Append-only session data service.
#[derive(Default)]
pub struct TraceStore {
    records: Vec<TraceRecord>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for TraceStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TraceStore")
            .field("records", &self.records.len())
            .field("sink", &self.sink.is_some())
            .finish()
    }
}

impl TraceStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mirrors every appended record to `sink` as one JSON line.
    pub fn with_sink(sink: Box<dyn Write + Send>) -> Self {
        TraceStore {
            records: Vec::new(),
            sink: Some(sink),
        }
    }

    pub fn append(
        &mut self,
        tick: u64,
        request_id: &str,
        actor: &str,
        action: TraceAction,
        detail: impl Into<String>,
    ) -> u64 {
        let seq = self.records.len() as u64 + 1;
        let rec = TraceRecord {
            seq,
            tick,
            request_id: request_id.to_owned(),
            actor: actor.to_owned(),
            action,
            detail: detail.into(),
        };
        if let Some(sink) = &mut self.sink {
            // A failing mirror must not take the run down; the in-memory copy
            // stays authoritative.
            let _ = serde_json::to_writer(&mut *sink, &rec).and_then(|_| {
                sink.write_all(b"\n").map_err(serde_json::Error::io)
            });
        }
        self.records.push(rec);
        seq
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match &mut self.sink {
            Some(s) => s.flush(),
            None => Ok(()),
        }
    }
}

pub fn for_request<'a>(
    records: &'a [TraceRecord],
    request_id: &'a str,
) -> impl Iterator<Item = &'a TraceRecord> + 'a {
    records.iter().filter(move |r| r.request_id == request_id)
}

/// Distinct actors that left any record for `request_id`.
pub fn agents_involved(records: &[TraceRecord], request_id: &str) -> BTreeSet<String> {
    for_request(records, request_id).map(|r| r.actor.clone()).collect()
}

/// Stage numbers from `StageEntered` records, in trace order.
pub fn stage_sequence(records: &[TraceRecord], request_id: &str) -> Vec<u8> {
    for_request(records, request_id)
        .filter(|r| r.action == TraceAction::StageEntered)
        .filter_map(|r| r.detail.strip_prefix("stage ")?.get(..1)?.parse().ok())
        .collect()
}

pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<TraceRecord>, TraceReadError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| TraceReadError::Line {
            line: n + 1,
            source,
        })?);
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum TraceReadError {
    #[error("trace line {line}: {source}")]
    Line {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Envelope-level accounting recovered from Sent/Received details.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Conservation {
    pub sent: usize,
    pub received: usize,
    /// Message ids that were sent but never received.
    pub undelivered: BTreeSet<String>,
}

pub fn conservation(records: &[TraceRecord]) -> Conservation {
    let id = |r: &TraceRecord| r.detail.split(' ').next().unwrap_or("").to_owned();
    let sent: BTreeSet<String> = records
        .iter()
        .filter(|r| r.action == TraceAction::Sent)
        .map(id)
        .collect();
    let received: BTreeSet<String> = records
        .iter()
        .filter(|r| r.action == TraceAction::Received)
        .map(id)
        .collect();
    Conservation {
        sent: records.iter().filter(|r| r.action == TraceAction::Sent).count(),
        received: records.iter().filter(|r| r.action == TraceAction::Received).count(),
        undelivered: sent.difference(&received).cloned().collect(),
    }
}

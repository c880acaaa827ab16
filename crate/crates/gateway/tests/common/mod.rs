//! A live gateway on a loopback port and a small event-stream reader.
#![allow(dead_code)]

use std::time::Duration;

use henry_core::harness::{deployment, shipped};
use henry_gateway::{Gateway, GatewayConfig};
use serde_json::{json, Value};

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
    _stop: tokio::sync::oneshot::Sender<()>,
}

pub async fn start(scenario: &str, integration_wait: Duration) -> Server {
    let d = deployment(&shipped(scenario).expect("bundled scenario")).expect("deployment");
    let gateway = Gateway::new(d, GatewayConfig { integration_wait });
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(henry_gateway::serve(listener, gateway, async {
        let _ = stopped.await;
    }));
    Server {
        base,
        client: reqwest::Client::new(),
        _stop: stop,
    }
}

/// Status and JSON body of one call.
pub struct Reply {
    pub status: u16,
    pub body: Value,
}

impl Reply {
    pub fn error_code(&self) -> &str {
        self.body["error"]["code"].as_str().unwrap_or_default()
    }
}

impl Server {
    pub async fn call(&self, method: &str, path: &str, body: Option<String>) -> Reply {
        let url = format!("{}{path}", self.base);
        let req = match method {
            "GET" => self.client.get(&url),
            _ => self.client.post(&url).header("content-type", "application/json"),
        };
        let req = match body {
            Some(b) => req.body(b),
            None => req,
        };
        let resp = req.send().await.unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap();
        Reply {
            status,
            body: serde_json::from_str(&text).unwrap_or(Value::String(text)),
        }
    }

    pub async fn post(&self, path: &str, body: Value) -> Reply {
        self.call("POST", path, Some(body.to_string())).await
    }

    pub async fn get(&self, path: &str) -> Reply {
        self.call("GET", path, None).await
    }

    pub async fn session(&self, attributes: Value) -> String {
        let r = self.post("/sessions", json!({ "attributes": attributes })).await;
        assert_eq!(r.status, 201, "{:?}", r.body);
        r.body["session_id"].as_str().unwrap().to_owned()
    }

    pub async fn message(&self, session: &str, text: &str) -> String {
        let r = self.post(&format!("/sessions/{session}/messages"), json!({ "text": text })).await;
        assert_eq!(r.status, 202, "{:?}", r.body);
        r.body["request_id"].as_str().unwrap().to_owned()
    }

    pub async fn events(&self, session: &str, last_event_id: Option<usize>) -> EventStream {
        let mut req = self.client.get(format!("{}/sessions/{session}/events", self.base));
        if let Some(id) = last_event_id {
            req = req.header("last-event-id", id.to_string());
        }
        let resp = req.send().await.unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        EventStream {
            resp,
            buf: String::new(),
        }
    }
}

/// One server-sent event.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: usize,
    pub event: String,
    pub data: Value,
}

impl Frame {
    pub fn request_id(&self) -> &str {
        self.data["request_id"].as_str().unwrap_or_default()
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.event.as_str(), "answer" | "failure" | "publish" | "budget_exhausted")
    }
}

pub struct EventStream {
    resp: reqwest::Response,
    buf: String,
}

impl EventStream {
    /// Next event frame, skipping keep-alive comments; `None` on timeout.
    pub async fn next(&mut self, within: Duration) -> Option<Frame> {
        loop {
            if let Some(end) = self.buf.find("\n\n") {
                let raw: String = self.buf.drain(..end + 2).collect();
                let (mut id, mut event, mut data) = (None, String::new(), String::new());
                for line in raw.lines() {
                    if let Some(v) = line.strip_prefix("id:") {
                        id = v.trim().parse().ok();
                    } else if let Some(v) = line.strip_prefix("event:") {
                        event = v.trim().to_owned();
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.trim_start());
                    }
                }
                if let Some(id) = id {
                    let data = serde_json::from_str(&data).expect("frames carry JSON");
                    return Some(Frame { id, event, data });
                }
                continue;
            }
            let chunk = tokio::time::timeout(within, self.resp.chunk()).await.ok()?.ok()??;
            self.buf.push_str(&String::from_utf8_lossy(&chunk));
        }
    }

    /// Frames up to and including the first one matching `stop`.
    pub async fn until(&mut self, within: Duration, stop: impl Fn(&Frame) -> bool) -> Vec<Frame> {
        let mut out = Vec::new();
        while let Some(f) = self.next(within).await {
            let done = stop(&f);
            out.push(f);
            if done {
                break;
            }
        }
        out
    }
}

pub const WAIT: Duration = Duration::from_secs(5);

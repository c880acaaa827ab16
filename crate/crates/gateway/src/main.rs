use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use henry_core::acl::{load_kb, KnowledgeItem, UserAttributes};
use henry_core::agent::SessionMemory;
use henry_core::bus::trace::{agents_involved, read_jsonl, stage_sequence, to_jsonl};
use henry_core::bus::TraceStore;
use henry_core::code::ErrorCode;
use henry_core::harness::{assert_expectations, load_scenario, run_scenario, shipped, Scenario};
use henry_core::runtime::Deployment;
use henry_core::topology::{parse_topology, validate_topology, TopologyConfig, REFERENCE_TOPOLOGY};
use henry_gateway::{repl, Gateway, GatewayConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "henry", version, about = "Run, serve and inspect henry agent deployments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where a deployment comes from: a topology document (`reference` for the
/// bundled one), optionally with a knowledge base and a scenario supplying
/// scripts, templates and settings.
#[derive(clap::Args)]
struct DeploymentArgs {
    /// Topology document, or `reference`.
    config: String,
    /// Knowledge base, one JSON item per line.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Scenario whose knowledge base, scripts, templates and settings to use.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a topology document; prints the result as JSON.
    Validate { config: PathBuf },
    /// Run a scenario file (or a bundled scenario by name); prints the
    /// transcript as JSON lines and expectation results on stderr.
    Run {
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full trace here as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Serve the HTTP gateway.
    Serve {
        #[command(flatten)]
        deployment: DeploymentArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Seconds to wait for an integration reply.
        #[arg(long, default_value_t = 120)]
        integration_wait: u64,
    },
    /// Show agents involved and stage sequence of one request in a trace file.
    Trace {
        file: PathBuf,
        #[arg(long)]
        request: String,
    },
    /// Chat with a local session line by line.
    Repl {
        #[command(flatten)]
        deployment: DeploymentArgs,
        /// User attribute, `name=value`; repeatable.
        #[arg(long = "attr", value_parser = parse_attr)]
        attrs: Vec<(String, String)>,
    },
}

fn parse_attr(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

/// Failure reported as `{"error": {"code", "message"}}` on stderr.
struct Failure {
    code: ErrorCode,
    message: String,
}

impl Failure {
    fn new(code: ErrorCode, message: impl ToString) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Run { scenario, seed, trace } => run(&scenario, seed, trace.as_deref()),
        Command::Serve {
            deployment,
            port,
            host,
            integration_wait,
        } => serve(&deployment, &host, port, Duration::from_secs(integration_wait)),
        Command::Trace { file, request } => trace(&file, &request),
        Command::Repl { deployment, attrs } => repl_command(&deployment, attrs),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", json!({ "error": { "code": f.code, "message": f.message } }));
            ExitCode::FAILURE
        }
    }
}

fn validate(path: &Path) -> Result<ExitCode, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(ErrorCode::MalformedDocument, e))?;
    let report = match parse_topology(&text) {
        Err(e) => json!({ "ok": false, "errors": [{ "code": e.code(), "message": e.to_string() }] }),
        Ok(cfg) => match validate_topology(&cfg) {
            Ok(topo) => json!({
                "ok": true,
                "warnings": cfg.warnings,
                "root_facilitators": topo.root_facilitators,
                "nodes": topo.walk(),
            }),
            Err(errors) => json!({
                "ok": false,
                "warnings": cfg.warnings,
                "errors": errors.iter().map(|e| json!({ "code": e.code(), "message": e.to_string() })).collect::<Vec<_>>(),
            }),
        },
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    Ok(if report["ok"] == true { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

/// A scenario path, or the name of a bundled scenario.
fn scenario(arg: &str) -> Result<Scenario, Failure> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = shipped(arg) {
            return Ok(s);
        }
    }
    load_scenario(path).map_err(|e| Failure::new(e.code(), e))
}

fn run(arg: &str, seed: u64, trace_path: Option<&Path>) -> Result<ExitCode, Failure> {
    let s = scenario(arg)?;
    let out = run_scenario(&s, seed).map_err(|e| Failure::new(ErrorCode::MalformedScenario, e))?;
    print!("{}", out.transcript_jsonl());
    if let Some(p) = trace_path {
        fs::write(p, to_jsonl(&out.trace)).map_err(|e| Failure::new(ErrorCode::MalformedScenario, e))?;
    }
    let results = assert_expectations(&s.expectations, &out);
    for r in &results {
        eprintln!("{} {}", if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    if out.exhausted {
        eprintln!("FAIL step budget exhausted");
    }
    Ok(if out.exhausted || results.iter().any(|r| !r.passed) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn trace(path: &Path, request: &str) -> Result<ExitCode, Failure> {
    let file = File::open(path).map_err(|e| Failure::new(ErrorCode::UnknownRequest, e))?;
    let records = read_jsonl(BufReader::new(file)).map_err(|e| Failure::new(ErrorCode::UnknownRequest, e))?;
    let agents: Vec<String> = agents_involved(&records, request).into_iter().collect();
    if agents.is_empty() {
        return Err(Failure::new(ErrorCode::UnknownRequest, format!("no records for `{request}`")));
    }
    let stages: Vec<String> = stage_sequence(&records, request).iter().map(u8::to_string).collect();
    println!("agents: {}", agents.join(", "));
    println!("stages: {}", if stages.is_empty() { "none".to_owned() } else { stages.join(" ") });
    Ok(ExitCode::SUCCESS)
}

fn topology(arg: &str) -> Result<TopologyConfig, Failure> {
    let text = if arg == "reference" {
        REFERENCE_TOPOLOGY.to_owned()
    } else {
        fs::read_to_string(arg).map_err(|e| Failure::new(ErrorCode::MalformedDocument, format!("{arg}: {e}")))?
    };
    parse_topology(&text).map_err(|e| Failure::new(e.code(), e))
}

fn kb(path: &Path) -> Result<Vec<KnowledgeItem>, Failure> {
    let file = File::open(path).map_err(|e| Failure::new(ErrorCode::MalformedDocument, format!("{}: {e}", path.display())))?;
    load_kb(BufReader::new(file)).map_err(|e| Failure::new(ErrorCode::ParseError, e))
}

fn deployment(args: &DeploymentArgs) -> Result<Deployment, Failure> {
    let config = topology(&args.config)?;
    let scenario = args.scenario.as_deref().map(scenario).transpose()?;
    let items = match (&args.kb, &scenario) {
        (Some(p), _) => kb(p)?,
        (None, Some(s)) => s.kb.clone(),
        (None, None) => Vec::new(),
    };
    let mut d = Deployment::new(config, items).map_err(|e| {
        let code = match &e {
            henry_core::runtime::DeployError::Topology(errs) => errs.first().map_or(ErrorCode::MalformedDocument, |e| e.code()),
            henry_core::runtime::DeployError::Bus(b) => b.code(),
        };
        Failure::new(code, e)
    })?;
    if let Some(s) = scenario {
        d = d.with_scripts(s.scripts).with_templates(s.templates).with_settings(s.settings);
    }
    Ok(d)
}

fn serve(args: &DeploymentArgs, host: &str, port: u16, wait: Duration) -> Result<ExitCode, Failure> {
    let d = deployment(args)?;
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Failure::new(ErrorCode::BadValue, format!("{host}:{port}: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(ErrorCode::NoUpstream, e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::new(ErrorCode::NoUpstream, format!("{addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| Failure::new(ErrorCode::NoUpstream, e))?;
        eprintln!("listening on http://{local}");
        let gateway = Gateway::new(d, GatewayConfig { integration_wait: wait });
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        henry_gateway::serve(listener, gateway, shutdown)
            .await
            .map_err(|e| Failure::new(ErrorCode::NoUpstream, e))
    })?;
    Ok(ExitCode::SUCCESS)
}

fn repl_command(args: &DeploymentArgs, attrs: Vec<(String, String)>) -> Result<ExitCode, Failure> {
    let d = deployment(args)?;
    let mut attributes = UserAttributes::default();
    for (k, v) in attrs {
        attributes.insert(k, v);
    }
    if attributes.invalid_name().is_some() {
        return Err(Failure::new(ErrorCode::BadAttributes, "attribute names are lowercase identifiers"));
    }
    let mut session = d
        .start(attributes, SessionMemory::new("repl"), TraceStore::new())
        .map_err(|e| Failure::new(ErrorCode::NoUpstream, e))?;
    session.take_events();
    let stdin = io::stdin();
    let mut stdout = io::stdout();
    repl::repl(&mut session, stdin.lock(), &mut stdout).map_err(|e| Failure::new(ErrorCode::NoUpstream, e))?;
    stdout.flush().map_err(|e| Failure::new(ErrorCode::NoUpstream, e))?;
    Ok(ExitCode::SUCCESS)
}

//! Scripted multi-client runs against a fresh local server.
//!
//! ```text
//! # two users
//! clients A B
//! A: invite => ok capture link
//! B: accept $link --name alice => ok
//! A: checkin 55.0 37.0 => ok
//! B: feed => ok contains "alice 55.0 37.0"
//! server: stop
//! B: feed => ok lines 1
//! ```
//!
//! Every label gets its own state file. A step's command is split like a
//! shell line and passed to `watn`. The part after `=>` is `ok` or `exit N`
//! followed by any of `contains S`, `lacks S`, `equals S`, `stderr S`,
//! `lines N` and `capture NAME`, which stores the first line of output for
//! later `$NAME` references. `server: stop` and `server: start` take the
//! server down and bring it back on the same port with its state intact.
//!
//! After the last step every name given to `accept --name`, `name` or
//! `invite --for` is searched for in the server's snapshot.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;
use watn_core::invite::{InviteKey, DEFAULT_INVITE_TTL_MS};
use watn_core::store::DEFAULT_HISTORY_CAP;
use watn_core::{Clock, Store, TestClock};
use watn_server::{Api, ServerHandle};

use crate::cli::run_with;

/// Start of both the server's and the clients' test clocks.
pub const CLOCK_START: u64 = 1_700_000_000_000;
/// Names shorter than this are not searched for; they match ids by chance.
pub const MIN_GREP_LEN: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Check {
    Contains(String),
    Lacks(String),
    Equals(String),
    Stderr(String),
    Lines(usize),
    Capture(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expect {
    pub exit: i32,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Run { label: String, args: Vec<String> },
    StopServer,
    StartServer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub line: usize,
    pub source: String,
    pub action: Action,
    pub expect: Expect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Script {
    pub labels: Vec<String>,
    pub steps: Vec<Step>,
}

fn err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        line,
        msg: msg.into(),
    }
}

fn vars_in(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(i) = rest.find('$') {
        rest = &rest[i + 1..];
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if end > 0 {
            out.push(rest[..end].to_owned());
        }
        rest = &rest[end..];
    }
    out
}

fn parse_expect(text: &str, line: usize) -> Result<Expect, ParseError> {
    let toks = shlex::split(text).ok_or_else(|| err(line, "unbalanced quotes in expectation"))?;
    let mut it = toks.into_iter();
    let exit = match it.next().as_deref() {
        Some("ok") => 0,
        Some("exit") => it
            .next()
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| err(line, "`exit` needs a number"))?,
        Some(other) => {
            return Err(err(
                line,
                format!("expectation must start with ok or exit, not {other:?}"),
            ))
        }
        None => return Err(err(line, "empty expectation")),
    };
    let mut checks = Vec::new();
    while let Some(kw) = it.next() {
        let mut arg = || {
            it.next()
                .ok_or_else(|| err(line, format!("`{kw}` needs an argument")))
        };
        checks.push(match kw.as_str() {
            "contains" => Check::Contains(arg()?),
            "lacks" => Check::Lacks(arg()?),
            "equals" => Check::Equals(arg()?),
            "stderr" => Check::Stderr(arg()?),
            "lines" => Check::Lines(
                arg()?
                    .parse()
                    .map_err(|_| err(line, "`lines` needs a number"))?,
            ),
            "capture" => Check::Capture(arg()?),
            other => return Err(err(line, format!("unknown check {other:?}"))),
        });
    }
    Ok(Expect { exit, checks })
}

/// Parses a script. Labels must be declared with `clients` before use and
/// variables captured before they are referenced.
pub fn parse(text: &str) -> Result<Script, ParseError> {
    let mut labels: Vec<String> = Vec::new();
    let mut steps = Vec::new();
    let mut captured: HashSet<String> = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let src = raw.trim();
        if src.is_empty() || src.starts_with('#') {
            continue;
        }
        if let Some(rest) = src.strip_prefix("clients ") {
            for l in rest.split_whitespace() {
                if l == "server" || labels.iter().any(|x| x == l) {
                    return Err(err(line, format!("label {l:?} declared twice or reserved")));
                }
                labels.push(l.to_owned());
            }
            continue;
        }
        let (head, expect) = match src.split_once("=>") {
            Some((h, e)) => (h.trim(), parse_expect(e, line)?),
            None => (
                src,
                Expect {
                    exit: 0,
                    checks: vec![],
                },
            ),
        };
        let (label, command) = head
            .split_once(':')
            .ok_or_else(|| err(line, "expected `label: command`"))?;
        let (label, command) = (label.trim(), command.trim());
        for v in vars_in(command)
            .into_iter()
            .chain(expect.checks.iter().flat_map(|c| match c {
                Check::Contains(s) | Check::Lacks(s) | Check::Equals(s) | Check::Stderr(s) => {
                    vars_in(s)
                }
                _ => vec![],
            }))
        {
            if !captured.contains(&v) {
                return Err(err(line, format!("${v} is used before it is captured")));
            }
        }
        let action = if label == "server" {
            match command {
                "stop" => Action::StopServer,
                "start" => Action::StartServer,
                other => {
                    return Err(err(
                        line,
                        format!("server: expects stop or start, not {other:?}"),
                    ))
                }
            }
        } else {
            if !labels.iter().any(|l| l == label) {
                return Err(err(line, format!("undefined client label {label:?}")));
            }
            let args =
                shlex::split(command).ok_or_else(|| err(line, "unbalanced quotes in command"))?;
            if args.is_empty() {
                return Err(err(line, "missing command"));
            }
            Action::Run {
                label: label.to_owned(),
                args,
            }
        };
        for c in &expect.checks {
            if let Check::Capture(v) = c {
                captured.insert(v.clone());
            }
        }
        steps.push(Step {
            line,
            source: src.to_owned(),
            action,
            expect,
        });
    }
    Ok(Script { labels, steps })
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub passed: usize,
    pub failed: usize,
    /// Legend names found in the server snapshot, with their counts.
    pub leaked: BTreeMap<String, usize>,
    pub names_checked: usize,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.failed == 0 && self.leaked.is_empty()
    }
}

struct Captured {
    code: i32,
    stdout: String,
    stderr: String,
}

impl fmt::Display for Captured {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exit {}", self.code)?;
        for l in self.stdout.lines() {
            write!(f, "\n    | {l}")?;
        }
        for l in self.stderr.lines() {
            write!(f, "\n    ! {l}")?;
        }
        Ok(())
    }
}

fn substitute(s: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = s.to_owned();
    // longest first so $ab is not clobbered by $a
    let mut keys: Vec<_> = vars.keys().collect();
    keys.sort_by_key(|k| std::cmp::Reverse(k.len()));
    for k in keys {
        out = out.replace(&format!("${k}"), &vars[k]);
    }
    out
}

fn evaluate(expect: &Expect, got: &Captured, vars: &mut BTreeMap<String, String>) -> Vec<String> {
    let mut problems = Vec::new();
    if got.code != expect.exit {
        problems.push(format!("expected exit {}, got {}", expect.exit, got.code));
    }
    for c in &expect.checks {
        match c {
            Check::Contains(s) => {
                let s = substitute(s, vars);
                if !got.stdout.contains(&s) {
                    problems.push(format!("output lacks {s:?}"));
                }
            }
            Check::Lacks(s) => {
                let s = substitute(s, vars);
                if got.stdout.contains(&s) {
                    problems.push(format!("output contains {s:?}"));
                }
            }
            Check::Equals(s) => {
                let s = substitute(s, vars);
                if got.stdout.trim_end() != s {
                    problems.push(format!("output is not {s:?}"));
                }
            }
            Check::Stderr(s) => {
                let s = substitute(s, vars);
                if !got.stderr.contains(&s) {
                    problems.push(format!("stderr lacks {s:?}"));
                }
            }
            Check::Lines(n) => {
                let have = got.stdout.lines().count();
                if have != *n {
                    problems.push(format!("expected {n} lines, got {have}"));
                }
            }
            Check::Capture(v) => match got.stdout.lines().next() {
                Some(first) => {
                    vars.insert(v.clone(), first.trim().to_owned());
                }
                None => problems.push(format!("nothing to capture into ${v}")),
            },
        }
    }
    problems
}

fn names_typed(args: &[String]) -> Vec<String> {
    match args.first().map(String::as_str) {
        Some("accept" | "invite") => args
            .windows(2)
            .filter(|w| w[0] == "--name" || w[0] == "--for")
            .map(|w| w[1].clone())
            .collect(),
        Some("name") if args.len() >= 3 => vec![args[2].clone()],
        _ => vec![],
    }
}

/// A server plus one state file per label.
pub struct Harness {
    api: Arc<Api>,
    server: Option<ServerHandle>,
    addr: SocketAddr,
    client_clock: Arc<dyn Clock>,
    dir: tempfile::TempDir,
}

impl Harness {
    pub fn start(seed: u64) -> io::Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let clock = Arc::new(TestClock::new(CLOCK_START, 1000));
        let store = Arc::new(Store::seeded(DEFAULT_HISTORY_CAP, clock, rng.next_u64()));
        let api = Arc::new(Api::new(
            store,
            InviteKey::from_bytes(key),
            DEFAULT_INVITE_TTL_MS,
        ));
        let server =
            ServerHandle::spawn(Arc::clone(&api), "127.0.0.1:0".parse().expect("literal"))?;
        Ok(Harness {
            addr: server.addr(),
            api,
            server: Some(server),
            client_clock: Arc::new(TestClock::new(CLOCK_START, 1000)),
            dir: tempfile::tempdir()?,
        })
    }

    pub fn api(&self) -> &Arc<Api> {
        &self.api
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state_path(&self, label: &str) -> PathBuf {
        self.dir.path().join(format!("{label}.json"))
    }

    pub fn stop_server(&mut self) {
        if let Some(s) = self.server.take() {
            s.stop();
        }
    }

    pub fn start_server(&mut self) -> io::Result<()> {
        if self.server.is_none() {
            self.server = Some(ServerHandle::spawn(Arc::clone(&self.api), self.addr)?);
        }
        Ok(())
    }

    /// Runs `watn <args>` as `label` and returns (exit code, stdout, stderr).
    pub fn watn(&self, label: &str, args: &[String]) -> (i32, String, String) {
        let path = self.state_path(label);
        let mut argv: Vec<String> = vec![
            "watn".into(),
            "--server".into(),
            self.base_url(),
            "--state".into(),
            path.to_string_lossy().into_owned(),
        ];
        argv.extend(args.iter().cloned());
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(argv, Arc::clone(&self.client_clock), &mut out, &mut err);
        (
            code,
            String::from_utf8_lossy(&out).into_owned(),
            String::from_utf8_lossy(&err).into_owned(),
        )
    }
}

/// Runs every step, printing one PASS or FAIL line each, then the privacy
/// report.
pub fn run(script: &Script, seed: u64, out: &mut dyn Write) -> io::Result<Outcome> {
    let mut h = Harness::start(seed)?;
    let mut vars = BTreeMap::new();
    let mut names = BTreeSet::new();
    let mut outcome = Outcome::default();
    for step in &script.steps {
        let got = match &step.action {
            Action::StopServer => {
                h.stop_server();
                Captured {
                    code: 0,
                    stdout: String::new(),
                    stderr: String::new(),
                }
            }
            Action::StartServer => match h.start_server() {
                Ok(()) => Captured {
                    code: 0,
                    stdout: String::new(),
                    stderr: String::new(),
                },
                Err(e) => Captured {
                    code: 1,
                    stdout: String::new(),
                    stderr: e.to_string(),
                },
            },
            Action::Run { label, args } => {
                let args: Vec<String> = args.iter().map(|a| substitute(a, &vars)).collect();
                names.extend(names_typed(&args));
                let (code, stdout, stderr) = h.watn(label, &args);
                Captured {
                    code,
                    stdout,
                    stderr,
                }
            }
        };
        let problems = evaluate(&step.expect, &got, &mut vars);
        if problems.is_empty() {
            outcome.passed += 1;
            writeln!(out, "PASS {:>3}  {}", step.line, step.source)?;
        } else {
            outcome.failed += 1;
            writeln!(out, "FAIL {:>3}  {}", step.line, step.source)?;
            for p in problems {
                writeln!(out, "    - {p}")?;
            }
            writeln!(out, "    {got}")?;
        }
    }
    h.stop_server();
    let snapshot = String::from_utf8_lossy(&h.api().store().snapshot_bytes()).into_owned();
    for n in names.iter().filter(|n| n.len() >= MIN_GREP_LEN) {
        outcome.names_checked += 1;
        let hits = snapshot.matches(n.as_str()).count();
        if hits > 0 {
            outcome.leaked.insert(n.clone(), hits);
        }
    }
    writeln!(
        out,
        "privacy: {} legend names searched for in the server snapshot, {} found",
        outcome.names_checked,
        outcome.leaked.len()
    )?;
    for (n, hits) in &outcome.leaked {
        writeln!(out, "    LEAK {n:?} x{hits}")?;
    }
    writeln!(
        out,
        "{}: {} passed, {} failed",
        if outcome.success() { "PASS" } else { "FAIL" },
        outcome.passed,
        outcome.failed
    )?;
    Ok(outcome)
}

#[derive(Debug, clap::Parser)]
#[command(
    name = "watn-scenario",
    version,
    about = "Scripted and randomized end-to-end runs"
)]
struct ScenarioCli {
    #[command(subcommand)]
    cmd: ScenarioCmd,
}

#[derive(Debug, clap::Subcommand)]
enum ScenarioCmd {
    /// Run a script against a fresh local server.
    Run {
        script: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Random operations from many clients, checked against a reference model.
    Fuzz {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        ops: usize,
        #[arg(long, default_value_t = 30)]
        participants: usize,
    },
}

/// Entry point of `watn-scenario`. `args` includes the program name.
pub fn main_with<I, A>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match ScenarioCli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return i32::from(e.use_stderr());
        }
    };
    let result = match cli.cmd {
        ScenarioCmd::Run { script, seed } => run_file(&script, seed, out, err),
        ScenarioCmd::Fuzz {
            seed,
            ops,
            participants,
        } => fuzz(seed, ops, participants, out),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "watn-scenario: {e}");
            1
        }
    }
}

fn run_file(
    path: &std::path::Path,
    seed: u64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> io::Result<bool> {
    let text = std::fs::read_to_string(path)?;
    let script = match parse(&text) {
        Ok(s) => s,
        Err(e) => {
            writeln!(err, "{}: {e}", path.display())?;
            return Ok(false);
        }
    };
    Ok(run(&script, seed, out)?.success())
}

fn fuzz(seed: u64, ops: usize, participants: usize, out: &mut dyn Write) -> io::Result<bool> {
    let mut cfg = crate::sim::SimConfig::new(seed, ops);
    cfg.max_participants = participants;
    let marker = cfg.marker.clone();
    let r = crate::sim::run_sim(cfg);
    let leaks = r.leak_count(&marker);
    for m in r.mismatches.iter().take(20) {
        writeln!(out, "MISMATCH {m}")?;
    }
    writeln!(
        out,
        "seed {seed}: {} ops, {} participants, {} requests, {} checks, {} mismatches, marker found {leaks} times",
        r.ops_run,
        r.participants_seen,
        r.requests.len(),
        r.checks,
        r.mismatches.len()
    )?;
    let ok = r.ok() && leaks == 0;
    writeln!(out, "{}", if ok { "PASS" } else { "FAIL" })?;
    Ok(ok)
}

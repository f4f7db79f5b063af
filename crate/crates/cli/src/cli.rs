//! The `watn` command.
//!
//! Exit codes: 0 success, 1 usage or local error, 2 credentials rejected,
//! 3 server unreachable, 4 request rejected, 5 invite accepted on the server
//! but its name not saved.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{ArgGroup, Parser, Subcommand};
use serde_json::json;
use watn_client::{
    Client, ClientError, Direction, FileStateStore, HttpTransport, Legend, ResolvedEntry,
};
use watn_core::{Clock, ParticipantId};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_AUTH: i32 = 2;
pub const EXIT_NETWORK: i32 = 3;
pub const EXIT_REJECTED: i32 = 4;
pub const EXIT_PARTIAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "watn",
    version,
    about = "Share your location by id; keep names on your own device"
)]
struct Cli {
    /// Server base URL.
    #[arg(long, env = "WATN_SERVER", default_value = "http://127.0.0.1:8080")]
    server: String,
    /// Local state file (credential, legend, cached feed).
    #[arg(long, env = "WATN_STATE")]
    state: Option<PathBuf>,
    /// Print compact JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Register with the server unless this state file already has an id.
    Init,
    /// Print our own id. Local only.
    Whoami,
    /// Upload a location, optionally with a short message.
    #[command(allow_negative_numbers = true)]
    Checkin {
        lat: f64,
        lng: f64,
        #[arg(short, long)]
        msg: Option<String>,
    },
    /// Latest location of everyone sharing with us.
    Feed {
        /// Show the cached feed without contacting the server.
        #[arg(long)]
        offline: bool,
    },
    /// Create an invite link for someone who should see our location.
    Invite {
        /// Recipient's name, used only in the message text printed here.
        #[arg(long = "for")]
        hint: Option<String>,
    },
    /// Redeem an invite and name its sender locally.
    Accept {
        token: String,
        #[arg(long)]
        name: String,
    },
    /// Set a local name for an id.
    Name { id: String, name: String },
    /// Forget the local name for an id.
    Unname { id: String },
    /// List local names.
    Legend,
    /// Who can read our location.
    Readers,
    /// Whose location we can read.
    Sharers,
    /// Recent check-ins of ourselves or of someone sharing with us.
    History {
        /// An id, a name from the legend, or "me".
        peer: String,
        #[arg(short = 'n', default_value_t = 10)]
        limit: usize,
    },
    /// Cut a share link in either direction.
    #[command(group(ArgGroup::new("direction").required(true).args(["incoming", "outgoing"])))]
    Revoke {
        peer: String,
        /// Stop reading the peer.
        #[arg(long)]
        incoming: bool,
        /// Stop the peer reading us.
        #[arg(long)]
        outgoing: bool,
    },
    /// Delete our id on the server and erase all local state.
    Wipe,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let code = exit_code(&e);
        let mut message = match &e {
            ClientError::NotBootstrapped => {
                "no identity in this state file yet; run `watn init`".into()
            }
            other => other.to_string(),
        };
        if let ClientError::PartialCommit { sharer, name, .. } = &e {
            message.push_str(&format!("\nto finish, run: watn name {sharer} '{name}'"));
        }
        Failure { code, message }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        // the reader went away (`watn invite | head -1`); not our error
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure {
                code: 0,
                message: String::new(),
            };
        }
        Failure::usage(format!("writing output: {e}"))
    }
}

pub fn exit_code(e: &ClientError) -> i32 {
    match e {
        ClientError::AuthFailed => EXIT_AUTH,
        ClientError::ServerUnreachable(_) | ClientError::NoCache => EXIT_NETWORK,
        ClientError::Rejected { .. } => EXIT_REJECTED,
        ClientError::PartialCommit { .. } => EXIT_PARTIAL,
        ClientError::NotBootstrapped
        | ClientError::Protocol(_)
        | ClientError::NameTooLong(_)
        | ClientError::EmptyName
        | ClientError::Persist(_) => EXIT_USAGE,
    }
}

type CliClient = Client<HttpTransport, FileStateStore>;

/// Runs one `watn` invocation. `args` includes the program name.
pub fn run_with<I, A>(
    args: I,
    clock: Arc<dyn Clock>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, clock, out, err) {
        Ok(()) => 0,
        Err(f) if f.message.is_empty() => f.code,
        Err(f) => {
            let _ = writeln!(err, "watn: {}", f.message);
            f.code
        }
    }
}

fn open(cli: &Cli, clock: Arc<dyn Clock>) -> Result<CliClient, Failure> {
    let path = cli
        .state
        .clone()
        .unwrap_or_else(FileStateStore::default_path);
    let client = Client::with_clock(
        HttpTransport::new(&cli.server),
        FileStateStore::new(path),
        clock,
    )?;
    Ok(client)
}

/// Accepts an id, `me`, or a name that appears exactly once in the legend.
fn peer_id(client: &CliClient, arg: &str) -> Result<ParticipantId, Failure> {
    if arg == "me" {
        return Ok(client.id().ok_or(ClientError::NotBootstrapped)?.clone());
    }
    if let Ok(id) = ParticipantId::parse(arg) {
        return Ok(id);
    }
    let mut hits = client.legend().iter().filter(|(_, n)| n.as_str() == arg);
    match (hits.next(), hits.next()) {
        (Some((id, _)), None) => Ok(id.clone()),
        (Some(_), Some(_)) => Err(Failure::usage(format!("several ids are named {arg:?}"))),
        (None, _) => Err(Failure::usage(format!(
            "{arg:?} is neither an id nor a known name"
        ))),
    }
}

fn strict_id(arg: &str) -> Result<ParticipantId, Failure> {
    ParticipantId::parse(arg).map_err(|e| Failure::usage(format!("{arg:?}: {e}")))
}

fn print_json(out: &mut dyn Write, v: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string(v).map_err(|e| Failure::usage(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn feed_line(e: &ResolvedEntry) -> String {
    let mut line = format!("{} {:?} {:?} {}", e.display, e.point.lat, e.point.lng, e.ts);
    if let Some(m) = &e.msg {
        line.push(' ');
        line.push_str(m);
    }
    line
}

fn id_list(
    out: &mut dyn Write,
    json: bool,
    ids: &[ParticipantId],
    legend: &Legend,
) -> Result<(), Failure> {
    if json {
        let rows: Vec<_> = ids
            .iter()
            .map(|id| json!({ "id": id, "name": legend.get(id) }))
            .collect();
        return print_json(out, &rows);
    }
    for id in ids {
        match legend.get(id) {
            Some(n) => writeln!(out, "{id} {n}")?,
            None => writeln!(out, "{id}")?,
        }
    }
    Ok(())
}

fn execute(
    cli: Cli,
    clock: Arc<dyn Clock>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), Failure> {
    let mut client = open(&cli, clock)?;
    let json = cli.json;
    match &cli.cmd {
        Cmd::Init => {
            let cred = client.bootstrap()?;
            if json {
                print_json(out, &json!({ "id": cred.id }))?;
            } else {
                writeln!(out, "{}", cred.id)?;
            }
        }
        Cmd::Whoami => {
            let id = client.id().ok_or(ClientError::NotBootstrapped)?;
            if json {
                print_json(out, &json!({ "id": id }))?;
            } else {
                writeln!(out, "{id}")?;
            }
        }
        Cmd::Checkin { lat, lng, msg } => {
            client.bootstrap()?;
            let ts = client.checkin_here(*lat, *lng, msg.as_deref())?;
            if json {
                print_json(out, &json!({ "ts": ts }))?;
            } else {
                writeln!(out, "checked in at {ts}")?;
            }
        }
        Cmd::Feed { offline } => {
            let view = if *offline {
                client.cached()?
            } else {
                client.bootstrap()?;
                client.refresh()?
            };
            if view.offline {
                writeln!(err, "offline: cached feed is {} ms old", view.staleness_ms)?;
            }
            if json {
                print_json(out, &view.entries)?;
            } else {
                for e in &view.entries {
                    writeln!(out, "{}", feed_line(e))?;
                }
            }
        }
        Cmd::Invite { hint } => {
            client.bootstrap()?;
            let inv = client.share()?;
            if json {
                print_json(out, &json!({ "token": inv.token, "link": inv.link }))?;
            } else {
                writeln!(out, "{}", inv.link)?;
                writeln!(out)?;
                writeln!(out, "{}", inv.message(hint.as_deref()))?;
            }
        }
        Cmd::Accept { token, name } => {
            client.bootstrap()?;
            let sharer = client.accept_invite(token, name)?;
            if json {
                print_json(out, &json!({ "sharer": sharer, "name": name }))?;
            } else {
                writeln!(out, "{sharer} {name}")?;
            }
        }
        Cmd::Name { id, name } => {
            let id = strict_id(id)?;
            client.set_name(&id, name)?;
            if json {
                print_json(out, &json!({ "id": id, "name": name }))?;
            }
        }
        Cmd::Unname { id } => {
            let id = peer_id(&client, id)?;
            let removed = client.remove_name(&id)?;
            if json {
                print_json(out, &json!({ "removed": removed }))?;
            } else if !removed {
                writeln!(err, "{id} had no name")?;
            }
        }
        Cmd::Legend => {
            if json {
                print_json(out, client.legend())?;
            } else {
                for (id, name) in client.legend() {
                    writeln!(out, "{id} {name}")?;
                }
            }
        }
        Cmd::Readers => {
            client.bootstrap()?;
            let ids = client.readers()?;
            id_list(out, json, &ids, client.legend())?;
        }
        Cmd::Sharers => {
            client.bootstrap()?;
            let ids = client.sharers()?;
            id_list(out, json, &ids, client.legend())?;
        }
        Cmd::History { peer, limit } => {
            client.bootstrap()?;
            let target = peer_id(&client, peer)?;
            let items = client.history(&target, *limit)?;
            if json {
                print_json(out, &items)?;
            } else {
                for c in &items {
                    let mut line = format!("{:?} {:?} {}", c.point.lat, c.point.lng, c.ts);
                    if let Some(m) = &c.msg {
                        line.push(' ');
                        line.push_str(m);
                    }
                    writeln!(out, "{line}")?;
                }
            }
        }
        Cmd::Revoke { peer, incoming, .. } => {
            client.bootstrap()?;
            let target = peer_id(&client, peer)?;
            let dir = if *incoming {
                Direction::Incoming
            } else {
                Direction::Outgoing
            };
            client.revoke_peer(&target, dir)?;
            if json {
                print_json(out, &json!({ "ok": true }))?;
            }
        }
        Cmd::Wipe => {
            if client.id().is_some() {
                client.wipe()?;
            }
            if json {
                print_json(out, &json!({ "ok": true }))?;
            }
        }
    }
    Ok(())
}

/// Clock for the `watn` binary: `WATN_TEST_CLOCK` if set, else the system
/// clock.
pub fn clock_from_env() -> Result<Arc<dyn Clock>, String> {
    match std::env::var("WATN_TEST_CLOCK") {
        Ok(spec) => watn_core::TestClock::parse(&spec)
            .map(|c| Arc::new(c) as Arc<dyn Clock>)
            .ok_or_else(|| format!("WATN_TEST_CLOCK: cannot parse {spec:?}")),
        Err(_) => Ok(Arc::new(watn_core::SystemClock)),
    }
}

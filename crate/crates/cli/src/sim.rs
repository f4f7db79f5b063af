//! Randomized multi-client runs against an in-process server, checked
//! operation by operation against [`Oracle`].
//!
//! Every legend name the simulated users type contains a marker string, so
//! after a run the captured requests and the server snapshot can be searched
//! for it. Attached messages come from a fixed vocabulary that never contains
//! the marker.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use watn_client::{resolve, Client, ClientError, Direction, MemoryStateStore, RecordingTransport};
use watn_core::invite::InviteKey;
use watn_core::wire::WireRequest;
use watn_core::{CheckIn, GeoPoint, ParticipantId, Store, TestClock};
use watn_server::{Api, LocalTransport};

use crate::oracle::{Event, Oracle};

const MSG_VOCAB: &[&str] = &[
    "on my way",
    "parked",
    "coffee?",
    "running late",
    "at the station",
    "",
];

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub ops: usize,
    /// Upper bound on participant ids created over the whole run, counting
    /// the fresh id each wipe leads to.
    pub max_participants: usize,
    /// Substring embedded in every legend name.
    pub marker: String,
    pub history_cap: usize,
}

impl SimConfig {
    pub fn new(seed: u64, ops: usize) -> Self {
        SimConfig {
            seed,
            ops,
            max_participants: 30,
            marker: format!("SENTINEL{seed:04}X"),
            history_cap: watn_core::store::DEFAULT_HISTORY_CAP,
        }
    }
}

#[derive(Debug, Default)]
pub struct SimReport {
    pub ops_run: usize,
    /// Individual comparisons made against the oracle.
    pub checks: usize,
    pub mismatches: Vec<String>,
    /// Every request any simulated client sent, in order.
    pub requests: Vec<WireRequest>,
    /// Server snapshot after the last operation.
    pub snapshot: Vec<u8>,
    pub names_typed: usize,
    pub participants_seen: usize,
}

impl SimReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }

    /// Occurrences of `needle` in the snapshot and in any request.
    pub fn leak_count(&self, needle: &str) -> usize {
        let snap = String::from_utf8_lossy(&self.snapshot)
            .matches(needle)
            .count();
        let reqs: usize = self
            .requests
            .iter()
            .map(|r| r.transcript().matches(needle).count())
            .sum();
        snap + reqs
    }
}

type SimClient = Client<RecordingTransport<LocalTransport>, MemoryStateStore>;

struct Outstanding {
    token: String,
    sharer: ParticipantId,
    used: bool,
}

struct Sim {
    cfg: SimConfig,
    rng: ChaCha8Rng,
    transport: RecordingTransport<LocalTransport>,
    clock: Arc<TestClock>,
    store: Arc<Store>,
    clients: Vec<SimClient>,
    invites: Vec<Outstanding>,
    oracle: Oracle,
    report: SimReport,
    name_counter: usize,
}

fn id_of(c: &SimClient) -> ParticipantId {
    c.id().expect("simulated clients are bootstrapped").clone()
}

impl Sim {
    fn new(cfg: SimConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let clock = Arc::new(TestClock::new(1_700_000_000_000, 250));
        let store = Arc::new(Store::seeded(
            cfg.history_cap,
            clock.clone(),
            rng.next_u64(),
        ));
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let api = Api::new(
            Arc::clone(&store),
            InviteKey::from_bytes(key),
            watn_core::invite::DEFAULT_INVITE_TTL_MS,
        );
        let transport = RecordingTransport::new(LocalTransport::new(Arc::new(api)));
        let oracle = Oracle::new(cfg.history_cap);
        Sim {
            cfg,
            rng,
            transport,
            clock,
            store,
            clients: Vec::new(),
            invites: Vec::new(),
            oracle,
            report: SimReport::default(),
            name_counter: 0,
        }
    }

    fn mismatch(&mut self, what: String) {
        self.report.mismatches.push(what);
    }

    fn check<T: PartialEq + std::fmt::Debug>(&mut self, what: &str, got: T, want: T) {
        self.report.checks += 1;
        if got != want {
            self.mismatch(format!("{what}: got {got:?}, want {want:?}"));
        }
    }

    fn fresh_name(&mut self) -> String {
        self.name_counter += 1;
        self.report.names_typed += 1;
        format!("{} #{}", self.cfg.marker, self.name_counter)
    }

    fn join(&mut self) {
        let mut c = Client::with_clock(
            self.transport.clone(),
            MemoryStateStore::new(),
            self.clock.clone(),
        )
        .expect("empty memory store opens");
        match c.bootstrap() {
            Ok(cred) => {
                self.oracle.record(Event::Register(cred.id));
                self.report.participants_seen += 1;
                self.clients.push(c);
            }
            Err(e) => self.mismatch(format!("bootstrap failed: {e}")),
        }
    }

    fn pick(&mut self) -> usize {
        self.rng.random_range(0..self.clients.len())
    }

    /// Any id the simulation has seen, dead or alive.
    fn any_known_id(&mut self) -> Option<ParticipantId> {
        let ids: Vec<ParticipantId> = self
            .oracle
            .log()
            .iter()
            .filter_map(|e| match e {
                Event::Register(id) => Some(id.clone()),
                _ => None,
            })
            .collect();
        ids.choose(&mut self.rng).cloned()
    }

    fn step(&mut self) {
        if self.clients.len() < 2 && self.report.participants_seen < self.cfg.max_participants {
            self.join();
            return;
        }
        if self.clients.is_empty() {
            return;
        }
        let roll = self.rng.random_range(0..100);
        let budget = self.report.participants_seen < self.cfg.max_participants;
        match roll {
            0..=4 if budget => self.join(),
            0..=29 => self.checkin(),
            30..=39 => self.invite(),
            40..=54 => self.accept(),
            55..=62 => self.revoke(),
            63..=69 => self.rename(),
            70..=71 => self.unname(),
            72..=81 => self.refresh(),
            82..=86 => self.lists(),
            87..=93 => self.history(),
            94..=95 => self.offline_view(),
            _ if budget => self.wipe(),
            _ => self.refresh(),
        }
    }

    fn checkin(&mut self) {
        let i = self.pick();
        let lat = self.rng.random_range(-90.0..=90.0);
        let lng = self.rng.random_range(-180.0..=180.0);
        let msg = if self.rng.random_bool(0.3) {
            MSG_VOCAB.choose(&mut self.rng).map(|s| s.to_string())
        } else {
            None
        };
        let id = id_of(&self.clients[i]);
        match self.clients[i].checkin_here(lat, lng, msg.as_deref()) {
            Ok(ts) => self.oracle.record(Event::CheckIn(
                id,
                CheckIn {
                    point: GeoPoint { lat, lng },
                    ts,
                    msg,
                },
            )),
            Err(e) => self.mismatch(format!("checkin by {id} failed: {e}")),
        }
    }

    fn invite(&mut self) {
        let i = self.pick();
        let sharer = id_of(&self.clients[i]);
        match self.clients[i].share() {
            Ok(inv) => self.invites.push(Outstanding {
                token: inv.token,
                sharer,
                used: false,
            }),
            Err(e) => self.mismatch(format!("invite by {sharer} failed: {e}")),
        }
    }

    fn accept(&mut self) {
        if self.invites.is_empty() {
            self.invite();
            return;
        }
        let k = self.rng.random_range(0..self.invites.len());
        let i = self.pick();
        let me = id_of(&self.clients[i]);
        let name = self.fresh_name();
        let use_link = self.rng.random_bool(0.5);
        let (token, sharer, used) = {
            let inv = &self.invites[k];
            (inv.token.clone(), inv.sharer.clone(), inv.used)
        };
        let expected: Result<(), &str> = if used {
            Err("used_token")
        } else if !self.oracle.alive(&sharer) {
            Err("unknown_participant")
        } else if sharer == me {
            Err("self_share")
        } else {
            Ok(())
        };
        let arg = if use_link {
            watn_core::invite::invite_link(&token)
        } else {
            token
        };
        let got = self.clients[i].accept_invite(&arg, &name);
        self.report.checks += 1;
        match (got, expected) {
            (Ok(s), Ok(())) if s == sharer => {
                self.invites[k].used = true;
                self.oracle.record(Event::Edge(sharer.clone(), me));
                let named = self.clients[i].legend().get(&sharer).cloned();
                self.check("legend after accept", named, Some(name));
            }
            (Err(ClientError::Rejected { code, .. }), Err(want)) if code == want => {}
            (got, want) => self.mismatch(format!(
                "accept of {sharer}'s invite by {me}: got {got:?}, want {want:?}"
            )),
        }
    }

    fn revoke(&mut self) {
        let i = self.pick();
        let Some(peer) = self.any_known_id() else {
            return;
        };
        let dir = if self.rng.random_bool(0.5) {
            Direction::Incoming
        } else {
            Direction::Outgoing
        };
        let me = id_of(&self.clients[i]);
        match self.clients[i].revoke_peer(&peer, dir) {
            Ok(()) => {
                let (s, r) = match dir {
                    Direction::Incoming => (peer, me),
                    Direction::Outgoing => (me, peer),
                };
                self.oracle.record(Event::Revoke(s, r));
            }
            Err(e) => self.mismatch(format!("revoke by {me} failed: {e}")),
        }
    }

    fn rename(&mut self) {
        let i = self.pick();
        let Some(peer) = self.any_known_id() else {
            return;
        };
        let name = self.fresh_name();
        let before = self.transport.count();
        if let Err(e) = self.clients[i].set_name(&peer, &name) {
            self.mismatch(format!("set_name failed: {e}"));
        }
        let after = self.transport.count();
        self.check("requests issued by set_name", after - before, 0);
    }

    fn unname(&mut self) {
        let i = self.pick();
        let legend_ids: Vec<ParticipantId> = self.clients[i].legend().keys().cloned().collect();
        if let Some(id) = legend_ids.choose(&mut self.rng) {
            let before = self.transport.count();
            let removed = self.clients[i].remove_name(id).unwrap_or(false);
            self.check("remove_name removed", removed, true);
            let after = self.transport.count();
            self.check("requests issued by remove_name", after - before, 0);
        }
    }

    fn refresh(&mut self) {
        let i = self.pick();
        self.compare_feed(i);
    }

    fn compare_feed(&mut self, i: usize) {
        let me = id_of(&self.clients[i]);
        let want_raw = self.oracle.feed(&me);
        let want = resolve(&want_raw, self.clients[i].legend());
        match self.clients[i].refresh() {
            Ok(view) => {
                self.check(&format!("feed of {me}"), view.entries, want);
                let cached = self.clients[i].state().cache.clone();
                self.check(&format!("cache of {me}"), cached, Some(want_raw));
            }
            Err(e) => self.mismatch(format!("refresh by {me} failed: {e}")),
        }
    }

    fn lists(&mut self) {
        let i = self.pick();
        self.compare_lists(i);
    }

    fn compare_lists(&mut self, i: usize) {
        let me = id_of(&self.clients[i]);
        let readers = self.clients[i].readers().map_err(|e| e.to_string());
        let want = Ok(self.oracle.readers(&me));
        self.check(&format!("readers of {me}"), readers, want);
        let sharers = self.clients[i].sharers().map_err(|e| e.to_string());
        let want = Ok(self.oracle.sharers(&me));
        self.check(&format!("sharers to {me}"), sharers, want);
    }

    fn history(&mut self) {
        let i = self.pick();
        let me = id_of(&self.clients[i]);
        let target = if self.rng.random_bool(0.3) {
            me.clone()
        } else {
            match self.any_known_id() {
                Some(t) => t,
                None => return,
            }
        };
        let limit = self.rng.random_range(0..12);
        self.compare_history(i, &target, limit);
    }

    fn compare_history(&mut self, i: usize, target: &ParticipantId, limit: usize) {
        let me = id_of(&self.clients[i]);
        let got = match self.clients[i].history(target, limit) {
            Ok(h) => Some(h),
            Err(ClientError::Rejected { code, .. }) if code == "not_shared" => None,
            Err(e) => {
                self.mismatch(format!("history by {me} failed: {e}"));
                return;
            }
        };
        let want = self.oracle.history_for(&me, target, limit);
        self.check(&format!("history of {target} for {me}"), got, want);
    }

    fn offline_view(&mut self) {
        let i = self.pick();
        let c = &self.clients[i];
        let Some(raw) = c.state().cache.clone() else {
            let no_cache = matches!(c.cached(), Err(ClientError::NoCache));
            self.check("cached() without cache", no_cache, true);
            return;
        };
        let want = resolve(&raw, c.legend());
        let got = c.cached().map(|v| v.entries).map_err(|e| e.to_string());
        self.check("cached view", got, Ok(want));
    }

    fn wipe(&mut self) {
        let i = self.pick();
        let old = id_of(&self.clients[i]);
        if let Err(e) = self.clients[i].wipe() {
            self.mismatch(format!("wipe of {old} failed: {e}"));
            return;
        }
        self.oracle.record(Event::Delete(old.clone()));
        match self.clients[i].bootstrap() {
            Ok(cred) => {
                self.report.checks += 1;
                if cred.id == old
                    || self
                        .oracle
                        .log()
                        .contains(&Event::Register(cred.id.clone()))
                {
                    self.mismatch(format!("id {} reissued", cred.id));
                }
                self.oracle.record(Event::Register(cred.id));
                self.report.participants_seen += 1;
            }
            Err(e) => self.mismatch(format!("re-bootstrap failed: {e}")),
        }
    }

    fn final_sweep(&mut self) {
        for i in 0..self.clients.len() {
            self.compare_feed(i);
            self.compare_lists(i);
            let me = id_of(&self.clients[i]);
            self.compare_history(i, &me, usize::MAX);
            let peers = self.oracle.sharers(&me);
            for p in peers {
                self.compare_history(i, &p, 5);
            }
        }
        if let Err(e) = self.store.check_invariants() {
            self.mismatch(format!("store invariant: {e}"));
        }
    }
}

/// Runs one seeded simulation to completion.
pub fn run_sim(cfg: SimConfig) -> SimReport {
    let ops = cfg.ops;
    let mut sim = Sim::new(cfg);
    for _ in 0..ops {
        sim.step();
        sim.report.ops_run += 1;
    }
    sim.final_sweep();
    sim.report.requests = sim.transport.take();
    sim.report.snapshot = sim.store.snapshot_bytes();
    sim.report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_is_clean_and_deterministic() {
        let a = run_sim(SimConfig::new(3, 300));
        assert!(a.ok(), "{:?}", a.mismatches);
        assert!(a.checks > 100);
        assert_eq!(a.leak_count(&SimConfig::new(3, 0).marker), 0);
        let b = run_sim(SimConfig::new(3, 300));
        assert_eq!(a.snapshot, b.snapshot);
        assert_eq!(a.requests, b.requests);
    }

    #[test]
    fn participant_budget_counts_wiped_ids() {
        let mut cfg = SimConfig::new(5, 2000);
        cfg.max_participants = 6;
        let r = run_sim(cfg);
        assert!(r.ok(), "{:?}", r.mismatches);
        assert_eq!(r.participants_seen, 6);
        let registers = r.requests.iter().filter(|q| q.path == "/register").count();
        assert_eq!(registers, 6);
    }

    #[test]
    fn leak_count_detects_planted_marker() {
        let mut r = run_sim(SimConfig::new(4, 50));
        assert_eq!(r.leak_count("PLANTED"), 0);
        r.requests
            .push(WireRequest::get("/feed").param("x", "PLANTED"));
        assert_eq!(r.leak_count("PLANTED"), 1);
    }
}

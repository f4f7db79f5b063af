//! The server-side half of the identity/location split.
//!
//! Holds exactly two datasets keyed by pseudonymous ids: per-participant
//! location history and the directed share graph. Everything else
//! (credential hashes, tombstones) exists to authenticate and to guarantee
//! that ids and invite nonces are never reused. No table has a slot for a
//! name, email or device identifier.
//!
//! All operations take one store-wide lock, so each is atomic and the store
//! is linearizable.

mod snapshot;

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use snapshot::{SnapshotError, SNAPSHOT_MAGIC};

use crate::checkin::{validate_msg, CheckIn, FeedEntry};
use crate::clock::Clock;
use crate::credential::{Credential, SecretHash};
use crate::geo::{validate_geo, Axis, GeoPoint};
use crate::id::ParticipantId;
use crate::invite::Nonce;

pub const DEFAULT_HISTORY_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("authentication failed")]
    AuthFailed,
    #[error("{0} out of range")]
    OutOfRange(Axis),
    #[error("message too long ({0} bytes)")]
    MsgTooLong(usize),
    #[error("a participant cannot share with itself")]
    SelfShare,
    #[error("unknown or deleted participant")]
    UnknownParticipant,
    #[error("caller is neither sharer nor reader of this edge")]
    NotParty,
    #[error("target does not share its location with the caller")]
    NotShared,
    #[error("invite already redeemed")]
    InviteUsed,
}

#[derive(Debug, Default)]
pub(crate) struct Tables {
    /// Registered, live ids. Every key also has a credential.
    pub(crate) locations: HashMap<ParticipantId, VecDeque<CheckIn>>,
    /// Forward share map: sharer -> readers.
    pub(crate) readers: HashMap<ParticipantId, BTreeSet<ParticipantId>>,
    /// Inverted share map: reader -> sharers. Exact transpose of `readers`.
    pub(crate) sharers: HashMap<ParticipantId, BTreeSet<ParticipantId>>,
    pub(crate) retired: HashSet<ParticipantId>,
    pub(crate) redeemed: HashSet<Nonce>,
    pub(crate) credentials: HashMap<ParticipantId, SecretHash>,
}

impl Tables {
    fn authenticate(&self, cred: &Credential) -> Result<(), StoreError> {
        match self.credentials.get(&cred.id) {
            Some(h) if h.matches(&cred.secret) => Ok(()),
            _ => Err(StoreError::AuthFailed),
        }
    }

    fn is_alive(&self, id: &ParticipantId) -> bool {
        self.locations.contains_key(id)
    }

    fn insert_edge(&mut self, sharer: &ParticipantId, reader: &ParticipantId) {
        self.readers
            .entry(sharer.clone())
            .or_default()
            .insert(reader.clone());
        self.sharers
            .entry(reader.clone())
            .or_default()
            .insert(sharer.clone());
    }

    fn remove_edge(&mut self, sharer: &ParticipantId, reader: &ParticipantId) {
        remove_from(&mut self.readers, sharer, reader);
        remove_from(&mut self.sharers, reader, sharer);
    }

    fn has_edge(&self, sharer: &ParticipantId, reader: &ParticipantId) -> bool {
        self.readers
            .get(sharer)
            .is_some_and(|rs| rs.contains(reader))
    }
}

fn remove_from(
    map: &mut HashMap<ParticipantId, BTreeSet<ParticipantId>>,
    key: &ParticipantId,
    member: &ParticipantId,
) {
    if let Some(set) = map.get_mut(key) {
        set.remove(member);
        if set.is_empty() {
            map.remove(key);
        }
    }
}

struct Inner {
    tables: Tables,
    rng: ChaCha20Rng,
}

/// In-memory location store with checksummed snapshot persistence.
pub struct Store {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
    history_cap: usize,
}

impl Store {
    /// A store seeded from the operating system's randomness.
    pub fn new(history_cap: usize, clock: Arc<dyn Clock>) -> Self {
        Self::with_rng(history_cap, clock, ChaCha20Rng::from_os_rng())
    }

    /// A store whose ids, secrets and nonces come from a fixed seed. For tests
    /// and reproducible scenario runs only.
    pub fn seeded(history_cap: usize, clock: Arc<dyn Clock>, seed: u64) -> Self {
        Self::with_rng(history_cap, clock, ChaCha20Rng::seed_from_u64(seed))
    }

    fn with_rng(history_cap: usize, clock: Arc<dyn Clock>, rng: ChaCha20Rng) -> Self {
        Self::from_tables(Tables::default(), history_cap, clock, rng)
    }

    fn from_tables(
        tables: Tables,
        history_cap: usize,
        clock: Arc<dyn Clock>,
        rng: ChaCha20Rng,
    ) -> Self {
        assert!(history_cap > 0, "history cap must be at least 1");
        Store {
            inner: Mutex::new(Inner { tables, rng }),
            clock,
            history_cap,
        }
    }

    pub fn history_cap(&self) -> usize {
        self.history_cap
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Mints a fresh participant: an id that is neither live nor retired, and
    /// its secret. The secret is returned here and nowhere else.
    pub fn register(&self) -> Credential {
        let mut inner = self.inner.lock();
        let Inner { tables, rng } = &mut *inner;
        let id = loop {
            let id = ParticipantId::generate(rng);
            if !tables.retired.contains(&id) && !tables.credentials.contains_key(&id) {
                break id;
            }
        };
        let cred = Credential::generate(id, rng);
        tables
            .credentials
            .insert(cred.id.clone(), cred.secret_hash());
        tables.locations.insert(cred.id.clone(), VecDeque::new());
        cred
    }

    pub fn checkin(
        &self,
        cred: &Credential,
        point: GeoPoint,
        msg: Option<String>,
    ) -> Result<CheckIn, StoreError> {
        let mut inner = self.inner.lock();
        let tables = &mut inner.tables;
        tables.authenticate(cred)?;
        let point = validate_geo(point.lat, point.lng).map_err(|e| StoreError::OutOfRange(e.0))?;
        if let Some(m) = &msg {
            validate_msg(m).map_err(|e| StoreError::MsgTooLong(e.0))?;
        }
        let history = tables
            .locations
            .get_mut(&cred.id)
            .expect("authenticated ids have a history");
        // server time can step backwards; history order must not
        let floor = history.back().map_or(0, |c| c.ts);
        let ts = self.clock.now_ms().max(floor);
        let checkin = CheckIn { point, ts, msg };
        history.push_back(checkin.clone());
        while history.len() > self.history_cap {
            history.pop_front();
        }
        Ok(checkin)
    }

    /// Latest check-in of everyone sharing to the caller, sorted by sharer id.
    ///
    /// One lookup in the inverted share map plus one history lookup per
    /// sharer; the rest of the population is never touched.
    pub fn feed(&self, cred: &Credential) -> Result<Vec<FeedEntry>, StoreError> {
        let inner = self.inner.lock();
        let tables = &inner.tables;
        tables.authenticate(cred)?;
        let Some(sharers) = tables.sharers.get(&cred.id) else {
            return Ok(Vec::new());
        };
        Ok(sharers
            .iter()
            .filter_map(|s| {
                let latest = tables.locations.get(s)?.back()?;
                Some(FeedEntry::new(s.clone(), latest))
            })
            .collect())
    }

    /// Records "`sharer` shares its location to `reader`". Idempotent.
    pub fn add_edge(
        &self,
        sharer: &ParticipantId,
        reader: &ParticipantId,
    ) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        let tables = &mut inner.tables;
        if sharer == reader {
            return Err(StoreError::SelfShare);
        }
        if !tables.is_alive(sharer) || !tables.is_alive(reader) {
            return Err(StoreError::UnknownParticipant);
        }
        tables.insert_edge(sharer, reader);
        Ok(())
    }

    /// Removes an edge. Either endpoint may do this; removing an absent edge
    /// succeeds.
    pub fn revoke(
        &self,
        cred: &Credential,
        sharer: &ParticipantId,
        reader: &ParticipantId,
    ) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        let tables = &mut inner.tables;
        tables.authenticate(cred)?;
        if cred.id != *sharer && cred.id != *reader {
            return Err(StoreError::NotParty);
        }
        tables.remove_edge(sharer, reader);
        Ok(())
    }

    /// Who can read the caller's location.
    pub fn readers_of(&self, cred: &Credential) -> Result<Vec<ParticipantId>, StoreError> {
        let inner = self.inner.lock();
        inner.tables.authenticate(cred)?;
        Ok(inner
            .tables
            .readers
            .get(&cred.id)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default())
    }

    /// Whose location the caller can read.
    pub fn sharers_to(&self, cred: &Credential) -> Result<Vec<ParticipantId>, StoreError> {
        let inner = self.inner.lock();
        inner.tables.authenticate(cred)?;
        Ok(inner
            .tables
            .sharers
            .get(&cred.id)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default())
    }

    /// The last `limit` check-ins of `target`, oldest first. Allowed for the
    /// target itself and for anyone the target currently shares to.
    pub fn history_of(
        &self,
        cred: &Credential,
        target: &ParticipantId,
        limit: usize,
    ) -> Result<Vec<CheckIn>, StoreError> {
        let inner = self.inner.lock();
        let tables = &inner.tables;
        tables.authenticate(cred)?;
        if *target != cred.id && !tables.has_edge(target, &cred.id) {
            return Err(StoreError::NotShared);
        }
        let history = tables.locations.get(target).ok_or(StoreError::NotShared)?;
        let skip = history.len().saturating_sub(limit);
        Ok(history.iter().skip(skip).cloned().collect())
    }

    /// Erases the caller: history, messages, credential and every edge
    /// touching it. The id is retired for good.
    pub fn delete_participant(&self, cred: &Credential) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        let tables = &mut inner.tables;
        tables.authenticate(cred)?;
        let id = &cred.id;
        if let Some(readers) = tables.readers.remove(id) {
            for r in &readers {
                remove_from(&mut tables.sharers, r, id);
            }
        }
        if let Some(sharers) = tables.sharers.remove(id) {
            for s in &sharers {
                remove_from(&mut tables.readers, s, id);
            }
        }
        tables.locations.remove(id);
        tables.credentials.remove(id);
        tables.retired.insert(id.clone());
        Ok(())
    }

    /// Authenticates the caller and draws a fresh invite nonce.
    pub fn issue_nonce(&self, cred: &Credential) -> Result<Nonce, StoreError> {
        let mut inner = self.inner.lock();
        let Inner { tables, rng } = &mut *inner;
        tables.authenticate(cred)?;
        loop {
            let n = Nonce::generate(rng);
            if !tables.redeemed.contains(&n) {
                return Ok(n);
            }
        }
    }

    /// Redeems an already MAC-verified invite: adds `sharer -> caller` and
    /// retires the nonce, in one step. A rejected redemption consumes nothing.
    pub fn redeem_invite(
        &self,
        cred: &Credential,
        sharer: &ParticipantId,
        nonce: Nonce,
    ) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        let tables = &mut inner.tables;
        tables.authenticate(cred)?;
        if tables.redeemed.contains(&nonce) {
            return Err(StoreError::InviteUsed);
        }
        if !tables.is_alive(sharer) {
            return Err(StoreError::UnknownParticipant);
        }
        if *sharer == cred.id {
            return Err(StoreError::SelfShare);
        }
        tables.insert_edge(sharer, &cred.id);
        tables.redeemed.insert(nonce);
        Ok(())
    }

    pub fn participant_count(&self) -> usize {
        self.inner.lock().tables.locations.len()
    }

    pub fn is_retired(&self, id: &ParticipantId) -> bool {
        self.inner.lock().tables.retired.contains(id)
    }

    pub fn retired_count(&self) -> usize {
        self.inner.lock().tables.retired.len()
    }

    /// Checks that the two share maps are exact transposes and that no edge
    /// touches a dead id. Returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let inner = self.inner.lock();
        let t = &inner.tables;
        let mut forward = 0usize;
        for (s, rs) in &t.readers {
            if rs.is_empty() {
                return Err(format!("empty reader set kept for {s}"));
            }
            for r in rs {
                forward += 1;
                if s == r {
                    return Err(format!("self edge on {s}"));
                }
                if !t.is_alive(s) || !t.is_alive(r) {
                    return Err(format!("edge {s}->{r} touches a dead id"));
                }
                if !t.sharers.get(r).is_some_and(|ss| ss.contains(s)) {
                    return Err(format!("edge {s}->{r} missing from inverted map"));
                }
            }
        }
        let inverted: usize = t.sharers.values().map(BTreeSet::len).sum();
        if inverted != forward {
            return Err(format!("{forward} forward edges vs {inverted} inverted"));
        }
        for id in t.locations.keys() {
            if !t.credentials.contains_key(id) {
                return Err(format!("{id} has history but no credential"));
            }
            if t.retired.contains(id) {
                return Err(format!("{id} is both live and retired"));
            }
        }
        if t.credentials.len() != t.locations.len() {
            return Err("credential table out of step with locations".into());
        }
        Ok(())
    }
}

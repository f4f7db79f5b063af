//! Snapshot file layout:
//!
//! ```text
//! WATN1\n
//! <sha256 of the JSON body, lowercase hex>\n
//! <canonical JSON: {"locations":..,"edges":..,"tombstones":..,"credentials":..}>
//! ```
//!
//! Maps and sets are written in sorted order, so equal stores produce equal
//! bytes. Files are replaced by write-to-temp, fsync, rename.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Store, Tables};
use crate::checkin::CheckIn;
use crate::clock::Clock;
use crate::credential::SecretHash;
use crate::id::ParticipantId;
use crate::invite::Nonce;

pub const SNAPSHOT_MAGIC: &str = "WATN1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    locations: BTreeMap<ParticipantId, Vec<CheckIn>>,
    edges: BTreeMap<ParticipantId, BTreeSet<ParticipantId>>,
    tombstones: TombstoneDoc,
    credentials: BTreeMap<ParticipantId, SecretHash>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TombstoneDoc {
    ids: BTreeSet<ParticipantId>,
    nonces: BTreeSet<Nonce>,
}

impl SnapshotDoc {
    fn capture(t: &Tables) -> Self {
        SnapshotDoc {
            locations: t
                .locations
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().cloned().collect()))
                .collect(),
            edges: t
                .readers
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            tombstones: TombstoneDoc {
                ids: t.retired.iter().cloned().collect(),
                nonces: t.redeemed.iter().copied().collect(),
            },
            credentials: t.credentials.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        }
    }

    fn into_tables(self, history_cap: usize) -> Result<Tables, SnapshotError> {
        let corrupt = |m: String| Err(SnapshotError::CorruptSnapshot(m));
        let mut t = Tables::default();
        for (id, hist) in self.locations {
            if hist.windows(2).any(|w| w[0].ts > w[1].ts) {
                return corrupt(format!("history of {id} is out of order"));
            }
            let skip = hist.len().saturating_sub(history_cap);
            t.locations
                .insert(id, hist.into_iter().skip(skip).collect::<VecDeque<_>>());
        }
        if self.credentials.len() != t.locations.len()
            || self
                .credentials
                .keys()
                .any(|k| !t.locations.contains_key(k))
        {
            return corrupt("credentials and locations disagree".into());
        }
        t.credentials = self.credentials.into_iter().collect::<HashMap<_, _>>();
        t.retired = self.tombstones.ids.into_iter().collect();
        if t.retired.iter().any(|id| t.locations.contains_key(id)) {
            return corrupt("a retired id is still registered".into());
        }
        t.redeemed = self.tombstones.nonces.into_iter().collect();
        for (sharer, readers) in self.edges {
            for reader in readers {
                if sharer == reader || !t.is_alive(&sharer) || !t.is_alive(&reader) {
                    return corrupt(format!("invalid edge {sharer}->{reader}"));
                }
                t.insert_edge(&sharer, &reader);
            }
        }
        Ok(t)
    }
}

fn encode(doc: &SnapshotDoc) -> Vec<u8> {
    let body = serde_json::to_vec(doc).expect("snapshot serializes");
    let digest = hex::encode(Sha256::digest(&body));
    let mut out = Vec::with_capacity(body.len() + 80);
    out.extend_from_slice(SNAPSHOT_MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(digest.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&body);
    out
}

fn decode(bytes: &[u8]) -> Result<SnapshotDoc, SnapshotError> {
    let corrupt = |m: &str| SnapshotError::CorruptSnapshot(m.to_owned());
    let rest = bytes
        .strip_prefix(SNAPSHOT_MAGIC.as_bytes())
        .and_then(|r| r.strip_prefix(b"\n"))
        .ok_or_else(|| corrupt("missing WATN1 header"))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing checksum line"))?;
    let (digest, body) = (&rest[..nl], &rest[nl + 1..]);
    if digest != hex::encode(Sha256::digest(body)).as_bytes() {
        return Err(corrupt("checksum mismatch"));
    }
    serde_json::from_slice(body).map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))
}

impl Store {
    /// Canonical snapshot bytes of the current state.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let doc = SnapshotDoc::capture(&self.inner.lock().tables);
        encode(&doc)
    }

    /// Atomically replaces the file at `path` with a snapshot.
    pub fn snapshot(&self, path: &Path) -> Result<(), SnapshotError> {
        let bytes = self.snapshot_bytes();
        write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn restore(
        path: &Path,
        history_cap: usize,
        clock: Arc<dyn Clock>,
    ) -> Result<Store, SnapshotError> {
        let bytes = fs::read(path)?;
        Self::from_snapshot_bytes(&bytes, history_cap, clock, ChaCha20Rng::from_os_rng())
    }

    pub fn restore_seeded(
        bytes: &[u8],
        history_cap: usize,
        clock: Arc<dyn Clock>,
        seed: u64,
    ) -> Result<Store, SnapshotError> {
        Self::from_snapshot_bytes(bytes, history_cap, clock, ChaCha20Rng::seed_from_u64(seed))
    }

    fn from_snapshot_bytes(
        bytes: &[u8],
        history_cap: usize,
        clock: Arc<dyn Clock>,
        rng: ChaCha20Rng,
    ) -> Result<Store, SnapshotError> {
        let tables = decode(bytes)?.into_tables(history_cap)?;
        Ok(Store::from_tables(tables, history_cap, clock, rng))
    }
}

/// Write-to-temp, fsync, rename. The temp file lives next to `path` so the
/// rename stays on one filesystem.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

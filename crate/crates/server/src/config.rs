use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::rngs::OsRng;
use rand::TryRngCore;
use thiserror::Error;
use watn_core::invite::DEFAULT_INVITE_TTL_MS;
use watn_core::store::DEFAULT_HISTORY_CAP;
use watn_core::{Clock, InviteKey, Millis, SystemClock, TestClock};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{var}: {reason}")]
    Invalid { var: &'static str, reason: String },
    #[error("key file {path}: {source}")]
    KeyFile { path: PathBuf, source: io::Error },
}

/// Server settings, normally read from `WATN_*` environment variables.
#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    /// `None`: load from the key file next to the snapshot, or generate.
    pub key: Option<InviteKey>,
    pub invite_ttl_ms: Millis,
    pub history_cap: usize,
    pub snapshot_path: Option<PathBuf>,
    pub snapshot_interval: Duration,
    /// `WATN_TEST_CLOCK`: `<start_ms>[:<step_ms>]`.
    pub test_clock: Option<String>,
    /// `WATN_TEST_SEED`: makes ids, secrets and nonces reproducible.
    pub test_seed: Option<u64>,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            bind: "127.0.0.1:8080".parse().unwrap(),
            key: None,
            invite_ttl_ms: DEFAULT_INVITE_TTL_MS,
            history_cap: DEFAULT_HISTORY_CAP,
            snapshot_path: None,
            snapshot_interval: Duration::from_secs(60),
            test_clock: None,
            test_seed: None,
        }
    }
}

fn invalid(var: &'static str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        var,
        reason: reason.to_string(),
    }
}

impl ApiConfig {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut c = ApiConfig::default();
        if let Some(v) = get("WATN_BIND") {
            c.bind = v.parse().map_err(|e| invalid("WATN_BIND", e))?;
        }
        if let Some(v) = get("WATN_KEY") {
            c.key = Some(
                InviteKey::parse(&v)
                    .ok_or_else(|| invalid("WATN_KEY", "expected 32 bytes as hex or base64url"))?,
            );
        }
        if let Some(v) = get("WATN_TTL_MS") {
            c.invite_ttl_ms = v.parse().map_err(|e| invalid("WATN_TTL_MS", e))?;
        }
        if let Some(v) = get("WATN_HISTORY_CAP") {
            c.history_cap = v.parse().map_err(|e| invalid("WATN_HISTORY_CAP", e))?;
            if c.history_cap == 0 {
                return Err(invalid("WATN_HISTORY_CAP", "must be at least 1"));
            }
        }
        if let Some(v) = get("WATN_SNAPSHOT_PATH") {
            c.snapshot_path = Some(PathBuf::from(v));
        }
        if let Some(v) = get("WATN_SNAPSHOT_INTERVAL_S") {
            let secs: u64 = v
                .parse()
                .map_err(|e| invalid("WATN_SNAPSHOT_INTERVAL_S", e))?;
            c.snapshot_interval = Duration::from_secs(secs.max(1));
        }
        if let Some(v) = get("WATN_TEST_CLOCK") {
            if TestClock::parse(&v).is_none() {
                return Err(invalid(
                    "WATN_TEST_CLOCK",
                    "expected <start_ms>[:<step_ms>]",
                ));
            }
            c.test_clock = Some(v);
        }
        if let Some(v) = get("WATN_TEST_SEED") {
            c.test_seed = Some(v.parse().map_err(|e| invalid("WATN_TEST_SEED", e))?);
        }
        Ok(c)
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        match self.test_clock.as_deref().and_then(TestClock::parse) {
            Some(c) => Arc::new(c),
            None => Arc::new(SystemClock),
        }
    }

    pub fn key_path(&self) -> Option<PathBuf> {
        self.snapshot_path.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".key");
            PathBuf::from(s)
        })
    }

    /// The configured key, else the persisted key file, else a fresh key
    /// written to the key file. Without a snapshot path a fresh key lives only
    /// as long as the process, and outstanding invites die with it.
    pub fn resolve_key(&self) -> Result<InviteKey, ConfigError> {
        if let Some(k) = &self.key {
            return Ok(k.clone());
        }
        let Some(path) = self.key_path() else {
            return Ok(fresh_key());
        };
        match fs::read_to_string(&path) {
            Ok(text) => InviteKey::parse(&text).ok_or_else(|| ConfigError::KeyFile {
                path: path.clone(),
                source: io::Error::new(io::ErrorKind::InvalidData, "not a 32-byte key"),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let key = fresh_key();
                write_key(&path, &key).map_err(|source| ConfigError::KeyFile { path, source })?;
                Ok(key)
            }
            Err(source) => Err(ConfigError::KeyFile { path, source }),
        }
    }
}

fn fresh_key() -> InviteKey {
    let mut bytes = [0u8; 32];
    OsRng
        .try_fill_bytes(&mut bytes)
        .expect("operating system randomness");
    InviteKey::from_bytes(bytes)
}

fn write_key(path: &Path, key: &InviteKey) -> io::Result<()> {
    use std::io::Write;
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path)?;
    f.write_all(key.to_hex().as_bytes())?;
    f.sync_all()
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn lookup(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let m: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| m.get(k).cloned()
    }

    #[test]
    fn defaults() {
        let c = ApiConfig::from_lookup(lookup(&[])).unwrap();
        assert_eq!(c.invite_ttl_ms, 604_800_000);
        assert_eq!(c.history_cap, 1000);
        assert!(c.key.is_none());
    }

    #[test]
    fn parses_every_variable() {
        let c = ApiConfig::from_lookup(lookup(&[
            ("WATN_BIND", "0.0.0.0:9000"),
            ("WATN_KEY", &"ab".repeat(32)),
            ("WATN_TTL_MS", "5"),
            ("WATN_HISTORY_CAP", "7"),
            ("WATN_SNAPSHOT_PATH", "/tmp/x.snap"),
            ("WATN_SNAPSHOT_INTERVAL_S", "3"),
            ("WATN_TEST_CLOCK", "1000:1"),
            ("WATN_TEST_SEED", "9"),
        ]))
        .unwrap();
        assert_eq!(c.bind.port(), 9000);
        assert_eq!(c.invite_ttl_ms, 5);
        assert_eq!(c.history_cap, 7);
        assert_eq!(c.snapshot_interval, Duration::from_secs(3));
        assert_eq!(c.test_seed, Some(9));
        assert_eq!(c.clock().now_ms(), 1000);
        assert_eq!(c.key_path().unwrap(), PathBuf::from("/tmp/x.snap.key"));
    }

    #[test]
    fn rejects_garbage() {
        assert!(ApiConfig::from_lookup(lookup(&[("WATN_KEY", "nope")])).is_err());
        assert!(ApiConfig::from_lookup(lookup(&[("WATN_HISTORY_CAP", "0")])).is_err());
        assert!(ApiConfig::from_lookup(lookup(&[("WATN_TEST_CLOCK", "soon")])).is_err());
    }

    #[test]
    fn generated_key_is_persisted_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        let c = ApiConfig {
            snapshot_path: Some(dir.path().join("s.snap")),
            ..ApiConfig::default()
        };
        let k1 = c.resolve_key().unwrap();
        let k2 = c.resolve_key().unwrap();
        assert_eq!(k1.to_hex(), k2.to_hex());
    }
}

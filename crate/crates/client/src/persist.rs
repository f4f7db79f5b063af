//! Where [`LocalState`] lives between runs.
//!
//! [`FileStateStore`] replaces its file atomically (temp file, fsync,
//! rename) and can be told to fail at any of those steps through a
//! [`FaultHook`], which is how the invite-acceptance failure paths are tested.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::state::LocalState;

pub trait StateStore {
    /// `Ok(None)` when nothing has been saved yet.
    fn load(&self) -> io::Result<Option<LocalState>>;
    fn save(&self, state: &LocalState) -> io::Result<()>;
    fn erase(&self) -> io::Result<()>;
}

impl<S: StateStore + ?Sized> StateStore for &S {
    fn load(&self) -> io::Result<Option<LocalState>> {
        (**self).load()
    }
    fn save(&self, state: &LocalState) -> io::Result<()> {
        (**self).save(state)
    }
    fn erase(&self) -> io::Result<()> {
        (**self).erase()
    }
}

/// Boundaries inside one save.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SaveStep {
    BeforeWrite,
    /// Temp file written, not yet synced.
    AfterWrite,
    /// Temp file synced, not yet renamed over the target.
    AfterSync,
    /// Target replaced; the new state is durable.
    AfterRename,
}

impl SaveStep {
    pub const ALL: [SaveStep; 4] = [
        SaveStep::BeforeWrite,
        SaveStep::AfterWrite,
        SaveStep::AfterSync,
        SaveStep::AfterRename,
    ];
}

pub trait FaultHook: Send + Sync {
    fn at(&self, step: SaveStep) -> io::Result<()>;
}

/// Fails the next save that reaches `step`, once, after being armed.
#[derive(Debug)]
pub struct FailAt {
    step: SaveStep,
    armed: AtomicBool,
    fired: AtomicBool,
}

impl FailAt {
    pub fn new(step: SaveStep) -> Arc<Self> {
        Arc::new(FailAt {
            step,
            armed: AtomicBool::new(false),
            fired: AtomicBool::new(false),
        })
    }

    pub fn arm(&self) {
        self.armed.store(true, Ordering::SeqCst);
    }

    pub fn fired(&self) -> bool {
        self.fired.load(Ordering::SeqCst)
    }
}

impl FaultHook for FailAt {
    fn at(&self, step: SaveStep) -> io::Result<()> {
        if step == self.step && self.armed.swap(false, Ordering::SeqCst) {
            self.fired.store(true, Ordering::SeqCst);
            return Err(io::Error::other(format!("injected fault at {step:?}")));
        }
        Ok(())
    }
}

fn hook_at(hook: &Option<Arc<dyn FaultHook>>, step: SaveStep) -> io::Result<()> {
    match hook {
        Some(h) => h.at(step),
        None => Ok(()),
    }
}

fn decode(bytes: &[u8]) -> io::Result<LocalState> {
    serde_json::from_slice(bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// JSON state file, replaced atomically on every save.
pub struct FileStateStore {
    path: PathBuf,
    hook: Option<Arc<dyn FaultHook>>,
}

impl FileStateStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileStateStore {
            path: path.into(),
            hook: None,
        }
    }

    pub fn with_fault_hook(mut self, hook: Arc<dyn FaultHook>) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// `$WATN_STATE`, else `~/.watn/state.json`.
    pub fn default_path() -> PathBuf {
        if let Some(p) = std::env::var_os("WATN_STATE") {
            return PathBuf::from(p);
        }
        let home = std::env::var_os("HOME").map_or_else(|| PathBuf::from("."), PathBuf::from);
        home.join(".watn").join("state.json")
    }
}

impl StateStore for FileStateStore {
    fn load(&self) -> io::Result<Option<LocalState>> {
        match fs::read(&self.path) {
            Ok(bytes) => decode(&bytes).map(Some),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn save(&self, state: &LocalState) -> io::Result<()> {
        let bytes = serde_json::to_vec(state).map_err(io::Error::other)?;
        let dir = match self.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        hook_at(&self.hook, SaveStep::BeforeWrite)?;
        fs::create_dir_all(&dir)?;
        // dropping the temp file on any early return deletes it
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
        tmp.write_all(&bytes)?;
        hook_at(&self.hook, SaveStep::AfterWrite)?;
        tmp.as_file().sync_all()?;
        hook_at(&self.hook, SaveStep::AfterSync)?;
        tmp.persist(&self.path).map_err(|e| e.error)?;
        hook_at(&self.hook, SaveStep::AfterRename)
    }

    fn erase(&self) -> io::Result<()> {
        match fs::remove_file(&self.path) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }
}

/// In-memory stand-in for a state file. Clones share the same slot, so a
/// "restarted" client can reopen what an earlier one saved.
#[derive(Clone, Default)]
pub struct MemoryStateStore {
    slot: Arc<Mutex<Option<Vec<u8>>>>,
    hook: Option<Arc<dyn FaultHook>>,
}

impl MemoryStateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault_hook(mut self, hook: Arc<dyn FaultHook>) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn raw(&self) -> Option<Vec<u8>> {
        self.slot.lock().clone()
    }
}

impl StateStore for MemoryStateStore {
    fn load(&self) -> io::Result<Option<LocalState>> {
        self.slot.lock().as_deref().map(decode).transpose()
    }

    fn save(&self, state: &LocalState) -> io::Result<()> {
        let bytes = serde_json::to_vec(state).map_err(io::Error::other)?;
        hook_at(&self.hook, SaveStep::BeforeWrite)?;
        hook_at(&self.hook, SaveStep::AfterWrite)?;
        hook_at(&self.hook, SaveStep::AfterSync)?;
        *self.slot.lock() = Some(bytes);
        hook_at(&self.hook, SaveStep::AfterRename)
    }

    fn erase(&self) -> io::Result<()> {
        *self.slot.lock() = None;
        Ok(())
    }
}

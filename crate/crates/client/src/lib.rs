//! The client half of WATN.
//!
//! A [`Client`] keeps its credential, its legend (`id -> name`) and the last
//! fetched feed in a local [`StateStore`]. The server only ever sees ids and
//! coordinates; names are substituted in on the device by [`resolve`], with
//! the raw id shown for anyone the legend does not know.

mod client;
pub mod persist;
mod resolve;
mod state;
mod transport;

pub use client::{Client, ClientError, Direction, FeedView, Invite};
pub use persist::{FailAt, FaultHook, FileStateStore, MemoryStateStore, SaveStep, StateStore};
pub use resolve::{resolve, ResolvedEntry};
pub use state::{Legend, LocalState, NAME_MAX_BYTES};
pub use transport::{HttpTransport, RecordingTransport};

//! Core of WATN ("Where Are They Now"), a location-sharing service that
//! splits identity from location.
//!
//! The server keeps `id -> locations` and `sharer id -> reader ids`; each
//! client keeps its own `id -> name` legend. Nobody holds names and locations
//! together. This crate provides the vocabulary both halves speak:
//!
//! - [`ParticipantId`], [`GeoPoint`], [`CheckIn`], [`FeedEntry`], [`Credential`]
//! - signed single-use invite tokens ([`invite`])
//! - the identity-free [`Store`] with snapshot persistence
//! - the transport-neutral wire protocol ([`wire`])

pub mod checkin;
pub mod clock;
pub mod credential;
pub mod geo;
pub mod id;
pub mod invite;
pub mod store;
pub mod wire;

pub use checkin::{CheckIn, FeedEntry, Millis, MSG_MAX_BYTES};
pub use clock::{Clock, SystemClock, TestClock};
pub use credential::Credential;
pub use geo::{validate_geo, GeoPoint};
pub use id::{new_participant_id, ParticipantId};
pub use invite::{InviteError, InviteKey, InviteToken, Nonce};
pub use store::{SnapshotError, Store, StoreError};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use watn_core::{Credential, FeedEntry, Millis, ParticipantId};

/// Longest display name a legend accepts, in UTF-8 bytes.
pub const NAME_MAX_BYTES: usize = 100;

/// The client's private `id -> display name` map.
pub type Legend = BTreeMap<ParticipantId, String>;

/// Everything a client keeps on its own device. Only `own` ever leaves it,
/// and only as the `id`/`secret` auth fields of a request.
///
/// File form: `{"own":{"id","secret"},"legend":{..},"cache":[..],"fetched_ts":n}`,
/// absent fields omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own: Option<Credential>,
    #[serde(default)]
    pub legend: Legend,
    /// Raw feed entries from the last successful fetch, unresolved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<Vec<FeedEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_ts: Option<Millis>,
}

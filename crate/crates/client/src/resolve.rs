use serde::Serialize;
use watn_core::{FeedEntry, GeoPoint, Millis, ParticipantId};

use crate::state::Legend;

/// A feed entry with its id replaced by a local name where one is known.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedEntry {
    pub id: ParticipantId,
    /// `legend[id]`, or the raw id when the legend has no entry.
    pub display: String,
    #[serde(flatten)]
    pub point: GeoPoint,
    pub ts: Millis,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
}

impl ResolvedEntry {
    pub fn is_named(&self) -> bool {
        self.display != self.id.as_str()
    }
}

/// Substitutes legend names for ids, keeping order. Pure.
pub fn resolve(entries: &[FeedEntry], legend: &Legend) -> Vec<ResolvedEntry> {
    entries
        .iter()
        .map(|e| ResolvedEntry {
            id: e.id.clone(),
            display: legend
                .get(&e.id)
                .cloned()
                .unwrap_or_else(|| e.id.to_string()),
            point: e.point(),
            ts: e.ts,
            msg: e.msg.clone(),
        })
        .collect()
}

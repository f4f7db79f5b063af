use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::id::ParticipantId;

/// Upper bound on an attached message, in UTF-8 bytes.
pub const MSG_MAX_BYTES: usize = 500;

/// Milliseconds since the Unix epoch, UTC.
pub type Millis = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("message is {0} bytes, limit is {MSG_MAX_BYTES}")]
pub struct MsgTooLong(pub usize);

pub fn validate_msg(msg: &str) -> Result<(), MsgTooLong> {
    if msg.len() > MSG_MAX_BYTES {
        Err(MsgTooLong(msg.len()))
    } else {
        Ok(())
    }
}

/// One entry of a participant's location history.
///
/// On the wire the point is flattened: `{"lat":..,"lng":..,"ts":..,"msg":..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    #[serde(flatten)]
    pub point: GeoPoint,
    pub ts: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
}

/// A sharer's latest check-in as seen by one of its readers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedEntry {
    pub id: ParticipantId,
    pub lat: f64,
    pub lng: f64,
    pub ts: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
}

impl FeedEntry {
    pub fn new(id: ParticipantId, checkin: &CheckIn) -> Self {
        FeedEntry {
            id,
            lat: checkin.point.lat,
            lng: checkin.point.lng,
            ts: checkin.ts,
            msg: checkin.msg.clone(),
        }
    }

    pub fn point(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lng: self.lng,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_msg_is_omitted() {
        let c = CheckIn {
            point: GeoPoint {
                lat: 55.0,
                lng: 37.0,
            },
            ts: 1,
            msg: None,
        };
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            r#"{"lat":55.0,"lng":37.0,"ts":1}"#
        );
    }

    #[test]
    fn feed_entry_key_order() {
        let id = ParticipantId::parse("AAAAAAAAAAAAAAAAAAAAAA").unwrap();
        let c = CheckIn {
            point: GeoPoint {
                lat: 55.0,
                lng: 37.0,
            },
            ts: 9,
            msg: Some("hi".into()),
        };
        assert_eq!(
            serde_json::to_string(&FeedEntry::new(id, &c)).unwrap(),
            r#"{"id":"AAAAAAAAAAAAAAAAAAAAAA","lat":55.0,"lng":37.0,"ts":9,"msg":"hi"}"#
        );
    }

    #[test]
    fn msg_limit_counts_bytes() {
        assert!(validate_msg(&"a".repeat(500)).is_ok());
        assert_eq!(validate_msg(&"a".repeat(501)), Err(MsgTooLong(501)));
        // 2 bytes per char
        assert!(validate_msg(&"é".repeat(251)).is_err());
    }
}

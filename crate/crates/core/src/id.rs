use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of the textual form: 128 bits in unpadded base64url.
pub const ID_LEN: usize = 22;

/// Opaque pseudonym for a participant.
///
/// The server never sees any other participant handle. The value is random
/// and carries no identity information.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ParticipantId(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed participant id {0:?}")]
pub struct BadId(pub String);

impl ParticipantId {
    /// Draws a fresh id from `rng`.
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut raw = [0u8; 16];
        rng.fill_bytes(&mut raw);
        ParticipantId(URL_SAFE_NO_PAD.encode(raw))
    }

    pub fn parse(s: &str) -> Result<Self, BadId> {
        if is_well_formed(s) {
            Ok(ParticipantId(s.to_owned()))
        } else {
            Err(BadId(s.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Same as [`ParticipantId::generate`]; kept as a free function for callers
/// that think of id minting as an operation rather than a constructor.
pub fn new_participant_id<R: RngCore + CryptoRng>(rng: &mut R) -> ParticipantId {
    ParticipantId::generate(rng)
}

fn is_well_formed(s: &str) -> bool {
    s.len() == ID_LEN
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
        // the last character of 128 bits in base64 only carries 2 bits
        && URL_SAFE_NO_PAD.decode(s).is_ok()
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParticipantId({})", self.0)
    }
}

impl FromStr for ParticipantId {
    type Err = BadId;
    fn from_str(s: &str) -> Result<Self, BadId> {
        ParticipantId::parse(s)
    }
}

impl TryFrom<String> for ParticipantId {
    type Error = BadId;
    fn try_from(s: String) -> Result<Self, BadId> {
        if is_well_formed(&s) {
            Ok(ParticipantId(s))
        } else {
            Err(BadId(s))
        }
    }
}

impl From<ParticipantId> for String {
    fn from(id: ParticipantId) -> String {
        id.0
    }
}

impl AsRef<str> for ParticipantId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    fn format_ok(s: &str) -> bool {
        s.len() == 22
            && s.chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    }

    #[test]
    fn seeded_generation_is_pinned() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let id = ParticipantId::generate(&mut rng);
        assert_eq!(id.as_str(), GOLDEN_SEED_42);
        assert!(format_ok(id.as_str()));
    }

    // ChaCha20Rng::seed_from_u64(42), first 16 bytes.
    const GOLDEN_SEED_42: &str = "eEi11xG8mIOZYxej-ckCaQ";

    #[test]
    fn hundred_thousand_draws_are_unique_and_well_formed() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut seen = HashSet::with_capacity(100_000);
        for _ in 0..100_000 {
            let id = ParticipantId::generate(&mut rng);
            assert!(format_ok(id.as_str()), "{id}");
            assert!(seen.insert(id));
        }
    }

    #[test]
    fn parse_rejects_bad_shapes() {
        assert!(ParticipantId::parse("short").is_err());
        assert!(ParticipantId::parse("AAAAAAAAAAAAAAAAAAAAA+").is_err());
        assert!(ParticipantId::parse("AAAAAAAAAAAAAAAAAAAAAAA").is_err());
        assert!(ParticipantId::parse("AAAAAAAAAAAAAAAAAAAAAA").is_ok());
    }

    #[test]
    fn serde_validates() {
        let bad: Result<ParticipantId, _> = serde_json::from_str("\"alice\"");
        assert!(bad.is_err());
        let good: ParticipantId = serde_json::from_str("\"AAAAAAAAAAAAAAAAAAAAAA\"").unwrap();
        assert_eq!(
            serde_json::to_string(&good).unwrap(),
            "\"AAAAAAAAAAAAAAAAAAAAAA\""
        );
    }
}

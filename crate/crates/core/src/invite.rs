//! Signed, single-use invite tokens.
//!
//! Wire form: `<sharer>.<nonce>.<expiry>.<mac>` where `nonce` is 96 random
//! bits and `mac` is HMAC-SHA256 over the first three segments, both in
//! unpadded base64url, and `expiry` is decimal UTC milliseconds. The sharer id
//! is readable by anyone holding the token; only the issuing server can mint or
//! verify one. Single use is enforced by the store, which tombstones redeemed
//! nonces.

use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, KeyInit, Mac};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::checkin::Millis;
use crate::id::ParticipantId;

type HmacSha256 = Hmac<Sha256>;

pub const LINK_PREFIX: &str = "watn://accept?token=";

/// Default time-to-live of an invite: seven days.
pub const DEFAULT_INVITE_TTL_MS: Millis = 7 * 24 * 60 * 60 * 1000;

/// Server-held token signing key.
#[derive(Clone)]
pub struct InviteKey([u8; 32]);

impl InviteKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        InviteKey(bytes)
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        InviteKey(k)
    }

    /// Accepts 64 hex digits or 43 characters of unpadded base64url.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        let bytes = if text.len() == 64 {
            hex::decode(text).ok()?
        } else {
            URL_SAFE_NO_PAD.decode(text).ok()?
        };
        Some(InviteKey(bytes.try_into().ok()?))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    fn mac(&self) -> HmacSha256 {
        <HmacSha256 as KeyInit>::new_from_slice(&self.0).expect("hmac takes any key length")
    }
}

impl fmt::Debug for InviteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("InviteKey(<redacted>)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Nonce(pub [u8; 12]);

impl Nonce {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut n = [0u8; 12];
        rng.fill_bytes(&mut n);
        Nonce(n)
    }

    pub fn to_b64(&self) -> String {
        URL_SAFE_NO_PAD.encode(self.0)
    }

    pub fn from_b64(s: &str) -> Option<Self> {
        if s.len() != 16 {
            return None;
        }
        let bytes = URL_SAFE_NO_PAD.decode(s).ok()?;
        Some(Nonce(bytes.try_into().ok()?))
    }
}

impl TryFrom<String> for Nonce {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        Nonce::from_b64(&s).ok_or_else(|| format!("bad nonce {s:?}"))
    }
}

impl From<Nonce> for String {
    fn from(n: Nonce) -> String {
        n.to_b64()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InviteToken {
    pub sharer: ParticipantId,
    pub nonce: Nonce,
    pub expiry: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InviteError {
    #[error("malformed invite token")]
    BadFormat,
    #[error("invite token signature mismatch")]
    BadMac,
    #[error("invite token expired")]
    Expired,
}

impl InviteToken {
    fn signed_part(&self) -> String {
        format!("{}.{}.{}", self.sharer, self.nonce.to_b64(), self.expiry)
    }

    pub fn encode(&self, key: &InviteKey) -> String {
        let body = self.signed_part();
        let mut mac = key.mac();
        mac.update(body.as_bytes());
        let tag = mac.finalize().into_bytes();
        format!("{body}.{}", URL_SAFE_NO_PAD.encode(tag))
    }

    /// Verifies the MAC first, then the expiry. A token whose expiry equals
    /// `now` is still valid.
    pub fn decode(token: &str, key: &InviteKey, now: Millis) -> Result<Self, InviteError> {
        let mut parts = token.split('.');
        let (Some(sharer), Some(nonce), Some(expiry), Some(tag), None) = (
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
        ) else {
            return Err(InviteError::BadFormat);
        };
        let sharer = ParticipantId::parse(sharer).map_err(|_| InviteError::BadFormat)?;
        let nonce = Nonce::from_b64(nonce).ok_or(InviteError::BadFormat)?;
        if expiry.is_empty() || !expiry.bytes().all(|b| b.is_ascii_digit()) {
            return Err(InviteError::BadFormat);
        }
        let expiry: Millis = expiry.parse().map_err(|_| InviteError::BadFormat)?;
        let parsed = InviteToken {
            sharer,
            nonce,
            expiry,
        };
        let tag = URL_SAFE_NO_PAD
            .decode(tag)
            .map_err(|_| InviteError::BadMac)?;
        let mut mac = key.mac();
        mac.update(parsed.signed_part().as_bytes());
        mac.verify_slice(&tag).map_err(|_| InviteError::BadMac)?;
        if parsed.expiry < now {
            return Err(InviteError::Expired);
        }
        Ok(parsed)
    }
}

/// Wraps a token in the app URL scheme.
pub fn invite_link(token: &str) -> String {
    format!("{LINK_PREFIX}{token}")
}

/// Accepts either a full `watn://accept?token=` link or a bare token.
pub fn token_from_link(link_or_token: &str) -> &str {
    let s = link_or_token.trim();
    s.strip_prefix(LINK_PREFIX)
        .or_else(|| s.find("token=").map(|i| &s[i + "token=".len()..]))
        .unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    const NOW: Millis = 1_700_000_000_000;

    fn fixture() -> (InviteKey, InviteToken) {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let key = InviteKey::generate(&mut rng);
        let tok = InviteToken {
            sharer: ParticipantId::generate(&mut rng),
            nonce: Nonce::generate(&mut rng),
            expiry: NOW + 86_400_000,
        };
        (key, tok)
    }

    #[test]
    fn round_trip() {
        let (key, tok) = fixture();
        let text = tok.encode(&key);
        assert!(text.starts_with(tok.sharer.as_str()));
        assert_eq!(InviteToken::decode(&text, &key, NOW), Ok(tok));
    }

    #[test]
    fn every_flipped_mac_char_is_bad_mac() {
        let (key, tok) = fixture();
        let text = tok.encode(&key);
        let mac_start = text.rfind('.').unwrap() + 1;
        for i in mac_start..text.len() {
            let mut bytes = text.clone().into_bytes();
            bytes[i] = if bytes[i] == b'A' { b'B' } else { b'A' };
            let forged = String::from_utf8(bytes).unwrap();
            assert_eq!(
                InviteToken::decode(&forged, &key, NOW),
                Err(InviteError::BadMac),
                "position {i}"
            );
        }
    }

    #[test]
    fn expired_one_ms_ago() {
        let (key, mut tok) = fixture();
        tok.expiry = NOW - 1;
        let text = tok.encode(&key);
        assert_eq!(
            InviteToken::decode(&text, &key, NOW),
            Err(InviteError::Expired)
        );
        tok.expiry = NOW;
        assert!(InviteToken::decode(&tok.encode(&key), &key, NOW).is_ok());
    }

    #[test]
    fn other_key_rejects() {
        let (key, tok) = fixture();
        let other = InviteKey::from_bytes([9; 32]);
        assert_eq!(
            InviteToken::decode(&tok.encode(&key), &other, NOW),
            Err(InviteError::BadMac)
        );
    }

    #[test]
    fn tampered_payload_is_bad_mac() {
        let (key, tok) = fixture();
        let text = tok.encode(&key);
        let later = text.replace(
            &format!(".{}.", tok.expiry),
            &format!(".{}.", tok.expiry + 1),
        );
        assert_eq!(
            InviteToken::decode(&later, &key, NOW),
            Err(InviteError::BadMac)
        );
    }

    #[test]
    fn structural_garbage_is_bad_format() {
        let (key, _) = fixture();
        for t in ["", "a.b.c", "a.b.c.d.e", "AAAAAAAAAAAAAAAAAAAAAA.x.1.y"] {
            assert_eq!(
                InviteToken::decode(t, &key, NOW),
                Err(InviteError::BadFormat),
                "{t}"
            );
        }
    }

    #[test]
    fn link_helpers() {
        assert_eq!(token_from_link(&invite_link("abc")), "abc");
        assert_eq!(token_from_link("abc"), "abc");
        assert_eq!(token_from_link("http://host/accept?token=abc"), "abc");
    }

    #[test]
    fn key_parsing() {
        let k = InviteKey::from_bytes([7; 32]);
        assert!(InviteKey::parse(&k.to_hex()).is_some());
        assert!(InviteKey::parse(&URL_SAFE_NO_PAD.encode([7u8; 32])).is_some());
        assert!(InviteKey::parse("short").is_none());
    }
}

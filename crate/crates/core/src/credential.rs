use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

use crate::id::ParticipantId;

/// Per-participant bearer secret. Handed out once by registration; the
/// server keeps only [`SecretHash`].
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub id: ParticipantId,
    pub secret: String,
}

impl Credential {
    pub fn generate<R: RngCore + CryptoRng>(id: ParticipantId, rng: &mut R) -> Self {
        let mut raw = [0u8; 32];
        rng.fill_bytes(&mut raw);
        Credential {
            id,
            secret: URL_SAFE_NO_PAD.encode(raw),
        }
    }

    pub fn secret_hash(&self) -> SecretHash {
        SecretHash::of(&self.secret)
    }
}

impl fmt::Debug for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Credential")
            .field("id", &self.id)
            .field("secret", &"<redacted>")
            .finish()
    }
}

/// SHA-256 of a credential secret. The secret already has 256 bits of
/// entropy, so no salt or stretching is applied.
#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SecretHash([u8; 32]);

impl SecretHash {
    pub fn of(secret: &str) -> Self {
        SecretHash(Sha256::digest(secret.as_bytes()).into())
    }

    pub fn matches(&self, secret: &str) -> bool {
        Self::of(secret).0.ct_eq(&self.0).into()
    }
}

impl fmt::Debug for SecretHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretHash({})", hex::encode(self.0))
    }
}

impl TryFrom<String> for SecretHash {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        let bytes = hex::decode(&s).map_err(|e| e.to_string())?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| "secret hash must be 32 bytes".to_string())?;
        Ok(SecretHash(arr))
    }
}

impl From<SecretHash> for String {
    fn from(h: SecretHash) -> String {
        hex::encode(h.0)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    #[test]
    fn hash_matches_only_its_secret() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let id = ParticipantId::generate(&mut rng);
        let cred = Credential::generate(id, &mut rng);
        assert_eq!(cred.secret.len(), 43);
        let h = cred.secret_hash();
        assert!(h.matches(&cred.secret));
        assert!(!h.matches("nope"));
    }

    #[test]
    fn debug_redacts_secret() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let id = ParticipantId::generate(&mut rng);
        let cred = Credential::generate(id, &mut rng);
        assert!(!format!("{cred:?}").contains(&cred.secret));
    }
}

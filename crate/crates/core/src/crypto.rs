//! Hashing, identities and signing keys.
//!
//! Every participant (consensus node or service) owns an Ed25519 key derived
//! deterministically from the run seed and its identity, so two runs with the
//! same seed produce byte-identical signatures.

use std::collections::BTreeMap;
use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// True for a 64-char lowercase hex string.
pub fn is_hash_hex(s: &str) -> bool {
    s.len() == 64
        && s.bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Name of a node or service that can sign ledger artifacts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Identity(String);

impl Identity {
    pub fn new(name: impl Into<String>) -> Self {
        Identity(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Conventional identity of consensus node `index`.
    pub fn node(index: usize) -> Self {
        Identity(format!("node-{index}"))
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Identity {
    fn from(s: &str) -> Self {
        Identity(s.to_string())
    }
}

/// Raw 64-byte Ed25519 signature; serialized as hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignatureBytes(pub [u8; 64]);

impl SignatureBytes {
    pub const ZERO: SignatureBytes = SignatureBytes([0u8; 64]);
}

impl fmt::Debug for SignatureBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sig({}..)", hex::encode(&self.0[..6]))
    }
}

impl Serialize for SignatureBytes {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for SignatureBytes {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 64] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("signature must be 64 bytes"))?;
        Ok(SignatureBytes(arr))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("no signing key registered for {0}")]
    UnknownSigner(Identity),
    #[error("invalid public key for {0}")]
    BadPublicKey(Identity),
}

/// Private keys for every participant of one run.
#[derive(Clone)]
pub struct Keyring {
    seed: u64,
    keys: BTreeMap<Identity, SigningKey>,
}

impl fmt::Debug for Keyring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keyring")
            .field("seed", &self.seed)
            .field("identities", &self.keys.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Keyring {
    pub fn new(seed: u64) -> Self {
        Keyring {
            seed,
            keys: BTreeMap::new(),
        }
    }

    /// Registers `id`, deriving its key from the seed. Idempotent.
    pub fn register(&mut self, id: &Identity) {
        let seed = self.seed;
        self.keys.entry(id.clone()).or_insert_with(|| {
            let mut h = Sha256::new();
            h.update(b"ledgerair/key/v1");
            h.update(seed.to_be_bytes());
            h.update(id.as_str().as_bytes());
            let secret: [u8; 32] = h.finalize().into();
            SigningKey::from_bytes(&secret)
        });
    }

    pub fn sign(&self, id: &Identity, msg: &[u8]) -> Result<SignatureBytes, KeyError> {
        let key = self
            .keys
            .get(id)
            .ok_or_else(|| KeyError::UnknownSigner(id.clone()))?;
        Ok(SignatureBytes(key.sign(msg).to_bytes()))
    }

    /// Public half of the keyring. `validators` are the identities allowed to vote.
    pub fn membership(&self, validators: &[Identity], quorum: usize) -> Membership {
        let mut m = Membership {
            quorum,
            validators: Default::default(),
            authors: Default::default(),
        };
        for (id, key) in &self.keys {
            let vk = key.verifying_key();
            if validators.contains(id) {
                m.validators.insert(id.clone(), vk);
            } else {
                m.authors.insert(id.clone(), vk);
            }
        }
        m
    }
}

/// Public keys and commit threshold that a verifier trusts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Membership {
    quorum: usize,
    validators: BTreeMap<Identity, VerifyingKey>,
    authors: BTreeMap<Identity, VerifyingKey>,
}

impl Membership {
    pub fn quorum(&self) -> usize {
        self.quorum
    }

    pub fn validators(&self) -> impl Iterator<Item = &Identity> {
        self.validators.keys()
    }

    pub fn is_validator(&self, id: &Identity) -> bool {
        self.validators.contains_key(id)
    }

    /// Checks a transaction signature. Validators may also author.
    pub fn verify_author(&self, id: &Identity, msg: &[u8], sig: &SignatureBytes) -> bool {
        self.authors
            .get(id)
            .or_else(|| self.validators.get(id))
            .is_some_and(|vk| verify(vk, msg, sig))
    }

    /// Checks a vote or consensus message signature; only validators qualify.
    pub fn verify_validator(&self, id: &Identity, msg: &[u8], sig: &SignatureBytes) -> bool {
        self.validators
            .get(id)
            .is_some_and(|vk| verify(vk, msg, sig))
    }

    pub fn to_file(&self) -> MembershipFile {
        let hexmap = |m: &BTreeMap<Identity, VerifyingKey>| {
            m.iter()
                .map(|(k, v)| (k.clone(), hex::encode(v.to_bytes())))
                .collect()
        };
        MembershipFile {
            quorum: self.quorum,
            validators: hexmap(&self.validators),
            authors: hexmap(&self.authors),
        }
    }

    pub fn from_file(file: &MembershipFile) -> Result<Self, KeyError> {
        let parse =
            |m: &BTreeMap<Identity, String>| -> Result<BTreeMap<Identity, VerifyingKey>, KeyError> {
                m.iter()
                    .map(|(id, h)| {
                        let bytes: [u8; 32] = hex::decode(h)
                            .ok()
                            .and_then(|b| b.try_into().ok())
                            .ok_or_else(|| KeyError::BadPublicKey(id.clone()))?;
                        let vk = VerifyingKey::from_bytes(&bytes)
                            .map_err(|_| KeyError::BadPublicKey(id.clone()))?;
                        Ok((id.clone(), vk))
                    })
                    .collect()
            };
        Ok(Membership {
            quorum: file.quorum,
            validators: parse(&file.validators)?,
            authors: parse(&file.authors)?,
        })
    }
}

/// JSON sidecar describing a [`Membership`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipFile {
    pub quorum: usize,
    pub validators: BTreeMap<Identity, String>,
    pub authors: BTreeMap<Identity, String>,
}

fn verify(vk: &VerifyingKey, msg: &[u8], sig: &SignatureBytes) -> bool {
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify(msg, &sig).is_ok()
}

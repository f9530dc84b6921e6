use std::collections::BTreeMap;
use std::path::Path;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::LedgerError;

/// The block-creating authority: a key id and its Ed25519 signing key.
#[derive(Clone)]
pub struct AuthorityKeys {
    key_id: String,
    signing: SigningKey,
}

impl std::fmt::Debug for AuthorityKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthorityKeys")
            .field("key_id", &self.key_id)
            .field("public_key", &hex::encode(self.signing.verifying_key().as_bytes()))
            .finish_non_exhaustive()
    }
}

/// On-disk key material. `secret_key` is absent in public-only files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFile {
    pub key_id: String,
    pub public_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret_key: Option<String>,
}

impl AuthorityKeys {
    pub fn from_seed(key_id: impl Into<String>, seed: [u8; 32]) -> AuthorityKeys {
        AuthorityKeys {
            key_id: key_id.into(),
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn generate(key_id: impl Into<String>) -> AuthorityKeys {
        let mut seed = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut seed);
        Self::from_seed(key_id, seed)
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn sign_hex(&self, msg: &[u8]) -> String {
        hex::encode(self.signing.sign(msg).to_bytes())
    }

    /// A registry holding only this authority's public key.
    pub fn authority_set(&self) -> AuthoritySet {
        let mut set = AuthoritySet::default();
        set.insert(self.key_id.clone(), self.verifying_key());
        set
    }

    pub fn to_key_file(&self, include_secret: bool) -> KeyFile {
        KeyFile {
            key_id: self.key_id.clone(),
            public_key: hex::encode(self.verifying_key().as_bytes()),
            secret_key: include_secret.then(|| hex::encode(self.signing.to_bytes())),
        }
    }

    pub fn from_key_file(file: &KeyFile) -> Result<AuthorityKeys, LedgerError> {
        let secret = file
            .secret_key
            .as_deref()
            .ok_or_else(|| LedgerError::KeyFile("no secret_key in key file".into()))?;
        let seed: [u8; 32] = decode_fixed(secret, "secret_key")?;
        let keys = Self::from_seed(file.key_id.clone(), seed);
        if hex::encode(keys.verifying_key().as_bytes()) != file.public_key {
            return Err(LedgerError::KeyFile("public_key does not match secret_key".into()));
        }
        Ok(keys)
    }

    pub fn load(path: &Path) -> Result<AuthorityKeys, LedgerError> {
        Self::from_key_file(&read_key_file(path)?)
    }

    pub fn save(&self, secret_path: &Path, public_path: &Path) -> Result<(), LedgerError> {
        write_key_file(secret_path, &self.to_key_file(true))?;
        write_key_file(public_path, &self.to_key_file(false))
    }
}

fn decode_fixed<const N: usize>(s: &str, what: &str) -> Result<[u8; N], LedgerError> {
    let bytes = hex::decode(s).map_err(|e| LedgerError::KeyFile(format!("{what}: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| LedgerError::KeyFile(format!("{what}: expected {N} bytes")))
}

fn read_key_file(path: &Path) -> Result<KeyFile, LedgerError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LedgerError::KeyFile(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LedgerError::KeyFile(format!("{}: {e}", path.display())))
}

fn write_key_file(path: &Path, file: &KeyFile) -> Result<(), LedgerError> {
    let text = serde_json::to_string_pretty(file).expect("key file serializes");
    std::fs::write(path, text + "\n")
        .map_err(|e| LedgerError::KeyFile(format!("{}: {e}", path.display())))
}

/// Public keys of every registered authority, by key id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuthoritySet {
    keys: BTreeMap<String, VerifyingKey>,
}

impl AuthoritySet {
    pub fn insert(&mut self, key_id: String, key: VerifyingKey) {
        self.keys.insert(key_id, key);
    }

    pub fn contains(&self, key_id: &str) -> bool {
        self.keys.contains_key(key_id)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `None` when the key id is not registered.
    pub fn verify(&self, key_id: &str, msg: &[u8], signature_hex: &str) -> Option<bool> {
        let key = self.keys.get(key_id)?;
        let ok = decode_fixed::<64>(signature_hex, "signature")
            .ok()
            .filter(|_| super::block::is_hex_digest(signature_hex, 64))
            .map(|b| key.verify(msg, &Signature::from_bytes(&b)).is_ok())
            .unwrap_or(false);
        Some(ok)
    }

    pub fn from_key_file(file: &KeyFile) -> Result<AuthoritySet, LedgerError> {
        let bytes: [u8; 32] = decode_fixed(&file.public_key, "public_key")?;
        let key = VerifyingKey::from_bytes(&bytes)
            .map_err(|e| LedgerError::KeyFile(format!("public_key: {e}")))?;
        let mut set = AuthoritySet::default();
        set.insert(file.key_id.clone(), key);
        Ok(set)
    }

    /// Reads a public or secret key file and registers its public half.
    pub fn load(path: &Path) -> Result<AuthoritySet, LedgerError> {
        Self::from_key_file(&read_key_file(path)?)
    }
}

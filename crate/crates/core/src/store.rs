//! Content-addressed blob store and envelope-encrypted sharing.
//!
//! A provider stores a blob, then sends the receiver only a small
//! [`Envelope`]: a fresh AES-256-GCM content key wrapped with the
//! receiver's RSA-OAEP public key, and the blob's [`ContentId`] sealed
//! under that content key. The receiver unwraps both and fetches the blob
//! from the store by id.

use std::collections::HashMap;
use std::fmt;
use std::sync::RwLock;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Key, Nonce};
use rand::{CryptoRng, RngCore};
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::netsim::{CommLedger, PayloadKind};

/// Multihash prefix: SHA2-256, 32-byte digest.
const MULTIHASH_PREFIX: [u8; 2] = [0x12, 0x20];
pub const CONTENT_ID_LEN: usize = 46;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const DEFAULT_RSA_BITS: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("content {0} not found")]
    NotFound(ContentId),
    #[error("stored bytes for {0} do not match their address")]
    Corruption(ContentId),
    #[error("invalid content id: {0}")]
    InvalidContentId(String),
    #[error("crypto error: {0}")]
    Crypto(String),
    #[error("envelope failed authentication")]
    Authentication,
    #[error("decode error: {0}")]
    Decode(String),
    #[error("ledger: {0}")]
    Ledger(#[from] crate::netsim::NetsimError),
}

/// 46-character base58btc multihash of a blob's SHA-256 digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentId(String);

impl ContentId {
    pub fn of(blob: &[u8]) -> Self {
        let mut mh = Vec::with_capacity(34);
        mh.extend_from_slice(&MULTIHASH_PREFIX);
        mh.extend_from_slice(&Sha256::digest(blob));
        Self(bs58::encode(mh).into_string())
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        if text.len() != CONTENT_ID_LEN {
            return Err(StoreError::InvalidContentId(format!("length {}", text.len())));
        }
        let raw = bs58::decode(text)
            .into_vec()
            .map_err(|e| StoreError::InvalidContentId(e.to_string()))?;
        if raw.len() != 34 || raw[..2] != MULTIHASH_PREFIX {
            return Err(StoreError::InvalidContentId("not a sha2-256 multihash".into()));
        }
        Ok(Self(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn digest(&self) -> [u8; 32] {
        let raw = bs58::decode(&self.0).into_vec().expect("validated on construction");
        raw[2..].try_into().expect("34-byte multihash")
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// In-process content-addressed store. Reads run concurrently; writes are
/// serialized by the lock.
#[derive(Debug, Default)]
pub struct ContentStore {
    blobs: RwLock<HashMap<ContentId, Vec<u8>>>,
}

impl ContentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&self, blob: &[u8]) -> ContentId {
        let id = ContentId::of(blob);
        self.blobs
            .write()
            .unwrap()
            .entry(id.clone())
            .or_insert_with(|| blob.to_vec());
        id
    }

    /// Returns the blob after checking it still hashes to `id`.
    pub fn get(&self, id: &ContentId) -> Result<Vec<u8>, StoreError> {
        let blobs = self.blobs.read().unwrap();
        let blob = blobs.get(id).ok_or_else(|| StoreError::NotFound(id.clone()))?;
        if Sha256::digest(blob).as_slice() != id.digest() {
            return Err(StoreError::Corruption(id.clone()));
        }
        Ok(blob.clone())
    }

    pub fn contains(&self, id: &ContentId) -> bool {
        self.blobs.read().unwrap().contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.blobs.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Overwrites the bytes stored under `id` without re-addressing them.
    /// Models a faulty or malicious storage peer.
    pub fn overwrite_raw(&self, id: &ContentId, bytes: Vec<u8>) {
        self.blobs.write().unwrap().insert(id.clone(), bytes);
    }
}

#[derive(Clone)]
pub struct SymmetricKey([u8; 32]);

impl SymmetricKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    fn cipher(&self) -> Aes256Gcm {
        Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&self.0))
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// RSA key pair of a receiving node.
#[derive(Debug, Clone)]
pub struct KeyPair {
    private: RsaPrivateKey,
    public: RsaPublicKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R, bits: usize) -> Result<Self, StoreError> {
        let private = RsaPrivateKey::new(rng, bits).map_err(|e| StoreError::Crypto(e.to_string()))?;
        let public = RsaPublicKey::from(&private);
        Ok(Self { private, public })
    }

    pub fn public(&self) -> &RsaPublicKey {
        &self.public
    }
}

/// What travels directly from provider to receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub sender: String,
    pub receiver: String,
    /// Content key under the receiver's public key.
    pub encrypted_key: Vec<u8>,
    /// `nonce || AES-256-GCM(content id)`.
    pub encrypted_cid: Vec<u8>,
}

fn envelope_aad(sender: &str, receiver: &str) -> Vec<u8> {
    let mut aad = b"rdfl-envelope\0".to_vec();
    aad.extend_from_slice(sender.as_bytes());
    aad.push(0);
    aad.extend_from_slice(receiver.as_bytes());
    aad
}

impl Envelope {
    /// Length-prefixed concatenation of sender, receiver, key and cid fields.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        for field in [
            self.sender.as_bytes(),
            self.receiver.as_bytes(),
            &self.encrypted_key,
            &self.encrypted_cid,
        ] {
            out.extend_from_slice(&(field.len() as u32).to_le_bytes());
            out.extend_from_slice(field);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut fields = Vec::with_capacity(4);
        let mut rest = bytes;
        for _ in 0..4 {
            if rest.len() < 4 {
                return Err(StoreError::Decode("truncated envelope".into()));
            }
            let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
            rest = &rest[4..];
            if rest.len() < len {
                return Err(StoreError::Decode("truncated envelope field".into()));
            }
            fields.push(rest[..len].to_vec());
            rest = &rest[len..];
        }
        if !rest.is_empty() {
            return Err(StoreError::Decode("trailing bytes after envelope".into()));
        }
        let text = |b: Vec<u8>| String::from_utf8(b).map_err(|e| StoreError::Decode(e.to_string()));
        let encrypted_cid = fields.pop().unwrap();
        let encrypted_key = fields.pop().unwrap();
        let receiver = text(fields.pop().unwrap())?;
        let sender = text(fields.pop().unwrap())?;
        Ok(Self {
            sender,
            receiver,
            encrypted_key,
            encrypted_cid,
        })
    }

    pub fn wire_len(&self) -> usize {
        16 + self.sender.len() + self.receiver.len() + self.encrypted_key.len() + self.encrypted_cid.len()
    }
}

/// Provider side: store `blob`, wrap a fresh content key for the receiver
/// and seal the content id. The envelope is the only direct traffic and is
/// recorded in `ledger`.
#[allow(clippy::too_many_arguments)]
pub fn share<R: RngCore + CryptoRng>(
    store: &ContentStore,
    provider: &str,
    receiver: &str,
    blob: &[u8],
    receiver_key: &RsaPublicKey,
    rng: &mut R,
    ledger: &mut CommLedger,
    time: u64,
) -> Result<Envelope, StoreError> {
    let key = SymmetricKey::generate(rng);
    let cid = store.put(blob);
    let encrypted_key = receiver_key
        .encrypt(rng, Oaep::new::<Sha256>(), &key.0)
        .map_err(|e| StoreError::Crypto(e.to_string()))?;
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let sealed = key
        .cipher()
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: cid.as_str().as_bytes(),
                aad: &envelope_aad(provider, receiver),
            },
        )
        .map_err(|e| StoreError::Crypto(e.to_string()))?;
    let mut encrypted_cid = nonce.to_vec();
    encrypted_cid.extend_from_slice(&sealed);
    let envelope = Envelope {
        sender: provider.to_string(),
        receiver: receiver.to_string(),
        encrypted_key,
        encrypted_cid,
    };
    ledger.send(provider, receiver, PayloadKind::EnvelopeBytes, envelope.wire_len() as u64, time)?;
    Ok(envelope)
}

/// Receiver side: unwrap the content key, open the sealed id, fetch the blob.
pub fn receive(envelope: &Envelope, keys: &KeyPair, store: &ContentStore) -> Result<Vec<u8>, StoreError> {
    let raw_key = keys
        .private
        .decrypt(Oaep::new::<Sha256>(), &envelope.encrypted_key)
        .map_err(|e| StoreError::Crypto(e.to_string()))?;
    let key = SymmetricKey(
        raw_key
            .as_slice()
            .try_into()
            .map_err(|_| StoreError::Crypto("unwrapped key has wrong length".into()))?,
    );
    if envelope.encrypted_cid.len() < NONCE_LEN + TAG_LEN {
        return Err(StoreError::Authentication);
    }
    let (nonce, sealed) = envelope.encrypted_cid.split_at(NONCE_LEN);
    let plain = key
        .cipher()
        .decrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: sealed,
                aad: &envelope_aad(&envelope.sender, &envelope.receiver),
            },
        )
        .map_err(|_| StoreError::Authentication)?;
    let text = String::from_utf8(plain).map_err(|_| StoreError::Authentication)?;
    let cid = ContentId::parse(&text)?;
    store.get(&cid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::sync::OnceLock;

    fn keys() -> &'static (KeyPair, KeyPair) {
        static KEYS: OnceLock<(KeyPair, KeyPair)> = OnceLock::new();
        KEYS.get_or_init(|| {
            let mut rng = ChaCha20Rng::seed_from_u64(1);
            (
                KeyPair::generate(&mut rng, DEFAULT_RSA_BITS).unwrap(),
                KeyPair::generate(&mut rng, DEFAULT_RSA_BITS).unwrap(),
            )
        })
    }

    #[test]
    fn content_id_golden() {
        // base58(0x12 0x20 || sha256(..)) computed independently in Python.
        assert_eq!(ContentId::of(b"").as_str(), "QmdfTbBqBPQ7VNxZEYEj14VmRuZBkqFbiwReogJgS1zR1n");
        assert_eq!(ContentId::of(b"hello").as_str(), "QmRN6wdp1S2A5EtjW9A3M1vKSBuQQGcgvuhoMUoEz4iiT5");
        assert_eq!(ContentId::parse("QmdfTbBqBPQ7VNxZEYEj14VmRuZBkqFbiwReogJgS1zR1n").unwrap(), ContentId::of(b""));
        assert!(ContentId::parse("Qm").is_err());
        assert!(ContentId::parse(&"1".repeat(46)).is_err());
    }

    #[test]
    fn put_get() {
        let store = ContentStore::new();
        let a = store.put(b"abc");
        assert_eq!(store.put(b"abc"), a);
        assert_eq!(store.len(), 1);
        assert_eq!(store.get(&a).unwrap(), b"abc");
        let missing = ContentId::of(b"never stored");
        assert_eq!(store.get(&missing), Err(StoreError::NotFound(missing)));
    }

    #[test]
    fn corruption_detected() {
        let store = ContentStore::new();
        let id = store.put(b"model bytes");
        store.overwrite_raw(&id, b"model bytez".to_vec());
        assert_eq!(store.get(&id), Err(StoreError::Corruption(id)));
    }

    #[test]
    fn share_receive_roundtrip_and_sizes() {
        let (alice, bob) = keys();
        let store = ContentStore::new();
        let mut ledger = CommLedger::new(0, ["p", "r"]);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut lens = Vec::new();
        for blob in [vec![], vec![7u8; 10], vec![1u8; 5000]] {
            let env = share(&store, "p", "r", &blob, bob.public(), &mut rng, &mut ledger, 0).unwrap();
            assert_eq!(env.encrypted_cid.len(), NONCE_LEN + CONTENT_ID_LEN + TAG_LEN);
            assert_eq!(env.encrypted_key.len(), DEFAULT_RSA_BITS / 8);
            assert_eq!(receive(&env, bob, &store).unwrap(), blob);
            assert!(matches!(receive(&env, alice, &store), Err(StoreError::Crypto(_))));
            assert_eq!(Envelope::from_bytes(&env.to_bytes()).unwrap(), env);
            lens.push(env.wire_len());
        }
        assert!(lens.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(ledger.total_bytes(), 3 * lens[0] as u64);
    }

    #[test]
    fn tampering_detected() {
        let (_, bob) = keys();
        let store = ContentStore::new();
        let mut ledger = CommLedger::new(0, ["p", "r"]);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let env = share(&store, "p", "r", b"payload", bob.public(), &mut rng, &mut ledger, 0).unwrap();
        for bit in [0, 8 * NONCE_LEN + 3, 8 * env.encrypted_cid.len() - 1] {
            let mut bad = env.clone();
            bad.encrypted_cid[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(receive(&bad, bob, &store), Err(StoreError::Authentication));
        }
        let mut bad = env.clone();
        bad.sender = "mallory".into();
        assert_eq!(receive(&bad, bob, &store), Err(StoreError::Authentication));
        let other = ContentStore::new();
        assert!(matches!(receive(&env, bob, &other), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn envelope_decode_rejects_garbage() {
        assert!(Envelope::from_bytes(&[1, 0, 0]).is_err());
        assert!(Envelope::from_bytes(&[9, 0, 0, 0, b'a']).is_err());
    }
}

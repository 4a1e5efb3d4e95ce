//! Cryptographic suite.
//!
//! The protocol layers never name concrete algorithms; they consume the
//! interfaces here. The concrete bindings are fixed in one place:
//!
//! * signatures: ECDSA over secp256k1, 33-byte compressed public keys,
//!   64-byte low-s signatures
//! * authenticated encryption: AES-128-GCM with explicit 96-bit nonces
//! * hash: SHA-256
//! * key agreement: x25519 + HKDF-SHA256, see [`handshake`]
//!
//! AE nonces are never sampled in the channel protocol: they are counters
//! scoped per key, direction, and sender, carried in the envelope header.
//! [`ae_seal`]/[`ae_open`] provide a random-nonce convenience form for
//! callers outside that scheme.

use aes_gcm::aead::generic_array::GenericArray;
use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::Aes128Gcm;
use k256::ecdsa::signature::hazmat::PrehashVerifier;
use k256::ecdsa::{self, signature::hazmat::PrehashSigner, SigningKey, VerifyingKey};
use k256::elliptic_curve::scalar::IsHigh;
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub mod handshake;

pub const PK_LEN: usize = 33;
pub const SIG_LEN: usize = 64;
pub const KEY_LEN: usize = 16;
pub const DIGEST_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
/// GCM authentication tag size; ciphertext = plaintext + this.
pub const TAG_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed signing key")]
    MalformedKey,
    #[error("malformed public key encoding")]
    MalformedPublicKey,
    #[error("authenticated decryption failed")]
    AuthFailure,
    #[error("key agreement transcript mismatch")]
    HandshakeFailure,
}

// ── Digests ────────────────────────────────────────────────────────────

/// 256-bit hash output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn from_bytes(b: [u8; DIGEST_LEN]) -> Self {
        Self(b)
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({})", &hex::encode(self.0)[..12])
    }
}

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

pub fn hash(input: &[u8]) -> Digest {
    Digest(Sha256::digest(input).into())
}

/// Hash of several segments with unambiguous boundaries.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    Digest(h.finalize().into())
}

// ── Signature scheme ───────────────────────────────────────────────────

/// Canonical public verification key. Byte-equal iff the same key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountPk(pub [u8; PK_LEN]);

impl AccountPk {
    pub fn as_bytes(&self) -> &[u8; PK_LEN] {
        &self.0
    }

    pub fn from_bytes(b: [u8; PK_LEN]) -> Self {
        Self(b)
    }

    fn verifying_key(&self) -> Result<VerifyingKey, CryptoError> {
        VerifyingKey::from_sec1_bytes(&self.0).map_err(|_| CryptoError::MalformedPublicKey)
    }
}

impl std::fmt::Debug for AccountPk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "pk:{}", &hex::encode(self.0)[..10])
    }
}

impl std::fmt::Display for AccountPk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIG_LEN]);

impl Signature {
    pub fn as_bytes(&self) -> &[u8; SIG_LEN] {
        &self.0
    }

    pub fn from_bytes(b: [u8; SIG_LEN]) -> Self {
        Self(b)
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sig:{}", &hex::encode(self.0)[..10])
    }
}

/// Signing key plus its canonical public key.
#[derive(Clone)]
pub struct SigKeyPair {
    sk: SigningKey,
    pk: AccountPk,
}

impl SigKeyPair {
    pub fn public(&self) -> AccountPk {
        self.pk
    }

    pub fn from_secret_bytes(sk: &[u8; 32]) -> Result<Self, CryptoError> {
        let sk = SigningKey::from_bytes(sk.into()).map_err(|_| CryptoError::MalformedKey)?;
        let pk = AccountPk(
            VerifyingKey::from(&sk)
                .to_encoded_point(true)
                .as_bytes()
                .try_into()
                .unwrap(),
        );
        Ok(Self { sk, pk })
    }
}

impl std::fmt::Debug for SigKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigKeyPair({:?})", self.pk)
    }
}

/// Fresh signing keypair from the OS entropy source.
pub fn keygen() -> SigKeyPair {
    keygen_with(&mut OsRng)
}

/// Deterministic keypair for reproducible runs.
pub fn keygen_seeded(seed: u64) -> SigKeyPair {
    keygen_with(&mut ChaCha20Rng::seed_from_u64(seed))
}

pub fn keygen_with<R: RngCore + CryptoRng>(rng: &mut R) -> SigKeyPair {
    let sk = SigningKey::random(rng);
    let pk = AccountPk(
        VerifyingKey::from(&sk)
            .to_encoded_point(true)
            .as_bytes()
            .try_into()
            .unwrap(),
    );
    SigKeyPair { sk, pk }
}

/// Sign an arbitrary message. The message is hashed internally, so signing
/// time is independent of message size.
pub fn sign(kp: &SigKeyPair, message: &[u8]) -> Signature {
    let digest = Sha256::digest(message);
    let sig: ecdsa::Signature = kp.sk.sign_prehash(&digest).expect("prehash length is fixed");
    let sig = sig.normalize_s().unwrap_or(sig);
    Signature(sig.to_bytes().into())
}

/// True iff `signature` is a valid signature on `message` under `pk`.
/// Malformed inputs verify as false rather than erroring.
pub fn verify(pk: &AccountPk, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = pk.verifying_key() else {
        return false;
    };
    let Ok(sig) = ecdsa::Signature::from_slice(&signature.0) else {
        return false;
    };
    // Reject the malleable high-s form so encodings stay canonical.
    if sig.s().is_high().into() {
        return false;
    }
    let digest = Sha256::digest(message);
    vk.verify_prehash(&digest, &sig).is_ok()
}

// ── Authenticated encryption ───────────────────────────────────────────

/// 128-bit symmetric channel key. Never leaves the enclave boundary in
/// plaintext; the raw bytes are crate-private.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey(pub(crate) [u8; KEY_LEN]);

impl SymmetricKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    pub(crate) fn from_bytes(b: [u8; KEY_LEN]) -> Self {
        Self(b)
    }

    fn cipher(&self) -> Aes128Gcm {
        Aes128Gcm::new(GenericArray::from_slice(&self.0))
    }
}

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// Encrypt with an explicit nonce. The caller owns nonce uniqueness;
/// the channel layer derives nonces from direction and send counters.
pub fn ae_encrypt_with_nonce(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    associated_data: &[u8],
    plaintext: &[u8],
) -> Vec<u8> {
    let mut buf = Vec::with_capacity(plaintext.len() + TAG_LEN);
    buf.extend_from_slice(plaintext);
    let tag = key
        .cipher()
        .encrypt_in_place_detached(GenericArray::from_slice(nonce), associated_data, &mut buf)
        .expect("in-place encryption cannot fail");
    buf.extend_from_slice(&tag);
    buf
}

pub fn ae_decrypt_with_nonce(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    associated_data: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < TAG_LEN {
        return Err(CryptoError::AuthFailure);
    }
    let (body, tag) = ciphertext.split_at(ciphertext.len() - TAG_LEN);
    let mut buf = body.to_vec();
    key.cipher()
        .decrypt_in_place_detached(
            GenericArray::from_slice(nonce),
            associated_data,
            &mut buf,
            GenericArray::from_slice(tag),
        )
        .map_err(|_| CryptoError::AuthFailure)?;
    Ok(buf)
}

/// Random-nonce form: the fresh nonce is prepended to the ciphertext.
pub fn ae_seal(key: &SymmetricKey, associated_data: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    OsRng.fill_bytes(&mut nonce);
    let mut out = Vec::with_capacity(NONCE_LEN + plaintext.len() + TAG_LEN);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ae_encrypt_with_nonce(key, &nonce, associated_data, plaintext));
    out
}

pub fn ae_open(
    key: &SymmetricKey,
    associated_data: &[u8],
    sealed: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    if sealed.len() < NONCE_LEN + TAG_LEN {
        return Err(CryptoError::AuthFailure);
    }
    let (nonce, ct) = sealed.split_at(NONCE_LEN);
    ae_decrypt_with_nonce(key, nonce.try_into().unwrap(), associated_data, ct)
}

// ── Channel identifiers ────────────────────────────────────────────────

/// Channel id: hash of the participant public keys in ascending canonical
/// byte order. Every participant computes the identical value.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ccid(pub Digest);

impl Ccid {
    pub fn derive(participants: &[AccountPk]) -> Self {
        let mut sorted: Vec<&AccountPk> = participants.iter().collect();
        sorted.sort();
        let mut h = Sha256::new();
        for pk in sorted {
            h.update(pk.as_bytes());
        }
        Ccid(Digest(h.finalize().into()))
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        self.0.as_bytes()
    }

    pub fn from_bytes(b: [u8; DIGEST_LEN]) -> Self {
        Ccid(Digest(b))
    }
}

impl std::fmt::Debug for Ccid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ccid:{}", &hex::encode(self.0 .0)[..10])
    }
}

impl std::fmt::Display for Ccid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0 .0))
    }
}

/// Participants in descending canonical order: the turn order for
/// multi-party channels. The highest-ordered member moves first.
pub fn turn_order(participants: &[AccountPk]) -> Vec<AccountPk> {
    let mut sorted = participants.to_vec();
    sorted.sort();
    sorted.reverse();
    sorted
}

//! Channel key agreement.
//!
//! Two enclaves derive a shared channel key with a two-message handshake:
//! x25519 ephemeral Diffie-Hellman, authenticated by each side's account
//! signature over a transcript that binds both account keys and both
//! attestation evidence digests. Splicing a message into a different
//! session changes the transcript and the derived keys diverge.
//!
//! Group keys for multi-party channels are not negotiated pairwise-by-
//! pairwise: the highest-ordered member samples a seed and distributes it
//! over the already-established pairwise channels, and every member expands
//! the seed bound to the multi-party channel id.

use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use x25519_dalek::{PublicKey as DhPublic, StaticSecret as DhSecret};

use super::{hash_parts, sign, verify, AccountPk, CryptoError, Digest, SigKeyPair, Signature, SymmetricKey, KEY_LEN};
use crate::codec::{CodecError, Reader, Writer};

pub const DH_LEN: usize = 32;
pub const GROUP_SEED_LEN: usize = 16;

const MSG1_LABEL: &[u8] = b"certchan/ka1";
const MSG2_LABEL: &[u8] = b"certchan/ka2";
const CK_INFO: &[u8] = b"certchan/channel-key/v1";
const GK_INFO: &[u8] = b"certchan/group-key/v1";

/// One handshake message: the sender's ephemeral share signed under its
/// account key over the running transcript.
#[derive(Clone, PartialEq, Eq)]
pub struct HandshakeMsg {
    pub sender: AccountPk,
    pub ephemeral: [u8; DH_LEN],
    pub sig: Signature,
}

impl HandshakeMsg {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(140);
        w.put_raw(self.sender.as_bytes())
            .put_raw(&self.ephemeral)
            .put_raw(self.sig.as_bytes());
        w.into_vec()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(buf);
        let sender = AccountPk::from_bytes(r.array()?);
        let ephemeral = r.array()?;
        let sig = Signature::from_bytes(r.array()?);
        r.finish()?;
        Ok(Self {
            sender,
            ephemeral,
            sig,
        })
    }
}

/// Evidence digests bound into the transcript: each side commits to the
/// attestation it presented and the one it verified.
#[derive(Clone, Copy)]
pub struct TranscriptBinding {
    pub initiator_evidence: Digest,
    pub responder_evidence: Digest,
}

fn msg1_transcript(b: &TranscriptBinding, init: &AccountPk, resp: &AccountPk, eph: &[u8; DH_LEN]) -> Digest {
    hash_parts(&[
        MSG1_LABEL,
        init.as_bytes(),
        resp.as_bytes(),
        eph,
        b.initiator_evidence.as_bytes(),
        b.responder_evidence.as_bytes(),
    ])
}

fn msg2_transcript(
    b: &TranscriptBinding,
    init: &AccountPk,
    resp: &AccountPk,
    eph1: &[u8; DH_LEN],
    eph2: &[u8; DH_LEN],
) -> Digest {
    hash_parts(&[
        MSG2_LABEL,
        init.as_bytes(),
        resp.as_bytes(),
        eph1,
        eph2,
        b.initiator_evidence.as_bytes(),
        b.responder_evidence.as_bytes(),
    ])
}

fn expand_channel_key(shared: &[u8; 32], transcript: &Digest, a: &AccountPk, b: &AccountPk) -> SymmetricKey {
    let (lo, hi) = if a.as_bytes() <= b.as_bytes() { (a, b) } else { (b, a) };
    let hk = Hkdf::<Sha256>::new(Some(transcript.as_bytes()), shared);
    let mut okm = [0u8; KEY_LEN];
    let mut info = Vec::with_capacity(CK_INFO.len() + 66);
    info.extend_from_slice(CK_INFO);
    info.extend_from_slice(lo.as_bytes());
    info.extend_from_slice(hi.as_bytes());
    hk.expand(&info, &mut okm).expect("okm length valid");
    SymmetricKey::from_bytes(okm)
}

/// Initiator state held between emitting message 1 and receiving message 2.
#[derive(Clone)]
pub struct Initiator {
    secret: DhSecret,
    local_pk: AccountPk,
    remote_pk: AccountPk,
    binding: TranscriptBinding,
    eph_pub: [u8; DH_LEN],
}

impl Initiator {
    pub fn start<R: RngCore + CryptoRng>(
        keypair: &SigKeyPair,
        remote_pk: AccountPk,
        binding: TranscriptBinding,
        rng: &mut R,
    ) -> (Self, HandshakeMsg) {
        let secret = DhSecret::random_from_rng(rng);
        let eph_pub = DhPublic::from(&secret).to_bytes();
        let t = msg1_transcript(&binding, &keypair.public(), &remote_pk, &eph_pub);
        let msg = HandshakeMsg {
            sender: keypair.public(),
            ephemeral: eph_pub,
            sig: sign(keypair, t.as_bytes()),
        };
        (
            Self {
                secret,
                local_pk: keypair.public(),
                remote_pk,
                binding,
                eph_pub,
            },
            msg,
        )
    }

    /// Verify message 2 and derive the channel key.
    pub fn finish(self, msg2: &HandshakeMsg) -> Result<SymmetricKey, CryptoError> {
        if msg2.sender != self.remote_pk {
            return Err(CryptoError::HandshakeFailure);
        }
        let t2 = msg2_transcript(
            &self.binding,
            &self.local_pk,
            &self.remote_pk,
            &self.eph_pub,
            &msg2.ephemeral,
        );
        if !verify(&msg2.sender, t2.as_bytes(), &msg2.sig) {
            return Err(CryptoError::HandshakeFailure);
        }
        let shared = self.secret.diffie_hellman(&DhPublic::from(msg2.ephemeral));
        Ok(expand_channel_key(
            shared.as_bytes(),
            &t2,
            &self.local_pk,
            &self.remote_pk,
        ))
    }
}

/// Responder side: verify message 1, emit message 2, derive the key.
pub fn respond<R: RngCore + CryptoRng>(
    keypair: &SigKeyPair,
    initiator_pk: AccountPk,
    binding: TranscriptBinding,
    msg1: &HandshakeMsg,
    rng: &mut R,
) -> Result<(SymmetricKey, HandshakeMsg), CryptoError> {
    if msg1.sender != initiator_pk {
        return Err(CryptoError::HandshakeFailure);
    }
    let t1 = msg1_transcript(&binding, &initiator_pk, &keypair.public(), &msg1.ephemeral);
    if !verify(&msg1.sender, t1.as_bytes(), &msg1.sig) {
        return Err(CryptoError::HandshakeFailure);
    }
    let secret = DhSecret::random_from_rng(rng);
    let eph_pub = DhPublic::from(&secret).to_bytes();
    let t2 = msg2_transcript(
        &binding,
        &initiator_pk,
        &keypair.public(),
        &msg1.ephemeral,
        &eph_pub,
    );
    let msg2 = HandshakeMsg {
        sender: keypair.public(),
        ephemeral: eph_pub,
        sig: sign(keypair, t2.as_bytes()),
    };
    let shared = secret.diffie_hellman(&DhPublic::from(msg1.ephemeral));
    let ck = expand_channel_key(shared.as_bytes(), &t2, &initiator_pk, &keypair.public());
    Ok((ck, msg2))
}

/// Expand a distributed group seed into the group key for one multi-party
/// channel. Binding the channel id in means the same seed can never yield
/// the same key for two different channels.
pub fn derive_group_key(seed: &[u8; GROUP_SEED_LEN], channel: &crate::crypto::Ccid) -> SymmetricKey {
    let hk = Hkdf::<Sha256>::new(Some(channel.as_bytes()), seed);
    let mut okm = [0u8; KEY_LEN];
    hk.expand(GK_INFO, &mut okm).expect("okm length valid");
    SymmetricKey::from_bytes(okm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen_seeded, Ccid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn binding() -> TranscriptBinding {
        TranscriptBinding {
            initiator_evidence: crate::crypto::hash(b"evidence-a"),
            responder_evidence: crate::crypto::hash(b"evidence-b"),
        }
    }

    #[test]
    fn honest_run_yields_equal_keys() {
        let a = keygen_seeded(1);
        let b = keygen_seeded(2);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (init, m1) = Initiator::start(&a, b.public(), binding(), &mut rng);
        let (ck_b, m2) = respond(&b, a.public(), binding(), &m1, &mut rng).unwrap();
        let ck_a = init.finish(&m2).unwrap();
        assert_eq!(ck_a, ck_b);
    }

    #[test]
    fn tampered_transcript_fails_or_diverges() {
        let a = keygen_seeded(1);
        let b = keygen_seeded(2);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let (init, m1) = Initiator::start(&a, b.public(), binding(), &mut rng);

        // Flipped ephemeral share breaks the signature check.
        let mut bad = m1.clone();
        bad.ephemeral[0] ^= 1;
        assert!(respond(&b, a.public(), binding(), &bad, &mut rng).is_err());

        // Divergent evidence binding: responder accepts its own view but the
        // initiator rejects message 2 signed over the other transcript.
        let other_binding = TranscriptBinding {
            initiator_evidence: crate::crypto::hash(b"evidence-x"),
            responder_evidence: crate::crypto::hash(b"evidence-b"),
        };
        let r = respond(&b, a.public(), other_binding, &m1, &mut rng);
        match r {
            Err(_) => {}
            Ok((_, m2)) => assert!(init.finish(&m2).is_err()),
        }
    }

    #[test]
    fn distinct_sessions_get_distinct_keys() {
        let a = keygen_seeded(1);
        let b = keygen_seeded(2);
        let c = keygen_seeded(3);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (i1, m1) = Initiator::start(&a, b.public(), binding(), &mut rng);
        let (_, m2) = respond(&b, a.public(), binding(), &m1, &mut rng).unwrap();
        let ck_ab = i1.finish(&m2).unwrap();

        let (i2, m1c) = Initiator::start(&a, c.public(), binding(), &mut rng);
        let (_, m2c) = respond(&c, a.public(), binding(), &m1c, &mut rng).unwrap();
        let ck_ac = i2.finish(&m2c).unwrap();
        assert_ne!(ck_ab, ck_ac);
    }

    #[test]
    fn group_key_is_channel_bound() {
        let pks: Vec<_> = (0..3).map(|i| keygen_seeded(30 + i).public()).collect();
        let seed = [5u8; GROUP_SEED_LEN];
        let ccid1 = Ccid::derive(&pks);
        let ccid2 = Ccid::derive(&pks[..2]);
        assert_ne!(
            derive_group_key(&seed, &ccid1).0,
            derive_group_key(&seed, &ccid2).0
        );
        assert_eq!(
            derive_group_key(&seed, &ccid1).0,
            derive_group_key(&seed, &ccid1).0
        );
    }

    #[test]
    fn handshake_msg_codec_round_trip() {
        let a = keygen_seeded(4);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let (_, m1) = Initiator::start(&a, keygen_seeded(5).public(), binding(), &mut rng);
        let decoded = HandshakeMsg::decode(&m1.encode()).unwrap();
        assert!(decoded == m1);
    }
}

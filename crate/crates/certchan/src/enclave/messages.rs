//! Message and command formats crossing the enclave boundary.
//!
//! The host talks to its enclave through `resume` with the tagged commands
//! defined here, and relays three kinds of channel messages between
//! enclaves: envelopes (contract transactions), acks (state-digest
//! confirmations), and setup messages (certificate delivery and group-key
//! distribution). Channel messages are authenticated under the channel key;
//! in the signature comparison mode the ciphertext is replaced by plaintext
//! plus a per-message account signature over the same header.
//!
//! Nonces never repeat under a key: they pack a direction byte, the sender
//! index within the channel, and a strictly increasing counter.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::contracts::ContractError;
use crate::crypto::{self, AccountPk, Ccid, Digest, SigKeyPair, Signature, SymmetricKey, NONCE_LEN};
use crate::ledger::OnChainTx;
use crate::tee::ProgramFault;

// ── Channel security mode ──────────────────────────────────────────────

/// How channel messages are authenticated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecurityMode {
    /// Authenticated encryption under the channel key.
    AuthEncrypted,
    /// Plaintext plus a per-message account signature; the baseline that
    /// signature-based channel designs pay on every transaction.
    PerTxSignature,
}

impl SecurityMode {
    pub fn to_byte(self) -> u8 {
        match self {
            SecurityMode::AuthEncrypted => 0,
            SecurityMode::PerTxSignature => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, CodecError> {
        match b {
            0 => Ok(SecurityMode::AuthEncrypted),
            1 => Ok(SecurityMode::PerTxSignature),
            tag => Err(CodecError::BadTag { tag, context: "security mode" }),
        }
    }
}

// ── Direction bytes for nonce / associated-data domains ────────────────

pub(crate) const DIR_ENVELOPE: u8 = 0x00;
pub(crate) const DIR_ACK: u8 = 0x01;
pub(crate) const DIR_SETUP: u8 = 0x02;

fn nonce_for(dir: u8, sender_idx: u32, counter: u64) -> [u8; NONCE_LEN] {
    debug_assert!(sender_idx < (1 << 24));
    let mut n = [0u8; NONCE_LEN];
    n[0] = dir;
    n[1..4].copy_from_slice(&sender_idx.to_be_bytes()[1..]);
    n[4..].copy_from_slice(&counter.to_be_bytes());
    n
}

fn header_ad(label: &[u8], ccid: &Ccid, sender_idx: u32, counter: u64) -> Vec<u8> {
    let mut w = Writer::with_capacity(label.len() + 44);
    w.put_raw(label).put_raw(ccid.as_bytes()).put_u32(sender_idx).put_u64(counter);
    w.into_vec()
}

/// Seal or sign a message payload under the channel's mode.
pub(crate) fn protect(
    mode: SecurityMode,
    key: &SymmetricKey,
    keypair: &SigKeyPair,
    dir: u8,
    label: &[u8],
    ccid: &Ccid,
    sender_idx: u32,
    counter: u64,
    plaintext: &[u8],
) -> Vec<u8> {
    let ad = header_ad(label, ccid, sender_idx, counter);
    match mode {
        SecurityMode::AuthEncrypted => crypto::ae_encrypt_with_nonce(
            key,
            &nonce_for(dir, sender_idx, counter),
            &ad,
            plaintext,
        ),
        SecurityMode::PerTxSignature => {
            let mut signed = Vec::with_capacity(ad.len() + plaintext.len());
            signed.extend_from_slice(&ad);
            signed.extend_from_slice(plaintext);
            let sig = crypto::sign(keypair, &signed);
            let mut w = Writer::with_capacity(plaintext.len() + 68);
            w.put_bytes(plaintext).put_raw(sig.as_bytes());
            w.into_vec()
        }
    }
}

/// Inverse of [`protect`]; `signer` is the expected message author in
/// signature mode.
pub(crate) fn unprotect(
    mode: SecurityMode,
    key: &SymmetricKey,
    signer: &AccountPk,
    dir: u8,
    label: &[u8],
    ccid: &Ccid,
    sender_idx: u32,
    counter: u64,
    payload: &[u8],
) -> Result<Vec<u8>, EnclaveError> {
    let ad = header_ad(label, ccid, sender_idx, counter);
    match mode {
        SecurityMode::AuthEncrypted => crypto::ae_decrypt_with_nonce(
            key,
            &nonce_for(dir, sender_idx, counter),
            &ad,
            payload,
        )
        .map_err(|_| EnclaveError::AuthFailure),
        SecurityMode::PerTxSignature => {
            let mut r = Reader::new(payload);
            let plaintext = r.bytes().map_err(|_| EnclaveError::AuthFailure)?;
            let sig = Signature::from_bytes(r.array().map_err(|_| EnclaveError::AuthFailure)?);
            r.finish().map_err(|_| EnclaveError::AuthFailure)?;
            let mut signed = Vec::with_capacity(ad.len() + plaintext.len());
            signed.extend_from_slice(&ad);
            signed.extend_from_slice(plaintext);
            if !crypto::verify(signer, &signed, &sig) {
                return Err(EnclaveError::AuthFailure);
            }
            Ok(plaintext.to_vec())
        }
    }
}

pub(crate) const LABEL_ENVELOPE: &[u8] = b"env";
pub(crate) const LABEL_ACK: &[u8] = b"ack";
pub(crate) const LABEL_SETUP: &[u8] = b"set";

// ── Channel messages ───────────────────────────────────────────────────

/// A protected contract transaction in transit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub ccid: Ccid,
    pub mode: SecurityMode,
    pub sender_idx: u32,
    pub counter: u64,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(50 + self.payload.len());
        w.put_raw(self.ccid.as_bytes())
            .put_u8(self.mode.to_byte())
            .put_u32(self.sender_idx)
            .put_u64(self.counter)
            .put_bytes(&self.payload);
        w.into_vec()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(buf);
        let out = Self {
            ccid: Ccid::from_bytes(r.array()?),
            mode: SecurityMode::from_byte(r.u8()?)?,
            sender_idx: r.u32()?,
            counter: r.u64()?,
            payload: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(out)
    }
}

/// Receiver's confirmation of an applied envelope: the resulting state
/// digest, protected under the channel key in the acker's nonce space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ack {
    pub ccid: Ccid,
    pub mode: SecurityMode,
    pub acker_idx: u32,
    pub ack_counter: u64,
    pub payload: Vec<u8>,
}

impl Ack {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(50 + self.payload.len());
        w.put_raw(self.ccid.as_bytes())
            .put_u8(self.mode.to_byte())
            .put_u32(self.acker_idx)
            .put_u64(self.ack_counter)
            .put_bytes(&self.payload);
        w.into_vec()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(buf);
        let out = Self {
            ccid: Ccid::from_bytes(r.array()?),
            mode: SecurityMode::from_byte(r.u8()?)?,
            acker_idx: r.u32()?,
            ack_counter: r.u64()?,
            payload: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(out)
    }
}

/// Body confirmed inside an ack.
pub(crate) struct AckBody {
    pub sender_idx: u32,
    pub acked_counter: u64,
    pub state_digest: Digest,
}

impl AckBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(44);
        w.put_u32(self.sender_idx).put_u64(self.acked_counter).put_raw(self.state_digest.as_bytes());
        w.into_vec()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(buf);
        let out = Self {
            sender_idx: r.u32()?,
            acked_counter: r.u64()?,
            state_digest: Digest::from_bytes(r.array()?),
        };
        r.finish()?;
        Ok(out)
    }
}

/// Pre-traffic channel message: certificate delivery or group-key
/// distribution over a pairwise channel, or the group open notice under
/// the group key itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetupMsg {
    pub ccid: Ccid,
    pub mode: SecurityMode,
    pub sender_idx: u32,
    pub counter: u64,
    pub payload: Vec<u8>,
}

impl SetupMsg {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(50 + self.payload.len());
        w.put_raw(self.ccid.as_bytes())
            .put_u8(self.mode.to_byte())
            .put_u32(self.sender_idx)
            .put_u64(self.counter)
            .put_bytes(&self.payload);
        w.into_vec()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(buf);
        let out = Self {
            ccid: Ccid::from_bytes(r.array()?),
            mode: SecurityMode::from_byte(r.u8()?)?,
            sender_idx: r.u32()?,
            counter: r.u64()?,
            payload: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(out)
    }
}

pub(crate) const SETUP_CERT: u8 = 1;
pub(crate) const SETUP_GROUP_KEY: u8 = 2;
pub(crate) const SETUP_GROUP_NOTICE: u8 = 3;

/// Transaction payload carried inside an envelope.
pub(crate) struct Aux {
    pub sender: AccountPk,
    pub input: Vec<u8>,
    pub new_state: Vec<u8>,
    pub output: Vec<u8>,
}

impl Aux {
    pub fn encode(&self) -> Vec<u8> {
        let mut w =
            Writer::with_capacity(45 + self.input.len() + self.new_state.len() + self.output.len());
        w.put_raw(self.sender.as_bytes())
            .put_bytes(&self.input)
            .put_bytes(&self.new_state)
            .put_bytes(&self.output);
        w.into_vec()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(buf);
        let out = Self {
            sender: AccountPk::from_bytes(r.array()?),
            input: r.bytes()?.to_vec(),
            new_state: r.bytes()?.to_vec(),
            output: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(out)
    }
}

// ── Enclave errors ─────────────────────────────────────────────────────

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnclaveError {
    #[error("account not initialized")]
    NotInitialized,
    #[error("account already initialized")]
    AlreadyInitialized,
    #[error("account is frozen")]
    Frozen,
    #[error("deposit names a different beneficiary")]
    WrongBeneficiary,
    #[error("bad signature")]
    BadSignature,
    #[error("deposit already applied")]
    DuplicateDeposit,
    #[error("channel already exists for this participant set")]
    DuplicateChannel,
    #[error("no channel with that id")]
    UnknownChannel,
    #[error("no agreed key for that peer")]
    NoPendingKey,
    #[error("channel is not certified")]
    NotCertified,
    #[error("certificate already stored for that peer")]
    DuplicateCert,
    #[error("certificate rejected")]
    BadCertificate,
    #[error("initial-state anchor mismatch")]
    StateAnchorMismatch,
    #[error("initial state not confirmed on the ledger")]
    LedgerCheckFailed,
    #[error("send would exceed the available balance")]
    Overspend,
    #[error("not this member's turn")]
    OutOfTurn,
    #[error("message counter already applied")]
    CounterReplay,
    #[error("message counter gap")]
    CounterGap,
    #[error("message failed authentication")]
    AuthFailure,
    #[error("peer state diverged")]
    StateMismatch,
    #[error("channel marked faulty")]
    ChannelFaulty,
    #[error("missing pairwise channel with a group member")]
    MissingPairwiseChannel,
    #[error("group requires at least three members")]
    TooFewMembers,
    #[error("cannot open a channel with self")]
    SelfChannel,
    #[error("initial state is empty; deposit first")]
    NoInitialState,
    #[error("balance cannot cover the required stake lock")]
    InsufficientStake,
    #[error("attestation evidence rejected")]
    EvidenceRejected,
    #[error("key agreement failed")]
    HandshakeFailure,
    #[error("security mode mismatch")]
    ModeMismatch,
    #[error("malformed enclave command")]
    Malformed,
    #[error("contract: {0}")]
    Contract(ContractError),
}

impl EnclaveError {
    pub fn code(&self) -> u16 {
        use EnclaveError::*;
        match self {
            NotInitialized => 1,
            AlreadyInitialized => 2,
            Frozen => 3,
            WrongBeneficiary => 4,
            BadSignature => 5,
            DuplicateDeposit => 6,
            DuplicateChannel => 7,
            UnknownChannel => 8,
            NoPendingKey => 9,
            NotCertified => 10,
            DuplicateCert => 11,
            BadCertificate => 12,
            StateAnchorMismatch => 13,
            LedgerCheckFailed => 14,
            Overspend => 15,
            OutOfTurn => 16,
            CounterReplay => 17,
            CounterGap => 18,
            AuthFailure => 19,
            StateMismatch => 20,
            ChannelFaulty => 21,
            MissingPairwiseChannel => 22,
            TooFewMembers => 23,
            SelfChannel => 24,
            NoInitialState => 25,
            InsufficientStake => 26,
            EvidenceRejected => 27,
            HandshakeFailure => 28,
            ModeMismatch => 29,
            Malformed => 30,
            Contract(c) => {
                40 + match c {
                    ContractError::UnknownContract => 0,
                    ContractError::MalformedInput => 1,
                    ContractError::MalformedParams => 2,
                    ContractError::NotParticipant => 3,
                    ContractError::IllegalMove(_) => 4,
                    ContractError::Overspend => 5,
                    ContractError::Finished => 6,
                    ContractError::NotZeroSum => 7,
                    ContractError::CorruptState(_) => 8,
                }
            }
        }
    }

    pub fn into_fault(self) -> ProgramFault {
        ProgramFault { code: self.code(), message: self.to_string() }
    }

    /// Host-side classification of a fault code. Contract detail strings
    /// do not survive the boundary; the class does.
    pub fn from_fault(f: &ProgramFault) -> Option<Self> {
        use EnclaveError::*;
        Some(match f.code {
            1 => NotInitialized,
            2 => AlreadyInitialized,
            3 => Frozen,
            4 => WrongBeneficiary,
            5 => BadSignature,
            6 => DuplicateDeposit,
            7 => DuplicateChannel,
            8 => UnknownChannel,
            9 => NoPendingKey,
            10 => NotCertified,
            11 => DuplicateCert,
            12 => BadCertificate,
            13 => StateAnchorMismatch,
            14 => LedgerCheckFailed,
            15 => Overspend,
            16 => OutOfTurn,
            17 => CounterReplay,
            18 => CounterGap,
            19 => AuthFailure,
            20 => StateMismatch,
            21 => ChannelFaulty,
            22 => MissingPairwiseChannel,
            23 => TooFewMembers,
            24 => SelfChannel,
            25 => NoInitialState,
            26 => InsufficientStake,
            27 => EvidenceRejected,
            28 => HandshakeFailure,
            29 => ModeMismatch,
            30 => Malformed,
            40 => Contract(ContractError::UnknownContract),
            41 => Contract(ContractError::MalformedInput),
            42 => Contract(ContractError::MalformedParams),
            43 => Contract(ContractError::NotParticipant),
            44 => Contract(ContractError::IllegalMove("")),
            45 => Contract(ContractError::Overspend),
            46 => Contract(ContractError::Finished),
            47 => Contract(ContractError::NotZeroSum),
            _ => return None,
        })
    }
}

impl From<ContractError> for EnclaveError {
    fn from(e: ContractError) -> Self {
        EnclaveError::Contract(e)
    }
}

impl From<CodecError> for EnclaveError {
    fn from(_: CodecError) -> Self {
        EnclaveError::Malformed
    }
}

// ── Commands ───────────────────────────────────────────────────────────

pub(crate) const CMD_INIT: u8 = 0x01;
pub(crate) const CMD_DEPOSIT: u8 = 0x02;
pub(crate) const CMD_OPEN: u8 = 0x03;
pub(crate) const CMD_OPEN_MULTI: u8 = 0x04;
pub(crate) const CMD_AUTHENTICATE: u8 = 0x06;
pub(crate) const CMD_SEND: u8 = 0x07;
pub(crate) const CMD_RECEIVE: u8 = 0x08;
pub(crate) const CMD_RECEIVE_ACK: u8 = 0x09;
pub(crate) const CMD_CLAIM: u8 = 0x0a;
pub(crate) const CMD_KEYAGREE_INIT: u8 = 0x0b;
pub(crate) const CMD_KEYAGREE_RESPOND: u8 = 0x0c;
pub(crate) const CMD_KEYAGREE_FINISH: u8 = 0x0d;
pub(crate) const CMD_RECEIVE_SETUP: u8 = 0x0e;
pub(crate) const CMD_QUERY_ACCOUNT: u8 = 0x0f;
pub(crate) const CMD_QUERY_NETS: u8 = 0x10;
pub(crate) const CMD_QUERY_CHANNEL: u8 = 0x11;
pub(crate) const CMD_QUERY_ANCHOR: u8 = 0x12;

/// Host-side command builders. The enclave parses these in its dispatcher.
pub mod cmd {
    use super::*;
    use crate::contracts::ContractId;
    use crate::tee::AttestationEvidence;

    pub fn init(seed: Option<u64>) -> Vec<u8> {
        let mut w = Writer::with_capacity(10);
        w.put_u8(CMD_INIT);
        match seed {
            Some(s) => w.put_u8(1).put_u64(s),
            None => w.put_u8(0),
        };
        w.into_vec()
    }

    pub fn deposit(tx: &OnChainTx) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_DEPOSIT).put_bytes(&tx.encode());
        w.into_vec()
    }

    pub fn open(cid: &ContractId, remote: &AccountPk, params: &[u8], mode: SecurityMode) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_OPEN)
            .put_raw(cid.as_bytes())
            .put_raw(remote.as_bytes())
            .put_bytes(params)
            .put_u8(mode.to_byte());
        w.into_vec()
    }

    pub fn open_multi(cid: &ContractId, params: &[u8], members: &[Ccid]) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_OPEN_MULTI).put_raw(cid.as_bytes()).put_bytes(params).put_count(members.len());
        for ccid in members {
            w.put_raw(ccid.as_bytes());
        }
        w.into_vec()
    }

    /// `confirmed` marks, per claimed deposit, whether the host found the
    /// transaction byte-identical on the ledger.
    pub fn authenticate(
        ccid: &Ccid,
        remote: &AccountPk,
        cert_bytes: &[u8],
        deposits: &[(OnChainTx, bool)],
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_AUTHENTICATE)
            .put_raw(ccid.as_bytes())
            .put_raw(remote.as_bytes())
            .put_bytes(cert_bytes)
            .put_count(deposits.len());
        for (tx, confirmed) in deposits {
            w.put_bytes(&tx.encode()).put_u8(*confirmed as u8);
        }
        w.into_vec()
    }

    pub fn send(ccid: &Ccid, input: &[u8]) -> Vec<u8> {
        let mut w = Writer::with_capacity(38 + input.len());
        w.put_u8(CMD_SEND).put_raw(ccid.as_bytes()).put_bytes(input);
        w.into_vec()
    }

    pub fn receive(envelope: &Envelope) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_RECEIVE).put_bytes(&envelope.encode());
        w.into_vec()
    }

    pub fn receive_ack(ack: &Ack) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_RECEIVE_ACK).put_bytes(&ack.encode());
        w.into_vec()
    }

    pub fn claim() -> Vec<u8> {
        vec![CMD_CLAIM]
    }

    pub fn keyagree_init(remote: &AccountPk, own_ev: &AttestationEvidence, remote_ev: &AttestationEvidence) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_KEYAGREE_INIT)
            .put_raw(remote.as_bytes())
            .put_bytes(&own_ev.encode())
            .put_bytes(&remote_ev.encode());
        w.into_vec()
    }

    pub fn keyagree_respond(
        remote: &AccountPk,
        own_ev: &AttestationEvidence,
        remote_ev: &AttestationEvidence,
        msg1: &[u8],
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_KEYAGREE_RESPOND)
            .put_raw(remote.as_bytes())
            .put_bytes(&own_ev.encode())
            .put_bytes(&remote_ev.encode())
            .put_bytes(msg1);
        w.into_vec()
    }

    pub fn keyagree_finish(remote: &AccountPk, msg2: &[u8]) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_KEYAGREE_FINISH).put_raw(remote.as_bytes()).put_bytes(msg2);
        w.into_vec()
    }

    pub fn receive_setup(msg: &SetupMsg) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(CMD_RECEIVE_SETUP).put_bytes(&msg.encode());
        w.into_vec()
    }

    pub fn query_account() -> Vec<u8> {
        vec![CMD_QUERY_ACCOUNT]
    }

    pub fn query_nets() -> Vec<u8> {
        vec![CMD_QUERY_NETS]
    }

    pub fn query_channel(ccid: &Ccid) -> Vec<u8> {
        let mut w = Writer::with_capacity(33);
        w.put_u8(CMD_QUERY_CHANNEL).put_raw(ccid.as_bytes());
        w.into_vec()
    }

    pub fn query_anchor() -> Vec<u8> {
        vec![CMD_QUERY_ANCHOR]
    }
}

/// Host-side response decoders matching the dispatcher's outputs.
pub mod resp {
    use super::*;

    pub fn init(buf: &[u8]) -> Result<(AccountPk, AccountPk), CodecError> {
        let mut r = Reader::new(buf);
        let pk = AccountPk::from_bytes(r.array()?);
        let mpk = AccountPk::from_bytes(r.array()?);
        r.finish()?;
        Ok((pk, mpk))
    }

    pub fn deposit(buf: &[u8]) -> Result<u64, CodecError> {
        let mut r = Reader::new(buf);
        let bal = r.u64()?;
        r.finish()?;
        Ok(bal)
    }

    pub struct OpenOut {
        pub cert_bytes: Vec<u8>,
        pub state0: Vec<OnChainTx>,
        pub output: Vec<u8>,
    }

    pub fn open(buf: &[u8]) -> Result<OpenOut, CodecError> {
        let mut r = Reader::new(buf);
        let cert_bytes = r.bytes()?.to_vec();
        let n = r.count()?;
        let mut state0 = Vec::with_capacity(n);
        for _ in 0..n {
            state0.push(OnChainTx::decode(r.bytes()?)?);
        }
        let output = r.bytes()?.to_vec();
        r.finish()?;
        Ok(OpenOut { cert_bytes, state0, output })
    }

    pub struct OpenMultiOut {
        pub group: Ccid,
        pub key_msgs: Vec<(AccountPk, SetupMsg)>,
        pub notice: SetupMsg,
    }

    pub fn open_multi(buf: &[u8]) -> Result<OpenMultiOut, CodecError> {
        let mut r = Reader::new(buf);
        let group = Ccid::from_bytes(r.array()?);
        let n = r.count()?;
        let mut key_msgs = Vec::with_capacity(n);
        for _ in 0..n {
            let pk = AccountPk::from_bytes(r.array()?);
            key_msgs.push((pk, SetupMsg::decode(r.bytes()?)?));
        }
        let notice = SetupMsg::decode(r.bytes()?)?;
        r.finish()?;
        Ok(OpenMultiOut { group, key_msgs, notice })
    }

    pub struct SendOut {
        pub output: Vec<u8>,
        pub envelope: Envelope,
    }

    pub fn send(buf: &[u8]) -> Result<SendOut, CodecError> {
        let mut r = Reader::new(buf);
        let output = r.bytes()?.to_vec();
        let envelope = Envelope::decode(r.bytes()?)?;
        r.finish()?;
        Ok(SendOut { output, envelope })
    }

    pub struct ReceiveOut {
        pub duplicate: bool,
        pub output: Vec<u8>,
        pub ack: Ack,
    }

    pub fn receive(buf: &[u8]) -> Result<ReceiveOut, CodecError> {
        let mut r = Reader::new(buf);
        let duplicate = r.u8()? == 1;
        let output = r.bytes()?.to_vec();
        let ack = Ack::decode(r.bytes()?)?;
        r.finish()?;
        Ok(ReceiveOut { duplicate, output, ack })
    }

    pub fn receive_ack(buf: &[u8]) -> Result<bool, CodecError> {
        let mut r = Reader::new(buf);
        let fresh = r.u8()? == 1;
        r.finish()?;
        Ok(fresh)
    }

    pub fn claim(buf: &[u8]) -> Result<OnChainTx, CodecError> {
        let mut r = Reader::new(buf);
        let tx = OnChainTx::decode(r.bytes()?)?;
        r.finish()?;
        Ok(tx)
    }

    pub enum SetupOut {
        /// Certificate and claimed initial state; the host must check the
        /// deposits on the ledger and call `authenticate`.
        Cert { cert_bytes: Vec<u8>, state0: Vec<OnChainTx> },
        /// Group key installed; the member now holds the group channel.
        GroupJoined { group: Ccid },
        /// Group open notice verified under the group key.
        NoticeOk { group: Ccid },
    }

    pub fn receive_setup(buf: &[u8]) -> Result<SetupOut, CodecError> {
        let mut r = Reader::new(buf);
        let kind = r.u8()?;
        let out = match kind {
            SETUP_CERT => {
                let cert_bytes = r.bytes()?.to_vec();
                let n = r.count()?;
                let mut state0 = Vec::with_capacity(n);
                for _ in 0..n {
                    state0.push(OnChainTx::decode(r.bytes()?)?);
                }
                SetupOut::Cert { cert_bytes, state0 }
            }
            SETUP_GROUP_KEY => SetupOut::GroupJoined { group: Ccid::from_bytes(r.array()?) },
            SETUP_GROUP_NOTICE => SetupOut::NoticeOk { group: Ccid::from_bytes(r.array()?) },
            tag => return Err(CodecError::BadTag { tag, context: "setup response" }),
        };
        r.finish()?;
        Ok(out)
    }

    pub fn query_account(buf: &[u8]) -> Result<(u64, u64, bool), CodecError> {
        let mut r = Reader::new(buf);
        let bal = r.u64()?;
        let locked = r.u64()?;
        let frozen = r.u8()? == 1;
        r.finish()?;
        Ok((bal, locked, frozen))
    }

    pub fn query_nets(buf: &[u8]) -> Result<BTreeMap<AccountPk, i64>, CodecError> {
        let mut r = Reader::new(buf);
        let n = r.count()?;
        let mut out = BTreeMap::new();
        for _ in 0..n {
            let pk = AccountPk::from_bytes(r.array()?);
            out.insert(pk, r.i64()?);
        }
        r.finish()?;
        Ok(out)
    }

    pub struct ChannelInfo {
        pub certified: bool,
        pub faulty: bool,
        pub members: Vec<AccountPk>,
        pub state: Vec<u8>,
    }

    pub fn query_channel(buf: &[u8]) -> Result<ChannelInfo, CodecError> {
        let mut r = Reader::new(buf);
        let certified = r.u8()? == 1;
        let faulty = r.u8()? == 1;
        let n = r.count()?;
        let mut members = Vec::with_capacity(n);
        for _ in 0..n {
            members.push(AccountPk::from_bytes(r.array()?));
        }
        let state = r.bytes()?.to_vec();
        r.finish()?;
        Ok(ChannelInfo { certified, faulty, members, state })
    }

    pub fn query_anchor(buf: &[u8]) -> Result<Digest, CodecError> {
        let mut r = Reader::new(buf);
        let d = Digest::from_bytes(r.array()?);
        r.finish()?;
        Ok(d)
    }
}

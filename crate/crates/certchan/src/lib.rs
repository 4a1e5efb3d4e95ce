//! Account-based certified state channels.
//!
//! A node funds an enclave-resident account with a single on-chain deposit,
//! then opens any number of direct channels entirely off-chain. Channel
//! endpoints attest each other, agree on a symmetric channel key, and
//! exchange certificates that make the final state claimable on-chain.
//! Channel traffic is authenticated-encryption ciphertext, not signatures;
//! one claim transaction settles every channel an account ever opened.
//!
//! Layout:
//! * [`crypto`] — signature scheme, AEAD, hashing, key agreement
//! * [`tee`] — simulated attested processor hosting enclave programs
//! * [`contracts`] — deterministic off-chain contract plug-ins
//! * [`ledger`] — simulated chain with the settlement contract
//! * [`enclave`] — the in-enclave channel state machine
//! * [`wire`] — frame format shared by the transports
//! * [`node`] — untrusted host: sessions, transports, operator API
//! * [`ideal`] — centralized reference model used for differential testing
//! * [`scenario`] — text scenario format and the runners for both worlds
//! * [`bench`] — throughput, latency, crypto and on-chain cost reporting

pub mod codec;
pub mod crypto;
pub mod ledger;
pub mod contracts;
pub mod tee;

pub use crypto::{AccountPk, Ccid, Digest, SigKeyPair, Signature, SymmetricKey};
pub use tee::{AttestationEvidence, AttestedOutput, EnclaveId, TeeRuntime};

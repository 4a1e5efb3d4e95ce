//! Simulated chain: an append-only transaction store validated by the
//! settlement contract, plus funder accounts, per-account escrow, and
//! on-chain cost accounting.
//!
//! Two transaction kinds exist. A deposit moves coins from a funder account
//! into escrow earmarked for an enclave account key. A claim freezes the
//! claimant key and settles its channels: for every certificate it carries,
//! the signed net value moves between the two escrows. Rejected
//! transactions change nothing; accepted ones can never be replaced or
//! removed. Total supply (accounts + escrow) is invariant under both.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{self, AccountPk, Digest, SigKeyPair, Signature};

pub type Coin = u64;

/// Transaction id: digest of the canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub Digest);

impl std::fmt::Debug for TxId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "tx:{}", &hex::encode(self.0 .0)[..10])
    }
}

impl std::fmt::Display for TxId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0 .0))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("transaction id already stored")]
    DuplicateTx,
    #[error("funder balance below deposit amount")]
    InsufficientFunds,
    #[error("bad transaction signature")]
    BadSignature,
    #[error("certificate rejected: {0}")]
    BadCertificate(&'static str),
    #[error("claim lists a counterparty with zero net value")]
    ZeroNetValue,
    #[error("claim net value has no matching certificate")]
    MissingCertificate,
    #[error("escrow balance cannot cover the claimed value")]
    EscrowUnderflow,
    #[error("account already settled by an earlier claim")]
    AccountFrozen,
    #[error("unknown funder account")]
    UnknownFunder,
    #[error("malformed transaction: {0}")]
    Malformed(CodecError),
    #[error("snapshot rejected: {0}")]
    BadSnapshot(&'static str),
}

// ── Certificates ───────────────────────────────────────────────────────

/// A channel certificate: the issuer binds the subject key, the channel
/// open input, and a digest of the issuer's ledger-anchored initial state
/// under its account signature. Whoever holds it can settle the channel's
/// net value against the issuer's escrow.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub issuer: AccountPk,
    pub subject: AccountPk,
    pub open_input: Vec<u8>,
    pub state0_anchor: Digest,
    pub sig: Signature,
}

impl Certificate {
    pub fn signed_payload(subject: &AccountPk, open_input: &[u8], anchor: &Digest) -> Vec<u8> {
        let mut w = Writer::with_capacity(80 + open_input.len());
        w.put_raw(b"certchan/cert")
            .put_raw(subject.as_bytes())
            .put_bytes(open_input)
            .put_raw(anchor.as_bytes());
        w.into_vec()
    }

    pub fn issue(issuer: &SigKeyPair, subject: AccountPk, open_input: Vec<u8>, anchor: Digest) -> Self {
        let sig = crypto::sign(issuer, &Self::signed_payload(&subject, &open_input, &anchor));
        Self {
            issuer: issuer.public(),
            subject,
            open_input,
            state0_anchor: anchor,
            sig,
        }
    }

    pub fn verify(&self) -> bool {
        crypto::verify(
            &self.issuer,
            &Self::signed_payload(&self.subject, &self.open_input, &self.state0_anchor),
            &self.sig,
        )
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.put_raw(self.issuer.as_bytes())
            .put_raw(self.subject.as_bytes())
            .put_bytes(&self.open_input)
            .put_raw(self.state0_anchor.as_bytes())
            .put_raw(self.sig.as_bytes());
    }

    pub fn decode_from(r: &mut Reader) -> Result<Self, CodecError> {
        Ok(Self {
            issuer: AccountPk::from_bytes(r.array()?),
            subject: AccountPk::from_bytes(r.array()?),
            open_input: r.bytes()?.to_vec(),
            state0_anchor: Digest::from_bytes(r.array()?),
            sig: Signature::from_bytes(r.array()?),
        })
    }
}

// ── Transactions ───────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepositBody {
    pub beneficiary: AccountPk,
    pub amount: Coin,
    pub funder: AccountPk,
    /// Funder-chosen uniquifier so identical deposits get distinct ids.
    pub nonce: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClaimBody {
    pub claimant: AccountPk,
    pub certs: Vec<Certificate>,
    /// Net channel value per counterparty, from the claimant's view:
    /// positive means the counterparty owes the claimant.
    pub net_state: BTreeMap<AccountPk, i64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxBody {
    Deposit(DepositBody),
    Claim(ClaimBody),
}

const TAG_DEPOSIT: u8 = 0x01;
const TAG_CLAIM: u8 = 0x02;

impl TxBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            TxBody::Deposit(d) => {
                w.put_u8(TAG_DEPOSIT)
                    .put_raw(d.beneficiary.as_bytes())
                    .put_u64(d.amount)
                    .put_raw(d.funder.as_bytes())
                    .put_u64(d.nonce);
            }
            TxBody::Claim(c) => {
                w.put_u8(TAG_CLAIM).put_raw(c.claimant.as_bytes());
                w.put_count(c.certs.len());
                for cert in &c.certs {
                    cert.encode_into(&mut w);
                }
                w.put_count(c.net_state.len());
                for (pk, v) in &c.net_state {
                    w.put_raw(pk.as_bytes()).put_i64(*v);
                }
            }
        }
        w.into_vec()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(buf);
        let body = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(body)
    }

    fn decode_from(r: &mut Reader) -> Result<Self, CodecError> {
        match r.u8()? {
            TAG_DEPOSIT => Ok(TxBody::Deposit(DepositBody {
                beneficiary: AccountPk::from_bytes(r.array()?),
                amount: r.u64()?,
                funder: AccountPk::from_bytes(r.array()?),
                nonce: r.u64()?,
            })),
            TAG_CLAIM => {
                let claimant = AccountPk::from_bytes(r.array()?);
                let n = r.count()?;
                let mut certs = Vec::with_capacity(n);
                for _ in 0..n {
                    certs.push(Certificate::decode_from(r)?);
                }
                let m = r.count()?;
                let mut net_state = BTreeMap::new();
                for _ in 0..m {
                    let pk = AccountPk::from_bytes(r.array()?);
                    net_state.insert(pk, r.i64()?);
                }
                Ok(TxBody::Claim(ClaimBody { claimant, certs, net_state }))
            }
            tag => Err(CodecError::BadTag { tag, context: "transaction body" }),
        }
    }
}

/// A transaction as stored on chain: body plus authorizing signatures.
/// Each `(pk, signature)` pair stored is one unit of blockchain cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OnChainTx {
    pub body: TxBody,
    pub signatures: Vec<(AccountPk, Signature)>,
}

impl OnChainTx {
    pub fn deposit(funder: &SigKeyPair, beneficiary: AccountPk, amount: Coin, nonce: u64) -> Self {
        let body = TxBody::Deposit(DepositBody {
            beneficiary,
            amount,
            funder: funder.public(),
            nonce,
        });
        let sig = crypto::sign(funder, &body.encode());
        Self { body, signatures: vec![(funder.public(), sig)] }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_bytes(&self.body.encode());
        w.put_count(self.signatures.len());
        for (pk, sig) in &self.signatures {
            w.put_raw(pk.as_bytes()).put_raw(sig.as_bytes());
        }
        w.into_vec()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(buf);
        let body = TxBody::decode(r.bytes()?)?;
        let n = r.count()?;
        let mut signatures = Vec::with_capacity(n);
        for _ in 0..n {
            let pk = AccountPk::from_bytes(r.array()?);
            signatures.push((pk, Signature::from_bytes(r.array()?)));
        }
        r.finish()?;
        Ok(Self { body, signatures })
    }

    pub fn id(&self) -> TxId {
        TxId(crypto::hash(&self.encode()))
    }
}

// ── The chain ──────────────────────────────────────────────────────────

/// Per-account on-chain cost counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccountCost {
    pub tx_count: u64,
    /// Number of (public key, signature) pairs written on chain.
    pub blockchain_cost: u64,
}

#[derive(Clone, Debug, Default)]
pub struct CostReport {
    pub per_account: BTreeMap<AccountPk, AccountCost>,
    pub total_tx: u64,
    pub total_bc: u64,
}

pub struct Ledger {
    storage: BTreeMap<TxId, OnChainTx>,
    order: Vec<TxId>,
    accounts: BTreeMap<AccountPk, Coin>,
    escrow: BTreeMap<AccountPk, Coin>,
    frozen: BTreeSet<AccountPk>,
    settled_pairs: BTreeSet<(AccountPk, AccountPk)>,
    cost: BTreeMap<AccountPk, AccountCost>,
    /// Simulated block confirmation latency applied on append.
    confirmation_delay: std::time::Duration,
}

fn pair_key(a: AccountPk, b: AccountPk) -> (AccountPk, AccountPk) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Ledger {
    pub fn new() -> Self {
        Self {
            storage: BTreeMap::new(),
            order: Vec::new(),
            accounts: BTreeMap::new(),
            escrow: BTreeMap::new(),
            frozen: BTreeSet::new(),
            settled_pairs: BTreeSet::new(),
            cost: BTreeMap::new(),
            confirmation_delay: std::time::Duration::ZERO,
        }
    }

    pub fn set_confirmation_delay(&mut self, d: std::time::Duration) {
        self.confirmation_delay = d;
    }

    /// Genesis credit to a funder account.
    pub fn credit(&mut self, account: AccountPk, amount: Coin) {
        *self.accounts.entry(account).or_insert(0) += amount;
    }

    pub fn balance_of(&self, account: &AccountPk) -> Coin {
        self.accounts.get(account).copied().unwrap_or(0)
    }

    pub fn escrow_of(&self, account: &AccountPk) -> Coin {
        self.escrow.get(account).copied().unwrap_or(0)
    }

    pub fn is_frozen(&self, account: &AccountPk) -> bool {
        self.frozen.contains(account)
    }

    /// Accounts plus escrow: constant across any tx sequence.
    pub fn total_supply(&self) -> Coin {
        self.accounts.values().sum::<Coin>() + self.escrow.values().sum::<Coin>()
    }

    pub fn read(&self, id: &TxId) -> Option<&OnChainTx> {
        self.storage.get(id)
    }

    pub fn tx_count(&self) -> usize {
        self.order.len()
    }

    /// All stored deposits earmarked for `beneficiary`, in append order.
    pub fn deposits_for(&self, beneficiary: &AccountPk) -> Vec<OnChainTx> {
        self.order
            .iter()
            .filter_map(|id| self.storage.get(id))
            .filter(|tx| matches!(&tx.body, TxBody::Deposit(d) if d.beneficiary == *beneficiary))
            .cloned()
            .collect()
    }

    /// Validate and store a transaction. Rejection leaves no trace.
    pub fn append(&mut self, tx: OnChainTx) -> Result<TxId, LedgerError> {
        let id = tx.id();
        if self.storage.contains_key(&id) {
            return Err(LedgerError::DuplicateTx);
        }
        match &tx.body {
            TxBody::Deposit(d) => self.apply_deposit(d, &tx)?,
            TxBody::Claim(c) => self.apply_claim(c, &tx)?,
        }
        let payer = match &tx.body {
            TxBody::Deposit(d) => d.beneficiary,
            TxBody::Claim(c) => c.claimant,
        };
        let entry = self.cost.entry(payer).or_default();
        entry.tx_count += 1;
        entry.blockchain_cost += tx.signatures.len() as u64;
        self.storage.insert(id, tx);
        self.order.push(id);
        if !self.confirmation_delay.is_zero() {
            std::thread::sleep(self.confirmation_delay);
        }
        Ok(id)
    }

    fn apply_deposit(&mut self, d: &DepositBody, tx: &OnChainTx) -> Result<(), LedgerError> {
        let Some((pk, sig)) = tx.signatures.first() else {
            return Err(LedgerError::BadSignature);
        };
        if *pk != d.funder || !crypto::verify(pk, &tx.body.encode(), sig) {
            return Err(LedgerError::BadSignature);
        }
        let Some(bal) = self.accounts.get_mut(&d.funder) else {
            return Err(LedgerError::UnknownFunder);
        };
        if *bal < d.amount {
            return Err(LedgerError::InsufficientFunds);
        }
        *bal -= d.amount;
        *self.escrow.entry(d.beneficiary).or_insert(0) += d.amount;
        Ok(())
    }

    fn apply_claim(&mut self, c: &ClaimBody, tx: &OnChainTx) -> Result<(), LedgerError> {
        if self.frozen.contains(&c.claimant) {
            return Err(LedgerError::AccountFrozen);
        }
        let Some((pk, sig)) = tx.signatures.first() else {
            return Err(LedgerError::BadSignature);
        };
        if *pk != c.claimant || !crypto::verify(pk, &tx.body.encode(), sig) {
            return Err(LedgerError::BadSignature);
        }

        // Validate every certificate before touching any balance: a single
        // bad certificate rejects the whole claim.
        let mut cert_issuers = BTreeSet::new();
        for cert in &c.certs {
            if cert.subject != c.claimant {
                return Err(LedgerError::BadCertificate("subject is not the claimant"));
            }
            if !cert.verify() {
                return Err(LedgerError::BadCertificate("signature does not verify"));
            }
            if !cert_issuers.insert(cert.issuer) {
                return Err(LedgerError::BadCertificate("duplicate issuer"));
            }
            match c.net_state.get(&cert.issuer) {
                None | Some(0) => return Err(LedgerError::ZeroNetValue),
                Some(_) => {}
            }
        }
        for counterparty in c.net_state.keys() {
            if !cert_issuers.contains(counterparty) {
                return Err(LedgerError::MissingCertificate);
            }
        }

        // Dry-run the transfers on a working copy so rejection is atomic.
        let mut escrow = self.escrow.clone();
        for cert in &c.certs {
            let from = cert.issuer;
            if self.settled_pairs.contains(&pair_key(c.claimant, from)) {
                // Counterparty settled this channel already; value moved then.
                continue;
            }
            let val = c.net_state[&from];
            if val > 0 {
                let avail = escrow.entry(from).or_insert(0);
                if *avail < val as u64 {
                    return Err(LedgerError::EscrowUnderflow);
                }
                *avail -= val as u64;
                *escrow.entry(c.claimant).or_insert(0) += val as u64;
            } else {
                let avail = escrow.entry(c.claimant).or_insert(0);
                if *avail < val.unsigned_abs() {
                    return Err(LedgerError::EscrowUnderflow);
                }
                *avail -= val.unsigned_abs();
                *escrow.entry(from).or_insert(0) += val.unsigned_abs();
            }
        }

        self.escrow = escrow;
        for cert in &c.certs {
            self.settled_pairs.insert(pair_key(c.claimant, cert.issuer));
        }
        self.frozen.insert(c.claimant);
        Ok(())
    }

    pub fn cost_report(&self) -> CostReport {
        let mut report = CostReport::default();
        for (pk, cost) in &self.cost {
            report.total_tx += cost.tx_count;
            report.total_bc += cost.blockchain_cost;
            report.per_account.insert(*pk, cost.clone());
        }
        report
    }

    // ── Snapshots ──────────────────────────────────────────────────────

    const SNAPSHOT_MAGIC: &'static [u8; 4] = b"CCLG";
    const SNAPSHOT_VERSION: u16 = 1;

    /// Canonical binary snapshot of the full chain state.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(Self::SNAPSHOT_MAGIC).put_u16(Self::SNAPSHOT_VERSION);
        w.put_count(self.order.len());
        for id in &self.order {
            w.put_bytes(&self.storage[id].encode());
        }
        w.put_count(self.accounts.len());
        for (pk, bal) in &self.accounts {
            w.put_raw(pk.as_bytes()).put_u64(*bal);
        }
        w.put_count(self.escrow.len());
        for (pk, bal) in &self.escrow {
            w.put_raw(pk.as_bytes()).put_u64(*bal);
        }
        w.put_count(self.frozen.len());
        for pk in &self.frozen {
            w.put_raw(pk.as_bytes());
        }
        w.put_count(self.settled_pairs.len());
        for (a, b) in &self.settled_pairs {
            w.put_raw(a.as_bytes()).put_raw(b.as_bytes());
        }
        w.put_count(self.cost.len());
        for (pk, c) in &self.cost {
            w.put_raw(pk.as_bytes()).put_u64(c.tx_count).put_u64(c.blockchain_cost);
        }
        w.into_vec()
    }

    pub fn restore(buf: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(buf);
        let magic: [u8; 4] = r.array().map_err(LedgerError::Malformed)?;
        if magic != *Self::SNAPSHOT_MAGIC {
            return Err(LedgerError::BadSnapshot("bad magic"));
        }
        if r.u16().map_err(LedgerError::Malformed)? != Self::SNAPSHOT_VERSION {
            return Err(LedgerError::BadSnapshot("unsupported version"));
        }
        let mut ledger = Self::new();
        let n = r.count().map_err(LedgerError::Malformed)?;
        for _ in 0..n {
            let tx = OnChainTx::decode(r.bytes().map_err(LedgerError::Malformed)?)
                .map_err(LedgerError::Malformed)?;
            let id = tx.id();
            ledger.storage.insert(id, tx);
            ledger.order.push(id);
        }
        let n = r.count().map_err(LedgerError::Malformed)?;
        for _ in 0..n {
            let pk = AccountPk::from_bytes(r.array().map_err(LedgerError::Malformed)?);
            ledger.accounts.insert(pk, r.u64().map_err(LedgerError::Malformed)?);
        }
        let n = r.count().map_err(LedgerError::Malformed)?;
        for _ in 0..n {
            let pk = AccountPk::from_bytes(r.array().map_err(LedgerError::Malformed)?);
            ledger.escrow.insert(pk, r.u64().map_err(LedgerError::Malformed)?);
        }
        let n = r.count().map_err(LedgerError::Malformed)?;
        for _ in 0..n {
            ledger.frozen.insert(AccountPk::from_bytes(r.array().map_err(LedgerError::Malformed)?));
        }
        let n = r.count().map_err(LedgerError::Malformed)?;
        for _ in 0..n {
            let a = AccountPk::from_bytes(r.array().map_err(LedgerError::Malformed)?);
            let b = AccountPk::from_bytes(r.array().map_err(LedgerError::Malformed)?);
            ledger.settled_pairs.insert((a, b));
        }
        let n = r.count().map_err(LedgerError::Malformed)?;
        for _ in 0..n {
            let pk = AccountPk::from_bytes(r.array().map_err(LedgerError::Malformed)?);
            let tx_count = r.u64().map_err(LedgerError::Malformed)?;
            let blockchain_cost = r.u64().map_err(LedgerError::Malformed)?;
            ledger.cost.insert(pk, AccountCost { tx_count, blockchain_cost });
        }
        r.finish().map_err(LedgerError::Malformed)?;
        Ok(ledger)
    }
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

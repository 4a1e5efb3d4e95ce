//! Direct value transfer and instant state sharing. No game state: the
//! data segment stays empty and the running deltas carry everything.

use std::collections::BTreeMap;

use crate::codec::{Reader, Writer};
use crate::crypto::AccountPk;

use super::{Contract, ContractCtx, ContractError, RawStep};

const INPUT_PAY: u8 = 0x01;
const INPUT_MSG: u8 = 0x02;

pub struct Payment;

impl Contract for Payment {
    fn name(&self) -> &'static str {
        "payment"
    }

    fn init(&self, _ctx: &ContractCtx, params: &[u8]) -> Result<(Vec<u8>, BTreeMap<AccountPk, i64>), ContractError> {
        if !params.is_empty() {
            return Err(ContractError::MalformedParams);
        }
        Ok((Vec::new(), BTreeMap::new()))
    }

    fn step(
        &self,
        ctx: &ContractCtx,
        data: &[u8],
        caller: &AccountPk,
        input: &[u8],
        caps: u64,
    ) -> Result<RawStep, ContractError> {
        if !data.is_empty() {
            return Err(ContractError::CorruptState(crate::codec::CodecError::TrailingBytes));
        }
        let mut r = Reader::new(input);
        let tag = r.u8().map_err(|_| ContractError::MalformedInput)?;
        match tag {
            INPUT_PAY => {
                let to = AccountPk::from_bytes(r.array().map_err(|_| ContractError::MalformedInput)?);
                let amount = r.u64().map_err(|_| ContractError::MalformedInput)?;
                r.finish().map_err(|_| ContractError::MalformedInput)?;
                if to == *caller || !ctx.participants.contains(&to) {
                    return Err(ContractError::IllegalMove("payee must be another participant"));
                }
                if amount > i64::MAX as u64 {
                    return Err(ContractError::MalformedInput);
                }
                if amount > caps {
                    return Err(ContractError::Overspend);
                }
                let mut effect = BTreeMap::new();
                effect.insert(*caller, -(amount as i64));
                effect.insert(to, amount as i64);
                Ok(RawStep {
                    data: Vec::new(),
                    output: Vec::new(),
                    value_effect: effect,
                    lock_delta: BTreeMap::new(),
                    finished: false,
                })
            }
            INPUT_MSG => {
                let payload = r.bytes().map_err(|_| ContractError::MalformedInput)?;
                r.finish().map_err(|_| ContractError::MalformedInput)?;
                Ok(RawStep {
                    data: Vec::new(),
                    output: payload.to_vec(),
                    value_effect: BTreeMap::new(),
                    lock_delta: BTreeMap::new(),
                    finished: false,
                })
            }
            _ => Err(ContractError::MalformedInput),
        }
    }

    fn encode_input(&self, args: &[&str], resolve: &dyn Fn(&str) -> Option<AccountPk>) -> Result<Vec<u8>, ContractError> {
        let mut w = Writer::new();
        match args {
            ["pay", to, amount] => {
                let to = resolve(to).ok_or(ContractError::MalformedInput)?;
                let amount: u64 = amount.parse().map_err(|_| ContractError::MalformedInput)?;
                w.put_u8(INPUT_PAY).put_raw(to.as_bytes()).put_u64(amount);
            }
            ["msg", text] => {
                w.put_u8(INPUT_MSG).put_bytes(text.as_bytes());
            }
            _ => return Err(ContractError::MalformedInput),
        }
        Ok(w.into_vec())
    }
}

/// Convenience used across the crate for the common case.
pub fn pay_input(to: &AccountPk, amount: u64) -> Vec<u8> {
    let mut w = Writer::with_capacity(42);
    w.put_u8(INPUT_PAY).put_raw(to.as_bytes()).put_u64(amount);
    w.into_vec()
}

pub fn msg_input(payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::with_capacity(5 + payload.len());
    w.put_u8(INPUT_MSG).put_bytes(payload);
    w.into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::ContractRegistry;
    use crate::crypto::{keygen_seeded, Ccid};

    fn setup() -> (ContractRegistry, Vec<AccountPk>, Ccid) {
        let reg = ContractRegistry::with_builtins();
        let p: Vec<AccountPk> = (0..2).map(|i| keygen_seeded(i).public()).collect();
        let ccid = Ccid::derive(&p);
        (reg, p, ccid)
    }

    #[test]
    fn pay_moves_value_both_ways() {
        let (reg, p, ccid) = setup();
        let (cid, _) = reg.lookup_name("payment").unwrap();
        let (st, _) = reg.instantiate(&cid, &ccid, &p, &[]).unwrap();
        let s1 = reg.step(&ccid, &st, &p[0], &pay_input(&p[1], 5), 8).unwrap();
        assert_eq!(s1.state.deltas[&p[0]], -5);
        assert_eq!(s1.state.deltas[&p[1]], 5);
        let s2 = reg.step(&ccid, &s1.state, &p[1], &pay_input(&p[0], 5), 100).unwrap();
        assert!(s2.state.deltas.values().all(|d| *d == 0));
    }

    #[test]
    fn pay_beyond_caps_is_overspend() {
        let (reg, p, ccid) = setup();
        let (cid, _) = reg.lookup_name("payment").unwrap();
        let (st, _) = reg.instantiate(&cid, &ccid, &p, &[]).unwrap();
        assert_eq!(
            reg.step(&ccid, &st, &p[0], &pay_input(&p[1], 9), 8).unwrap_err(),
            ContractError::Overspend
        );
    }

    #[test]
    fn message_has_no_value_effect() {
        let (reg, p, ccid) = setup();
        let (cid, _) = reg.lookup_name("payment").unwrap();
        let (st, _) = reg.instantiate(&cid, &ccid, &p, &[]).unwrap();
        let s = reg.step(&ccid, &st, &p[0], &msg_input(b"state blob"), 0).unwrap();
        assert!(s.value_effect.is_empty());
        assert_eq!(s.output, b"state blob");
        assert_eq!(s.state.data, st.data);
    }

    #[test]
    fn sequence_of_unit_payments_accumulates() {
        let (reg, p, ccid) = setup();
        let (cid, _) = reg.lookup_name("payment").unwrap();
        let (mut st, _) = reg.instantiate(&cid, &ccid, &p, &[]).unwrap();
        let k = 7;
        for _ in 0..k {
            st = reg.step(&ccid, &st, &p[0], &pay_input(&p[1], 1), 100).unwrap().state;
        }
        assert_eq!(st.deltas[&p[0]], -(k as i64));
        assert_eq!(st.deltas[&p[1]], k as i64);
    }

    #[test]
    fn self_payment_rejected() {
        let (reg, p, ccid) = setup();
        let (cid, _) = reg.lookup_name("payment").unwrap();
        let (st, _) = reg.instantiate(&cid, &ccid, &p, &[]).unwrap();
        assert!(matches!(
            reg.step(&ccid, &st, &p[0], &pay_input(&p[0], 1), 10),
            Err(ContractError::IllegalMove(_))
        ));
    }
}

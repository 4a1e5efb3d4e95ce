//! Fungible token ledger inside a channel. Every participant is minted the
//! same initial supply when the channel opens; transfers move token units
//! only, never channel value.

use std::collections::BTreeMap;

use crate::codec::{Reader, Writer};
use crate::crypto::AccountPk;

use super::{Contract, ContractCtx, ContractError, RawStep};

const INPUT_TRANSFER: u8 = 0x01;
const INPUT_BALANCE: u8 = 0x02;

pub struct Token;

fn decode_balances(data: &[u8]) -> Result<BTreeMap<AccountPk, u64>, ContractError> {
    let mut r = Reader::new(data);
    let n = r.count().map_err(ContractError::CorruptState)?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let pk = AccountPk::from_bytes(r.array().map_err(ContractError::CorruptState)?);
        let bal = r.u64().map_err(ContractError::CorruptState)?;
        out.insert(pk, bal);
    }
    r.finish().map_err(ContractError::CorruptState)?;
    Ok(out)
}

fn encode_balances(balances: &BTreeMap<AccountPk, u64>) -> Vec<u8> {
    let mut w = Writer::with_capacity(4 + balances.len() * 41);
    w.put_count(balances.len());
    for (pk, bal) in balances {
        w.put_raw(pk.as_bytes()).put_u64(*bal);
    }
    w.into_vec()
}

impl Contract for Token {
    fn name(&self) -> &'static str {
        "token"
    }

    fn init(&self, ctx: &ContractCtx, params: &[u8]) -> Result<(Vec<u8>, BTreeMap<AccountPk, i64>), ContractError> {
        let mut r = Reader::new(params);
        let supply = r.u64().map_err(|_| ContractError::MalformedParams)?;
        r.finish().map_err(|_| ContractError::MalformedParams)?;
        let balances: BTreeMap<AccountPk, u64> =
            ctx.participants.iter().map(|pk| (*pk, supply)).collect();
        Ok((encode_balances(&balances), BTreeMap::new()))
    }

    fn step(
        &self,
        ctx: &ContractCtx,
        data: &[u8],
        caller: &AccountPk,
        input: &[u8],
        _caps: u64,
    ) -> Result<RawStep, ContractError> {
        let mut balances = decode_balances(data)?;
        let mut r = Reader::new(input);
        let tag = r.u8().map_err(|_| ContractError::MalformedInput)?;
        match tag {
            INPUT_TRANSFER => {
                let to = AccountPk::from_bytes(r.array().map_err(|_| ContractError::MalformedInput)?);
                let amount = r.u64().map_err(|_| ContractError::MalformedInput)?;
                r.finish().map_err(|_| ContractError::MalformedInput)?;
                if !ctx.participants.contains(&to) || to == *caller {
                    return Err(ContractError::IllegalMove("recipient must be another participant"));
                }
                let from_bal = balances.get_mut(caller).ok_or(ContractError::NotParticipant)?;
                if *from_bal < amount {
                    return Err(ContractError::IllegalMove("token balance too low"));
                }
                *from_bal -= amount;
                *balances.get_mut(&to).unwrap() += amount;
                Ok(RawStep {
                    data: encode_balances(&balances),
                    output: Vec::new(),
                    value_effect: BTreeMap::new(),
                    lock_delta: BTreeMap::new(),
                    finished: false,
                })
            }
            INPUT_BALANCE => {
                let who = AccountPk::from_bytes(r.array().map_err(|_| ContractError::MalformedInput)?);
                r.finish().map_err(|_| ContractError::MalformedInput)?;
                let bal = balances.get(&who).copied().unwrap_or(0);
                Ok(RawStep {
                    data: data.to_vec(),
                    output: bal.to_be_bytes().to_vec(),
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
            ["transfer", to, amount] => {
                let to = resolve(to).ok_or(ContractError::MalformedInput)?;
                let amount: u64 = amount.parse().map_err(|_| ContractError::MalformedInput)?;
                w.put_u8(INPUT_TRANSFER).put_raw(to.as_bytes()).put_u64(amount);
            }
            ["balance", who] => {
                let who = resolve(who).ok_or(ContractError::MalformedInput)?;
                w.put_u8(INPUT_BALANCE).put_raw(who.as_bytes());
            }
            _ => return Err(ContractError::MalformedInput),
        }
        Ok(w.into_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::ContractRegistry;
    use crate::crypto::{keygen_seeded, Ccid};

    fn setup(supply: u64) -> (ContractRegistry, Vec<AccountPk>, Ccid, crate::contracts::ContractState) {
        let reg = ContractRegistry::with_builtins();
        let p: Vec<AccountPk> = (0..2).map(|i| keygen_seeded(10 + i).public()).collect();
        let ccid = Ccid::derive(&p);
        let (cid, _) = reg.lookup_name("token").unwrap();
        let mut w = Writer::new();
        w.put_u64(supply);
        let (st, _) = reg.instantiate(&cid, &ccid, &p, w.as_slice()).unwrap();
        (reg, p, ccid, st)
    }

    fn transfer(to: &AccountPk, amount: u64) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u8(INPUT_TRANSFER).put_raw(to.as_bytes()).put_u64(amount);
        w.into_vec()
    }

    #[test]
    fn transfer_respects_balance_and_conserves_supply() {
        let (reg, p, ccid, st) = setup(100);
        let s1 = reg.step(&ccid, &st, &p[0], &transfer(&p[1], 40), 0).unwrap();
        let bals = decode_balances(&s1.state.data).unwrap();
        assert_eq!(bals[&p[0]], 60);
        assert_eq!(bals[&p[1]], 140);
        assert_eq!(bals.values().sum::<u64>(), 200);

        assert!(matches!(
            reg.step(&ccid, &s1.state, &p[0], &transfer(&p[1], 61), 0),
            Err(ContractError::IllegalMove(_))
        ));
    }

    #[test]
    fn balance_query_is_read_only() {
        let (reg, p, ccid, st) = setup(100);
        let mut w = Writer::new();
        w.put_u8(INPUT_BALANCE).put_raw(p[1].as_bytes());
        let s = reg.step(&ccid, &st, &p[0], w.as_slice(), 0).unwrap();
        assert_eq!(s.output, 100u64.to_be_bytes());
        assert_eq!(s.state.data, st.data);
    }

    #[test]
    fn token_moves_no_channel_value() {
        let (reg, p, ccid, st) = setup(50);
        let s = reg.step(&ccid, &st, &p[0], &transfer(&p[1], 10), 0).unwrap();
        assert!(s.value_effect.is_empty());
        assert!(s.state.deltas.values().all(|d| *d == 0));
    }
}

//! Commit-reveal rock-paper-scissors. Both players run "in parallel" by
//! committing a salted digest of their move first; moves are only revealed
//! after both commitments are in, and only the outcome is surfaced. Stakes
//! lock at channel open and settle when the second reveal lands.

use std::collections::BTreeMap;

use crate::codec::{Reader, Writer};
use crate::crypto::{self, turn_order, AccountPk, Digest};

use super::{Contract, ContractCtx, ContractError, RawStep};

const INPUT_COMMIT: u8 = 0x01;
const INPUT_REVEAL: u8 = 0x02;

pub const MOVE_ROCK: u8 = 0;
pub const MOVE_PAPER: u8 = 1;
pub const MOVE_SCISSORS: u8 = 2;

pub struct RockPaperScissors;

struct State {
    stake: u64,
    commits: [Option<Digest>; 2],
    reveals: [Option<u8>; 2],
}

fn decode(data: &[u8]) -> Result<State, ContractError> {
    let mut r = Reader::new(data);
    let stake = r.u64().map_err(ContractError::CorruptState)?;
    let mut commits = [None, None];
    for slot in commits.iter_mut() {
        if r.u8().map_err(ContractError::CorruptState)? == 1 {
            *slot = Some(Digest::from_bytes(r.array().map_err(ContractError::CorruptState)?));
        }
    }
    let mut reveals = [None, None];
    for slot in reveals.iter_mut() {
        if r.u8().map_err(ContractError::CorruptState)? == 1 {
            *slot = Some(r.u8().map_err(ContractError::CorruptState)?);
        }
    }
    r.finish().map_err(ContractError::CorruptState)?;
    Ok(State { stake, commits, reveals })
}

fn encode(st: &State) -> Vec<u8> {
    let mut w = Writer::with_capacity(80);
    w.put_u64(st.stake);
    for c in &st.commits {
        match c {
            Some(d) => {
                w.put_u8(1).put_raw(d.as_bytes());
            }
            None => {
                w.put_u8(0);
            }
        }
    }
    for rv in &st.reveals {
        match rv {
            Some(m) => {
                w.put_u8(1).put_u8(*m);
            }
            None => {
                w.put_u8(0);
            }
        }
    }
    w.into_vec()
}

/// Commitment digest for a move and salt.
pub fn commitment(mv: u8, salt: &[u8; 32]) -> Digest {
    crypto::hash_parts(&[b"certchan/rps-commit", &[mv], salt])
}

fn beats(a: u8, b: u8) -> bool {
    (a == MOVE_ROCK && b == MOVE_SCISSORS)
        || (a == MOVE_PAPER && b == MOVE_ROCK)
        || (a == MOVE_SCISSORS && b == MOVE_PAPER)
}

impl Contract for RockPaperScissors {
    fn name(&self) -> &'static str {
        "rps"
    }

    fn init(&self, ctx: &ContractCtx, params: &[u8]) -> Result<(Vec<u8>, BTreeMap<AccountPk, i64>), ContractError> {
        if ctx.participants.len() != 2 {
            return Err(ContractError::MalformedParams);
        }
        let mut r = Reader::new(params);
        let stake = r.u64().map_err(|_| ContractError::MalformedParams)?;
        r.finish().map_err(|_| ContractError::MalformedParams)?;
        if stake > i64::MAX as u64 {
            return Err(ContractError::MalformedParams);
        }
        let st = State { stake, commits: [None, None], reveals: [None, None] };
        let locks = ctx.participants.iter().map(|pk| (*pk, stake as i64)).collect();
        Ok((encode(&st), locks))
    }

    fn step(
        &self,
        ctx: &ContractCtx,
        data: &[u8],
        caller: &AccountPk,
        input: &[u8],
        _caps: u64,
    ) -> Result<RawStep, ContractError> {
        let mut st = decode(data)?;
        let order = turn_order(ctx.participants);
        let me = order.iter().position(|pk| pk == caller).ok_or(ContractError::NotParticipant)?;

        let mut r = Reader::new(input);
        let tag = r.u8().map_err(|_| ContractError::MalformedInput)?;
        match tag {
            INPUT_COMMIT => {
                let digest = Digest::from_bytes(r.array().map_err(|_| ContractError::MalformedInput)?);
                r.finish().map_err(|_| ContractError::MalformedInput)?;
                if st.commits[me].is_some() {
                    return Err(ContractError::IllegalMove("already committed"));
                }
                st.commits[me] = Some(digest);
                Ok(RawStep {
                    data: encode(&st),
                    output: b"committed".to_vec(),
                    value_effect: BTreeMap::new(),
                    lock_delta: BTreeMap::new(),
                    finished: false,
                })
            }
            INPUT_REVEAL => {
                let mv = r.u8().map_err(|_| ContractError::MalformedInput)?;
                let salt: [u8; 32] = r.array().map_err(|_| ContractError::MalformedInput)?;
                r.finish().map_err(|_| ContractError::MalformedInput)?;
                if mv > MOVE_SCISSORS {
                    return Err(ContractError::MalformedInput);
                }
                if st.commits.iter().any(|c| c.is_none()) {
                    return Err(ContractError::IllegalMove("reveal before both commitments"));
                }
                if st.reveals[me].is_some() {
                    return Err(ContractError::IllegalMove("already revealed"));
                }
                if commitment(mv, &salt) != st.commits[me].unwrap() {
                    return Err(ContractError::IllegalMove("reveal does not match commitment"));
                }
                st.reveals[me] = Some(mv);

                let both = st.reveals[0].zip(st.reveals[1]);
                let mut value_effect = BTreeMap::new();
                let mut lock_delta = BTreeMap::new();
                let mut output = b"revealed".to_vec();
                let mut finished = false;
                if let Some((m0, m1)) = both {
                    finished = true;
                    for pk in ctx.participants {
                        lock_delta.insert(*pk, -(st.stake as i64));
                    }
                    output = if beats(m0, m1) {
                        value_effect.insert(order[0], st.stake as i64);
                        value_effect.insert(order[1], -(st.stake as i64));
                        let mut o = b"win:".to_vec();
                        o.extend_from_slice(order[0].as_bytes());
                        o
                    } else if beats(m1, m0) {
                        value_effect.insert(order[1], st.stake as i64);
                        value_effect.insert(order[0], -(st.stake as i64));
                        let mut o = b"win:".to_vec();
                        o.extend_from_slice(order[1].as_bytes());
                        o
                    } else {
                        b"draw".to_vec()
                    };
                }
                Ok(RawStep {
                    data: encode(&st),
                    output,
                    value_effect,
                    lock_delta,
                    finished,
                })
            }
            _ => Err(ContractError::MalformedInput),
        }
    }

    fn encode_input(&self, args: &[&str], _resolve: &dyn Fn(&str) -> Option<AccountPk>) -> Result<Vec<u8>, ContractError> {
        let parse_move = |s: &str| match s {
            "rock" => Ok(MOVE_ROCK),
            "paper" => Ok(MOVE_PAPER),
            "scissors" => Ok(MOVE_SCISSORS),
            _ => Err(ContractError::MalformedInput),
        };
        let parse_salt = |s: &str| -> Result<[u8; 32], ContractError> {
            // Scenario salts are free text, stretched to 32 bytes.
            Ok(*crypto::hash(s.as_bytes()).as_bytes())
        };
        match args {
            ["commit", mv, salt] => {
                let digest = commitment(parse_move(mv)?, &parse_salt(salt)?);
                Ok(commit_input(&digest))
            }
            ["reveal", mv, salt] => Ok(reveal_input(parse_move(mv)?, &parse_salt(salt)?)),
            _ => Err(ContractError::MalformedInput),
        }
    }
}

pub fn commit_input(digest: &Digest) -> Vec<u8> {
    let mut w = Writer::with_capacity(33);
    w.put_u8(INPUT_COMMIT).put_raw(digest.as_bytes());
    w.into_vec()
}

pub fn reveal_input(mv: u8, salt: &[u8; 32]) -> Vec<u8> {
    let mut w = Writer::with_capacity(34);
    w.put_u8(INPUT_REVEAL).put_u8(mv).put_raw(salt);
    w.into_vec()
}

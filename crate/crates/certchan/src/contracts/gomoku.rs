//! Two-player turn game on a 15×15 board; an unbroken run of exactly five
//! stones wins the staked amount. Stakes are locked when the channel opens
//! and stay locked until the game ends, so a player cannot respend them
//! mid-game.

use std::collections::BTreeMap;

use crate::codec::{Reader, Writer};
use crate::crypto::{turn_order, AccountPk};

use super::{Contract, ContractCtx, ContractError, RawStep};

pub const BOARD: usize = 15;
const CELLS: usize = BOARD * BOARD;
const INPUT_MOVE: u8 = 0x01;

pub struct Gomoku;

struct State {
    stake: u64,
    board: [u8; CELLS], // 0 empty, 1 first mover, 2 second mover
    next: u8,           // index into descending participant order
    placed: u16,
}

fn decode(data: &[u8]) -> Result<State, ContractError> {
    let mut r = Reader::new(data);
    let stake = r.u64().map_err(ContractError::CorruptState)?;
    let board: [u8; CELLS] = r.array().map_err(ContractError::CorruptState)?;
    let next = r.u8().map_err(ContractError::CorruptState)?;
    let placed = r.u16().map_err(ContractError::CorruptState)?;
    r.finish().map_err(ContractError::CorruptState)?;
    Ok(State { stake, board, next, placed })
}

fn encode(st: &State) -> Vec<u8> {
    let mut w = Writer::with_capacity(8 + CELLS + 3);
    w.put_u64(st.stake).put_raw(&st.board).put_u8(st.next).put_u16(st.placed);
    w.into_vec()
}

/// Does the stone at (r, c) sit in a run of exactly five?
fn wins(board: &[u8; CELLS], r: usize, c: usize) -> bool {
    let color = board[r * BOARD + c];
    debug_assert!(color != 0);
    for (dr, dc) in [(0isize, 1isize), (1, 0), (1, 1), (1, -1)] {
        let mut run = 1;
        let mut ends = [false; 2];
        for (dir, end) in [(1isize, 0usize), (-1, 1)] {
            let (mut rr, mut cc) = (r as isize, c as isize);
            loop {
                rr += dr * dir;
                cc += dc * dir;
                if rr < 0 || cc < 0 || rr >= BOARD as isize || cc >= BOARD as isize {
                    ends[end] = true;
                    break;
                }
                if board[rr as usize * BOARD + cc as usize] == color {
                    run += 1;
                } else {
                    ends[end] = true;
                    break;
                }
            }
        }
        let _ = ends;
        if run == 5 {
            return true;
        }
    }
    false
}

impl Contract for Gomoku {
    fn name(&self) -> &'static str {
        "gomoku"
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
        let st = State { stake, board: [0; CELLS], next: 0, placed: 0 };
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
        let mut r = Reader::new(input);
        let tag = r.u8().map_err(|_| ContractError::MalformedInput)?;
        if tag != INPUT_MOVE {
            return Err(ContractError::MalformedInput);
        }
        let row = r.u8().map_err(|_| ContractError::MalformedInput)? as usize;
        let col = r.u8().map_err(|_| ContractError::MalformedInput)? as usize;
        r.finish().map_err(|_| ContractError::MalformedInput)?;

        if *caller != order[st.next as usize] {
            return Err(ContractError::IllegalMove("not this player's turn"));
        }
        if row >= BOARD || col >= BOARD {
            return Err(ContractError::IllegalMove("move off the board"));
        }
        let cell = row * BOARD + col;
        if st.board[cell] != 0 {
            return Err(ContractError::IllegalMove("cell already occupied"));
        }

        st.board[cell] = st.next + 1;
        st.placed += 1;
        let won = wins(&st.board, row, col);
        let full = st.placed as usize == CELLS;
        let mover = st.next;
        st.next = 1 - st.next;

        let mut value_effect = BTreeMap::new();
        let mut lock_delta = BTreeMap::new();
        let mut output = Vec::new();
        if won {
            let winner = order[mover as usize];
            let loser = order[(1 - mover) as usize];
            value_effect.insert(winner, st.stake as i64);
            value_effect.insert(loser, -(st.stake as i64));
            for pk in ctx.participants {
                lock_delta.insert(*pk, -(st.stake as i64));
            }
            output.extend_from_slice(b"win:");
            output.extend_from_slice(winner.as_bytes());
        } else if full {
            for pk in ctx.participants {
                lock_delta.insert(*pk, -(st.stake as i64));
            }
            output.extend_from_slice(b"draw");
        }

        Ok(RawStep {
            data: encode(&st),
            output,
            value_effect,
            lock_delta,
            finished: won || full,
        })
    }

    fn encode_input(&self, args: &[&str], _resolve: &dyn Fn(&str) -> Option<AccountPk>) -> Result<Vec<u8>, ContractError> {
        match args {
            ["move", row, col] => {
                let row: u8 = row.parse().map_err(|_| ContractError::MalformedInput)?;
                let col: u8 = col.parse().map_err(|_| ContractError::MalformedInput)?;
                let mut w = Writer::new();
                w.put_u8(INPUT_MOVE).put_u8(row).put_u8(col);
                Ok(w.into_vec())
            }
            _ => Err(ContractError::MalformedInput),
        }
    }
}

pub fn move_input(row: u8, col: u8) -> Vec<u8> {
    let mut w = Writer::with_capacity(3);
    w.put_u8(INPUT_MOVE).put_u8(row).put_u8(col);
    w.into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{ContractRegistry, ContractState};
    use crate::crypto::{keygen_seeded, Ccid};

    fn setup(stake: u64) -> (ContractRegistry, Vec<AccountPk>, Ccid, ContractState, Vec<AccountPk>) {
        let reg = ContractRegistry::with_builtins();
        let p: Vec<AccountPk> = (0..2).map(|i| keygen_seeded(20 + i).public()).collect();
        let ccid = Ccid::derive(&p);
        let (cid, _) = reg.lookup_name("gomoku").unwrap();
        let mut w = Writer::new();
        w.put_u64(stake);
        let (st, locks) = reg.instantiate(&cid, &ccid, &p, w.as_slice()).unwrap();
        assert!(locks.values().all(|l| *l == stake as i64));
        let order = turn_order(&p);
        (reg, p, ccid, st, order)
    }

    /// Independent win oracle: scan every 5-window on the final board and
    /// require the window be one color with no same-color extension.
    fn oracle_win(board: &[u8; CELLS], color: u8) -> bool {
        let get = |r: isize, c: isize| -> u8 {
            if r < 0 || c < 0 || r >= BOARD as isize || c >= BOARD as isize {
                0
            } else {
                board[r as usize * BOARD + c as usize]
            }
        };
        for r in 0..BOARD as isize {
            for c in 0..BOARD as isize {
                for (dr, dc) in [(0isize, 1isize), (1, 0), (1, 1), (1, -1)] {
                    let all = (0..5).all(|k| get(r + dr * k, c + dc * k) == color);
                    if all
                        && get(r - dr, c - dc) != color
                        && get(r + dr * 5, c + dc * 5) != color
                    {
                        return true;
                    }
                }
            }
        }
        false
    }

    #[test]
    fn empty_board_first_mover_is_highest_order() {
        let (reg, _p, ccid, st, order) = setup(10);
        // Second player cannot open the game.
        assert!(matches!(
            reg.step(&ccid, &st, &order[1], &move_input(7, 7), 0),
            Err(ContractError::IllegalMove(_))
        ));
        assert!(reg.step(&ccid, &st, &order[0], &move_input(7, 7), 0).is_ok());
    }

    #[test]
    fn occupied_cell_is_illegal() {
        let (reg, _p, ccid, st, order) = setup(10);
        let s1 = reg.step(&ccid, &st, &order[0], &move_input(3, 3), 0).unwrap();
        assert!(matches!(
            reg.step(&ccid, &s1.state, &order[1], &move_input(3, 3), 0),
            Err(ContractError::IllegalMove(_))
        ));
    }

    #[test]
    fn five_in_a_row_pays_stake_and_releases_locks() {
        let (reg, _p, ccid, mut state, order) = setup(10);
        // First mover builds a horizontal five on row 0; opponent fills row 14.
        let mut last = None;
        for k in 0..5u8 {
            let s = reg.step(&ccid, &state, &order[0], &move_input(0, k), 0).unwrap();
            state = s.state.clone();
            last = Some(s);
            if k < 4 {
                state = reg.step(&ccid, &state, &order[1], &move_input(14, k), 0).unwrap().state;
            }
        }
        let fin = last.unwrap();
        assert!(fin.state.finished);
        assert_eq!(fin.value_effect[&order[0]], 10);
        assert_eq!(fin.value_effect[&order[1]], -10);
        assert_eq!(fin.lock_delta[&order[0]], -10);
        let st = decode(&fin.state.data).unwrap();
        assert!(oracle_win(&st.board, 1));

        // No moves after the game ends.
        assert_eq!(
            reg.step(&ccid, &fin.state, &order[1], &move_input(9, 9), 0).unwrap_err(),
            ContractError::Finished
        );
    }

    #[test]
    fn overline_of_six_does_not_win() {
        let (reg, _p, ccid, mut state, order) = setup(5);
        // First mover lays x at cols 0,1,2,3,5 then bridges with 4 → run of 6.
        let cols = [0u8, 1, 2, 3, 5];
        for (i, c) in cols.iter().enumerate() {
            state = reg.step(&ccid, &state, &order[0], &move_input(0, *c), 0).unwrap().state;
            state = reg.step(&ccid, &state, &order[1], &move_input(14 - (i as u8 % 2), i as u8), 0).unwrap().state;
        }
        let s = reg.step(&ccid, &state, &order[0], &move_input(0, 4), 0).unwrap();
        assert!(!s.state.finished, "a run of six must not win");
        let st = decode(&s.state.data).unwrap();
        assert!(!oracle_win(&st.board, 1));
    }

    /// Random playouts: contract's win verdict equals the window-scan oracle.
    #[test]
    fn random_playouts_match_win_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for round in 0..40 {
            let (reg, _p, ccid, mut state, order) = setup(1);
            let mut cells: Vec<u8> = (0..CELLS as u16).map(|c| c as u8).collect();
            // Only the low byte matters for shuffle seeds; cells indexed below.
            let mut idxs: Vec<usize> = (0..CELLS).collect();
            for i in (1..idxs.len()).rev() {
                let j = rng.gen_range(0..=i);
                idxs.swap(i, j);
            }
            cells.clear();
            let mut mover = 0usize;
            for idx in idxs {
                if state.finished {
                    break;
                }
                let (r, c) = ((idx / BOARD) as u8, (idx % BOARD) as u8);
                let res = reg.step(&ccid, &state, &order[mover], &move_input(r, c), 0);
                match res {
                    Ok(s) => {
                        let finished_by_win = !s.value_effect.is_empty();
                        let st = decode(&s.state.data).unwrap();
                        assert_eq!(
                            finished_by_win,
                            oracle_win(&st.board, (mover + 1) as u8),
                            "round {round}: win verdict diverged from oracle"
                        );
                        state = s.state;
                        mover = 1 - mover;
                    }
                    Err(ContractError::IllegalMove(_)) => continue,
                    Err(e) => panic!("unexpected error {e:?}"),
                }
            }
        }
    }
}

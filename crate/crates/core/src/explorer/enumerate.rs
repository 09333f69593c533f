//! Exhaustive enumeration of a token transaction's choice tree.
//!
//! Walking every choice vector one by one is exponential in the gas budget.
//! Instead each external call is evaluated to the *set* of its distinct
//! outcomes, memoized on `(state, gas)`. States are interned so outcome sets
//! hold small ids.
//!
//! Outcomes that differ only in returned gas are merged, keeping the one with
//! the most gas left. This loses nothing: with more gas every choice made with
//! less gas is still available (the adversary can always decline to recurse),
//! so the reachable states and violations only grow with gas. The call status
//! is part of the key only when it is propagated.
//!
//! Every outcome keeps one witness choice vector, so it can be replayed
//! through the direct interpreter. The checks mirror
//! [`crate::checks::Recorder`] exactly, including which violation is recorded
//! last.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use indexmap::map::Entry;
use indexmap::IndexMap;
use rustc_hash::FxBuildHasher;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryRules, GasAccounting};
use crate::checks::{Boundary, Checked, Fault, Imbalance, Signature};
use crate::explorer::trace::{Call, FrameKind, Transaction};
use crate::primitives::{Address, CallResult, Gas, Msg};
use crate::token::{TokenState, Variant};
use crate::u256::U256;

/// A distinct outcome of a top-level transaction.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub state: Arc<TokenState>,
    pub gas: Gas,
    pub result: CallResult<()>,
    pub signature: Option<Signature>,
    pub witness: Witness,
    /// Executing frames (gas_in >= 1) along the witness.
    pub frames: u32,
}

/// Choice vector built by concatenation without copying.
#[derive(Clone, Debug, Default)]
pub struct Witness(Option<Arc<Piece>>);

/// Most witness nodes are `head ++ a few small choices ++ tail`; they take a
/// single allocation. Larger literals fall back to `Lit`.
#[derive(Debug)]
enum Piece {
    Lit(Vec<u64>),
    Join { head: Witness, lits: [u16; JOIN_LITS], len: u8, tail: Witness },
}

const JOIN_LITS: usize = 6;

impl Witness {
    fn lit(v: Vec<u64>) -> Self {
        Witness(Some(Arc::new(Piece::Lit(v))))
    }

    /// `head ++ lits ++ tail`.
    fn join(head: &Witness, lits: &[u64], tail: &Witness) -> Witness {
        if lits.is_empty() {
            match (&head.0, &tail.0) {
                (None, _) => return tail.clone(),
                (_, None) => return head.clone(),
                _ => {}
            }
        }
        if lits.len() > JOIN_LITS || lits.iter().any(|&v| v > u64::from(u16::MAX)) {
            return Witness::join(&Witness::join(head, &[], &Witness::lit(lits.to_vec())), &[], tail);
        }
        let mut packed = [0u16; JOIN_LITS];
        for (p, &v) in packed.iter_mut().zip(lits) {
            *p = v as u16;
        }
        let len = lits.len() as u8;
        Witness(Some(Arc::new(Piece::Join { head: head.clone(), lits: packed, len, tail: tail.clone() })))
    }

    pub fn then(&self, next: &Witness) -> Witness {
        Witness::join(self, &[], next)
    }

    pub fn flatten(&self) -> Vec<u64> {
        enum Item<'a> {
            W(&'a Witness),
            Lits(&'a [u16]),
        }
        let mut out = Vec::new();
        let mut stack = vec![Item::W(self)];
        while let Some(item) = stack.pop() {
            match item {
                Item::Lits(l) => out.extend(l.iter().map(|&v| u64::from(v))),
                Item::W(w) => match w.0.as_deref() {
                    None => {}
                    Some(Piece::Lit(v)) => out.extend_from_slice(v),
                    Some(Piece::Join { head, lits, len, tail }) => {
                        stack.push(Item::W(tail));
                        stack.push(Item::Lits(&lits[..usize::from(*len)]));
                        stack.push(Item::W(head));
                    }
                },
            }
        }
        out
    }
}

/// Interned state id together with its (cached) imbalance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Sid {
    id: u32,
    imbalance: Option<Imbalance>,
}

#[derive(Clone, Debug)]
struct Out {
    sid: Sid,
    gas: Gas,
    result: CallResult<()>,
    signature: Option<Signature>,
    witness: Witness,
    frames: u32,
}

type Key = (Sid, Option<CallResult<()>>, Option<Signature>);

/// Outcomes merged on `Key`, keeping the most gas, then the most frames.
struct OutcomeSet {
    keep_result: bool,
    map: IndexMap<Key, Out, FxBuildHasher>,
}

impl OutcomeSet {
    fn new(keep_result: bool) -> Self {
        OutcomeSet { keep_result, map: IndexMap::default() }
    }

    #[allow(clippy::too_many_arguments)]
    fn add(
        &mut self,
        sid: Sid,
        gas: Gas,
        result: CallResult<()>,
        signature: Option<Signature>,
        frames: u32,
        witness: impl FnOnce() -> Witness,
    ) {
        let key = (sid, self.keep_result.then_some(result), signature);
        match self.map.entry(key) {
            Entry::Vacant(e) => {
                e.insert(Out { sid, gas, result, signature, witness: witness(), frames });
            }
            Entry::Occupied(mut e) => {
                let old = e.get();
                if (gas, frames) > (old.gas, old.frames) {
                    e.insert(Out { sid, gas, result, signature, witness: witness(), frames });
                }
            }
        }
    }

    fn into_vec(self) -> Vec<Out> {
        self.map.into_values().collect()
    }
}

/// How often each residue was drawn at a choice point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub k_residues: [u64; 3],
    pub b_values: [u64; 2],
}

impl Coverage {
    pub fn add(&mut self, other: &Coverage) {
        for i in 0..3 {
            self.k_residues[i] += other.k_residues[i];
        }
        for i in 0..2 {
            self.b_values[i] += other.b_values[i];
        }
    }

    pub fn complete(&self) -> bool {
        self.k_residues.iter().chain(&self.b_values).all(|&c| c > 0)
    }
}

#[derive(Default)]
struct StateTable {
    states: Vec<Arc<TokenState>>,
    imbalance: Vec<Option<Imbalance>>,
    index: HashMap<Arc<TokenState>, u32, FxBuildHasher>,
}

#[derive(Default)]
struct Memo {
    outcomes: HashMap<(u32, Gas), Arc<Vec<Out>>, FxBuildHasher>,
    coverage: Coverage,
}

/// Interned states and external-call outcomes shared between workers.
/// Coverage is counted once per memo entry, when it is first inserted, so
/// totals do not depend on how work was split. Ids do depend on it, so they
/// are never used for ordering.
#[derive(Default)]
pub struct SharedMemo {
    table: Mutex<StateTable>,
    memo: Mutex<Memo>,
}

impl SharedMemo {
    pub fn coverage(&self) -> Coverage {
        self.memo.lock().unwrap().coverage
    }

    /// Memoized external calls.
    pub fn len(&self) -> usize {
        self.memo.lock().unwrap().outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct states seen.
    pub fn states(&self) -> usize {
        self.table.lock().unwrap().states.len()
    }

    fn intern(&self, state: TokenState) -> Sid {
        let mut t = self.table.lock().unwrap();
        if let Some(&id) = t.index.get(&state) {
            return Sid { id, imbalance: t.imbalance[id as usize] };
        }
        let imbalance = state.imbalance();
        let id = u32::try_from(t.states.len()).expect("fewer than 2^32 states");
        let state = Arc::new(state);
        t.states.push(state.clone());
        t.imbalance.push(imbalance);
        t.index.insert(state, id);
        Sid { id, imbalance }
    }

    fn state(&self, sid: Sid) -> Arc<TokenState> {
        self.table.lock().unwrap().states[sid.id as usize].clone()
    }

    fn get(&self, key: &(u32, Gas)) -> Option<Arc<Vec<Out>>> {
        self.memo.lock().unwrap().outcomes.get(key).cloned()
    }

    fn insert(&self, key: (u32, Gas), value: Arc<Vec<Out>>, cov: &Coverage) -> Arc<Vec<Out>> {
        let mut m = self.memo.lock().unwrap();
        if let Some(existing) = m.outcomes.get(&key) {
            return existing.clone();
        }
        m.coverage.add(cov);
        m.outcomes.insert(key, value.clone());
        value
    }
}

fn representatives(arity: usize, max_choice_value: u64) -> Vec<u64> {
    (0..arity as u64).take_while(|&v| v <= max_choice_value).collect()
}

pub struct Enumerator<'a> {
    rules: &'a AdversaryRules,
    memo: &'a SharedMemo,
    k: Vec<u64>,
    b: Vec<u64>,
    r: Vec<u64>,
    addr: Vec<u64>,
    amount: Vec<u64>,
    /// Havoced messages as (choices drawn, message).
    messages: Vec<(Vec<u64>, Msg)>,
}

fn sig(fault: Fault, frame_kind: FrameKind, call: &Call) -> Option<Signature> {
    Some(Signature { fault, frame_kind, call: call.name() })
}

fn single(sid: Sid, gas: Gas, result: CallResult<()>) -> Vec<Out> {
    vec![Out { sid, gas, result, signature: None, witness: Witness::default(), frames: 0 }]
}

impl<'a> Enumerator<'a> {
    pub fn new(rules: &'a AdversaryRules, max_choice_value: u64, memo: &'a SharedMemo) -> Self {
        let d = &rules.domains;
        let reps = |n| representatives(n, max_choice_value);
        let addr = reps(d.addresses.len());
        let mut messages = Vec::new();
        for &s in &addr {
            let sender = d.addresses[s as usize];
            if d.msg_values.is_empty() {
                messages.push((vec![s], Msg::new(sender, U256::ZERO)));
            } else {
                for v in reps(d.msg_values.len()) {
                    messages.push((vec![s, v], Msg::new(sender, d.msg_values[v as usize])));
                }
            }
        }
        Enumerator {
            rules,
            memo,
            k: reps(3),
            b: reps(2),
            r: reps(2),
            addr,
            amount: reps(d.amounts.len()),
            messages,
        }
    }

    fn address(&self, v: u64) -> Address {
        self.rules.domains.addresses[v as usize]
    }

    fn amount(&self, v: u64) -> U256 {
        self.rules.domains.amounts[v as usize]
    }

    /// All distinct `(state, violation)` outcomes of a top-level transaction.
    pub fn transaction(&mut self, state: &TokenState, tx: &Transaction) -> Vec<Outcome> {
        let sid = self.memo.intern(state.clone());
        let mut set = OutcomeSet::new(false);
        for o in self.method(FrameKind::Transaction, &tx.call, tx.msg(), tx.gas, None, sid, state) {
            set.add(o.sid, o.gas, o.result, o.signature, o.frames, || o.witness.clone());
        }
        let outs = set.into_vec();
        let t = self.memo.table.lock().unwrap();
        outs.into_iter()
            .map(|o| Outcome {
                state: t.states[o.sid.id as usize].clone(),
                gas: o.gas,
                result: o.result,
                signature: o.signature,
                witness: o.witness,
                frames: o.frames,
            })
            .collect()
    }

    /// A token method inside its own frame.
    #[allow(clippy::too_many_arguments)]
    fn method(
        &mut self,
        kind: FrameKind,
        call: &Call,
        msg: Msg,
        gas: Gas,
        parent: Option<Gas>,
        sid: Sid,
        state: &TokenState,
    ) -> Vec<Out> {
        let mut entry = None;
        if parent.is_some_and(|pg| gas >= pg) {
            entry = sig(Fault::CalleeGas, kind, call);
        }
        if let Some(imbalance) = sid.imbalance {
            entry = sig(Fault::Invariant { at: Boundary::Entry, imbalance }, kind, call);
        }
        let body = match *call {
            Call::Transfer { from, to, amount } => {
                if state.transfer_guard(from, to, amount, &msg, gas) {
                    let mut s = state.clone();
                    let (g, r) = s.transfer(from, to, amount, msg, gas);
                    single(self.memo.intern(s), g, r)
                } else {
                    single(sid, gas.spend_one(), CallResult::Revert)
                }
            }
            Call::Mint { to, amount } => {
                if state.mint_guard(to, amount, &msg, gas) {
                    let mut s = state.clone();
                    let (g, r) = s.mint(to, amount, msg, gas);
                    single(self.memo.intern(s), g, r)
                } else {
                    single(sid, gas.spend_one(), CallResult::Revert)
                }
            }
            Call::TransferNotify { from, to, amount } => self.notify(sid, state, from, to, amount, msg, gas),
            ref other => panic!("{} is not a token method", other.name()),
        };
        let own = u32::from(gas.has_any());
        body.into_iter()
            .map(|mut o| {
                o.signature = o.signature.or(entry);
                if let Some(imbalance) = o.sid.imbalance {
                    o.signature = sig(Fault::Invariant { at: Boundary::Exit, imbalance }, kind, call);
                }
                if !gas.contract_holds(o.gas) {
                    o.signature = sig(Fault::ReturnedGas, kind, call);
                }
                if o.result.is_revert() && o.sid != sid {
                    o.signature = sig(Fault::RevertModified, kind, call);
                }
                o.frames += own;
                o
            })
            .collect()
    }

    /// Body of `transfer` with notification; mirrors [`crate::token::transfer_with_notify`].
    #[allow(clippy::too_many_arguments)]
    fn notify(
        &mut self,
        sid: Sid,
        state: &TokenState,
        from: Address,
        to: Address,
        amount: U256,
        msg: Msg,
        gas: Gas,
    ) -> Vec<Out> {
        let variant = self.rules.variant;
        if !state.transfer_guard(from, to, amount, &msg, gas) {
            return single(sid, gas.spend_one(), CallResult::Revert);
        }
        let mut s = state.clone();
        let debited = s.credit_and_compute_debit(from, to, amount);
        if variant == Variant::NotifySafe {
            s.balances.insert(from, debited);
        }
        let ext = self.external_call(self.memo.intern(s), Gas(gas.0 - 1), Some(gas));
        let unchanged = variant == Variant::NotifySafe && msg.value.is_zero();
        ext.iter()
            .map(|o| {
                let (sid_out, result) = if self.rules.propagate_failure && o.result.is_revert() {
                    (sid, CallResult::Revert)
                } else if unchanged {
                    (o.sid, CallResult::Success(()))
                } else {
                    let mut st = (*self.memo.state(o.sid)).clone();
                    if variant == Variant::NotifyVulnerable {
                        st.balances.insert(from, debited);
                    }
                    st.receive(&msg);
                    (self.memo.intern(st), CallResult::Success(()))
                };
                Out {
                    sid: sid_out,
                    gas: o.gas.spend_one(),
                    result,
                    signature: o.signature,
                    witness: o.witness.clone(),
                    frames: o.frames,
                }
            })
            .collect()
    }

    fn reentrant_transfer(&self, from: Address, to: Address, amount: U256) -> Call {
        match self.rules.variant {
            Variant::Plain => Call::Transfer { from, to, amount },
            _ => Call::TransferNotify { from, to, amount },
        }
    }

    /// Outcomes of an external call entered with `gas` from a caller holding `parent`.
    fn external_call(&mut self, sid: Sid, gas: Gas, parent: Option<Gas>) -> Arc<Vec<Out>> {
        let outcomes = match self.memo.get(&(sid.id, gas)) {
            Some(hit) => hit,
            None => {
                let mut cov = Coverage::default();
                let computed = Arc::new(self.external_call_body(sid, gas, &mut cov));
                self.memo.insert((sid.id, gas), computed, &cov)
            }
        };
        if parent.is_some_and(|pg| gas >= pg) {
            let pre = sig(Fault::CalleeGas, FrameKind::External, &Call::ExternalCall);
            let patched = outcomes
                .iter()
                .map(|o| Out { signature: o.signature.or(pre), ..o.clone() })
                .collect();
            return Arc::new(patched);
        }
        outcomes
    }

    fn external_call_body(&mut self, sid: Sid, gas: Gas, cov: &mut Coverage) -> Vec<Out> {
        let call = Call::ExternalCall;
        let state = self.memo.state(sid);
        let entry = sid
            .imbalance
            .and_then(|imbalance| sig(Fault::Invariant { at: Boundary::Entry, imbalance }, FrameKind::External, &call));
        let keep_result = self.rules.propagate_failure;

        // Outcomes of the optional re-entrant call. Its status is discarded.
        let mut mids = OutcomeSet::new(false);
        // Every re-entrant call of one method that fails its guard ends in
        // the same outcome, so only the first one is evaluated.
        let mut reverted = [false; 2];
        let messages = self.messages.clone();
        let (addr, amounts) = (self.addr.clone(), self.amount.clone());
        let inner = gas.spend_one();
        let mut reenter = |this: &mut Self, mids: &mut OutcomeSet, prefix: &[u64], c: &Call, msg: Msg| {
            let (passes, slot) = match *c {
                Call::Mint { to, amount } => (state.mint_guard(to, amount, &msg, inner), 1),
                Call::Transfer { from, to, amount } | Call::TransferNotify { from, to, amount } => {
                    (state.transfer_guard(from, to, amount, &msg, inner), 0)
                }
                _ => unreachable!("only token methods are re-entered"),
            };
            if !passes {
                if reverted[slot] {
                    return;
                }
                reverted[slot] = true;
            }
            for o in this.method(FrameKind::Reentrant, c, msg, inner, Some(gas), sid, &state) {
                mids.add(o.sid, o.gas, o.result, o.signature.or(entry), o.frames, || {
                    Witness::join(&Witness::default(), prefix, &o.witness)
                });
            }
        };
        for &k in &self.k.clone() {
            cov.k_residues[(k % 3) as usize] += 1;
            if k % 3 == 0 && gas.has_any() {
                for &f in &addr {
                    for &t in &addr {
                        for &a in &amounts {
                            let c = self.reentrant_transfer(self.address(f), self.address(t), self.amount(a));
                            for (mw, msg) in &messages {
                                let mut prefix = [k, f, t, a, 0, 0];
                                prefix[4..4 + mw.len()].copy_from_slice(mw);
                                reenter(self, &mut mids, &prefix[..4 + mw.len()], &c, *msg);
                            }
                        }
                    }
                }
            } else if k % 3 == 1 && gas.has_any() {
                for &t in &addr {
                    for &a in &amounts {
                        let c = Call::Mint { to: self.address(t), amount: self.amount(a) };
                        for (mw, msg) in &messages {
                            let mut prefix = [k, t, a, 0, 0];
                            prefix[3..3 + mw.len()].copy_from_slice(mw);
                            reenter(self, &mut mids, &prefix[..3 + mw.len()], &c, *msg);
                        }
                    }
                }
            } else {
                mids.add(sid, gas, CallResult::Success(()), entry, 0, || Witness::join(&Witness::default(), &[k], &Witness::default()));
            }
        }
        let own = u32::from(gas.has_any());
        let mut out = OutcomeSet::new(keep_result);
        let mut finish = |s: Sid, g: Gas, r: CallResult<()>, mut sg: Option<Signature>, f: u32, w: &dyn Fn() -> Witness| {
            if let Some(imbalance) = s.imbalance {
                sg = sig(Fault::Invariant { at: Boundary::Exit, imbalance }, FrameKind::External, &call);
            }
            if !gas.contract_holds(g) {
                sg = sig(Fault::ReturnedGas, FrameKind::External, &call);
            }
            out.add(s, g, r, sg, f + own, w);
        };
        for mid in mids.into_vec() {
            for &b in &self.b.clone() {
                cov.b_values[(b % 2) as usize] += 1;
                if b % 2 == 1 && mid.gas.has_any() {
                    let nested = self.external_call(mid.sid, mid.gas.spend_one(), Some(gas));
                    for o in nested.iter() {
                        let w = || Witness::join(&mid.witness, &[b], &o.witness);
                        finish(o.sid, o.gas, o.result, o.signature.or(mid.signature), mid.frames + o.frames, &w);
                    }
                } else {
                    let g_out = match self.rules.gas_accounting {
                        GasAccounting::Literal => gas.spend_one(),
                        GasAccounting::Strict => mid.gas.spend_one(),
                    };
                    for &r in &self.r {
                        let result = if r % 2 == 0 { CallResult::Revert } else { CallResult::Success(()) };
                        let w = || Witness::join(&mid.witness, &[b, r], &Witness::default());
                        finish(mid.sid, g_out, result, mid.signature, mid.frames, &w);
                    }
                }
            }
        }
        out.into_vec()
    }
}

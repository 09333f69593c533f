//! Shared oracles and suites for the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use gasbound_core::adversary::{Adversary, AdversaryRules};
use gasbound_core::auction::Snapshot;
use gasbound_core::checks::Recorder;
use gasbound_core::evm::{self, State};
use gasbound_core::explorer::run::{record, step_world};
use gasbound_core::explorer::{Call, FrameKind, Recording, RunError, Transaction};
use gasbound_core::model::{SeedMint, Setup};
use gasbound_core::primitives::{ATTACKER, BOB, MINTER};
use gasbound_core::token::{TokenState, Variant};
use gasbound_core::{
    Address, ChoiceSource, Gas, GasAccounting, HavocDomains, ModelConfig, ModelId, Msg, Signature,
    World, U256,
};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of a suite: how many cases ran and what failed.
#[derive(Debug, Default)]
pub struct Suite {
    pub cases: usize,
    pub failures: Vec<String>,
}

impl Suite {
    pub fn fail(&mut self, msg: String) {
        if self.failures.len() < 20 {
            self.failures.push(msg);
        } else if self.failures.len() == 20 {
            self.failures.push("...".into());
        }
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn big(v: U256) -> BigUint {
    BigUint::from_bytes_be(&v.to_be_bytes())
}

fn max_big() -> BigUint {
    big(U256::MAX)
}

// ---------------------------------------------------------------------------
// Token guards, written out independently over unbounded naturals.

pub fn oracle_transfer_ok(t: &TokenState, from: Address, to: Address, amount: U256, msg: &Msg, gas: Gas) -> bool {
    let Some(fb) = t.balances.get(&from) else { return false };
    let to_after = t.balances.get(&to).map(|b| big(*b)).unwrap_or_default() + big(amount);
    big(*fb) >= big(amount)
        && msg.sender == from
        && gas.0 >= 1
        && to_after <= max_big()
        && big(t.eth_balance) + big(msg.value) <= max_big()
        && !(t.nonpayable && msg.value != U256::ZERO)
}

pub fn oracle_mint_ok(t: &TokenState, to: Address, amount: U256, msg: &Msg, gas: Gas) -> bool {
    let to_after = t.balances.get(&to).map(|b| big(*b)).unwrap_or_default() + big(amount);
    msg.sender == t.minter
        && gas.0 >= 1
        && to_after <= max_big()
        && big(t.eth_balance) + big(msg.value) <= max_big()
        && !(t.nonpayable && msg.value != U256::ZERO)
}

fn word(rng: &mut ChaCha8Rng) -> U256 {
    match rng.random_range(0..8) {
        0 => U256::ZERO,
        1 => U256::ONE,
        2 => U256::MAX,
        3 => U256::MAX.checked_sub(U256::from(rng.random_range(1..4u64))).unwrap(),
        4 => U256::from_limbs(rng.random()),
        _ => U256::from(rng.random_range(0..20u64)),
    }
}

fn random_token(rng: &mut ChaCha8Rng) -> TokenState {
    let mut t = TokenState::new(Msg::new(MINTER, if rng.random_bool(0.2) { U256::MAX } else { U256::ZERO }));
    for a in 0..4 {
        if rng.random_bool(0.7) {
            let v = word(rng);
            t.balances.insert(Address(a), v);
            t.total_amount += big(v);
        }
    }
    t.nonpayable = rng.random_bool(0.2);
    t
}

fn random_msg(rng: &mut ChaCha8Rng) -> Msg {
    let value = if rng.random_bool(0.7) { U256::ZERO } else { word(rng) };
    Msg::new(Address(rng.random_range(0..4)), value)
}

/// Checks one plain `transfer` or `mint` call against the oracle.
fn check_call(suite: &mut Suite, t: &TokenState, call: &Call, msg: Msg, gas: Gas) {
    suite.cases += 1;
    let mut after = t.clone();
    let (guard, (g, r)) = match *call {
        Call::Transfer { from, to, amount } => {
            (oracle_transfer_ok(t, from, to, amount, &msg, gas), after.transfer(from, to, amount, msg, gas))
        }
        Call::Mint { to, amount } => (oracle_mint_ok(t, to, amount, &msg, gas), after.mint(to, amount, msg, gas)),
        _ => unreachable!(),
    };
    let tag = || format!("{call:?} msg={msg:?} gas={} state={:?}", gas.0, t.balances);
    if r.is_success() != guard {
        suite.fail(format!("success={} but guard={guard}: {}", r.is_success(), tag()));
    }
    if r.is_revert() && after != *t {
        suite.fail(format!("revert modified state: {}", tag()));
    }
    if !(g.0 == 0 || (gas.0 >= 1 && g.0 < gas.0)) {
        suite.fail(format!("gas {} returned from {}: {}", g.0, gas.0, tag()));
    }
    if r.is_success() {
        let mut expect: BTreeMap<Address, BigUint> = t.balances.iter().map(|(a, v)| (*a, big(*v))).collect();
        let mut total = t.total_amount.clone();
        match *call {
            Call::Transfer { from, to, amount } => {
                // The debit is computed after the credit, so a self-transfer nets zero.
                *expect.entry(to).or_default() += big(amount);
                let f = expect.get_mut(&from).unwrap();
                *f -= big(amount);
            }
            Call::Mint { to, amount } => {
                *expect.entry(to).or_default() += big(amount);
                total += big(amount);
            }
            _ => unreachable!(),
        }
        let got: BTreeMap<Address, BigUint> = after.balances.iter().map(|(a, v)| (*a, big(*v))).collect();
        if got != expect || after.total_amount != total {
            suite.fail(format!("wrong post-state {:?}: {}", after.balances, tag()));
        }
        if big(after.eth_balance) != big(t.eth_balance) + big(msg.value) {
            suite.fail(format!("ETH not credited: {}", tag()));
        }
    }
}

/// Guard-boundary cases: every guard clause at, just inside and just past its edge.
fn boundary_cases(suite: &mut Suite) {
    let near_max = U256::MAX.checked_sub(U256::ONE).unwrap();
    let balances = [None, Some(U256::ZERO), Some(U256::ONE), Some(U256::from(5)), Some(near_max), Some(U256::MAX)];
    let amounts = [U256::ZERO, U256::ONE, U256::from(5), U256::from(6), near_max, U256::MAX];
    let values = [U256::ZERO, U256::ONE, U256::MAX];
    let eth = [U256::ZERO, U256::MAX];
    for &fb in &balances {
        for &tb in &balances {
            for &amount in &amounts {
                for gas in [0, 1, 2] {
                    for &value in &values {
                        for &e in &eth {
                            for nonpayable in [false, true] {
                                let mut t = TokenState::new(Msg::new(MINTER, e));
                                t.nonpayable = nonpayable;
                                for (who, b) in [(Address(1), fb), (Address(2), tb)] {
                                    if let Some(b) = b {
                                        t.balances.insert(who, b);
                                        t.total_amount += big(b);
                                    }
                                }
                                for sender in [MINTER, Address(1), Address(2)] {
                                    let msg = Msg::new(sender, value);
                                    for (from, to) in [(Address(1), Address(2)), (Address(1), Address(1)), (Address(3), Address(2))] {
                                        check_call(suite, &t, &Call::Transfer { from, to, amount }, msg, Gas(gas));
                                    }
                                    for to in [Address(1), Address(2), Address(3)] {
                                        check_call(suite, &t, &Call::Mint { to, amount }, msg, Gas(gas));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `random` randomized transfer cases, as many mint cases, plus the boundary grid.
pub fn revert_suite(random: usize, seed: u64) -> Suite {
    let mut suite = Suite::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let t = random_token(&mut rng);
        let (from, to) = (Address(rng.random_range(0..4)), Address(rng.random_range(0..4)));
        let amount = word(&mut rng);
        let mut msg = random_msg(&mut rng);
        if rng.random_bool(0.5) {
            msg.sender = from;
        }
        let gas = Gas(rng.random_range(0..4));
        check_call(&mut suite, &t, &Call::Transfer { from, to, amount }, msg, gas);

        let t = random_token(&mut rng);
        let mut msg = random_msg(&mut rng);
        if rng.random_bool(0.5) {
            msg.sender = MINTER;
        }
        let call = Call::Mint { to: Address(rng.random_range(0..4)), amount: word(&mut rng) };
        check_call(&mut suite, &t, &call, msg, Gas(rng.random_range(0..4)));
    }
    boundary_cases(&mut suite);
    suite
}

// ---------------------------------------------------------------------------
// Choice-sequence decoding.

pub fn plain_rules() -> AdversaryRules {
    AdversaryRules {
        variant: Variant::Plain,
        gas_accounting: GasAccounting::Literal,
        propagate_failure: false,
        domains: HavocDomains::new(4, HavocDomains::default_amounts()),
    }
}

/// Runs one external call and returns its call tree as `(depth, method)`.
pub fn call_shape(choices: Vec<u64>, gas: u64) -> Result<Vec<(u32, String)>, String> {
    let rules = plain_rules();
    let mut state = TokenState::new(Msg::from(MINTER));
    state.mint(Address(1), U256::from(2), Msg::from(MINTER), Gas(1));
    let n = choices.len();
    let mut cs = ChoiceSource::exhaustive(choices);
    let mut rec = Recorder::new();
    Adversary::new(&rules, &mut cs, &mut rec)
        .external_call(&mut state, Gas(gas))
        .map_err(|e| e.to_string())?;
    if cs.remaining() != 0 {
        return Err(format!("{} of {n} choices unused", cs.remaining()));
    }
    Ok(rec.frames().iter().map(|f| (f.depth, f.call.name().to_string())).collect())
}

fn shape(items: &[(u32, &str)]) -> Vec<(u32, String)> {
    items.iter().map(|&(d, s)| (d, s.to_string())).collect()
}

/// The three documented decodings. Argument draws use Minter/Alice and amount 1.
pub fn decoding_cases() -> Vec<(&'static str, Vec<u64>, Vec<(u32, String)>)> {
    // mint: k=1, to, amount, sender ; transfer: k=0, from, to, amount, sender
    let mint = [1, 1, 1, 0];
    let transfer = [0, 1, 2, 1, 1];
    let cat = |parts: &[&[u64]]| parts.concat();
    vec![
        (
            "(k=1,b=1)x2,(k=2,b=0) -> mint;mint",
            cat(&[&mint, &[1], &mint, &[1], &[2, 0, 1]]),
            shape(&[(0, "ExternalCall"), (1, "Mint"), (1, "ExternalCall"), (2, "Mint"), (2, "ExternalCall")]),
        ),
        (
            "(k=0,b=1),(k=1,b=0) -> transfer, nested mint",
            cat(&[&transfer, &[1], &mint, &[0, 1]]),
            shape(&[(0, "ExternalCall"), (1, "Transfer"), (1, "ExternalCall"), (2, "Mint")]),
        ),
        (
            "(k=0,b=1),(k=0,b=0) -> two nested transfers",
            cat(&[&transfer, &[1], &transfer, &[0, 1]]),
            shape(&[(0, "ExternalCall"), (1, "Transfer"), (1, "ExternalCall"), (2, "Transfer")]),
        ),
    ]
}

pub fn decodings_ok() -> Result<(), String> {
    for (name, choices, expected) in decoding_cases() {
        let got = call_shape(choices, 10)?;
        if got != expected {
            return Err(format!("{name}: got {got:?}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// The hand-built exploit.

pub const ACCOMPLICE: Address = BOB;

pub fn exploit_config() -> ModelConfig {
    let mut cfg = ModelConfig::for_model(ModelId::TokenNotifyVuln);
    cfg.amounts = vec![U256::ZERO, U256::ONE, U256::from(10), U256::MAX];
    cfg.gas = 6;
    cfg.setup = Setup { mints: vec![SeedMint { to: ATTACKER, amount: U256::from(10) }], ..Setup::default() };
    cfg
}

/// Attacker sends 10 to the accomplice; the notification re-enters the same
/// transfer before the attacker's balance is written.
pub fn exploit_run() -> Result<Recording, RunError> {
    let cfg = exploit_config();
    let tx = Transaction {
        caller: ATTACKER,
        call: Call::TransferNotify { from: ATTACKER, to: ACCOMPLICE, amount: U256::from(10) },
        value: U256::ZERO,
        gas: Gas(6),
    };
    // outer call: k=0, from=Attacker, to=Accomplice, amount=10, sender=Attacker
    // inner notification: k=2, b=0, status ; outer: b=0, status
    record(&cfg, &[tx], vec![0, 3, 2, 2, 3, 2, 0, 1, 0, 1])
}

pub fn sums(t: &TokenState) -> (BigUint, BigUint) {
    (t.supply(), t.total_amount.clone())
}

/// Whether the trace has a re-entrant transfer frame below a top-level
/// notifying transfer.
pub fn has_nested_reentrant_transfer(frames: &[gasbound_core::explorer::Frame]) -> bool {
    let mut top_is_notify = false;
    for f in frames {
        if f.depth == 0 {
            top_is_notify = matches!(f.call, Call::TransferNotify { .. });
        } else if top_is_notify && f.kind == FrameKind::Reentrant && f.call.is_transfer() {
            return true;
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Auction history.

/// Independent check of the two temporal properties over a snapshot history.
pub fn history_ok(h: &[Snapshot]) -> Result<(), String> {
    for (i, w) in h.windows(2).enumerate() {
        if w[0].ended && !w[1].ended {
            return Err(format!("ended reset at step {}", i + 1));
        }
        if !w[0].ended && big(w[1].highest_bid) < big(w[0].highest_bid) {
            return Err(format!("highest bid decreased at step {}", i + 1));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mini-EVM.

pub fn add_bytes_failures() -> Vec<(u8, u8)> {
    let mut bad = Vec::new();
    for x in 0..=255u8 {
        for y in 0..=255u8 {
            let code = vec![0x60, x, 0x60, y, 0x01];
            let st = evm::execute_n(&evm::init(code, 100, BTreeMap::new()), 3);
            let top = st.machine().and_then(|m| m.peek(0));
            if top != Some(U256::from(u64::from(x) + u64::from(y))) || st.machine().map(|m| m.stack.len()) != Some(1) {
                bad.push((x, y));
            }
        }
    }
    bad
}

pub fn inc_inputs(random: usize, seed: u64) -> Vec<U256> {
    evm::inc_inputs(random, seed)
}

/// The increment biconditional for one input, checked from the outside.
pub fn inc_case(initial: U256) -> Result<(), String> {
    let run = evm::run_inc(initial, 40_000);
    match (&run.fin, initial < U256::MAX) {
        (State::Returns { storage, .. }, true) => {
            let want = initial.checked_add(U256::ONE).unwrap();
            if storage.get(&U256::ZERO) != Some(&want) {
                return Err(format!("{initial:?}: slot 0 = {:?}", storage.get(&U256::ZERO)));
            }
            if run.branch_pc != 0xf {
                return Err(format!("{initial:?}: returned via pc {:#x}", run.branch_pc));
            }
        }
        (State::Reverts { .. }, false) => {
            if run.branch_pc != 0xa {
                return Err(format!("{initial:?}: reverted via pc {:#x}", run.branch_pc));
            }
        }
        (fin, fits) => return Err(format!("{initial:?}: ended {} (fits = {fits})", fin.label())),
    }
    evm::check_inc(initial)
}

// ---------------------------------------------------------------------------
// Brute-force enumeration of one transaction's choice tree.

/// Every distinct `(state, violation)` a transaction can reach, found by
/// walking all choice vectors one by one.
pub fn brute_outcomes(cfg: &ModelConfig, world: &World, tx: &Transaction) -> BTreeSet<(String, Option<String>)> {
    let rules = cfg.rules();
    let mut out = BTreeSet::new();
    let mut stack = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        match step_world(cfg, rules.as_ref(), world, tx, prefix.clone()) {
            Ok((w, sig, 0)) => {
                out.insert(key(&w, sig));
            }
            Ok(_) => panic!("choices left over"),
            Err(RunError::Exhausted(e)) => {
                for v in 0..e.bound.min(cfg.max_choice_value + 1) {
                    let mut next = prefix.clone();
                    next.push(v);
                    stack.push(next);
                }
            }
            Err(e) => panic!("{e}"),
        }
    }
    out
}

pub fn key(w: &World, sig: Option<Signature>) -> (String, Option<String>) {
    (serde_json::to_string(w).unwrap(), sig.map(|s| format!("{s:?}")))
}

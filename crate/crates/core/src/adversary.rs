//! The adversarial external-call model.
//!
//! An external call may re-enter the token (`transfer` or `mint` with
//! arbitrary arguments), chain into a further external call, and finally
//! return an arbitrary status. Every nondeterministic decision is drawn from a
//! [`ChoiceSource`], so any execution can be replayed from its choice log.
//! Gas strictly decreases on every call edge, which bounds the recursion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::Recorder;
use crate::explorer::trace::{Call, FrameKind};
use crate::primitives::{Address, CallResult, Gas, Msg};
use crate::token::{transfer_with_notify, MethodResult, TokenState, Variant};
use crate::u256::U256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("choice source exhausted after {consumed} draws")]
pub struct ChoiceExhausted {
    pub consumed: usize,
    /// Number of values the failed draw distinguishes.
    pub bound: u64,
}

#[derive(Debug, Clone)]
enum Mode {
    Exhaustive { choices: Vec<u64>, cursor: usize },
    Random { rng: ChaCha8Rng },
}

/// Replayable oracle of nondeterminism.
///
/// In exhaustive mode it hands out a fixed sequence of naturals; in random
/// mode it draws from a seeded generator. Both record every value handed out,
/// and replaying that log in exhaustive mode reproduces the same decisions.
#[derive(Debug, Clone)]
pub struct ChoiceSource {
    mode: Mode,
    log: Vec<u64>,
}

impl ChoiceSource {
    pub fn exhaustive(choices: Vec<u64>) -> Self {
        ChoiceSource { mode: Mode::Exhaustive { choices, cursor: 0 }, log: Vec::new() }
    }

    pub fn random(seed: u64) -> Self {
        ChoiceSource { mode: Mode::Random { rng: ChaCha8Rng::seed_from_u64(seed) }, log: Vec::new() }
    }

    pub fn log(&self) -> &[u64] {
        &self.log
    }

    pub fn into_log(self) -> Vec<u64> {
        self.log
    }

    /// Values not yet consumed (exhaustive mode only).
    pub fn remaining(&self) -> usize {
        match &self.mode {
            Mode::Exhaustive { choices, cursor } => choices.len() - cursor,
            Mode::Random { .. } => 0,
        }
    }

    /// Next raw natural. `bound` is the number of distinct outcomes the caller
    /// distinguishes; random mode draws uniformly below it, exhaustive mode
    /// returns the stored value unchanged.
    pub fn havoc_nat(&mut self, bound: u64) -> Result<u64, ChoiceExhausted> {
        let v = match &mut self.mode {
            Mode::Exhaustive { choices, cursor } => {
                let v = *choices.get(*cursor).ok_or(ChoiceExhausted { consumed: *cursor, bound })?;
                *cursor += 1;
                v
            }
            Mode::Random { rng } => rng.random_range(0..bound.max(1)),
        };
        self.log.push(v);
        Ok(v)
    }

    pub fn havoc_bool(&mut self) -> Result<bool, ChoiceExhausted> {
        Ok(self.havoc_nat(2)? % 2 == 1)
    }

    pub fn havoc_address(&mut self, domains: &HavocDomains) -> Result<Address, ChoiceExhausted> {
        let n = domains.addresses.len() as u64;
        Ok(domains.addresses[(self.havoc_nat(n)? % n) as usize])
    }

    pub fn havoc_amount(&mut self, domains: &HavocDomains) -> Result<U256, ChoiceExhausted> {
        let n = domains.amounts.len() as u64;
        Ok(domains.amounts[(self.havoc_nat(n)? % n) as usize])
    }

    /// A message from a havoced sender. The value is zero unless the domains
    /// widen it, in which case it is a second draw over `msg_values`.
    pub fn havoc_msg(&mut self, domains: &HavocDomains) -> Result<Msg, ChoiceExhausted> {
        let sender = self.havoc_address(domains)?;
        let value = if domains.msg_values.is_empty() {
            U256::ZERO
        } else {
            let n = domains.msg_values.len() as u64;
            domains.msg_values[(self.havoc_nat(n)? % n) as usize]
        };
        Ok(Msg::new(sender, value))
    }

    pub fn havoc_result(&mut self) -> Result<CallResult<()>, ChoiceExhausted> {
        Ok(if self.havoc_nat(2)? % 2 == 0 { CallResult::Revert } else { CallResult::Success(()) })
    }
}

/// Finite, ordered value domains for havoced arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HavocDomains {
    pub addresses: Vec<Address>,
    pub amounts: Vec<U256>,
    /// Empty means every havoced message carries zero ETH.
    #[serde(default)]
    pub msg_values: Vec<U256>,
}

impl HavocDomains {
    pub fn default_amounts() -> Vec<U256> {
        vec![U256::ZERO, U256::ONE, U256::from(2), U256::MAX]
    }

    pub fn new(addresses: usize, amounts: Vec<U256>) -> Self {
        assert!(addresses > 0 && !amounts.is_empty(), "havoc domains must be non-empty");
        HavocDomains {
            addresses: (0..addresses as u32).map(Address).collect(),
            amounts,
            msg_values: Vec::new(),
        }
    }
}

/// How the no-recursion branch of an external call computes its gas.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GasAccounting {
    /// From the gas the external call was given, as the model is written.
    #[default]
    Literal,
    /// From the gas left after the re-entrant call.
    Strict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversaryRules {
    pub variant: Variant,
    pub gas_accounting: GasAccounting,
    pub propagate_failure: bool,
    pub domains: HavocDomains,
}

/// Executes token methods and external calls against one choice source,
/// recording every frame.
pub struct Adversary<'a> {
    rules: &'a AdversaryRules,
    choices: &'a mut ChoiceSource,
    recorder: &'a mut Recorder,
}

impl<'a> Adversary<'a> {
    pub fn new(rules: &'a AdversaryRules, choices: &'a mut ChoiceSource, recorder: &'a mut Recorder) -> Self {
        Adversary { rules, choices, recorder }
    }

    pub fn propagates_failure(&self) -> bool {
        self.rules.propagate_failure
    }

    /// Runs a token method inside its own frame.
    pub fn invoke(
        &mut self,
        kind: FrameKind,
        call: Call,
        msg: Msg,
        gas: Gas,
        state: &mut TokenState,
    ) -> Result<MethodResult, ChoiceExhausted> {
        let idx = self.recorder.enter(kind, call.clone(), Some(msg), gas, state);
        let before = state.clone();
        let (g, r) = match call {
            Call::Transfer { from, to, amount } => state.transfer(from, to, amount, msg, gas),
            Call::Mint { to, amount } => state.mint(to, amount, msg, gas),
            Call::TransferNotify { from, to, amount } => {
                transfer_with_notify(state, self.rules.variant, from, to, amount, msg, gas, self)?
            }
            other => panic!("{} is not a token method", other.name()),
        };
        let restored = r.is_success() || *state == before;
        self.recorder.exit(idx, g, r, state, restored);
        Ok((g, r))
    }

    fn reentrant_transfer(&self, from: Address, to: Address, amount: U256) -> Call {
        match self.rules.variant {
            Variant::Plain => Call::Transfer { from, to, amount },
            _ => Call::TransferNotify { from, to, amount },
        }
    }

    /// The adversarial external call.
    ///
    /// Draws `k`: `k mod 3 = 0` re-enters `transfer`, `1` re-enters `mint`,
    /// `2` does neither (re-entry also needs `gas >= 1`). Then draws `b`: if
    /// set and gas remains, chains another external call; otherwise returns
    /// one unit less than it was given (see [`GasAccounting`]) with a havoced
    /// status.
    pub fn external_call(&mut self, state: &mut TokenState, gas: Gas) -> Result<MethodResult, ChoiceExhausted> {
        let idx = self.recorder.enter(FrameKind::External, Call::ExternalCall, None, gas, state);
        let domains = &self.rules.domains;
        let mut g = gas;
        let k = self.choices.havoc_nat(3)?;
        if k % 3 == 0 && g.has_any() {
            let from = self.choices.havoc_address(domains)?;
            let to = self.choices.havoc_address(domains)?;
            let amount = self.choices.havoc_amount(domains)?;
            let msg = self.choices.havoc_msg(domains)?;
            let call = self.reentrant_transfer(from, to, amount);
            (g, _) = self.invoke(FrameKind::Reentrant, call, msg, g.spend_one(), state)?;
        } else if k % 3 == 1 && g.has_any() {
            let to = self.choices.havoc_address(domains)?;
            let amount = self.choices.havoc_amount(domains)?;
            let msg = self.choices.havoc_msg(domains)?;
            (g, _) = self.invoke(FrameKind::Reentrant, Call::Mint { to, amount }, msg, g.spend_one(), state)?;
        }
        let b = self.choices.havoc_bool()?;
        let (g, r) = if b && g.has_any() {
            self.external_call(state, g.spend_one())?
        } else {
            let g = match self.rules.gas_accounting {
                GasAccounting::Literal => gas.spend_one(),
                GasAccounting::Strict => g.spend_one(),
            };
            (g, self.choices.havoc_result()?)
        };
        self.recorder.exit(idx, g, r, state, true);
        Ok((g, r))
    }
}

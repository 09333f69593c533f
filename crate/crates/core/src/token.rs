//! The token contract: revert-lifted `transfer`/`mint` and a notifying
//! `transfer` whose notification is modelled as an adversarial external call.
//!
//! The ghost `total_amount` tracks minted supply; the global invariant is
//! `total_amount == sum(balances)`.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, ChoiceExhausted};
use crate::checks::{Checked, Imbalance};
use crate::primitives::{sum_values, Address, CallResult, Gas, Msg};
use crate::u256::U256;

/// Where the notification sits relative to the balance updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// No notification.
    Plain,
    /// Both balance writes, then the external call (checks-effects-interactions).
    NotifySafe,
    /// Credit `to`, external call, then write the `from` balance computed before the call.
    NotifyVulnerable,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenState {
    pub minter: Address,
    pub balances: BTreeMap<Address, U256>,
    pub eth_balance: U256,
    /// Ghost: total minted supply.
    pub total_amount: BigUint,
    pub is_contract: bool,
    /// Reject calls carrying ETH.
    #[serde(default)]
    pub nonpayable: bool,
    /// Compute the debited `from` balance before crediting `to`, so a
    /// self-transfer destroys `amount` tokens.
    #[serde(default)]
    pub stale_self_debit: bool,
}

pub type MethodResult = (Gas, CallResult<()>);

impl TokenState {
    /// Constructor. Always succeeds.
    pub fn new(msg: Msg) -> Self {
        TokenState {
            minter: msg.sender,
            balances: BTreeMap::new(),
            eth_balance: msg.value,
            total_amount: BigUint::default(),
            is_contract: true,
            nonpayable: false,
            stale_self_debit: false,
        }
    }

    pub fn balance_of(&self, who: Address) -> Option<U256> {
        self.balances.get(&who).copied()
    }

    pub fn supply(&self) -> BigUint {
        sum_values(self.balances.values())
    }

    fn payment_ok(&self, msg: &Msg) -> bool {
        if self.nonpayable && !msg.value.is_zero() {
            return false;
        }
        self.eth_balance.checked_add(msg.value).is_ok()
    }

    fn credit_fits(&self, to: Address, amount: U256) -> bool {
        match self.balances.get(&to) {
            None => true,
            Some(b) => b.checked_add(amount).is_ok(),
        }
    }

    /// Success condition of `transfer`, evaluated left to right.
    pub fn transfer_guard(&self, from: Address, to: Address, amount: U256, msg: &Msg, gas: Gas) -> bool {
        let Some(&from_balance) = self.balances.get(&from) else {
            return false;
        };
        from_balance >= amount
            && msg.sender == from
            && gas.has_any()
            && self.credit_fits(to, amount)
            && self.payment_ok(msg)
    }

    /// Success condition of `mint`.
    pub fn mint_guard(&self, to: Address, amount: U256, msg: &Msg, gas: Gas) -> bool {
        msg.sender == self.minter && gas.has_any() && self.credit_fits(to, amount) && self.payment_ok(msg)
    }

    fn credit(&mut self, to: Address, amount: U256) {
        let current = self.balances.get(&to).copied().unwrap_or(U256::ZERO);
        let credited = current
            .checked_add(amount)
            .expect("credit overflow ruled out by the guard");
        self.balances.insert(to, credited);
    }

    fn debited_balance(&self, from: Address, amount: U256) -> U256 {
        self.balances[&from]
            .checked_sub(amount)
            .expect("debit underflow ruled out by the guard")
    }

    pub(crate) fn receive(&mut self, msg: &Msg) {
        self.eth_balance = self
            .eth_balance
            .checked_add(msg.value)
            .expect("ETH overflow ruled out by the guard");
    }

    /// Credits `to` and returns the value `from` must be overwritten with.
    pub(crate) fn credit_and_compute_debit(&mut self, from: Address, to: Address, amount: U256) -> U256 {
        if self.stale_self_debit {
            let debited = self.debited_balance(from, amount);
            self.credit(to, amount);
            debited
        } else {
            self.credit(to, amount);
            self.debited_balance(from, amount)
        }
    }

    pub fn transfer(&mut self, from: Address, to: Address, amount: U256, msg: Msg, gas: Gas) -> MethodResult {
        if !self.transfer_guard(from, to, amount, &msg, gas) {
            return (gas.spend_one(), CallResult::Revert);
        }
        let debited = self.credit_and_compute_debit(from, to, amount);
        self.balances.insert(from, debited);
        self.receive(&msg);
        (Gas(gas.0 - 1), CallResult::Success(()))
    }

    pub fn mint(&mut self, to: Address, amount: U256, msg: Msg, gas: Gas) -> MethodResult {
        if !self.mint_guard(to, amount, &msg, gas) {
            return (gas.spend_one(), CallResult::Revert);
        }
        self.credit(to, amount);
        self.total_amount += amount.to_biguint();
        self.receive(&msg);
        (Gas(gas.0 - 1), CallResult::Success(()))
    }
}

impl Checked for TokenState {
    fn imbalance(&self) -> Option<Imbalance> {
        // Sum into five limbs; cannot overflow for fewer than 2^64 balances.
        let mut sum = [0u64; 5];
        for v in self.balances.values() {
            let mut carry = 0u64;
            for (i, limb) in v.limbs().into_iter().enumerate() {
                let (a, c1) = sum[i].overflowing_add(limb);
                let (b, c2) = a.overflowing_add(carry);
                sum[i] = b;
                carry = u64::from(c1) + u64::from(c2);
            }
            sum[4] += carry;
        }
        if self.total_amount.bits() > 320 {
            return Some(Imbalance::Deficit);
        }
        let mut total = [0u64; 5];
        for (i, d) in self.total_amount.iter_u64_digits().enumerate() {
            total[i] = d;
        }
        match sum.iter().rev().cmp(total.iter().rev()) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(Imbalance::Surplus),
            std::cmp::Ordering::Less => Some(Imbalance::Deficit),
        }
    }
}

/// `transfer` followed by a notification of `to`, modelled by
/// [`Adversary::external_call`]. The external call's status is not
/// propagated unless the adversary is configured to.
#[allow(clippy::too_many_arguments)]
pub fn transfer_with_notify(
    state: &mut TokenState,
    variant: Variant,
    from: Address,
    to: Address,
    amount: U256,
    msg: Msg,
    gas: Gas,
    adversary: &mut Adversary<'_>,
) -> Result<MethodResult, ChoiceExhausted> {
    assert!(variant != Variant::Plain, "plain token has no notification");
    if !state.transfer_guard(from, to, amount, &msg, gas) {
        return Ok((gas.spend_one(), CallResult::Revert));
    }
    let snapshot = adversary.propagates_failure().then(|| state.clone());
    let debited = state.credit_and_compute_debit(from, to, amount);
    let (g1, r1) = match variant {
        Variant::NotifySafe => {
            state.balances.insert(from, debited);
            adversary.external_call(state, Gas(gas.0 - 1))?
        }
        Variant::NotifyVulnerable => {
            let out = adversary.external_call(state, Gas(gas.0 - 1))?;
            state.balances.insert(from, debited);
            out
        }
        Variant::Plain => unreachable!(),
    };
    debug_assert!(Gas(gas.0).contract_holds(g1));
    if let (Some(snapshot), CallResult::Revert) = (snapshot, r1) {
        *state = snapshot;
        return Ok((g1.spend_one(), CallResult::Revert));
    }
    state.receive(&msg);
    Ok((g1.spend_one(), CallResult::Success(())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{ALICE, BOB, MINTER};

    fn token_with(balances: &[(Address, U256)]) -> TokenState {
        let mut t = TokenState::new(Msg::from(MINTER));
        for &(who, amount) in balances {
            t.balances.insert(who, amount);
            t.total_amount += amount.to_biguint();
        }
        t
    }

    #[test]
    fn constructor_postcondition() {
        let t = TokenState::new(Msg::new(MINTER, 100.into()));
        assert_eq!(t.minter, MINTER);
        assert!(t.balances.is_empty());
        assert_eq!(t.eth_balance, U256::from(100));
        assert_eq!(t.total_amount, BigUint::default());
        assert!(t.is_contract);
        assert!(t.ginv());
        assert!(TokenState::new(Msg::from(BOB)).ginv());
    }

    #[test]
    fn transfer_examples() {
        let mut t = token_with(&[(ALICE, 10.into())]);
        let out = t.transfer(ALICE, BOB, 3.into(), Msg::from(ALICE), Gas(5));
        assert_eq!(out, (Gas(4), CallResult::Success(())));
        assert_eq!(t.balances, BTreeMap::from([(ALICE, 7.into()), (BOB, 3.into())]));

        let mut t = token_with(&[(ALICE, 10.into())]);
        let before = t.clone();
        let out = t.transfer(ALICE, BOB, 3.into(), Msg::from(BOB), Gas(5));
        assert_eq!(out, (Gas(4), CallResult::Revert));
        assert_eq!(t, before);

        let out = t.transfer(ALICE, BOB, 3.into(), Msg::from(ALICE), Gas(0));
        assert_eq!(out, (Gas(0), CallResult::Revert));
        assert_eq!(t, before);

        let mut t = token_with(&[(ALICE, 1.into()), (BOB, U256::MAX)]);
        let before = t.clone();
        let out = t.transfer(ALICE, BOB, 1.into(), Msg::from(ALICE), Gas(5));
        assert_eq!(out, (Gas(4), CallResult::Revert));
        assert_eq!(t, before);
    }

    #[test]
    fn transfer_from_unknown_account_reverts() {
        let mut t = token_with(&[]);
        let out = t.transfer(ALICE, BOB, U256::ZERO, Msg::from(ALICE), Gas(3));
        assert_eq!(out, (Gas(2), CallResult::Revert));
    }

    #[test]
    fn mint_examples() {
        let mut t = TokenState::new(Msg::from(MINTER));
        let out = t.mint(ALICE, 5.into(), Msg::from(MINTER), Gas(2));
        assert_eq!(out, (Gas(1), CallResult::Success(())));
        assert_eq!(t.balances, BTreeMap::from([(ALICE, 5.into())]));
        assert_eq!(t.total_amount, BigUint::from(5u32));

        let before = t.clone();
        assert_eq!(t.mint(ALICE, 5.into(), Msg::from(BOB), Gas(2)).1, CallResult::Revert);
        assert_eq!(t, before);

        let mut t = token_with(&[(ALICE, U256::MAX)]);
        let before = t.clone();
        assert_eq!(t.mint(ALICE, 1.into(), Msg::from(MINTER), Gas(3)), (Gas(2), CallResult::Revert));
        assert_eq!(t, before);
    }

    #[test]
    fn self_transfer_nets_zero() {
        let mut t = token_with(&[(ALICE, 10.into())]);
        let out = t.transfer(ALICE, ALICE, 4.into(), Msg::from(ALICE), Gas(2));
        assert_eq!(out.1, CallResult::Success(()));
        assert_eq!(t.balance_of(ALICE), Some(10.into()));
        assert!(t.ginv());
    }

    #[test]
    fn stale_self_debit_burns_tokens() {
        let mut t = token_with(&[(ALICE, 10.into())]);
        t.stale_self_debit = true;
        t.transfer(ALICE, ALICE, 4.into(), Msg::from(ALICE), Gas(2));
        assert_eq!(t.balance_of(ALICE), Some(6.into()));
        assert!(!t.ginv());
    }

    #[test]
    fn nonpayable_rejects_value() {
        let mut t = token_with(&[(ALICE, 10.into())]);
        t.nonpayable = true;
        let out = t.transfer(ALICE, BOB, 1.into(), Msg::new(ALICE, 1.into()), Gas(2));
        assert_eq!(out.1, CallResult::Revert);
        let out = t.transfer(ALICE, BOB, 1.into(), Msg::from(ALICE), Gas(2));
        assert_eq!(out.1, CallResult::Success(()));
    }

    #[test]
    fn payable_transfer_collects_eth() {
        let mut t = token_with(&[(ALICE, 10.into())]);
        t.transfer(ALICE, BOB, 1.into(), Msg::new(ALICE, 7.into()), Gas(2));
        assert_eq!(t.eth_balance, U256::from(7));
        t.eth_balance = U256::MAX;
        let out = t.transfer(ALICE, BOB, 1.into(), Msg::new(ALICE, 1.into()), Gas(2));
        assert_eq!(out.1, CallResult::Revert);
    }
}

//! A simplified open auction with ghost history.
//!
//! Each public method appends an `(ended, highest_bid)` snapshot when it
//! returns, whether it succeeded or reverted. The history makes multi-state
//! properties checkable: once `ended` is set it stays set, and the highest bid
//! never decreases while the auction runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::checks::{Checked, HistoryFault, Imbalance};
use crate::primitives::{sum_values, Address, CallResult, Gas, Msg};
use crate::token::MethodResult;
use crate::u256::U256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Snapshot {
    pub ended: bool,
    pub highest_bid: U256,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AuctionState {
    pub beneficiary: Address,
    pub highest_bid: U256,
    pub highest_bidder: Option<Address>,
    pub ended: bool,
    pub eth_balance: U256,
    /// ETH sent with the constructor; owed to nobody.
    pub reserve: U256,
    /// Outbid amounts waiting to be withdrawn.
    pub pending_returns: BTreeMap<Address, U256>,
    /// ETH paid out to the beneficiary when the auction ended.
    pub paid_to_beneficiary: U256,
    /// Ghost.
    pub history: Vec<Snapshot>,
}

impl AuctionState {
    pub fn new(beneficiary: Address, msg: Msg) -> Self {
        let mut s = AuctionState {
            beneficiary,
            highest_bid: U256::ZERO,
            highest_bidder: None,
            ended: false,
            eth_balance: msg.value,
            reserve: msg.value,
            pending_returns: BTreeMap::new(),
            paid_to_beneficiary: U256::ZERO,
            history: Vec::new(),
        };
        s.record();
        s
    }

    fn record(&mut self) {
        self.history.push(Snapshot { ended: self.ended, highest_bid: self.highest_bid });
    }

    fn finish(&mut self, gas: Gas, ok: bool) -> MethodResult {
        self.record();
        if ok {
            (Gas(gas.0 - 1), CallResult::Success(()))
        } else {
            (gas.spend_one(), CallResult::Revert)
        }
    }

    /// State with the ghost history removed, for revert-purity comparisons.
    pub fn without_history(&self) -> AuctionState {
        AuctionState { history: Vec::new(), ..self.clone() }
    }

    pub fn bid_guard(&self, msg: &Msg, gas: Gas) -> bool {
        if self.ended || msg.value <= self.highest_bid || !gas.has_any() {
            return false;
        }
        // ETH accounting must stay representable.
        let refund_fits = match self.highest_bidder {
            Some(prev) => self
                .pending_returns
                .get(&prev)
                .copied()
                .unwrap_or_default()
                .checked_add(self.highest_bid)
                .is_ok(),
            None => true,
        };
        refund_fits && self.eth_balance.checked_add(msg.value).is_ok()
    }

    pub fn bid(&mut self, msg: Msg, gas: Gas) -> MethodResult {
        if !self.bid_guard(&msg, gas) {
            return self.finish(gas, false);
        }
        if let Some(prev) = self.highest_bidder {
            let owed = self.pending_returns.get(&prev).copied().unwrap_or_default();
            self.pending_returns.insert(prev, owed.checked_add(self.highest_bid).expect("guarded"));
        }
        self.highest_bid = msg.value;
        self.highest_bidder = Some(msg.sender);
        self.eth_balance = self.eth_balance.checked_add(msg.value).expect("guarded");
        self.finish(gas, true)
    }

    pub fn auction_end(&mut self, _msg: Msg, gas: Gas) -> MethodResult {
        if self.ended || !gas.has_any() {
            return self.finish(gas, false);
        }
        self.ended = true;
        self.eth_balance = self.eth_balance.checked_sub(self.highest_bid).expect("bid is held");
        self.paid_to_beneficiary = self.highest_bid;
        self.finish(gas, true)
    }

    pub fn withdraw(&mut self, msg: Msg, gas: Gas) -> MethodResult {
        let owed = self.pending_returns.get(&msg.sender).copied().unwrap_or_default();
        if owed.is_zero() || !gas.has_any() {
            return self.finish(gas, false);
        }
        self.pending_returns.remove(&msg.sender);
        self.eth_balance = self.eth_balance.checked_sub(owed).expect("refund is held");
        self.finish(gas, true)
    }

    /// Checks the history properties, returning the first offending step.
    pub fn check_history(history: &[Snapshot]) -> Result<(), (usize, HistoryFault)> {
        for (i, pair) in history.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            let fault = if a.ended && !b.ended {
                HistoryFault::EndedReset
            } else if !a.ended && b.highest_bid < a.highest_bid {
                HistoryFault::BidDecreased
            } else if a.ended && b.highest_bid != a.highest_bid {
                HistoryFault::BidChangedAfterEnd
            } else {
                continue;
            };
            return Err((i + 1, fault));
        }
        Ok(())
    }
}

impl Checked for AuctionState {
    /// ETH held equals reserve plus outstanding refunds plus the live
    /// highest bid. The summed side is what is owed.
    fn imbalance(&self) -> Option<Imbalance> {
        let live = if self.ended { U256::ZERO } else { self.highest_bid };
        let mut owed = sum_values(self.pending_returns.values());
        owed += live.to_biguint();
        owed += self.reserve.to_biguint();
        match owed.cmp(&self.eth_balance.to_biguint()) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(Imbalance::Surplus),
            std::cmp::Ordering::Less => Some(Imbalance::Deficit),
        }
    }

    fn history_fault(&self) -> Option<HistoryFault> {
        // Earlier prefixes were checked when they were appended.
        let n = self.history.len();
        AuctionState::check_history(&self.history[n.saturating_sub(2)..]).err().map(|(_, f)| f)
    }
}

//! Scenario configuration and the world a scenario starts from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryRules, GasAccounting, HavocDomains};
use crate::auction::AuctionState;
use crate::checks::{Checked, HistoryFault, Imbalance};
use crate::explorer::trace::{Call, Transaction};
use crate::primitives::{Address, Gas, Msg, ALICE, MINTER};
use crate::token::{TokenState, Variant};
use crate::u256::U256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    TokenPlain,
    TokenNotifySafe,
    TokenNotifyVuln,
    Auction,
}

impl ModelId {
    pub const ALL: [ModelId; 4] =
        [ModelId::TokenPlain, ModelId::TokenNotifySafe, ModelId::TokenNotifyVuln, ModelId::Auction];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::TokenPlain => "token-plain",
            ModelId::TokenNotifySafe => "token-notify-safe",
            ModelId::TokenNotifyVuln => "token-notify-vuln",
            ModelId::Auction => "auction",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            ModelId::TokenPlain => Some(Variant::Plain),
            ModelId::TokenNotifySafe => Some(Variant::NotifySafe),
            ModelId::TokenNotifyVuln => Some(Variant::NotifyVulnerable),
            ModelId::Auction => None,
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model `{s}` (expected one of token-plain, token-notify-safe, token-notify-vuln, auction)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedMint {
    pub to: Address,
    pub amount: U256,
}

/// Transactions applied before exploration starts, without checks.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Setup {
    /// Value sent with the constructor; the constructor is always sent by Minter.
    pub creation_value: U256,
    /// Token models only; ignored by the auction.
    pub mints: Vec<SeedMint>,
    /// Auction model only.
    pub beneficiary: Address,
}

impl Default for Setup {
    fn default() -> Self {
        Setup { creation_value: U256::ZERO, mints: vec![SeedMint { to: ALICE, amount: U256::from(2) }], beneficiary: MINTER }
    }
}

/// Everything that determines the semantics of a run: model, domains,
/// gas budget and mode flags.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub model: ModelId,
    pub addresses: usize,
    pub amounts: Vec<U256>,
    /// Gas given to every transaction.
    pub gas: u64,
    /// Largest raw value the exhaustive enumerator draws at a choice point.
    pub max_choice_value: u64,
    pub gas_accounting: GasAccounting,
    pub propagate_external_failure: bool,
    pub strict_nonpayable: bool,
    /// Draw havoced and transaction message values from `amounts` instead of 0.
    pub havoc_msg_value: bool,
    pub stale_self_debit: bool,
    pub setup: Setup,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model: ModelId::TokenNotifySafe,
            addresses: 4,
            amounts: HavocDomains::default_amounts(),
            gas: 6,
            max_choice_value: 5,
            gas_accounting: GasAccounting::Literal,
            propagate_external_failure: false,
            strict_nonpayable: false,
            havoc_msg_value: false,
            stale_self_debit: false,
            setup: Setup::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("address universe must have at least one address")]
    NoAddresses,
    #[error("amount domain must not be empty")]
    NoAmounts,
    #[error("setup refers to address {0}, outside the universe")]
    UnknownAddress(Address),
    #[error("setup mint of {amount} to {to} reverted")]
    SetupReverted { to: Address, amount: U256 },
}

impl ModelConfig {
    pub fn for_model(model: ModelId) -> Self {
        ModelConfig { model, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.addresses == 0 {
            return Err(ConfigError::NoAddresses);
        }
        if self.amounts.is_empty() {
            return Err(ConfigError::NoAmounts);
        }
        let known = |a: Address| a.index() < self.addresses;
        let token = self.model.variant().is_some();
        if let Some(m) = self.setup.mints.iter().find(|m| token && !known(m.to)) {
            return Err(ConfigError::UnknownAddress(m.to));
        }
        if self.model == ModelId::Auction && !known(self.setup.beneficiary) {
            return Err(ConfigError::UnknownAddress(self.setup.beneficiary));
        }
        Ok(())
    }

    pub fn domains(&self) -> HavocDomains {
        let mut d = HavocDomains::new(self.addresses, self.amounts.clone());
        if self.havoc_msg_value {
            d.msg_values = self.amounts.clone();
        }
        d
    }

    /// Adversary rules; `None` for the auction.
    pub fn rules(&self) -> Option<AdversaryRules> {
        Some(AdversaryRules {
            variant: self.model.variant()?,
            gas_accounting: self.gas_accounting,
            propagate_failure: self.propagate_external_failure,
            domains: self.domains(),
        })
    }

    fn tx_values(&self) -> Vec<U256> {
        if self.havoc_msg_value {
            self.amounts.clone()
        } else {
            vec![U256::ZERO]
        }
    }

    /// Every transaction the explorer may issue, in a fixed order.
    pub fn transactions(&self) -> Vec<Transaction> {
        let addrs: Vec<Address> = (0..self.addresses as u32).map(Address).collect();
        let gas = Gas(self.gas);
        let mut out = Vec::new();
        let mut push = |caller, call, value| out.push(Transaction { caller, call, value, gas });
        match self.model.variant() {
            Some(variant) => {
                for &caller in &addrs {
                    for value in self.tx_values() {
                        for &from in &addrs {
                            for &to in &addrs {
                                for &amount in &self.amounts {
                                    let call = match variant {
                                        Variant::Plain => Call::Transfer { from, to, amount },
                                        _ => Call::TransferNotify { from, to, amount },
                                    };
                                    push(caller, call, value);
                                }
                            }
                        }
                        for &to in &addrs {
                            for &amount in &self.amounts {
                                push(caller, Call::Mint { to, amount }, value);
                            }
                        }
                    }
                }
            }
            None => {
                for &caller in &addrs {
                    for &value in &self.amounts {
                        push(caller, Call::Bid, value);
                    }
                    push(caller, Call::AuctionEnd, U256::ZERO);
                    push(caller, Call::Withdraw, U256::ZERO);
                }
            }
        }
        out
    }

    /// Constructor followed by the setup transactions.
    pub fn initial_world(&self) -> Result<World, ConfigError> {
        self.validate()?;
        let creation = Msg::new(MINTER, self.setup.creation_value);
        match self.model.variant() {
            Some(_) => {
                let mut t = TokenState::new(creation);
                t.nonpayable = self.strict_nonpayable;
                t.stale_self_debit = self.stale_self_debit;
                for m in &self.setup.mints {
                    if t.mint(m.to, m.amount, Msg::from(MINTER), Gas(1)).1.is_revert() {
                        return Err(ConfigError::SetupReverted { to: m.to, amount: m.amount });
                    }
                }
                Ok(World::Token(t))
            }
            None => Ok(World::Auction(AuctionState::new(self.setup.beneficiary, creation))),
        }
    }
}

/// The contract instance a scenario runs against.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "contract", rename_all = "kebab-case")]
pub enum World {
    Token(TokenState),
    Auction(AuctionState),
}

impl Checked for World {
    fn imbalance(&self) -> Option<Imbalance> {
        match self {
            World::Token(t) => t.imbalance(),
            World::Auction(a) => a.imbalance(),
        }
    }

    fn history_fault(&self) -> Option<HistoryFault> {
        match self {
            World::Token(t) => t.history_fault(),
            World::Auction(a) => a.history_fault(),
        }
    }
}

impl World {
    pub fn token(&self) -> Option<&TokenState> {
        match self {
            World::Token(t) => Some(t),
            World::Auction(_) => None,
        }
    }

    pub fn auction(&self) -> Option<&AuctionState> {
        match self {
            World::Auction(a) => Some(a),
            World::Token(_) => None,
        }
    }
}

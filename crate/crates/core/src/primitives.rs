//! Accounts, messages, gas and the lifted call status shared by every contract model.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::u256::U256;

/// Index into the finite address universe of a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub u32);

impl Address {
    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// Symbolic names for a small address universe.
///
/// The first four slots are `Minter`, `A`, `B` and `Attacker`; larger
/// universes continue with `X4`, `X5`, ...
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AddressBook {
    names: Vec<String>,
}

pub const MINTER: Address = Address(0);
pub const ALICE: Address = Address(1);
pub const BOB: Address = Address(2);
pub const ATTACKER: Address = Address(3);

impl AddressBook {
    pub fn new(size: usize) -> Self {
        const BASE: [&str; 4] = ["Minter", "A", "B", "Attacker"];
        let names = (0..size)
            .map(|i| BASE.get(i).map_or_else(|| format!("X{i}"), |s| s.to_string()))
            .collect();
        AddressBook { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn addresses(&self) -> impl Iterator<Item = Address> + '_ {
        (0..self.names.len() as u32).map(Address)
    }

    pub fn contains(&self, addr: Address) -> bool {
        addr.index() < self.names.len()
    }

    pub fn name(&self, addr: Address) -> &str {
        self.names.get(addr.index()).map_or("?", String::as_str)
    }

    pub fn lookup(&self, name: &str) -> Option<Address> {
        self.names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(|i| Address(i as u32))
    }
}

/// Message context of a call: who sent it and how much ETH came with it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Msg {
    pub sender: Address,
    pub value: U256,
}

impl Msg {
    pub fn new(sender: Address, value: U256) -> Self {
        Msg { sender, value }
    }

    pub fn from(sender: Address) -> Self {
        Msg { sender, value: U256::ZERO }
    }
}

/// Remaining gas. Decreases only; every call consumes at least one unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gas(pub u64);

impl Gas {
    /// `if gas >= 1 then gas - 1 else 0`
    pub fn spend_one(self) -> Gas {
        Gas(self.0.saturating_sub(1))
    }

    pub fn has_any(self) -> bool {
        self.0 >= 1
    }

    /// The postcondition every call honours: `out == 0 || out <= gas - 1`.
    pub fn contract_holds(self, out: Gas) -> bool {
        out.0 == 0 || (self.0 >= 1 && out.0 < self.0)
    }
}

impl fmt::Display for Gas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Lifted return status of a contract method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CallResult<T> {
    Revert,
    Success(T),
}

impl<T> CallResult<T> {
    pub fn is_success(&self) -> bool {
        matches!(self, CallResult::Success(_))
    }

    pub fn is_revert(&self) -> bool {
        matches!(self, CallResult::Revert)
    }
}

/// Exact sum of a collection of words, as an unbounded natural.
pub fn sum_values<'a, I>(values: I) -> BigUint
where
    I: IntoIterator<Item = &'a U256>,
{
    values
        .into_iter()
        .fold(BigUint::default(), |acc, v| acc + v.to_biguint())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("gas left ({gas_left}) exceeds the gas limit ({max_gas})")]
pub struct FeeError {
    pub max_gas: u64,
    pub gas_left: u64,
}

/// ETH charged to the sender of a transaction: `(max_gas - gas_left) * gas_price`.
pub fn transaction_fee(max_gas: u64, gas_left: u64, gas_price: u64) -> Result<u128, FeeError> {
    if gas_left > max_gas {
        return Err(FeeError { max_gas, gas_left });
    }
    Ok(u128::from(max_gas - gas_left) * u128::from(gas_price))
}

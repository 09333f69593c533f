//! Executable contract state machines with revert semantics, an adversarial
//! re-entrancy model, gas-bounded exploration, and a small EVM interpreter.

pub mod adversary;
pub mod auction;
pub mod checks;
pub mod evm;
pub mod explorer;
pub mod model;
pub mod primitives;
pub mod token;
pub mod u256;

pub use adversary::{ChoiceExhausted, ChoiceSource, GasAccounting, HavocDomains};
pub use checks::{Checked, Signature};
pub use model::{ModelConfig, ModelId, World};
pub use primitives::{transaction_fee, Address, CallResult, Gas, Msg};
pub use u256::U256;

//! Transactions, call frames, violations and the trace file format.

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::primitives::{Address, CallResult, Gas, Msg};
use crate::u256::U256;

pub const TRACE_VERSION: &str = "1";

/// A contract entry point together with its arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "method", content = "args")]
pub enum Call {
    Transfer { from: Address, to: Address, amount: U256 },
    Mint { to: Address, amount: U256 },
    TransferNotify { from: Address, to: Address, amount: U256 },
    Bid,
    AuctionEnd,
    Withdraw,
    ExternalCall,
}

impl Call {
    pub fn name(&self) -> &'static str {
        match self {
            Call::Transfer { .. } => "Transfer",
            Call::Mint { .. } => "Mint",
            Call::TransferNotify { .. } => "TransferNotify",
            Call::Bid => "Bid",
            Call::AuctionEnd => "AuctionEnd",
            Call::Withdraw => "Withdraw",
            Call::ExternalCall => "ExternalCall",
        }
    }

    pub fn is_transfer(&self) -> bool {
        matches!(self, Call::Transfer { .. } | Call::TransferNotify { .. })
    }
}

/// `caller -> value, gas, contract.method(args)`
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub caller: Address,
    #[serde(flatten)]
    pub call: Call,
    pub value: U256,
    pub gas: Gas,
}

impl Transaction {
    pub fn msg(&self) -> Msg {
        Msg::new(self.caller, self.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    /// Top-level method invoked by a transaction.
    Transaction,
    /// Method invoked from inside an external call.
    Reentrant,
    External,
}

/// One node of the dynamic call tree, in pre-order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub depth: u32,
    pub kind: FrameKind,
    #[serde(flatten)]
    pub call: Call,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<Msg>,
    pub gas_in: Gas,
    pub gas_out: Option<Gas>,
    pub result: Option<CallResult<()>>,
    pub ginv_before: bool,
    pub ginv_after: Option<bool>,
    pub state_hash_after: Option<String>,
}

impl Frame {
    /// Frames entered with zero gas run out of gas before doing anything.
    pub fn executes(&self) -> bool {
        self.gas_in.has_any()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    InvariantAtBoundary,
    GasContract,
    RevertPurity,
    HistoryMonotonicity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub frame: usize,
    pub message: String,
}

/// A complete, replayable record of one execution branch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trace {
    pub version: String,
    pub model: crate::model::ModelId,
    pub domains: ModelConfig,
    pub transactions: Vec<Transaction>,
    pub choices: Vec<u64>,
    pub frames: Vec<Frame>,
    pub violation: Option<Violation>,
}

impl Trace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Trace, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Indices of each frame's parent, `None` for top-level frames.
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut stack: Vec<usize> = Vec::new();
        let mut out = Vec::with_capacity(self.frames.len());
        for (i, f) in self.frames.iter().enumerate() {
            while stack.len() > f.depth as usize {
                stack.pop();
            }
            out.push(stack.last().copied());
            stack.push(i);
        }
        out
    }

    /// Checks that depths form a well-nested tree and that gas strictly
    /// decreases along every parent-to-child edge.
    pub fn check_well_founded(&self) -> Result<(), String> {
        let mut prev_depth: Option<u32> = None;
        for (i, f) in self.frames.iter().enumerate() {
            match prev_depth {
                None if f.depth != 0 => return Err(format!("frame {i}: first frame at depth {}", f.depth)),
                Some(d) if f.depth > d + 1 => {
                    return Err(format!("frame {i}: depth jumps from {d} to {}", f.depth))
                }
                _ => {}
            }
            prev_depth = Some(f.depth);
        }
        for (i, parent) in self.parents().into_iter().enumerate() {
            if let Some(p) = parent {
                if self.frames[i].gas_in >= self.frames[p].gas_in {
                    return Err(format!(
                        "frame {i}: gas {} not below parent frame {p} gas {}",
                        self.frames[i].gas_in, self.frames[p].gas_in
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of executing frames (gas_in >= 1) per transaction, in order.
    pub fn executing_frames_per_transaction(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for f in &self.frames {
            if f.depth == 0 {
                out.push(0);
            }
            if f.executes() {
                if let Some(last) = out.last_mut() {
                    *last += 1;
                }
            }
        }
        out
    }
}

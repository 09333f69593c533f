//! Runtime checking of call-boundary obligations.
//!
//! Every method and external call is bracketed by [`Recorder::enter`] and
//! [`Recorder::exit`], which record a [`Frame`] and check the global
//! invariant, the gas postcondition, strict gas decrease on call edges and
//! state restoration on revert. Failed checks are recorded, not raised: the
//! transaction runs to completion so the state it would commit is visible,
//! and the explorer stops the branch afterwards.

use std::fmt;

use serde::Serialize;

use crate::explorer::trace::{Call, Frame, FrameKind, Violation, ViolationKind};
use crate::primitives::{CallResult, Gas, Msg};

/// Which side of the invariant equation is too large.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Imbalance {
    /// The summed side exceeds the ghost total.
    Surplus,
    Deficit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum HistoryFault {
    EndedReset,
    BidDecreased,
    BidChangedAfterEnd,
}

impl fmt::Display for HistoryFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HistoryFault::EndedReset => "ended reset to false",
            HistoryFault::BidDecreased => "highest bid decreased while running",
            HistoryFault::BidChangedAfterEnd => "highest bid changed after end",
        })
    }
}

/// Contract state that exposes a checkable global invariant.
pub trait Checked: Serialize {
    /// `None` when the invariant holds.
    fn imbalance(&self) -> Option<Imbalance>;

    fn ginv(&self) -> bool {
        self.imbalance().is_none()
    }

    /// Multi-state property over the ghost history.
    fn history_fault(&self) -> Option<HistoryFault> {
        None
    }

    fn state_hash(&self) -> String {
        state_hash(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Boundary {
    Entry,
    Exit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Fault {
    Invariant { at: Boundary, imbalance: Imbalance },
    CalleeGas,
    ReturnedGas,
    RevertModified,
    History(HistoryFault),
}

/// What went wrong and where, without positions or numbers. Two runs
/// that fail the same way have equal signatures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Signature {
    pub fault: Fault,
    pub frame_kind: FrameKind,
    pub call: &'static str,
}

impl Signature {
    pub fn kind(&self) -> ViolationKind {
        match self.fault {
            Fault::Invariant { .. } => ViolationKind::InvariantAtBoundary,
            Fault::CalleeGas | Fault::ReturnedGas => ViolationKind::GasContract,
            Fault::RevertModified => ViolationKind::RevertPurity,
            Fault::History(_) => ViolationKind::HistoryMonotonicity,
        }
    }

    pub fn message(&self) -> String {
        let call = self.call;
        match self.fault {
            Fault::Invariant { at, imbalance } => {
                let at = match (at, self.frame_kind) {
                    (Boundary::Entry, FrameKind::External) => "external-call entry",
                    (Boundary::Entry, _) => "method entry",
                    (Boundary::Exit, _) => "exit",
                };
                let side = match imbalance {
                    Imbalance::Surplus => "sum above total",
                    Imbalance::Deficit => "sum below total",
                };
                format!("global invariant fails at {at} of {call} ({side})")
            }
            Fault::CalleeGas => format!("{call} was called without less gas than its caller"),
            Fault::ReturnedGas => format!("{call} returned more than gas - 1"),
            Fault::RevertModified => format!("{call} reverted but modified state"),
            Fault::History(h) => format!("{h} after {call}"),
        }
    }

    pub fn violation(&self, frame: usize) -> Violation {
        Violation { kind: self.kind(), frame, message: self.message() }
    }
}

/// 64-bit FNV-1a over the canonical JSON encoding (maps have sorted keys).
pub fn state_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("state serialization cannot fail");
    format!("{:016x}", fnv1a64(&bytes))
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

/// Call-tree recorder with boundary checks.
#[derive(Debug, Default, Clone)]
pub struct Recorder {
    frames: Vec<Frame>,
    open: Vec<usize>,
    violations: Vec<(Violation, Signature)>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn depth(&self) -> usize {
        self.open.len()
    }

    pub fn violations(&self) -> &[(Violation, Signature)] {
        &self.violations
    }

    /// The most recently recorded violation. Frames close inside-out, so
    /// this is the one closest to the root.
    pub fn last_violation(&self) -> Option<&(Violation, Signature)> {
        self.violations.last()
    }

    fn flag(&mut self, frame: usize, fault: Fault) {
        let f = &self.frames[frame];
        let sig = Signature { fault, frame_kind: f.kind, call: f.call.name() };
        self.violations.push((sig.violation(frame), sig));
    }

    /// Opens a frame. Checks the strict gas decrease against the enclosing
    /// frame and the invariant precondition.
    pub fn enter<S: Checked>(&mut self, kind: FrameKind, call: Call, msg: Option<Msg>, gas: Gas, state: &S) -> usize {
        let imbalance = state.imbalance();
        let idx = self.frames.len();
        let parent_gas = self.open.last().map(|&p| self.frames[p].gas_in);
        self.frames.push(Frame {
            depth: self.open.len() as u32,
            kind,
            call,
            msg,
            gas_in: gas,
            gas_out: None,
            result: None,
            ginv_before: imbalance.is_none(),
            ginv_after: None,
            state_hash_after: None,
        });
        self.open.push(idx);
        if parent_gas.is_some_and(|pg| gas >= pg) {
            self.flag(idx, Fault::CalleeGas);
        }
        if let Some(imbalance) = imbalance {
            self.flag(idx, Fault::Invariant { at: Boundary::Entry, imbalance });
        }
        idx
    }

    /// Closes frame `idx`. `restored` tells whether a reverting call left the
    /// state exactly as it found it (ignored for successful calls).
    pub fn exit<S: Checked>(&mut self, idx: usize, gas_out: Gas, result: CallResult<()>, state: &S, restored: bool) {
        debug_assert_eq!(self.open.last(), Some(&idx));
        self.open.pop();
        let imbalance = state.imbalance();
        let frame = &mut self.frames[idx];
        frame.gas_out = Some(gas_out);
        frame.result = Some(result);
        frame.ginv_after = Some(imbalance.is_none());
        frame.state_hash_after = Some(state.state_hash());
        let gas_in = frame.gas_in;

        if let Some(imbalance) = imbalance {
            self.flag(idx, Fault::Invariant { at: Boundary::Exit, imbalance });
        }
        if !gas_in.contract_holds(gas_out) {
            self.flag(idx, Fault::ReturnedGas);
        }
        if result.is_revert() && !restored {
            self.flag(idx, Fault::RevertModified);
        }
        if let Some(h) = state.history_fault() {
            self.flag(idx, Fault::History(h));
        }
    }
}

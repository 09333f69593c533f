//! Bounded exploration of transaction sequences and adversarial call trees,
//! with counterexample shrinking and deterministic replay.

pub mod enumerate;
pub mod explore;
pub mod fuzz;
pub mod report;
pub mod replay;
pub mod run;
pub mod shrink;
pub mod trace;

pub use explore::{explore, ExploreConfig, ExploreError};
pub use fuzz::{fuzz, FuzzConfig, FuzzError};
pub use replay::{replay, ReplayError, ReplayReport};
pub use report::{Report, ViolationClass};
pub use run::{record, record_with, Recording, RunError};
pub use shrink::{shrink, ShrinkError};
pub use trace::{Call, Frame, FrameKind, Trace, Transaction, Violation, ViolationKind};

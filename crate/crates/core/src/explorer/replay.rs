//! Deterministic replay of a recorded trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::Checked;
use crate::explorer::run::{record, RunError};
use crate::explorer::trace::{Trace, Violation, TRACE_VERSION};
use crate::model::ModelId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("replay diverged: {0}")]
    Divergence(String),
    #[error(transparent)]
    Run(RunError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub mode: String,
    pub model: ModelId,
    pub transactions: usize,
    pub choices: usize,
    pub frames: usize,
    pub final_state_hash: String,
    pub violation: Option<Violation>,
}

impl ReplayReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail") + "\n"
    }
}

fn diverged(msg: String) -> ReplayError {
    ReplayError::Divergence(msg)
}

/// Re-executes `trace` and checks that every frame, hash and the violation
/// come out exactly as recorded.
pub fn replay(trace: &Trace) -> Result<ReplayReport, ReplayError> {
    if trace.version != TRACE_VERSION {
        return Err(diverged(format!("unsupported trace version {}", trace.version)));
    }
    if trace.model != trace.domains.model {
        return Err(diverged("trace model does not match its domain config".to_string()));
    }
    let rec = match record(&trace.domains, &trace.transactions, trace.choices.clone()) {
        Ok(rec) => rec,
        Err(RunError::Exhausted(e)) => return Err(diverged(format!("recorded choices ran out ({e})"))),
        Err(e) => return Err(ReplayError::Run(e)),
    };
    if rec.unused_choices != 0 {
        return Err(diverged(format!("{} recorded choices were never drawn", rec.unused_choices)));
    }
    if rec.trace.transactions.len() != trace.transactions.len() {
        return Err(diverged(format!(
            "stopped after {} of {} transactions",
            rec.trace.transactions.len(),
            trace.transactions.len()
        )));
    }
    for (i, (got, want)) in rec.trace.frames.iter().zip(&trace.frames).enumerate() {
        if got.state_hash_after != want.state_hash_after {
            return Err(diverged(format!("state hash differs after frame {i}")));
        }
        if got != want {
            return Err(diverged(format!("frame {i} differs")));
        }
    }
    if rec.trace.frames.len() != trace.frames.len() {
        return Err(diverged(format!("{} frames recorded, {} replayed", trace.frames.len(), rec.trace.frames.len())));
    }
    if rec.trace.violation != trace.violation {
        return Err(diverged("violation differs".to_string()));
    }
    Ok(ReplayReport {
        mode: "replay".to_string(),
        model: trace.model,
        transactions: trace.transactions.len(),
        choices: trace.choices.len(),
        frames: trace.frames.len(),
        final_state_hash: rec.world.state_hash(),
        violation: rec.trace.violation,
    })
}

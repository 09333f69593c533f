//! Report format shared by `explore` and `fuzz`.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::checks::Signature;
use crate::explorer::enumerate::Coverage;
use crate::explorer::trace::{FrameKind, Trace, ViolationKind};

/// All violations that fail the same way, with a few example traces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationClass {
    pub kind: ViolationKind,
    pub frame_kind: FrameKind,
    pub method: String,
    pub message: String,
    pub count: u64,
    pub traces: Vec<Trace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    /// Distinct transaction outcomes (explore) or transactions run (fuzz).
    pub branches: u64,
    pub frames_total: u64,
    pub max_frames_per_tx: u64,
    /// Transactions with more executing frames than gas.
    pub frame_bound_exceeded: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Coverage>,
    pub violation_count: u64,
    pub violations: Vec<ViolationClass>,
    pub complete: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail") + "\n"
    }

    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.violations.iter().flat_map(|c| c.traces.iter())
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: {} branches, {} frames, max {} frames/tx, {} violation(s){}",
            self.mode,
            self.branches,
            self.frames_total,
            self.max_frames_per_tx,
            self.violation_count,
            if self.complete { "" } else { " [INCOMPLETE: budget exceeded]" }
        );
        if let Some(n) = self.states {
            s += &format!(", {n} states");
        }
        for c in &self.violations {
            s += &format!("\n  {:?} x{}: {}", c.kind, c.count, c.message);
        }
        s
    }
}

/// Per-transaction frame statistics.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct FrameStats {
    pub branches: u64,
    pub frames_total: u64,
    pub max_frames_per_tx: u64,
    pub frame_bound_exceeded: u64,
}

impl FrameStats {
    pub fn record(&mut self, frames: u64, gas: u64) {
        self.branches += 1;
        self.frames_total += frames;
        self.max_frames_per_tx = self.max_frames_per_tx.max(frames);
        if frames > gas {
            self.frame_bound_exceeded += 1;
        }
    }
}

/// Groups violations by signature in order of discovery.
pub(crate) struct Collector {
    cap: usize,
    pub count: u64,
    classes: IndexMap<Signature, ViolationClass>,
}

impl Collector {
    pub fn new(cap: usize) -> Self {
        Collector { cap, count: 0, classes: IndexMap::new() }
    }

    /// Counts a violation; returns whether an example trace is still wanted.
    pub fn note(&mut self, sig: Signature) -> bool {
        self.count += 1;
        let class = self.classes.entry(sig).or_insert_with(|| ViolationClass {
            kind: sig.kind(),
            frame_kind: sig.frame_kind,
            method: sig.call.to_string(),
            message: sig.message(),
            count: 0,
            traces: Vec::new(),
        });
        class.count += 1;
        class.traces.len() < self.cap
    }

    pub fn add_trace(&mut self, sig: Signature, trace: Trace) {
        self.classes.get_mut(&sig).expect("noted before").traces.push(trace);
    }

    pub fn into_classes(self) -> Vec<ViolationClass> {
        self.classes.into_values().collect()
    }
}

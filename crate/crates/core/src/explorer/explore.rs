//! Breadth-first exhaustive exploration over transaction sequences.
//!
//! Level `n` holds every world state reachable by `n` clean transactions;
//! states already seen are not expanded again. Each transaction from each
//! state is evaluated to its full outcome set by the enumerator. A branch is
//! one distinct `(state, violation)` outcome of one transaction.

use std::collections::HashSet;
use std::sync::Arc;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversaryRules;
use crate::checks::Signature;
use crate::explorer::enumerate::{Enumerator, SharedMemo, Witness};
use crate::explorer::report::{Collector, FrameStats, Report};
use crate::explorer::run::{record, step_world, RunError};
use crate::explorer::trace::{Trace, Transaction};
use crate::model::{ModelConfig, World};
use crate::token::TokenState;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExploreConfig {
    pub model: ModelConfig,
    pub max_txs: usize,
    /// Stop after this many transaction outcomes; the report is then incomplete.
    pub max_branches: Option<u64>,
    /// Example traces kept per violation class.
    pub max_reported_violations: usize,
    /// Replay the witness of every newly reached state through the direct
    /// interpreter. Violation witnesses are always replayed.
    pub cross_check: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            model: ModelConfig::default(),
            max_txs: 3,
            max_branches: None,
            max_reported_violations: 3,
            cross_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("enumerator and interpreter disagree: {0}")]
    CrossCheck(String),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

enum Next {
    Token(Arc<TokenState>),
    Other(World),
}

impl Next {
    fn into_world(self) -> World {
        match self {
            Next::Token(t) => World::Token(Arc::unwrap_or_clone(t)),
            Next::Other(w) => w,
        }
    }
}

struct StepOutcome {
    tx: usize,
    next: Next,
    signature: Option<Signature>,
    witness: Witness,
    frames: u64,
}

struct Node {
    parent: Option<usize>,
    tx: usize,
    choices: Vec<u64>,
}

struct Ctx<'a> {
    cfg: &'a ExploreConfig,
    rules: Option<AdversaryRules>,
    txs: Vec<Transaction>,
    memo: SharedMemo,
}

impl Ctx<'_> {
    fn step(&self, world: &World) -> Result<Vec<StepOutcome>, ExploreError> {
        let model = &self.cfg.model;
        let mut out = Vec::new();
        for (i, tx) in self.txs.iter().enumerate() {
            match (world, &self.rules) {
                (World::Token(t), Some(rules)) => {
                    let mut e = Enumerator::new(rules, model.max_choice_value, &self.memo);
                    out.extend(e.transaction(t, tx).into_iter().map(|o| StepOutcome {
                        tx: i,
                        next: Next::Token(o.state),
                        signature: o.signature,
                        witness: o.witness,
                        frames: u64::from(o.frames),
                    }));
                }
                _ => {
                    let (w, s, _) = step_world(model, None, world, tx, Vec::new())?;
                    let frames = u64::from(tx.gas.has_any());
                    out.push(StepOutcome { tx: i, next: Next::Other(w), signature: s, witness: Witness::default(), frames });
                }
            }
        }
        Ok(out)
    }

    /// Replays one enumerated outcome through the direct interpreter.
    fn cross_check(&self, from: &World, tx: usize, choices: &[u64], next: &World) -> Result<(), ExploreError> {
        let tx = &self.txs[tx];
        let (w, s, left) = step_world(&self.cfg.model, self.rules.as_ref(), from, tx, choices.to_vec())?;
        if w != *next || s.is_some() || left != 0 {
            return Err(ExploreError::CrossCheck(format!("{} with choices {:?}", tx.call.name(), choices)));
        }
        Ok(())
    }

    fn path(&self, nodes: &IndexMap<World, Node>, mut at: usize) -> (Vec<Transaction>, Vec<u64>) {
        let mut steps = Vec::new();
        while let Some(parent) = nodes[at].parent {
            steps.push(at);
            at = parent;
        }
        steps.reverse();
        let mut txs = Vec::new();
        let mut choices = Vec::new();
        for i in steps {
            txs.push(self.txs[nodes[i].tx].clone());
            choices.extend_from_slice(&nodes[i].choices);
        }
        (txs, choices)
    }

    /// Records the full trace of a violating outcome, checking that the
    /// interpreter reports the same violation.
    fn trace_for(&self, nodes: &IndexMap<World, Node>, at: usize, o: &StepOutcome) -> Result<Trace, ExploreError> {
        let (mut txs, mut choices) = self.path(nodes, at);
        txs.push(self.txs[o.tx].clone());
        choices.extend(o.witness.flatten());
        let n = txs.len();
        let rec = record(&self.cfg.model, &txs, choices)?;
        if rec.signature != o.signature || rec.trace.transactions.len() != n {
            return Err(ExploreError::CrossCheck(format!(
                "replayed witness reports {:?}, enumerator reported {:?}",
                rec.signature, o.signature
            )));
        }
        Ok(rec.trace)
    }
}

/// Chunk of frontier states evaluated together; bounds peak memory.
const BATCH: usize = 16;

/// Exhaustive exploration. `workers` only affects speed: the report is
/// identical for any worker count.
pub fn explore(cfg: &ExploreConfig, workers: usize) -> Result<Report, ExploreError> {
    if workers <= 1 {
        // Stay on the calling thread so repeated runs reuse its heap.
        return explore_with(cfg, false);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExploreError::Pool(e.to_string()))?;
    pool.install(|| explore_with(cfg, true))
}

fn explore_with(cfg: &ExploreConfig, parallel: bool) -> Result<Report, ExploreError> {
    let initial = cfg.model.initial_world().map_err(RunError::from)?;
    let ctx = Ctx { cfg, rules: cfg.model.rules(), txs: cfg.model.transactions(), memo: SharedMemo::default() };
    let mut nodes: IndexMap<World, Node> = IndexMap::new();
    nodes.insert(initial, Node { parent: None, tx: 0, choices: Vec::new() });
    let mut frontier = vec![0usize];
    let mut stats = FrameStats::default();
    let mut violations = Collector::new(cfg.max_reported_violations);
    let mut complete = true;
    let mut seen: HashSet<*const TokenState> = HashSet::default();

    'levels: for depth in 0..cfg.max_txs {
        // States first reached by the last transaction are never expanded.
        let last = depth + 1 == cfg.max_txs;
        let mut next = Vec::new();
        for batch in frontier.chunks(BATCH) {
            let worlds: Vec<&World> = batch.iter().map(|&i| nodes.get_index(i).unwrap().0).collect();
            let results: Vec<Result<Vec<StepOutcome>, ExploreError>> = if parallel {
                worlds.par_iter().map(|w| ctx.step(w)).collect()
            } else {
                worlds.iter().map(|w| ctx.step(w)).collect()
            };
            for (&at, result) in batch.iter().zip(results) {
                for o in result? {
                    if cfg.max_branches.is_some_and(|cap| stats.branches >= cap) {
                        complete = false;
                        break 'levels;
                    }
                    stats.record(o.frames, ctx.txs[o.tx].gas.0);
                    if let Some(sig) = o.signature {
                        if violations.note(sig) {
                            let trace = ctx.trace_for(&nodes, at, &o)?;
                            violations.add_trace(sig, trace);
                        }
                        continue;
                    }
                    if let Next::Token(t) = &o.next {
                        // Interned states share one allocation, so the
                        // pointer identifies the state.
                        if !seen.insert(Arc::as_ptr(t)) {
                            continue;
                        }
                    }
                    let world = o.next.into_world();
                    if nodes.contains_key(&world) {
                        continue;
                    }
                    let choices = o.witness.flatten();
                    if cfg.cross_check {
                        ctx.cross_check(nodes.get_index(at).unwrap().0, o.tx, &choices, &world)?;
                    }
                    let (idx, _) = nodes.insert_full(world, Node { parent: Some(at), tx: o.tx, choices });
                    if !last {
                        next.push(idx);
                    }
                }
            }
        }
        frontier = next;
    }

    let coverage = ctx.rules.as_ref().map(|_| ctx.memo.coverage());
    Ok(Report {
        mode: "explore".to_string(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        states: Some(nodes.len() as u64),
        iterations: None,
        branches: stats.branches,
        frames_total: stats.frames_total,
        max_frames_per_tx: stats.max_frames_per_tx,
        frame_bound_exceeded: stats.frame_bound_exceeded,
        coverage,
        violation_count: violations.count,
        violations: violations.into_classes(),
        complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelId;

    fn small(model: ModelId) -> ExploreConfig {
        let mut cfg = ExploreConfig::default();
        cfg.model.model = model;
        cfg.model.gas = 3;
        cfg.model.addresses = 3;
        cfg.max_txs = 2;
        cfg
    }

    #[test]
    fn plain_token_is_clean() {
        let r = explore(&small(ModelId::TokenPlain), 1).unwrap();
        assert_eq!(r.violation_count, 0);
        assert!(r.complete);
        assert!(r.states.unwrap() > 1);
    }

    #[test]
    fn vulnerable_token_is_caught() {
        let r = explore(&small(ModelId::TokenNotifyVuln), 1).unwrap();
        assert!(r.violation_count > 0);
        assert!(r.violations.iter().all(|c| !c.traces.is_empty()));
    }

    #[test]
    fn branch_cap_marks_incomplete() {
        let mut cfg = small(ModelId::TokenNotifySafe);
        cfg.max_branches = Some(10);
        let r = explore(&cfg, 1).unwrap();
        assert!(!r.complete);
        assert_eq!(r.branches, 10);
    }

    #[test]
    fn auction_is_clean() {
        let mut cfg = small(ModelId::Auction);
        cfg.max_txs = 3;
        let r = explore(&cfg, 1).unwrap();
        assert_eq!(r.violation_count, 0);
        assert!(r.coverage.is_none());
    }
}

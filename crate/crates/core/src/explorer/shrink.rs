//! Counterexample minimization by delta debugging over the transaction list
//! and the choice log.

use thiserror::Error;

use crate::checks::Signature;
use crate::explorer::run::{record, RunError};
use crate::explorer::trace::{Trace, Transaction};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShrinkError {
    #[error("trace does not replay to a violation")]
    NotAViolation,
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Classic ddmin: removes chunks while `keep` still holds, refining the
/// granularity down to single elements.
pub fn ddmin<T: Clone>(mut items: Vec<T>, mut keep: impl FnMut(&[T]) -> bool) -> Vec<T> {
    if items.len() == 1 && keep(&[]) {
        return Vec::new();
    }
    let mut n = 2usize;
    while items.len() >= 2 {
        let len = items.len();
        let chunk = len.div_ceil(n);
        let mut reduced = false;
        for start in (0..len).step_by(chunk) {
            let end = (start + chunk).min(len);
            let complement: Vec<T> = items[..start].iter().chain(&items[end..]).cloned().collect();
            if keep(&complement) {
                items = complement;
                n = (n - 1).max(2);
                reduced = true;
                break;
            }
        }
        if !reduced {
            if n >= len {
                break;
            }
            n = (2 * n).min(len);
        }
        if items.len() == 1 && keep(&[]) {
            return Vec::new();
        }
    }
    items
}

fn fails_as(cfg: &ModelConfig, txs: &[Transaction], choices: &[u64], target: Signature) -> bool {
    matches!(record(cfg, txs, choices.to_vec()), Ok(r) if r.signature == Some(target))
}

/// Returns a trace with no more transactions and choices than `trace` that
/// fails the same way. Running it on its own output changes nothing.
pub fn shrink(trace: &Trace) -> Result<Trace, ShrinkError> {
    let cfg = &trace.domains;
    let first = record(cfg, &trace.transactions, trace.choices.clone())?;
    let target = first.signature.ok_or(ShrinkError::NotAViolation)?;
    let mut txs = first.trace.transactions.clone();
    let mut choices = first.trace.choices.clone();
    loop {
        let size = txs.len() + choices.len();
        txs = ddmin(txs, |t| fails_as(cfg, t, &choices, target));
        choices = ddmin(choices, |c| fails_as(cfg, &txs, c, target));
        // Drop choices that are no longer drawn.
        let rec = record(cfg, &txs, choices.clone())?;
        debug_assert_eq!(rec.signature, Some(target));
        txs = rec.trace.transactions;
        choices = rec.trace.choices;
        if txs.len() + choices.len() == size {
            break;
        }
    }
    Ok(record(cfg, &txs, choices)?.trace)
}

//! Direct interpreter: runs transactions one choice at a time and records
//! the full call tree.

use thiserror::Error;

use crate::adversary::{Adversary, AdversaryRules, ChoiceExhausted, ChoiceSource};
use crate::checks::{Recorder, Signature};
use crate::explorer::trace::{Call, FrameKind, Trace, Transaction, TRACE_VERSION};
use crate::model::{ConfigError, ModelConfig, ModelId, World};
use crate::primitives::CallResult;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Exhausted(#[from] ChoiceExhausted),
    #[error("{call} is not a transaction of model {model}")]
    Unsupported { model: &'static str, call: &'static str },
}

fn supported(model: ModelId, call: &Call) -> bool {
    matches!(
        (model, call),
        (ModelId::TokenPlain, Call::Transfer { .. })
            | (ModelId::TokenNotifySafe | ModelId::TokenNotifyVuln, Call::TransferNotify { .. })
            | (ModelId::TokenPlain | ModelId::TokenNotifySafe | ModelId::TokenNotifyVuln, Call::Mint { .. })
            | (ModelId::Auction, Call::Bid | Call::AuctionEnd | Call::Withdraw)
    )
}

/// Runs one transaction against `world`, appending its frames to `rec`.
pub fn run_transaction(
    model: ModelId,
    rules: Option<&AdversaryRules>,
    world: &mut World,
    tx: &Transaction,
    choices: &mut ChoiceSource,
    rec: &mut Recorder,
) -> Result<(), RunError> {
    if !supported(model, &tx.call) {
        return Err(RunError::Unsupported { model: model.name(), call: tx.call.name() });
    }
    match world {
        World::Token(t) => {
            let rules = rules.expect("token models have adversary rules");
            Adversary::new(rules, choices, rec).invoke(FrameKind::Transaction, tx.call.clone(), tx.msg(), tx.gas, t)?;
        }
        World::Auction(a) => {
            let idx = rec.enter(FrameKind::Transaction, tx.call.clone(), Some(tx.msg()), tx.gas, a);
            let before = a.without_history();
            let (g, r) = match tx.call {
                Call::Bid => a.bid(tx.msg(), tx.gas),
                Call::AuctionEnd => a.auction_end(tx.msg(), tx.gas),
                Call::Withdraw => a.withdraw(tx.msg(), tx.gas),
                _ => unreachable!("checked by supported()"),
            };
            let restored = r == CallResult::Success(()) || a.without_history() == before;
            rec.exit(idx, g, r, a, restored);
        }
    }
    Ok(())
}

/// A recorded run and the state it ended in.
#[derive(Debug, Clone)]
pub struct Recording {
    pub trace: Trace,
    pub world: World,
    pub signature: Option<Signature>,
    /// Choices supplied but never drawn (exhaustive sources only).
    pub unused_choices: usize,
}

/// Runs `txs` in order from the configured initial world, stopping after the
/// first transaction that records a violation.
pub fn record_with(cfg: &ModelConfig, txs: &[Transaction], mut choices: ChoiceSource) -> Result<Recording, RunError> {
    let mut world = cfg.initial_world()?;
    let rules = cfg.rules();
    let mut rec = Recorder::new();
    let mut executed = 0;
    for tx in txs {
        run_transaction(cfg.model, rules.as_ref(), &mut world, tx, &mut choices, &mut rec)?;
        executed += 1;
        if rec.last_violation().is_some() {
            break;
        }
    }
    let last = rec.last_violation().cloned();
    let unused_choices = choices.remaining();
    let trace = Trace {
        version: TRACE_VERSION.to_string(),
        model: cfg.model,
        domains: cfg.clone(),
        transactions: txs[..executed].to_vec(),
        choices: choices.into_log(),
        frames: rec.into_frames(),
        violation: last.as_ref().map(|(v, _)| v.clone()),
    };
    Ok(Recording { trace, world, signature: last.map(|(_, s)| s), unused_choices })
}

pub fn record(cfg: &ModelConfig, txs: &[Transaction], choices: Vec<u64>) -> Result<Recording, RunError> {
    record_with(cfg, txs, ChoiceSource::exhaustive(choices))
}

/// Runs a single transaction from `world` without keeping the trace.
pub fn step_world(
    cfg: &ModelConfig,
    rules: Option<&AdversaryRules>,
    world: &World,
    tx: &Transaction,
    choices: Vec<u64>,
) -> Result<(World, Option<Signature>, usize), RunError> {
    let mut world = world.clone();
    let mut cs = ChoiceSource::exhaustive(choices);
    let mut rec = Recorder::new();
    run_transaction(cfg.model, rules, &mut world, tx, &mut cs, &mut rec)?;
    debug_assert!(rec.depth() == 0);
    let sig = rec.last_violation().map(|(_, s)| *s);
    Ok((world, sig, cs.remaining()))
}

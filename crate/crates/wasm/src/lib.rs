//! Browser bindings. Every export takes and returns plain strings (JSON) so
//! the page needs no generated glue beyond wasm-bindgen's.

use std::collections::BTreeMap;

use gasbound_core::evm::{self, State};
use gasbound_core::explorer::{explore, record, Call, ExploreConfig, RunError, Transaction};
use gasbound_core::primitives::AddressBook;
use gasbound_core::{ModelConfig, ModelId, U256};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Keeps a browser explore call interactive.
const MAX_BRANCHES: u64 = 10_000_000;

fn model_config(model: &str, gas: u64) -> Result<ModelConfig, String> {
    let id: ModelId = model.parse()?;
    let mut cfg = ModelConfig::for_model(id);
    cfg.gas = gas;
    Ok(cfg)
}

fn call_label(book: &AddressBook, call: &Call) -> String {
    let n = |a| book.name(a).to_string();
    match call {
        Call::Transfer { from, to, amount } => format!("transfer({}, {}, {amount})", n(*from), n(*to)),
        Call::TransferNotify { from, to, amount } => format!("transferNotify({}, {}, {amount})", n(*from), n(*to)),
        Call::Mint { to, amount } => format!("mint({}, {amount})", n(*to)),
        Call::ExternalCall => "external call".to_string(),
        other => format!("{}()", other.name()),
    }
}

fn label(book: &AddressBook, tx: &Transaction) -> String {
    let n = |a| book.name(a).to_string();
    let call = call_label(book, &tx.call);
    let value = if tx.value.is_zero() { String::new() } else { format!(" value {}", tx.value) };
    format!("{} -> {call}{value}", n(tx.caller))
}

/// Transactions available in a model, as `[{index, label}]`.
pub fn transactions_json(model: &str, gas: u64) -> Result<String, String> {
    let cfg = model_config(model, gas)?;
    let book = AddressBook::new(cfg.addresses);
    let list: Vec<Value> = cfg
        .transactions()
        .iter()
        .enumerate()
        .map(|(i, tx)| json!({ "index": i, "label": label(&book, tx) }))
        .collect();
    Ok(Value::Array(list).to_string())
}

/// Runs one transaction with the given choice sequence and returns its call
/// tree. Running out of choices is reported, not an error.
pub fn decode_json(model: &str, gas: u64, tx: usize, choices: &str) -> Result<String, String> {
    let cfg = model_config(model, gas)?;
    let txs = cfg.transactions();
    let t = txs.get(tx).ok_or_else(|| format!("no transaction {tx}"))?.clone();
    let choices: Vec<u64> = choices
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|_| format!("choice `{s}` is not a number")))
        .collect::<Result<_, _>>()?;
    let book = AddressBook::new(cfg.addresses);
    let rec = match record(&cfg, &[t], choices) {
        Ok(rec) => rec,
        Err(RunError::Exhausted(e)) => {
            return Ok(json!({
                "complete": false,
                "message": format!("needs more choices: draw {} picks one of {} values", e.consumed + 1, e.bound),
            })
            .to_string())
        }
        Err(e) => return Err(e.to_string()),
    };
    let frames: Vec<Value> = rec
        .trace
        .frames
        .iter()
        .map(|f| {
            let sender = f.msg.map(|m| book.name(m.sender).to_string());
            json!({
                "depth": f.depth,
                "kind": format!("{:?}", f.kind),
                "call": call_label(&book, &f.call),
                "sender": sender,
                "gas_in": f.gas_in.0,
                "gas_out": f.gas_out.map(|g| g.0),
                "result": f.result.map(|r| if r.is_success() { "success" } else { "revert" }),
                "ginv_after": f.ginv_after,
            })
        })
        .collect();
    let balances = rec.world.token().map(|t| {
        t.balances.iter().map(|(a, v)| (book.name(*a).to_string(), v.to_string())).collect::<BTreeMap<_, _>>()
    });
    Ok(json!({
        "complete": true,
        "frames": frames,
        "unused_choices": rec.unused_choices,
        "violation": rec.trace.violation.map(|v| v.message),
        "balances": balances,
        "total": rec.world.token().map(|t| t.total_amount.to_string()),
    })
    .to_string())
}

/// Exhaustive exploration at small bounds; returns the report summary and counts.
pub fn explore_json(model: &str, gas: u64, max_txs: usize) -> Result<String, String> {
    if gas > 5 || max_txs > 3 || max_txs == 0 {
        return Err("keep gas at most 5 and transactions between 1 and 3 in the browser".to_string());
    }
    let cfg = ExploreConfig {
        model: model_config(model, gas)?,
        max_txs,
        max_branches: Some(MAX_BRANCHES),
        max_reported_violations: 1,
        cross_check: false,
    };
    let r = explore(&cfg, 1).map_err(|e| e.to_string())?;
    let example = r.traces().next().map(|t| {
        let book = AddressBook::new(t.domains.addresses);
        json!({
            "transactions": t.transactions.iter().map(|tx| label(&book, tx)).collect::<Vec<_>>(),
            "choices": t.choices,
        })
    });
    Ok(json!({
        "summary": r.summary(),
        "states": r.states,
        "branches": r.branches,
        "violations": r.violation_count,
        "complete": r.complete,
        "example": example,
    })
    .to_string())
}

/// Runs bytecode for at most `steps` steps, returning the step trace and final state.
pub fn evm_json(code: &str, gas: u64, steps: u64, slot0: &str) -> Result<String, String> {
    let bytes = evm::parse_hex(code)?;
    let mut storage = BTreeMap::new();
    if !slot0.trim().is_empty() {
        let v: U256 = slot0.parse().map_err(|e| format!("slot 0: {e}"))?;
        storage.insert(U256::ZERO, v);
    }
    let (fin, trace) = evm::execute_traced(&evm::init(bytes, gas, storage), steps);
    let (stack, storage) = match &fin {
        State::Ok(m) => (m.stack.iter().map(|v| format!("{v:#x}")).collect(), Some(&m.storage)),
        State::Returns { storage, .. } => (Vec::new(), Some(storage)),
        _ => (Vec::new(), None),
    };
    let storage: BTreeMap<String, String> =
        storage.into_iter().flatten().map(|(k, v)| (format!("{k:#x}"), format!("{v:#x}"))).collect();
    Ok(json!({ "trace": trace, "final": fin.label(), "stack": stack, "storage": storage }).to_string())
}

/// The increment contract, as hex, for the page's preset.
pub fn inc_code() -> String {
    evm::INC_CONTRACT.iter().map(|b| format!("{b:02x}")).collect()
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn transactions(model: &str, gas: u32) -> Result<String, JsValue> {
    js(transactions_json(model, u64::from(gas)))
}

#[wasm_bindgen]
pub fn decode(model: &str, gas: u32, tx: u32, choices: &str) -> Result<String, JsValue> {
    js(decode_json(model, u64::from(gas), tx as usize, choices))
}

#[wasm_bindgen(js_name = exploreModel)]
pub fn explore_model(model: &str, gas: u32, max_txs: u32) -> Result<String, JsValue> {
    js(explore_json(model, u64::from(gas), max_txs as usize))
}

#[wasm_bindgen(js_name = evmRun)]
pub fn evm_run(code: &str, gas: u32, steps: u32, slot0: &str) -> Result<String, JsValue> {
    js(evm_json(code, u64::from(gas), u64::from(steps), slot0))
}

#[wasm_bindgen(js_name = incCode)]
pub fn inc_code_js() -> String {
    inc_code()
}

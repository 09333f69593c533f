//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use gasbound_core::explorer::fuzz::fuzz_one;
use gasbound_core::explorer::{
    explore, replay, shrink, ExploreConfig, FuzzConfig, Report, Trace, ViolationKind,
};
use gasbound_core::{ModelConfig, ModelId, U256};
use num_bigint::BigUint;

const SAFE_EXPLORE_LIMIT: Duration = Duration::from_secs(60);
const ADD_BYTES_LIMIT: Duration = Duration::from_secs(10);
const REVERT_CASES: usize = 10_000;
const AUCTION_RUNS: u64 = 10_000;
const INC_RANDOM: usize = 1_000;

fn full_bounds(model: ModelId) -> ExploreConfig {
    let mut m = ModelConfig::for_model(model);
    m.gas = 6;
    m.addresses = 4;
    m.amounts = vec![U256::ZERO, U256::ONE, U256::from(2), U256::MAX];
    ExploreConfig { model: m, max_txs: 3, ..ExploreConfig::default() }
}

struct Runs {
    safe: Report,
    vuln: Report,
    traces: Vec<Trace>,
}

fn safe_soundness(runs: &mut Option<Runs>) -> Result<String, String> {
    let start = Instant::now();
    let safe = explore(&full_bounds(ModelId::TokenNotifySafe), 1).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let vuln = explore(&full_bounds(ModelId::TokenNotifyVuln), 1).map_err(|e| e.to_string())?;
    let detail = format!("{} branches, {} states, {:.1}s", safe.branches, safe.states.unwrap_or(0), took.as_secs_f64());
    let ok = safe.violation_count == 0 && safe.complete && took < SAFE_EXPLORE_LIMIT;
    *runs = Some(Runs { safe: safe.clone(), vuln, traces: Vec::new() });
    if !safe.complete {
        return Err(format!("incomplete: {detail}"));
    }
    if safe.violation_count != 0 {
        return Err(format!("{} violations: {detail}", safe.violation_count));
    }
    if ok { Ok(detail) } else { Err(format!("too slow: {detail}")) }
}

fn vulnerable_exploit(runs: &mut Runs) -> Result<String, String> {
    let r = &runs.vuln;
    let boundary = r.violations.iter().filter(|c| c.kind == ViolationKind::InvariantAtBoundary).count();
    if boundary == 0 {
        return Err("no InvariantAtBoundary violation".into());
    }
    let class = r
        .violations
        .iter()
        .find(|c| c.method == "TransferNotify" && c.message.contains("sum above total"))
        .ok_or("no surplus class at a notifying transfer")?;
    let trace = class.traces.first().ok_or("class has no trace")?;
    let small = shrink(trace).map_err(|e| e.to_string())?;
    if !has_nested_reentrant_transfer(&small.frames) {
        return Err("shrunk trace has no nested re-entrant transfer".into());
    }
    let rec = gasbound_core::explorer::record(&small.domains, &small.transactions, small.choices.clone())
        .map_err(|e| e.to_string())?;
    let (sum, total) = sums(rec.world.token().ok_or("not a token")?);
    if sum <= total {
        return Err(format!("shrunk final sum {sum} not above total {total}"));
    }
    let hand = exploit_run().map_err(|e| e.to_string())?;
    let (hs, ht) = sums(hand.world.token().ok_or("not a token")?);
    if hand.trace.violation.is_none() || (hs.clone(), ht.clone()) != (BigUint::from(20u8), BigUint::from(10u8)) {
        return Err(format!("hand witness gives {hs} vs {ht}"));
    }
    runs.traces.push(small.clone());
    runs.traces.push(hand.trace);
    Ok(format!(
        "{} violations in {} classes; shrunk to {} tx / {} choices, sum {sum} vs total {total}; hand witness {hs} vs {ht}",
        r.violation_count,
        r.violations.len(),
        small.transactions.len(),
        small.choices.len()
    ))
}

fn revert_biconditional() -> Result<String, String> {
    let s = revert_suite(REVERT_CASES, 1);
    if s.ok() {
        Ok(format!("{} cases", s.cases))
    } else {
        Err(format!("{} of {} cases failed, first: {}", s.failures.len(), s.cases, s.failures[0]))
    }
}

fn well_founded(runs: &Runs) -> Result<String, String> {
    let mut checked = 0;
    for r in [&runs.safe, &runs.vuln] {
        if r.frame_bound_exceeded != 0 {
            return Err(format!("{} transactions exceed their frame bound", r.frame_bound_exceeded));
        }
        if r.max_frames_per_tx > 6 {
            return Err(format!("{} frames in one transaction", r.max_frames_per_tx));
        }
    }
    for t in runs.vuln.traces().chain(&runs.traces) {
        t.check_well_founded()?;
        checked += 1;
    }
    for model in [ModelId::TokenNotifySafe, ModelId::TokenNotifyVuln, ModelId::TokenPlain] {
        let cfg = FuzzConfig { model: full_bounds(model).model, seed: 9, ..FuzzConfig::default() };
        for i in 0..1000 {
            let run = fuzz_one(&cfg, i).map_err(|e| e.to_string())?;
            run.trace.check_well_founded()?;
            for (tx, n) in run.trace.transactions.iter().zip(run.trace.executing_frames_per_transaction()) {
                if n as u64 > tx.gas.0 {
                    return Err(format!("{n} frames with gas {}", tx.gas.0));
                }
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{} explored branches within bound, {checked} traces checked",
        runs.safe.branches + runs.vuln.branches
    ))
}

fn decodings() -> Result<String, String> {
    decodings_ok()?;
    Ok(format!("{} sequences", decoding_cases().len()))
}

fn auction_history() -> Result<String, String> {
    let cfg = FuzzConfig {
        model: ModelConfig::for_model(ModelId::Auction),
        max_txs: 8,
        seed: 11,
        iterations: AUCTION_RUNS,
        max_reported_violations: 3,
    };
    for i in 0..cfg.iterations {
        let run = fuzz_one(&cfg, i).map_err(|e| e.to_string())?;
        let a = run.world.auction().ok_or("not an auction")?;
        history_ok(&a.history).map_err(|e| format!("run {i}: {e}"))?;
        if run.trace.violation.is_some() {
            return Err(format!("run {i} violates"));
        }
    }
    Ok(format!("{AUCTION_RUNS} sequences"))
}

fn add_bytes() -> Result<String, String> {
    let start = Instant::now();
    let bad = add_bytes_failures();
    let took = start.elapsed();
    if !bad.is_empty() {
        return Err(format!("{} pairs fail, first {:?}", bad.len(), bad[0]));
    }
    if took >= ADD_BYTES_LIMIT {
        return Err(format!("took {:.2}s", took.as_secs_f64()));
    }
    Ok(format!("65536 pairs in {:.2}s", took.as_secs_f64()))
}

fn inc() -> Result<String, String> {
    let inputs = inc_inputs(INC_RANDOM, 3);
    for v in &inputs {
        inc_case(*v)?;
    }
    Ok(format!("{} initial values", inputs.len()))
}

fn determinism(runs: &Runs) -> Result<String, String> {
    let vuln = full_bounds(ModelId::TokenNotifyVuln);
    let first = runs.vuln.to_json();
    let again = explore(&vuln, 1).map_err(|e| e.to_string())?.to_json();
    let four = explore(&vuln, 4).map_err(|e| e.to_string())?.to_json();
    if first != again || first != four {
        return Err("vulnerable explore reports differ".into());
    }
    let mut safe = full_bounds(ModelId::TokenNotifySafe);
    safe.model.gas = 5;
    let a = explore(&safe, 1).map_err(|e| e.to_string())?.to_json();
    let b = explore(&safe, 4).map_err(|e| e.to_string())?.to_json();
    if a != b {
        return Err("safe explore reports differ".into());
    }
    let mut replays = 0;
    for t in runs.vuln.traces().chain(&runs.traces) {
        let x = replay(t).map_err(|e| e.to_string())?.to_json();
        let y = replay(t).map_err(|e| e.to_string())?.to_json();
        if x != y {
            return Err("replay reports differ".into());
        }
        replays += 1;
    }
    Ok(format!("explore x3 at full bounds, {replays} replays"))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, r: Result<String, String>| {
        match r {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    };
    let mut runs = None;
    report("safe-order soundness", safe_soundness(&mut runs));
    let mut runs = runs.expect("explore ran");
    report("vulnerable-order exploit", vulnerable_exploit(&mut runs));
    report("revert biconditional", revert_biconditional());
    report("well-foundedness", well_founded(&runs));
    report("choice-sequence decodings", decodings());
    report("auction history", auction_history());
    report("mini-EVM AddBytes", add_bytes());
    report("mini-EVM INC", inc());
    report("determinism", determinism(&runs));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

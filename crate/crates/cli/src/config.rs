//! Run configuration: a JSON file, overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use gasbound_core::explorer::{ExploreConfig, FuzzConfig};
use gasbound_core::model::Setup;
use gasbound_core::{GasAccounting, ModelConfig, ModelId, U256};
use serde::{Deserialize, Serialize};

/// Every field is optional so that a file may set any subset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<ModelId>,
    pub addresses: Option<usize>,
    pub amounts: Option<Vec<U256>>,
    pub gas: Option<u64>,
    pub max_txs: Option<usize>,
    pub max_choice_value: Option<u64>,
    pub gas_accounting: Option<GasAccounting>,
    pub propagate_external_failure: Option<bool>,
    pub strict_nonpayable: Option<bool>,
    pub havoc_msg_value: Option<bool>,
    pub stale_self_debit: Option<bool>,
    pub setup: Option<Setup>,
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
    pub max_branches: Option<u64>,
    pub max_reported_violations: Option<usize>,
    pub cross_check: Option<bool>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn parse_amounts(s: &str) -> Result<Vec<U256>, String> {
    s.split(',').map(|a| a.trim().parse::<U256>().map_err(|e| format!("amount `{a}`: {e}"))).collect()
}

#[derive(Args, Clone, Debug, Default)]
pub struct RunFlags {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// token-plain, token-notify-safe, token-notify-vuln or auction.
    #[arg(long)]
    pub model: Option<ModelId>,
    #[arg(long)]
    pub addresses: Option<usize>,
    /// Comma-separated amount domain; decimal, 0x-hex or MAX.
    #[arg(long, value_parser = parse_amounts)]
    pub amounts: Option<Vec<U256>>,
    /// Gas given to every transaction.
    #[arg(long)]
    pub gas: Option<u64>,
    #[arg(long)]
    pub max_txs: Option<usize>,
    #[arg(long)]
    pub max_choice_value: Option<u64>,
    /// Non-recursing external calls return the gas they were given, less one.
    #[arg(long)]
    pub strict_gas: bool,
    #[arg(long)]
    pub propagate_external_failure: bool,
    #[arg(long)]
    pub strict_nonpayable: bool,
    #[arg(long)]
    pub havoc_msg_value: bool,
    #[arg(long)]
    pub stale_self_debit: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Stop exploring after this many transaction outcomes.
    #[arg(long)]
    pub max_branches: Option<u64>,
    #[arg(long)]
    pub max_reported_violations: Option<usize>,
    /// Skip replaying the witness of every new state.
    #[arg(long)]
    pub no_cross_check: bool,
    /// Defaults to $WORKERS, then the config file, then the core count.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub struct Resolved {
    pub model: ModelConfig,
    pub max_txs: Option<usize>,
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
    pub max_branches: Option<u64>,
    pub max_reported_violations: Option<usize>,
    pub cross_check: bool,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Resolved {
    pub fn explore(&self) -> ExploreConfig {
        let d = ExploreConfig::default();
        ExploreConfig {
            model: self.model.clone(),
            max_txs: self.max_txs.unwrap_or(d.max_txs),
            max_branches: self.max_branches,
            max_reported_violations: self.max_reported_violations.unwrap_or(d.max_reported_violations),
            cross_check: self.cross_check,
        }
    }

    pub fn fuzz(&self) -> FuzzConfig {
        let d = FuzzConfig::default();
        FuzzConfig {
            model: self.model.clone(),
            max_txs: self.max_txs.unwrap_or(d.max_txs),
            seed: self.seed.unwrap_or(d.seed),
            iterations: self.iterations.unwrap_or(d.iterations),
            max_reported_violations: self.max_reported_violations.unwrap_or(d.max_reported_violations),
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl RunFlags {
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let env_workers = match std::env::var("WORKERS") {
            Ok(v) => Some(v.trim().parse::<usize>().with_context(|| format!("WORKERS={v} is not a count"))?),
            Err(_) => None,
        };
        let model_id = self.model.or(file.model).unwrap_or(ModelId::TokenNotifySafe);
        let mut m = ModelConfig::for_model(model_id);
        m.addresses = self.addresses.or(file.addresses).unwrap_or(m.addresses);
        m.amounts = self.amounts.clone().or(file.amounts).unwrap_or(m.amounts);
        m.gas = self.gas.or(file.gas).unwrap_or(m.gas);
        m.max_choice_value = self.max_choice_value.or(file.max_choice_value).unwrap_or(m.max_choice_value);
        m.gas_accounting = if self.strict_gas { GasAccounting::Strict } else { file.gas_accounting.unwrap_or(m.gas_accounting) };
        m.propagate_external_failure = self.propagate_external_failure || file.propagate_external_failure.unwrap_or(false);
        m.strict_nonpayable = self.strict_nonpayable || file.strict_nonpayable.unwrap_or(false);
        m.havoc_msg_value = self.havoc_msg_value || file.havoc_msg_value.unwrap_or(false);
        m.stale_self_debit = self.stale_self_debit || file.stale_self_debit.unwrap_or(false);
        if let Some(setup) = file.setup {
            m.setup = setup;
        }

        let max_txs = self.max_txs.or(file.max_txs);
        let iterations = self.iterations.or(file.iterations);
        let workers = self.workers.or(env_workers).or(file.workers).unwrap_or_else(default_workers);
        for (name, v) in [
            ("addresses", Some(m.addresses as u64)),
            ("gas", Some(m.gas)),
            ("max_txs", max_txs.map(|v| v as u64)),
            ("iterations", iterations),
            ("workers", Some(workers as u64)),
        ] {
            if v == Some(0) {
                bail!("{name} must be at least 1");
            }
        }
        m.validate()?;
        Ok(Resolved {
            model: m,
            max_txs,
            seed: self.seed.or(file.seed),
            iterations,
            max_branches: self.max_branches.or(file.max_branches),
            max_reported_violations: self.max_reported_violations.or(file.max_reported_violations),
            cross_check: !self.no_cross_check && file.cross_check.unwrap_or(true),
            workers,
            out: self.out.clone().or(file.out),
        })
    }
}

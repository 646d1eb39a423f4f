//! Run configuration: one file (TOML, or JSON by extension) covering every
//! subcommand. Every section and field is optional.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{
    CostParams, REFERENCE_ARRIVAL_RATES, REFERENCE_AVAILABILITY, REFERENCE_DETECTION_GRID,
    REFERENCE_GAS_PRICES,
};
use crate::batcher::{ArrivalKind, BatchPolicy};
use crate::bench::FillStrategy;
use crate::evidence::{EvidenceLoopConfig, PinPolicy, ProviderConfig, ProviderModel};
use crate::ledger::ChainConfig;
use crate::rpc::RpcModel;
use crate::scenario::{ScenarioConfig, ScenarioEnv};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Md,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub providers: Vec<ProviderConfig>,
    pub pin: PinPolicy,
    pub evidence_loop: EvidenceLoopConfig,
}

impl Default for StoreConfig {
    fn default() -> Self {
        let env = ScenarioEnv::default();
        StoreConfig {
            providers: env.providers,
            pin: env.pin,
            evidence_loop: EvidenceLoopConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatcherConfig {
    pub policy: BatchPolicy,
    pub arrival_rates: Vec<f64>,
    pub arrivals: ArrivalKind,
    /// Simulated seconds per arrival rate.
    pub duration: f64,
}

impl Default for BatcherConfig {
    fn default() -> Self {
        BatcherConfig {
            policy: BatchPolicy::default(),
            arrival_rates: REFERENCE_ARRIVAL_RATES.to_vec(),
            arrivals: ArrivalKind::Deterministic,
            duration: 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FairnessConfig {
    /// USD per pound; required by `stress fairness`.
    pub premium: Option<f64>,
    pub alpha: f64,
    /// Pounds per batch; when absent only the break-even mass is reported.
    pub batch_mass: Option<f64>,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            premium: None,
            alpha: 0.01,
            batch_mass: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyticsConfig {
    pub cost: CostParams,
    pub gas_prices: Vec<f64>,
    /// Commitments per batch for per-commitment cost.
    pub commitments_per_batch: u64,
    pub fairness: FairnessConfig,
    pub availability_p: Vec<f64>,
    pub availability_k: Vec<u32>,
    pub availability_trials: u64,
    /// (v, s) cells.
    pub detection_grid: Vec<(f64, f64)>,
    pub injected_events: u64,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        AnalyticsConfig {
            cost: CostParams::default(),
            gas_prices: REFERENCE_GAS_PRICES.to_vec(),
            commitments_per_batch: 13,
            fairness: FairnessConfig::default(),
            availability_p: REFERENCE_AVAILABILITY.to_vec(),
            availability_k: vec![1, 2, 3],
            availability_trials: 100_000,
            detection_grid: REFERENCE_DETECTION_GRID.to_vec(),
            injected_events: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub runs: usize,
    pub warmup: usize,
    /// Evidence batch sizes interleaved with the six lifecycle anchors.
    pub evidence_batches: Vec<usize>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            runs: 30,
            warmup: 3,
            evidence_batches: vec![2, 2, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorBenchConfig {
    pub blocks: u64,
    pub fill: Vec<FillStrategy>,
}

impl Default for AnchorBenchConfig {
    fn default() -> Self {
        AnchorBenchConfig {
            blocks: 60,
            fill: vec![FillStrategy::GasAware, FillStrategy::MaxBatchOnly],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: vec![Format::Json],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub chain: ChainConfig,
    pub store: StoreConfig,
    pub batcher: BatcherConfig,
    pub rpc: RpcModel,
    pub analytics: AnalyticsConfig,
    pub audit: AuditConfig,
    pub anchor_bench: AnchorBenchConfig,
    pub scenario: ScenarioConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            chain: ChainConfig::default(),
            store: StoreConfig::default(),
            batcher: BatcherConfig::default(),
            rpc: RpcModel::default(),
            analytics: AnalyticsConfig::default(),
            audit: AuditConfig::default(),
            anchor_bench: AnchorBenchConfig::default(),
            scenario: ScenarioConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        } else {
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
    }

    /// Sets the run seed; the scenario inherits it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.scenario.seed = seed;
        self
    }

    pub fn scenario_env(&self) -> ScenarioEnv {
        ScenarioEnv {
            chain: self.chain,
            providers: self.store.providers.clone(),
            pin: self.store.pin,
            rpc: self.rpc,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.chain.validate().map_err(|e| e.to_string())?;
        self.batcher.policy.validate().map_err(|e| e.to_string())?;
        if !(self.batcher.duration > 0.0) {
            return Err("batcher.duration must be > 0".into());
        }
        if let Some(l) = self.batcher.arrival_rates.iter().find(|l| !(**l > 0.0)) {
            return Err(format!("arrival rates must be > 0, got {l}"));
        }
        if self.rpc.concurrency == 0 || !self.rpc.rtt.is_valid() {
            return Err("rpc needs concurrency >= 1 and a valid rtt model".into());
        }
        if self.store.providers.is_empty() {
            return Err("store needs at least one provider".into());
        }
        for p in &self.store.providers {
            ProviderModel::new(p.clone()).map_err(|e| e.to_string())?;
        }
        if self.store.pin.k == 0 || self.store.pin.k > self.store.providers.len() {
            return Err(format!(
                "pin.k must be in 1..={}, got {}",
                self.store.providers.len(),
                self.store.pin.k
            ));
        }
        self.analytics.cost.validate().map_err(|e| e.to_string())?;
        if self.analytics.commitments_per_batch == 0 {
            return Err("commitments_per_batch must be >= 1".into());
        }
        if self.audit.runs == 0 {
            return Err("audit.runs must be >= 1".into());
        }
        self.scenario.validate().map_err(|e| e.to_string())?;
        Ok(())
    }
}

//! On-chain anchoring benchmarks: the largest batch that confirms and the
//! sustained commitment throughput of saturated blocks.

use serde::{Deserialize, Serialize};

use crate::contracts::{CidCommitment, ContractCall, LifecycleStep, Role, SuiteConfig};
use crate::evidence::compute_cid;
use crate::ids::{Address, ProductId};
use crate::ledger::{ChainConfig, Ledger, LedgerError};

/// A `submit_cid_batch` call carrying `n` distinct commitments.
pub fn probe_batch(n: u64) -> ContractCall {
    let product = ProductId::new("probe");
    ContractCall::SubmitCidBatch {
        commitments: (0..n)
            .map(|i| CidCommitment {
                product_id: product.clone(),
                step: LifecycleStep::Produced,
                cid: compute_cid(&i.to_be_bytes()),
            })
            .collect(),
    }
}

/// Whether an `n`-commitment batch from `submitter` is admitted and executes
/// successfully. Runs on a scratch copy; `ledger` is untouched.
pub fn batch_confirms(ledger: &Ledger, submitter: &Address, n: u64) -> bool {
    if n == 0 {
        return false;
    }
    let gas = match ledger.config().gas_of_batch(n) {
        Ok(g) => g,
        Err(_) => return false,
    };
    if gas > ledger.config().per_tx_gas_cap || gas > ledger.config().block_gas_limit {
        return false;
    }
    let mut scratch = ledger.clone();
    let id = match scratch.submit(submitter.clone(), probe_batch(n)) {
        Ok(id) => id,
        Err(_) => return false,
    };
    scratch.drain();
    scratch.get_receipt(id, None).is_ok_and(|r| r.is_success())
}

/// Largest `n` with `confirms(n)`, assuming `confirms` is monotone
/// (true up to some point, false after). Doubles to bracket, then bisects.
/// Returns the result and the number of probes.
pub fn search_max(mut confirms: impl FnMut(u64) -> bool) -> (u64, u32) {
    let mut probes = 0u32;
    let mut probe = |n: u64| {
        probes += 1;
        confirms(n)
    };
    if !probe(1) {
        return (0, probes);
    }
    let (mut lo, mut hi) = (1u64, 2u64);
    while probe(hi) {
        lo = hi;
        hi = match hi.checked_mul(2) {
            Some(h) => h,
            None => return (lo, probes),
        };
    }
    // confirms(lo) holds, confirms(hi) fails.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, probes)
}

/// Brute-force reference for [`search_max`]: first failure scanning up from 1.
pub fn linear_scan_max(mut confirms: impl FnMut(u64) -> bool, limit: u64) -> u64 {
    (1..=limit).take_while(|&n| confirms(n)).last().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxBatchSearch {
    pub per_tx_gas_cap: u64,
    pub gas_per_commitment: u64,
    pub max_batch: u64,
    pub gas_at_max: Option<u64>,
    pub probes: u32,
    pub warning: Option<String>,
}

/// Searches for the largest batch that confirms on `ledger` when submitted by
/// `submitter`, which must be an active registered actor.
pub fn find_max_batch(ledger: &Ledger, submitter: &Address) -> MaxBatchSearch {
    let (max_batch, probes) = search_max(|n| batch_confirms(ledger, submitter, n));
    let cfg = ledger.config();
    MaxBatchSearch {
        per_tx_gas_cap: cfg.per_tx_gas_cap,
        gas_per_commitment: cfg.gas_per_commitment,
        max_batch,
        gas_at_max: (max_batch > 0).then(|| max_batch * cfg.gas_per_commitment),
        probes,
        warning: (max_batch == 0).then(|| {
            "NoFeasibleBatch: the per-transaction gas cap admits no commitment".to_owned()
        }),
    }
}

/// A fresh chain with one registered submitter. Onboarding runs under the
/// default gas parameters so that caps below one commitment can be probed.
pub fn bench_ledger(chain: ChainConfig) -> Result<(Ledger, Address), LedgerError> {
    chain.validate()?;
    let mut ledger = Ledger::new(ChainConfig::default(), SuiteConfig::default())?;
    let submitter = Address::new("anchor-service");
    let admin = ledger.contracts().config().admin.clone();
    ledger.submit(
        admin,
        ContractCall::RegisterActor {
            address: submitter.clone(),
            role: Role::Processor,
        },
    )?;
    ledger.advance_block();
    ledger.reconfigure(chain)?;
    Ok((ledger, submitter))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillStrategy {
    /// Maximum-size batches only; whatever no longer fits waits.
    MaxBatchOnly,
    /// Maximum-size batches plus one remainder batch sized to the gas left.
    GasAware,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub fill: FillStrategy,
    pub blocks: u64,
    pub commitments: u64,
    pub seconds: f64,
    pub commitments_per_second: f64,
    pub ceiling_per_second: f64,
    pub mean_block_gas: f64,
    pub reverted: u64,
}

/// Batch sizes that fill one block.
fn block_plan(cfg: &ChainConfig, max_batch: u64, fill: FillStrategy) -> Vec<u64> {
    let per_block = cfg.block_gas_limit / cfg.gas_per_commitment;
    let full = per_block / max_batch;
    let mut plan = vec![max_batch; full as usize];
    let rest = per_block - full * max_batch;
    if fill == FillStrategy::GasAware && rest > 0 {
        plan.push(rest);
    }
    plan
}

/// Keeps the queue saturated for `blocks` blocks and measures included
/// commitments per second of chain time.
pub fn run_throughput(
    chain: ChainConfig,
    blocks: u64,
    fill: FillStrategy,
) -> Result<ThroughputReport, LedgerError> {
    let (mut ledger, submitter) = bench_ledger(chain)?;
    let max_batch = chain.max_batch();
    if max_batch == 0 {
        return Err(LedgerError::GasCapExceeded {
            gas: chain.gas_per_commitment,
            cap: chain.per_tx_gas_cap,
        });
    }
    let plan = block_plan(&chain, max_batch, fill);
    let first = ledger.head().number;
    let mut ids = Vec::new();
    for _ in 0..blocks {
        for &n in &plan {
            ids.push(ledger.submit(submitter.clone(), probe_batch(n))?);
        }
        ledger.advance_block();
    }
    let measured = &ledger.blocks()[first as usize + 1..];
    let included: std::collections::BTreeSet<_> = measured
        .iter()
        .flat_map(|b| b.tx_ids.iter().copied())
        .collect();
    let mut commitments = 0u64;
    let mut reverted = 0u64;
    for id in &ids {
        if !included.contains(id) {
            continue;
        }
        let r = ledger.get_receipt(*id, None)?;
        if r.is_success() {
            commitments += r.gas_used / chain.gas_per_commitment;
        } else {
            reverted += 1;
        }
    }
    let gas: u64 = measured.iter().map(|b| b.gas_used).sum();
    let seconds = blocks as f64 * chain.block_interval;
    Ok(ThroughputReport {
        fill,
        blocks,
        commitments,
        seconds,
        commitments_per_second: if seconds > 0.0 {
            commitments as f64 / seconds
        } else {
            0.0
        },
        ceiling_per_second: chain.throughput_ceiling(),
        mean_block_gas: if blocks > 0 {
            gas as f64 / blocks as f64
        } else {
            0.0
        },
        reverted,
    })
}

//! Audit-trail reconstruction from sealed chain data.
//!
//! Query latency is split into four sequential phases: receipt fetch, log
//! decode, canonical sort and block-timestamp fetch. The two fetch phases are
//! simulated RPC time; decode and sort are measured wall-clock time of this
//! implementation.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{CidCommitment, ContractCall, Event, LifecycleStep, Role, SuiteConfig};
use crate::evidence::{compute_cid, verify, Cid, EvidenceStore, StoreError};
use crate::ids::{Address, ProductId, TxId};
use crate::ledger::{ChainConfig, Ledger, LedgerError, LogRecord, TxReceipt};
use crate::rpc::{RpcModel, RpcSession};
use crate::stats::{ratio, Summary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("no transactions mention product {0}")]
    UnknownProduct(ProductId),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("workload setup failed: {0}")]
    Workload(String),
}

/// Client-side receipt and timestamp caches. Hits cost no round trip.
#[derive(Debug, Clone, Default)]
pub struct CacheState {
    receipts: BTreeMap<TxId, TxReceipt>,
    timestamps: BTreeMap<u64, f64>,
}

impl CacheState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cache holding every receipt and block timestamp relevant to `product`.
    pub fn prefilled(ledger: &Ledger, product: &ProductId) -> Result<Self, AuditError> {
        let mut cache = CacheState::new();
        for id in ledger.product_tx_ids(product) {
            let receipt = ledger.get_receipt(id, None)?.clone();
            let ts = ledger.get_block_timestamp(receipt.block_number, None)?;
            cache.timestamps.insert(receipt.block_number, ts);
            cache.receipts.insert(id, receipt);
        }
        Ok(cache)
    }

    pub fn clear(&mut self) {
        self.receipts.clear();
        self.timestamps.clear();
    }

    pub fn receipt_count(&self) -> usize {
        self.receipts.len()
    }

    pub fn timestamp_count(&self) -> usize {
        self.timestamps.len()
    }
}

/// Milliseconds per phase. `total` is always the sum of the four parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AqlBreakdown {
    pub t_receipts: f64,
    pub t_decode: f64,
    pub t_sort: f64,
    pub t_timestamps: f64,
    pub total: f64,
}

impl AqlBreakdown {
    pub fn new(t_receipts: f64, t_decode: f64, t_sort: f64, t_timestamps: f64) -> Self {
        AqlBreakdown {
            t_receipts,
            t_decode,
            t_sort,
            t_timestamps,
            total: t_receipts + t_decode + t_sort + t_timestamps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    #[serde(flatten)]
    pub event: Event,
    pub block_number: u64,
    pub tx_index: u32,
    pub log_index: u32,
    pub timestamp: f64,
    pub actor: Address,
}

impl AuditRecord {
    pub fn topic(&self) -> &'static str {
        self.event.topic()
    }

    pub fn position(&self) -> (u64, u32, u32) {
        (self.block_number, self.tx_index, self.log_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditTrail {
    pub product_id: ProductId,
    pub records: Vec<AuditRecord>,
    pub tx_count: usize,
    pub block_count: usize,
}

impl AuditTrail {
    /// Lifecycle steps in the order they were anchored.
    pub fn anchored_steps(&self) -> Vec<LifecycleStep> {
        self.records
            .iter()
            .filter_map(|r| match &r.event {
                Event::StepAnchored { step, .. } => Some(*step),
                _ => None,
            })
            .collect()
    }

    /// True iff every lifecycle step appears exactly once, in order.
    pub fn is_complete(&self) -> bool {
        self.anchored_steps() == LifecycleStep::ALL
    }

    pub fn commitments(&self) -> impl Iterator<Item = (LifecycleStep, Cid)> + '_ {
        self.records.iter().filter_map(|r| match &r.event {
            Event::EvidenceAnchored { step, cid, .. } => Some((*step, *cid)),
            _ => None,
        })
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Rebuilds the ordered timeline for `product`. Transaction discovery uses the
/// ledger's event index and is free; everything else goes through `cache`
/// first and `rpc` on a miss. Fetched items are added to the cache.
pub fn reconstruct(
    product: &ProductId,
    ledger: &Ledger,
    rpc: &mut RpcSession,
    cache: &mut CacheState,
) -> Result<(AuditTrail, AqlBreakdown), AuditError> {
    let tx_ids = ledger.product_tx_ids(product);
    if tx_ids.is_empty() {
        return Err(AuditError::UnknownProduct(product.clone()));
    }

    let misses: Vec<TxId> = tx_ids
        .iter()
        .filter(|id| !cache.receipts.contains_key(id))
        .copied()
        .collect();
    let t_receipts = rpc.waves(misses.len());
    for id in misses {
        cache
            .receipts
            .insert(id, ledger.get_receipt(id, None)?.clone());
    }

    let start = Instant::now();
    let mut decoded: Vec<&LogRecord> = tx_ids
        .iter()
        .flat_map(|id| cache.receipts[id].logs.iter())
        .filter(|log| log.event.product_id() == Some(product))
        .collect();
    let t_decode = elapsed_ms(start);

    let start = Instant::now();
    decoded.sort_by_key(|log| log.position());
    let t_sort = elapsed_ms(start);

    let blocks: BTreeSet<u64> = decoded.iter().map(|log| log.block_number).collect();
    let missing: Vec<u64> = blocks
        .iter()
        .filter(|b| !cache.timestamps.contains_key(b))
        .copied()
        .collect();
    let t_timestamps = rpc.waves(missing.len());
    for b in missing {
        cache
            .timestamps
            .insert(b, ledger.get_block_timestamp(b, None)?);
    }

    let records = decoded
        .into_iter()
        .map(|log| AuditRecord {
            event: log.event.clone(),
            block_number: log.block_number,
            tx_index: log.tx_index,
            log_index: log.log_index,
            timestamp: cache.timestamps[&log.block_number],
            actor: log.event.actor().clone(),
        })
        .collect();

    Ok((
        AuditTrail {
            product_id: product.clone(),
            records,
            tx_count: tx_ids.len(),
            block_count: blocks.len(),
        },
        AqlBreakdown::new(t_receipts, t_decode, t_sort, t_timestamps),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitmentCheck {
    pub step: LifecycleStep,
    pub cid: Cid,
    pub fetched: bool,
    pub matched: bool,
    pub tries: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceVerification {
    pub checks: Vec<CommitmentCheck>,
    pub n: u64,
    pub fetched: u64,
    pub matched: u64,
    #[serde(rename = "R")]
    pub retrievability: Option<f64>,
    #[serde(rename = "M")]
    pub match_rate: Option<f64>,
    #[serde(rename = "V")]
    pub verifiability: Option<f64>,
}

/// Fetches every committed object and recomputes its CID. Failures are
/// recorded, never raised.
pub fn verify_evidence<R: Rng + ?Sized>(
    trail: &AuditTrail,
    store: &EvidenceStore,
    rng: &mut R,
) -> EvidenceVerification {
    let checks: Vec<CommitmentCheck> = trail
        .commitments()
        .map(|(step, cid)| match store.get(&cid, rng) {
            Ok(r) => CommitmentCheck {
                step,
                cid,
                fetched: true,
                matched: verify(&cid, &r.bytes),
                tries: r.tries,
                latency_ms: r.latency_ms,
            },
            Err(e) => CommitmentCheck {
                step,
                cid,
                fetched: false,
                matched: false,
                tries: match e {
                    StoreError::Unavailable { tries, .. } => tries,
                    _ => 0,
                },
                latency_ms: 0.0,
            },
        })
        .collect();
    let n = checks.len() as u64;
    let fetched = checks.iter().filter(|c| c.fetched).count() as u64;
    let matched = checks.iter().filter(|c| c.matched).count() as u64;
    EvidenceVerification {
        checks,
        n,
        fetched,
        matched,
        retrievability: ratio(fetched, n),
        match_rate: ratio(matched, fetched),
        verifiability: ratio(matched, n),
    }
}

/// A ledger holding one product whose history is spread over a known number
/// of transactions, events and blocks.
#[derive(Debug, Clone)]
pub struct AuditWorkload {
    pub ledger: Ledger,
    pub product_id: ProductId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadShape {
    pub txs: usize,
    pub events: usize,
    pub blocks: usize,
}

impl AuditWorkload {
    /// Six bare lifecycle anchors interleaved with evidence batches of the
    /// given sizes, one transaction per block.
    pub fn build(chain: ChainConfig, batch_sizes: &[usize]) -> Result<Self, AuditError> {
        let werr = |e: LedgerError| AuditError::Workload(e.to_string());
        let mut ledger = Ledger::new(chain, SuiteConfig::default()).map_err(werr)?;
        let admin = ledger.contracts().config().admin.clone();
        let roster = [
            ("producer", Role::Producer),
            ("processor", Role::Processor),
            ("retailer", Role::Retailer),
        ];
        for (name, role) in roster {
            ledger
                .submit(
                    admin.clone(),
                    ContractCall::RegisterActor {
                        address: name.into(),
                        role,
                    },
                )
                .map_err(werr)?;
        }
        ledger.advance_block();

        let product = ProductId::new("audit-batch");
        let mut calls = Vec::new();
        let mut batches = batch_sizes.iter().enumerate();
        for step in LifecycleStep::ALL {
            let actor = roster
                .iter()
                .find(|(_, r)| *r == step.authorized_role())
                .map(|(n, _)| Address::new(n))
                .expect("roster covers every lifecycle role");
            calls.push((
                actor.clone(),
                ContractCall::AnchorStep {
                    product_id: product.clone(),
                    step,
                    evidence: Vec::new(),
                },
            ));
            if let Some((i, &n)) = batches.next() {
                let commitments = (0..n)
                    .map(|j| CidCommitment {
                        product_id: product.clone(),
                        step,
                        cid: compute_cid(format!("audit evidence {i}/{j}").as_bytes()),
                    })
                    .collect();
                calls.push((actor, ContractCall::SubmitCidBatch { commitments }));
            }
        }
        if batches.next().is_some() {
            return Err(AuditError::Workload(format!(
                "at most {} evidence batches fit the lifecycle",
                LifecycleStep::ALL.len()
            )));
        }
        for (sender, call) in calls {
            let id = ledger.submit(sender, call).map_err(werr)?;
            ledger.advance_block();
            if !ledger.get_receipt(id, None).map_err(werr)?.is_success() {
                return Err(AuditError::Workload(format!("{id} reverted")));
            }
        }
        Ok(AuditWorkload {
            ledger,
            product_id: product,
        })
    }

    /// 10 transactions, 15 events, 10 blocks.
    pub fn reference() -> Result<Self, AuditError> {
        Self::build(ChainConfig::default(), &[2, 2, 2, 3])
    }

    pub fn shape(&self) -> WorkloadShape {
        let tx_ids = self.ledger.product_tx_ids(&self.product_id);
        let logs: Vec<&LogRecord> = self
            .ledger
            .logs()
            .filter(|l| l.event.product_id() == Some(&self.product_id))
            .collect();
        let blocks: BTreeSet<u64> = logs.iter().map(|l| l.block_number).collect();
        WorkloadShape {
            txs: tx_ids.len(),
            events: logs.len(),
            blocks: blocks.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CacheRegime {
    Uncached,
    Cached,
}

/// Statistics over measured runs. Fetch phases are simulated and
/// reproducible; decode, sort and total include wall-clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeStats {
    pub regime: CacheRegime,
    pub t_receipts: Summary,
    pub t_timestamps: Summary,
    pub wall_clock: RegimeWallClock,
    #[serde(skip)]
    pub runs: Vec<AqlBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeWallClock {
    pub t_decode: Summary,
    pub t_sort: Summary,
    pub total: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AqlBenchmark {
    pub shape: WorkloadShape,
    pub runs: usize,
    pub warmup: usize,
    pub concurrency: usize,
    pub regimes: Vec<RegimeStats>,
}

impl AqlBenchmark {
    pub fn regime(&self, regime: CacheRegime) -> Option<&RegimeStats> {
        self.regimes.iter().find(|r| r.regime == regime)
    }
}

/// Runs `warmup` discarded and `runs` measured reconstructions per regime.
/// Uncached runs start from an empty cache; cached runs start from a cache
/// already holding every receipt and timestamp.
pub fn run_aql_benchmark(
    workload: &AuditWorkload,
    rpc: RpcModel,
    runs: usize,
    warmup: usize,
    seed: u64,
) -> Result<AqlBenchmark, AuditError> {
    let mut session = RpcSession::new(rpc, seed);
    let warm = CacheState::prefilled(&workload.ledger, &workload.product_id)?;
    let mut regimes = Vec::new();
    for regime in [CacheRegime::Uncached, CacheRegime::Cached] {
        let mut measured = Vec::with_capacity(runs);
        for i in 0..warmup + runs {
            let mut cache = match regime {
                CacheRegime::Uncached => CacheState::new(),
                CacheRegime::Cached => warm.clone(),
            };
            let (_, b) = reconstruct(
                &workload.product_id,
                &workload.ledger,
                &mut session,
                &mut cache,
            )?;
            if i >= warmup {
                measured.push(b);
            }
        }
        let col = |f: fn(&AqlBreakdown) -> f64| -> Summary {
            let xs: Vec<f64> = measured.iter().map(f).collect();
            Summary::of(&xs).unwrap_or(Summary {
                n: 0,
                p50: 0.0,
                p95: 0.0,
                mean: 0.0,
                max: 0.0,
            })
        };
        regimes.push(RegimeStats {
            regime,
            t_receipts: col(|b| b.t_receipts),
            t_timestamps: col(|b| b.t_timestamps),
            wall_clock: RegimeWallClock {
                t_decode: col(|b| b.t_decode),
                t_sort: col(|b| b.t_sort),
                total: col(|b| b.total),
            },
            runs: measured,
        });
    }
    Ok(AqlBenchmark {
        shape: workload.shape(),
        runs,
        warmup,
        concurrency: rpc.concurrency,
        regimes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{PinPolicy, ProviderConfig};
    use crate::latency::LatencyModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_workload_shape() {
        let w = AuditWorkload::reference().unwrap();
        assert_eq!(
            w.shape(),
            WorkloadShape {
                txs: 10,
                events: 15,
                blocks: 10
            }
        );
    }

    #[test]
    fn cold_cache_waves() {
        let w = AuditWorkload::reference().unwrap();
        let mut rpc = RpcSession::new(RpcModel::constant(265.0, 8), 0);
        let mut cache = CacheState::new();
        let (trail, b) = reconstruct(&w.product_id, &w.ledger, &mut rpc, &mut cache).unwrap();
        assert_eq!(b.t_receipts, 530.0);
        assert_eq!(b.t_timestamps, 530.0);
        assert_eq!(
            b.total,
            b.t_receipts + b.t_decode + b.t_sort + b.t_timestamps
        );
        assert_eq!(trail.records.len(), 15);
        assert!(trail.is_complete());
        assert_eq!(cache.receipt_count(), 10);
        assert_eq!(cache.timestamp_count(), 10);
        assert_eq!(rpc.meter.calls, 20);
    }

    #[test]
    fn warm_cache_is_free() {
        let w = AuditWorkload::reference().unwrap();
        let mut rpc = RpcSession::new(RpcModel::constant(265.0, 8), 0);
        let mut cache = CacheState::prefilled(&w.ledger, &w.product_id).unwrap();
        let (_, b) = reconstruct(&w.product_id, &w.ledger, &mut rpc, &mut cache).unwrap();
        assert_eq!(b.t_receipts + b.t_timestamps, 0.0);
        assert_eq!(rpc.meter.calls, 0);
    }

    #[test]
    fn single_tx_product_one_wave() {
        let w = AuditWorkload::build(ChainConfig::default(), &[]).unwrap();
        let mut rpc = RpcSession::new(RpcModel::constant(100.0, 8), 0);
        let (trail, b) =
            reconstruct(&w.product_id, &w.ledger, &mut rpc, &mut CacheState::new()).unwrap();
        assert_eq!(trail.tx_count, 6);
        assert_eq!((b.t_receipts, b.t_timestamps), (100.0, 100.0));
    }

    #[test]
    fn unknown_product() {
        let w = AuditWorkload::reference().unwrap();
        let mut rpc = RpcSession::new(RpcModel::default(), 0);
        let err = reconstruct(&"nope".into(), &w.ledger, &mut rpc, &mut CacheState::new());
        assert!(matches!(err, Err(AuditError::UnknownProduct(_))));
    }

    #[test]
    fn records_sorted_and_repeatable() {
        let w = AuditWorkload::reference().unwrap();
        let mut rpc = RpcSession::new(RpcModel::default(), 3);
        let (a, _) =
            reconstruct(&w.product_id, &w.ledger, &mut rpc, &mut CacheState::new()).unwrap();
        let (b, _) =
            reconstruct(&w.product_id, &w.ledger, &mut rpc, &mut CacheState::new()).unwrap();
        assert_eq!(a, b);
        assert!(a
            .records
            .windows(2)
            .all(|p| p[0].position() < p[1].position()));
    }

    fn zero_latency_store() -> EvidenceStore {
        EvidenceStore::new([ProviderConfig {
            id: "p0".into(),
            availability: 1.0,
            fetch_latency: LatencyModel::ZERO,
            upload_latency: LatencyModel::ZERO,
        }])
        .unwrap()
    }

    #[test]
    fn verify_counts_missing_objects_as_unfetched() {
        let w = AuditWorkload::reference().unwrap();
        let mut rpc = RpcSession::new(RpcModel::default(), 0);
        let (trail, _) =
            reconstruct(&w.product_id, &w.ledger, &mut rpc, &mut CacheState::new()).unwrap();
        let store = zero_latency_store();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = verify_evidence(&trail, &store, &mut rng);
        assert_eq!((v.n, v.fetched, v.matched), (9, 0, 0));
        assert_eq!(v.retrievability, Some(0.0));
        assert_eq!(v.match_rate, None);
    }

    #[test]
    fn verify_detects_tamper() {
        let mut store = zero_latency_store();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ledger = Ledger::new(ChainConfig::default(), SuiteConfig::default()).unwrap();
        ledger
            .submit(
                "admin".into(),
                ContractCall::RegisterActor {
                    address: "p".into(),
                    role: Role::Producer,
                },
            )
            .unwrap();
        ledger.advance_block();
        let cids: Vec<Cid> = (0..3)
            .map(|i| {
                store
                    .put(
                        format!("doc {i}").as_bytes(),
                        PinPolicy::default(),
                        &mut rng,
                    )
                    .unwrap()
                    .cid
            })
            .collect();
        ledger
            .submit(
                "p".into(),
                ContractCall::AnchorStep {
                    product_id: "X".into(),
                    step: LifecycleStep::Produced,
                    evidence: cids.clone(),
                },
            )
            .unwrap();
        ledger.advance_block();
        store.tamper(&cids[1], |b| b.push(0));
        let mut session = RpcSession::new(RpcModel::default(), 0);
        let (trail, _) =
            reconstruct(&"X".into(), &ledger, &mut session, &mut CacheState::new()).unwrap();
        let v = verify_evidence(&trail, &store, &mut rng);
        assert_eq!((v.n, v.fetched, v.matched), (3, 3, 2));
        assert!(!v.checks[1].matched);
        assert_eq!(v.verifiability, Some(2.0 / 3.0));
    }

    #[test]
    fn empty_trail_has_null_rates() {
        let trail = AuditTrail {
            product_id: "E".into(),
            records: Vec::new(),
            tx_count: 0,
            block_count: 0,
        };
        let store = EvidenceStore::new([ProviderConfig::reference("p0")]).unwrap();
        let v = verify_evidence(&trail, &store, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(v.n, 0);
        assert_eq!(
            (v.retrievability, v.match_rate, v.verifiability),
            (None, None, None)
        );
    }

    #[test]
    fn benchmark_counts_and_zero_rtt() {
        let w = AuditWorkload::reference().unwrap();
        let bench = run_aql_benchmark(&w, RpcModel::constant(0.0, 8), 30, 3, 9).unwrap();
        for r in &bench.regimes {
            assert_eq!(r.runs.len(), 30);
            assert_eq!(r.t_receipts.n, 30);
        }
        let cached = bench.regime(CacheRegime::Cached).unwrap();
        for b in &cached.runs {
            assert_eq!(b.total, b.t_decode + b.t_sort);
        }
    }
}

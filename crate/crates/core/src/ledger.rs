//! Deterministic simulated Layer-2 chain.
//!
//! Transactions queue FIFO and are sealed into blocks at a fixed interval of
//! simulated time. Gas is linear in the number of commitments a call carries.
//! A transaction submitted while block `n` is the head lands in block `n + 1`,
//! one block interval later, unless the block runs out of gas first.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{ContractCall, ContractSuite, Event, RevertReason, SuiteConfig};
use crate::ids::{Address, ProductId, TxId};
use crate::rpc::RpcSession;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Seconds between sealed blocks.
    pub block_interval: f64,
    pub per_tx_gas_cap: u64,
    pub block_gas_limit: u64,
    pub gas_per_commitment: u64,
    /// Gwei; only consumed by cost reporting.
    pub base_gas_price: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            block_interval: 2.0,
            per_tx_gas_cap: 64_250_000,
            block_gas_limit: 176_000_000,
            gas_per_commitment: 62_841,
            base_gas_price: 1.0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), LedgerError> {
        let bad = |m: &str| Err(LedgerError::InvalidConfig(m.to_string()));
        if !(self.block_interval > 0.0) {
            return bad("block_interval must be > 0");
        }
        if self.per_tx_gas_cap == 0 || self.block_gas_limit == 0 || self.gas_per_commitment == 0 {
            return bad("gas parameters must be > 0");
        }
        if !(self.base_gas_price > 0.0) {
            return bad("base_gas_price must be > 0");
        }
        if self.per_tx_gas_cap > self.block_gas_limit {
            return bad("per_tx_gas_cap exceeds block_gas_limit");
        }
        Ok(())
    }

    pub fn gas_of_batch(&self, n: u64) -> Result<u64, LedgerError> {
        if n == 0 {
            return Err(LedgerError::EmptyBatch);
        }
        Ok(n.saturating_mul(self.gas_per_commitment))
    }

    /// Largest batch the per-transaction cap admits.
    pub fn max_batch(&self) -> u64 {
        self.per_tx_gas_cap / self.gas_per_commitment
    }

    /// Commitments per second when every block is filled to its gas limit.
    pub fn throughput_ceiling(&self) -> f64 {
        (self.block_gas_limit / self.gas_per_commitment) as f64 / self.block_interval
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("gas estimate {gas} exceeds per-transaction cap {cap}")]
    GasCapExceeded { gas: u64, cap: u64 },
    #[error("batch carries no commitments")]
    EmptyBatch,
    #[error("not found")]
    NotFound,
    #[error("invalid chain config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingTx {
    pub tx_id: TxId,
    pub sender: Address,
    pub call: ContractCall,
    pub gas_estimate: u64,
    pub submit_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SealedBlock {
    pub number: u64,
    pub timestamp: f64,
    pub tx_ids: Vec<TxId>,
    pub gas_used: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxStatus {
    Success,
    Reverted(RevertReason),
}

/// One emitted log. Serializes flat: position fields plus `topic` and `payload`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    #[serde(flatten)]
    pub event: Event,
    pub block_number: u64,
    pub tx_index: u32,
    pub log_index: u32,
    pub timestamp: f64,
}

impl LogRecord {
    pub fn position(&self) -> (u64, u32, u32) {
        (self.block_number, self.tx_index, self.log_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxReceipt {
    pub tx_id: TxId,
    pub status: TxStatus,
    pub block_number: u64,
    pub tx_index: u32,
    pub gas_used: u64,
    pub submit_time: f64,
    pub logs: Vec<LogRecord>,
}

impl TxReceipt {
    pub fn is_success(&self) -> bool {
        self.status == TxStatus::Success
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    config: ChainConfig,
    suite: ContractSuite,
    pending: VecDeque<PendingTx>,
    blocks: Vec<SealedBlock>,
    receipts: BTreeMap<TxId, TxReceipt>,
    next_tx: u64,
}

impl Ledger {
    /// New chain with an empty genesis block 0 at `t = 0`.
    pub fn new(config: ChainConfig, suite: SuiteConfig) -> Result<Self, LedgerError> {
        config.validate()?;
        Ok(Ledger {
            config,
            suite: ContractSuite::new(suite),
            pending: VecDeque::new(),
            blocks: vec![SealedBlock {
                number: 0,
                timestamp: 0.0,
                tx_ids: Vec::new(),
                gas_used: 0,
            }],
            receipts: BTreeMap::new(),
            next_tx: 0,
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn contracts(&self) -> &ContractSuite {
        &self.suite
    }

    /// Replaces chain parameters for blocks sealed from now on. Queued
    /// transactions keep their admission-time gas estimates.
    pub fn reconfigure(&mut self, config: ChainConfig) -> Result<(), LedgerError> {
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Mutable access to contract configuration knobs (not state).
    pub fn set_certification_gate(&mut self, on: bool) {
        self.suite.set_certification_gate(on);
    }

    pub fn head(&self) -> &SealedBlock {
        self.blocks.last().expect("genesis block always present")
    }

    pub fn now(&self) -> f64 {
        self.head().timestamp
    }

    pub fn blocks(&self) -> &[SealedBlock] {
        &self.blocks
    }

    /// Every log in emission order: block, then transaction, then log index.
    pub fn logs(&self) -> impl Iterator<Item = &LogRecord> {
        self.blocks
            .iter()
            .flat_map(|b| b.tx_ids.iter())
            .flat_map(|id| self.receipts[id].logs.iter())
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingTx> {
        self.pending.iter()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn estimate_gas(&self, call: &ContractCall) -> Result<u64, LedgerError> {
        self.config.gas_of_batch(call.commitment_units())
    }

    /// Queues `call` from `sender` at the current chain time.
    pub fn submit(&mut self, sender: Address, call: ContractCall) -> Result<TxId, LedgerError> {
        let gas = self.estimate_gas(&call)?;
        self.submit_transaction(PendingTx {
            tx_id: TxId(self.next_tx),
            sender,
            call,
            gas_estimate: gas,
            submit_time: self.now(),
        })
    }

    /// Queues a prepared transaction. The ledger owns id assignment: the
    /// incoming `tx_id` is replaced with the next free identifier.
    pub fn submit_transaction(&mut self, mut tx: PendingTx) -> Result<TxId, LedgerError> {
        if tx.call.commitment_units() == 0 {
            return Err(LedgerError::EmptyBatch);
        }
        if tx.gas_estimate > self.config.per_tx_gas_cap {
            return Err(LedgerError::GasCapExceeded {
                gas: tx.gas_estimate,
                cap: self.config.per_tx_gas_cap,
            });
        }
        tx.tx_id = TxId(self.next_tx);
        self.next_tx += 1;
        let id = tx.tx_id;
        self.pending.push_back(tx);
        Ok(id)
    }

    /// Seals the next block: dequeue FIFO while the block gas limit allows,
    /// execute each call, and record receipts and logs.
    pub fn advance_block(&mut self) -> &SealedBlock {
        let number = self.head().number + 1;
        let timestamp = self.head().timestamp + self.config.block_interval;
        let mut gas_used = 0u64;
        let mut tx_ids = Vec::new();
        let mut log_index = 0u32;

        while let Some(front) = self.pending.front() {
            if gas_used + front.gas_estimate > self.config.block_gas_limit {
                break;
            }
            let tx = self.pending.pop_front().expect("front exists");
            let tx_index = tx_ids.len() as u32;
            let (status, logs) = match self.suite.execute(&tx.sender, tx.tx_id, &tx.call) {
                Ok(events) => {
                    let logs: Vec<LogRecord> = events
                        .into_iter()
                        .map(|event| {
                            let rec = LogRecord {
                                event,
                                block_number: number,
                                tx_index,
                                log_index,
                                timestamp,
                            };
                            log_index += 1;
                            rec
                        })
                        .collect();
                    (TxStatus::Success, logs)
                }
                Err(reason) => (TxStatus::Reverted(reason), Vec::new()),
            };
            gas_used += tx.gas_estimate;
            self.receipts.insert(
                tx.tx_id,
                TxReceipt {
                    tx_id: tx.tx_id,
                    status,
                    block_number: number,
                    tx_index,
                    gas_used: tx.gas_estimate,
                    submit_time: tx.submit_time,
                    logs,
                },
            );
            tx_ids.push(tx.tx_id);
        }

        self.blocks.push(SealedBlock {
            number,
            timestamp,
            tx_ids,
            gas_used,
        });
        self.head()
    }

    /// Seals blocks until the pending queue is empty. Returns the number sealed.
    pub fn drain(&mut self) -> usize {
        let mut n = 0;
        while !self.pending.is_empty() {
            self.advance_block();
            n += 1;
        }
        n
    }

    pub fn get_receipt(
        &self,
        tx_id: TxId,
        rpc: Option<&mut RpcSession>,
    ) -> Result<&TxReceipt, LedgerError> {
        if let Some(rpc) = rpc {
            rpc.call();
        }
        self.receipts.get(&tx_id).ok_or(LedgerError::NotFound)
    }

    pub fn get_block_timestamp(
        &self,
        block_number: u64,
        rpc: Option<&mut RpcSession>,
    ) -> Result<f64, LedgerError> {
        if let Some(rpc) = rpc {
            rpc.call();
        }
        self.blocks
            .get(block_number as usize)
            .map(|b| b.timestamp)
            .ok_or(LedgerError::NotFound)
    }

    /// Transactions whose successful logs mention `product_id`, in inclusion
    /// order. Plays the role of an event index; costs no RPC.
    pub fn product_tx_ids(&self, product_id: &ProductId) -> Vec<TxId> {
        self.blocks
            .iter()
            .flat_map(|b| b.tx_ids.iter())
            .filter(|id| {
                self.receipts[id]
                    .logs
                    .iter()
                    .any(|l| l.event.product_id() == Some(product_id))
            })
            .copied()
            .collect()
    }

    /// One JSON object per log line, in emission order.
    pub fn export_logs_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for log in self.logs() {
            serde_json::to_writer(&mut out, log)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{CidCommitment, LifecycleStep, Role};
    use crate::evidence::compute_cid;

    fn ledger() -> Ledger {
        let mut l = Ledger::new(ChainConfig::default(), SuiteConfig::default()).unwrap();
        l.submit(
            "admin".into(),
            ContractCall::RegisterActor {
                address: "p1".into(),
                role: Role::Producer,
            },
        )
        .unwrap();
        l.advance_block();
        l
    }

    fn batch(n: usize) -> ContractCall {
        let cid = compute_cid(b"probe");
        ContractCall::SubmitCidBatch {
            commitments: (0..n)
                .map(|_| CidCommitment {
                    product_id: "B1".into(),
                    step: LifecycleStep::Produced,
                    cid,
                })
                .collect(),
        }
    }

    #[test]
    fn gas_of_batch_cases() {
        let c = ChainConfig::default();
        assert_eq!(c.gas_of_batch(1), Ok(62_841));
        assert_eq!(c.gas_of_batch(13), Ok(816_933));
        assert_eq!(c.gas_of_batch(1_022), Ok(64_223_502));
        assert_eq!(c.gas_of_batch(0), Err(LedgerError::EmptyBatch));
    }

    #[test]
    fn calibration_constants() {
        let c = ChainConfig::default();
        assert_eq!(c.max_batch(), 1_022);
        assert_eq!(c.throughput_ceiling(), 1_400.0);
    }

    #[test]
    fn config_validation() {
        let mut c = ChainConfig::default();
        c.per_tx_gas_cap = c.block_gas_limit + 1;
        assert!(c.validate().is_err());
        let c = ChainConfig {
            block_interval: 0.0,
            ..ChainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn submission_gas_boundary() {
        let mut l = ledger();
        assert!(l.submit("p1".into(), batch(1_022)).is_ok());
        assert_eq!(
            l.submit("p1".into(), batch(1_023)),
            Err(LedgerError::GasCapExceeded {
                gas: 64_286_343,
                cap: 64_250_000
            })
        );
        assert_eq!(
            l.submit("p1".into(), batch(0)),
            Err(LedgerError::EmptyBatch)
        );
    }

    #[test]
    fn three_single_commitments_one_block() {
        let mut l = ledger();
        let ids: Vec<_> = (0..3)
            .map(|_| l.submit("p1".into(), batch(1)).unwrap())
            .collect();
        let block = l.advance_block().clone();
        assert_eq!(block.gas_used, 188_523);
        assert_eq!(block.tx_ids, ids);
        for (i, id) in ids.iter().enumerate() {
            assert_eq!(l.get_receipt(*id, None).unwrap().tx_index, i as u32);
        }
    }

    #[test]
    fn empty_block_is_valid() {
        let mut l = ledger();
        let before = l.now();
        let b = l.advance_block();
        assert_eq!(b.gas_used, 0);
        assert!(b.tx_ids.is_empty());
        assert_eq!(b.timestamp, before + 2.0);
    }

    #[test]
    fn greedy_fifo_packing_defers_overflow() {
        let mut l = ledger();
        let ids: Vec<_> = (0..4)
            .map(|_| l.submit("p1".into(), batch(1_022)).unwrap())
            .collect();
        let b = l.advance_block().clone();
        assert_eq!(b.tx_ids, ids[..2]);
        assert_eq!(b.gas_used, 128_447_004);
        assert_eq!(l.pending_len(), 2);
        let b2 = l.advance_block().clone();
        assert_eq!(b2.tx_ids, ids[2..]);
    }

    #[test]
    fn receipts_and_timestamps() {
        let mut l = ledger();
        let id = l.submit("p1".into(), batch(1)).unwrap();
        assert_eq!(l.get_receipt(id, None), Err(LedgerError::NotFound));
        l.advance_block();
        assert_eq!(l.get_receipt(id, None).unwrap().block_number, 2);
        for _ in 0..3 {
            l.advance_block();
        }
        assert_eq!(l.get_block_timestamp(5, None), Ok(10.0));
        assert_eq!(l.get_block_timestamp(6, None), Err(LedgerError::NotFound));
    }

    #[test]
    fn rpc_charge_per_call() {
        use crate::rpc::{RpcModel, RpcSession};
        let mut l = ledger();
        let id = l.submit("p1".into(), batch(1)).unwrap();
        l.advance_block();
        let mut rpc = RpcSession::new(RpcModel::constant(50.0, 8), 0);
        l.get_receipt(id, Some(&mut rpc)).unwrap();
        assert_eq!(rpc.meter.total_ms, 50.0);
        l.get_block_timestamp(1, Some(&mut rpc)).unwrap();
        assert_eq!(rpc.meter.calls, 2);
    }

    #[test]
    fn reverted_tx_has_gas_no_logs() {
        let mut l = ledger();
        let id = l.submit("stranger".into(), batch(2)).unwrap();
        l.advance_block();
        let r = l.get_receipt(id, None).unwrap();
        assert_eq!(r.status, TxStatus::Reverted(RevertReason::Unauthorised));
        assert_eq!(r.gas_used, 125_682);
        assert!(r.logs.is_empty());
    }

    #[test]
    fn inclusion_one_interval_after_submission() {
        let mut l = ledger();
        let id = l.submit("p1".into(), batch(5)).unwrap();
        l.advance_block();
        let r = l.get_receipt(id, None).unwrap();
        let ts = l.get_block_timestamp(r.block_number, None).unwrap();
        assert_eq!(ts - r.submit_time, 2.0);
    }

    #[test]
    fn jsonl_export_one_line_per_log() {
        let mut l = ledger();
        l.submit("p1".into(), batch(3)).unwrap();
        l.advance_block();
        let mut buf = Vec::new();
        l.export_logs_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), l.logs().count());
        let v: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
        for key in [
            "topic",
            "payload",
            "block_number",
            "tx_index",
            "log_index",
            "timestamp",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: LogRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(&back, l.logs().next().unwrap());
    }
}

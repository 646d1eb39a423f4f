//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::collections::BTreeSet;

use provchain::auditor::AuditRecord;
use provchain::contracts::{
    ActorStatus, CidCommitment, ContractCall, LifecycleStep, Role, SuiteConfig, Verdict,
};
use provchain::evidence::compute_cid;
use provchain::ids::{Address, DocId, ProductId};
use provchain::ledger::{ChainConfig, Ledger};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROSTER: [(&str, Role); 7] = [
    ("producer", Role::Producer),
    ("producer-2", Role::Producer),
    ("processor", Role::Processor),
    ("retailer", Role::Retailer),
    ("certifier", Role::Certifier),
    ("regulator", Role::Regulator),
    ("consumer", Role::Consumer),
];

pub const OUTSIDER: &str = "outsider";

pub fn products(n: usize) -> Vec<ProductId> {
    (0..n)
        .map(|i| ProductId::new(format!("product-{i}")))
        .collect()
}

fn actor_for(role: Role) -> Address {
    let (name, _) = ROSTER
        .iter()
        .find(|(_, r)| *r == role)
        .expect("roster covers every role");
    Address::new(name)
}

/// A chain with several products written by a mix of valid and invalid
/// calls: correct next steps, out-of-order and duplicate steps, wrong roles,
/// outsiders, suspensions, evidence batches, documents and attestations,
/// several transactions per block.
pub fn random_chain(seed: u64) -> (Ledger, Vec<ProductId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = Ledger::new(ChainConfig::default(), SuiteConfig::default()).unwrap();
    let admin = ledger.contracts().config().admin.clone();
    for (name, role) in ROSTER {
        ledger
            .submit(
                admin.clone(),
                ContractCall::RegisterActor {
                    address: name.into(),
                    role,
                },
            )
            .unwrap();
    }
    ledger.advance_block();

    let products = products(rng.random_range(2..=4));
    let senders: Vec<Address> = ROSTER
        .iter()
        .map(|(n, _)| Address::new(n))
        .chain([Address::new(OUTSIDER)])
        .collect();
    let blocks = rng.random_range(5..=25);
    let mut cid_seq = 0u64;
    let mut next_cid = || {
        cid_seq += 1;
        compute_cid(format!("{seed}/{cid_seq}").as_bytes())
    };
    for _ in 0..blocks {
        for _ in 0..rng.random_range(1..=4) {
            let product = products.choose(&mut rng).unwrap().clone();
            let step = *LifecycleStep::ALL.choose(&mut rng).unwrap();
            let roll: f64 = rng.random();
            let (sender, call) = if roll < 0.45 {
                let step = match ledger.contracts().product(&product) {
                    None => Some(LifecycleStep::Produced),
                    Some(rec) => rec.history.last().and_then(|e| e.step.next()),
                }
                .unwrap_or(step);
                let evidence = (0..rng.random_range(0..=3)).map(|_| next_cid()).collect();
                (
                    actor_for(step.authorized_role()),
                    ContractCall::AnchorStep {
                        product_id: product,
                        step,
                        evidence,
                    },
                )
            } else if roll < 0.6 {
                (
                    senders.choose(&mut rng).unwrap().clone(),
                    ContractCall::AnchorStep {
                        product_id: product,
                        step,
                        evidence: vec![],
                    },
                )
            } else if roll < 0.72 {
                let commitments = (0..rng.random_range(1..=5))
                    .map(|_| CidCommitment {
                        product_id: product.clone(),
                        step,
                        cid: next_cid(),
                    })
                    .collect();
                (
                    senders.choose(&mut rng).unwrap().clone(),
                    ContractCall::SubmitCidBatch { commitments },
                )
            } else if roll < 0.82 {
                let verdict = if rng.random_bool(0.8) {
                    Verdict::Approve
                } else {
                    Verdict::Reject
                };
                (
                    senders.choose(&mut rng).unwrap().clone(),
                    ContractCall::Attest {
                        product_id: product,
                        step,
                        verdict,
                        evidence_cid: None,
                    },
                )
            } else if roll < 0.9 {
                (
                    senders.choose(&mut rng).unwrap().clone(),
                    ContractCall::RegisterDocument {
                        doc_id: DocId::new("certificate"),
                        cid: next_cid(),
                    },
                )
            } else if roll < 0.95 {
                let (name, _) = ROSTER.choose(&mut rng).unwrap();
                let status = if rng.random_bool(0.5) {
                    ActorStatus::Suspended
                } else {
                    ActorStatus::Active
                };
                (
                    admin.clone(),
                    ContractCall::SetActorStatus {
                        address: Address::new(name),
                        status,
                    },
                )
            } else {
                (
                    senders.choose(&mut rng).unwrap().clone(),
                    ContractCall::RoutePayment {
                        product_id: product,
                        amount_cents: 100,
                    },
                )
            };
            ledger.submit(sender, call).unwrap();
        }
        ledger.advance_block();
    }
    (ledger, products)
}

/// Reference trail: scan every log on chain, keep the product's, order by
/// position and join block timestamps.
pub fn brute_force_trail(ledger: &Ledger, product: &ProductId) -> Vec<AuditRecord> {
    let mut records: Vec<AuditRecord> = Vec::new();
    for block in ledger.blocks() {
        for id in &block.tx_ids {
            let receipt = ledger.get_receipt(*id, None).unwrap();
            for log in &receipt.logs {
                if log.event.product_id() == Some(product) {
                    records.push(AuditRecord {
                        event: log.event.clone(),
                        block_number: log.block_number,
                        tx_index: log.tx_index,
                        log_index: log.log_index,
                        timestamp: block.timestamp,
                        actor: log.event.actor().clone(),
                    });
                }
            }
        }
    }
    records.sort_by_key(|r| (r.block_number, r.tx_index, r.log_index));
    records
}

/// Distinct transactions and blocks among `records`.
pub fn tx_and_block_counts(records: &[AuditRecord]) -> (usize, usize) {
    let txs: BTreeSet<(u64, u32)> = records
        .iter()
        .map(|r| (r.block_number, r.tx_index))
        .collect();
    let blocks: BTreeSet<u64> = records.iter().map(|r| r.block_number).collect();
    (txs.len(), blocks.len())
}

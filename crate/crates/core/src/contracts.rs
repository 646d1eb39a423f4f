//! Contract suite executed by the simulated ledger.
//!
//! `ActorRegistry`, `ProcessManager`, `CidRollup`, `DocumentRegistry` and a
//! no-op `PaymentRouter` share one state object. Every call is validated in
//! full before any field is written, so a reverted call leaves the state
//! untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::Cid;
use crate::ids::{Address, DocId, ProductId, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Producer,
    Processor,
    Retailer,
    Certifier,
    Regulator,
    Consumer,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Producer,
        Role::Processor,
        Role::Retailer,
        Role::Certifier,
        Role::Regulator,
        Role::Consumer,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActorStatus {
    Active,
    Suspended,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorRecord {
    pub address: Address,
    pub role: Role,
    pub status: ActorStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LifecycleStep {
    Produced = 0,
    Processed = 1,
    Shipped = 2,
    Received = 3,
    AtRetail = 4,
    Sold = 5,
}

impl LifecycleStep {
    pub const ALL: [LifecycleStep; 6] = [
        LifecycleStep::Produced,
        LifecycleStep::Processed,
        LifecycleStep::Shipped,
        LifecycleStep::Received,
        LifecycleStep::AtRetail,
        LifecycleStep::Sold,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(n: u8) -> Option<Self> {
        Self::ALL.get(n as usize).copied()
    }

    pub fn next(self) -> Option<Self> {
        Self::from_ordinal(self.ordinal() + 1)
    }

    /// The only role allowed to anchor this step.
    pub fn authorized_role(self) -> Role {
        match self {
            LifecycleStep::Produced => Role::Producer,
            LifecycleStep::Processed | LifecycleStep::Shipped => Role::Processor,
            LifecycleStep::Received | LifecycleStep::AtRetail | LifecycleStep::Sold => {
                Role::Retailer
            }
        }
    }
}

impl fmt::Display for LifecycleStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepProgress {
    Next(LifecycleStep),
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: LifecycleStep,
    pub actor: Address,
    pub tx_id: TxId,
    pub evidence: Vec<Cid>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub product_id: ProductId,
    pub history: Vec<HistoryEntry>,
}

impl ProductRecord {
    pub fn next_step(&self) -> StepProgress {
        match self.history.last() {
            None => StepProgress::Next(LifecycleStep::Produced),
            Some(e) => e
                .step
                .next()
                .map_or(StepProgress::Complete, StepProgress::Next),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StepKey {
    pub product_id: ProductId,
    pub step: LifecycleStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attestation {
    pub product_id: ProductId,
    pub step: LifecycleStep,
    pub verdict: Verdict,
    pub certifier: Address,
    pub evidence_cid: Option<Cid>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CidCommitment {
    pub product_id: ProductId,
    pub step: LifecycleStep,
    pub cid: Cid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceCommitment {
    pub product_id: ProductId,
    pub step: LifecycleStep,
    pub cid: Cid,
    pub submitter: Address,
    pub tx_id: TxId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentVersion {
    pub version: u32,
    pub cid: Cid,
    pub registrant: Address,
    pub tx_id: TxId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContractCall {
    RegisterActor {
        address: Address,
        role: Role,
    },
    SetActorStatus {
        address: Address,
        status: ActorStatus,
    },
    AnchorStep {
        product_id: ProductId,
        step: LifecycleStep,
        evidence: Vec<Cid>,
    },
    SubmitCidBatch {
        commitments: Vec<CidCommitment>,
    },
    RegisterDocument {
        doc_id: DocId,
        cid: Cid,
    },
    Attest {
        product_id: ProductId,
        step: LifecycleStep,
        verdict: Verdict,
        evidence_cid: Option<Cid>,
    },
    /// Settlement stub: accepted, no state change, no logs.
    RoutePayment {
        product_id: ProductId,
        amount_cents: u64,
    },
}

impl ContractCall {
    /// Commitment-equivalents charged for this call. A step anchor costs one
    /// commitment plus one per attached evidence CID; every other call costs one.
    pub fn commitment_units(&self) -> u64 {
        match self {
            ContractCall::AnchorStep { evidence, .. } => 1 + evidence.len() as u64,
            ContractCall::SubmitCidBatch { commitments } => commitments.len() as u64,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
pub enum RevertReason {
    #[error("caller is not the registry admin")]
    NotAdmin,
    #[error("address already registered")]
    AlreadyRegistered,
    #[error("unknown actor")]
    UnknownActor,
    #[error("caller is not a registered actor")]
    Unauthorised,
    #[error("caller is suspended or revoked")]
    ActorInactive,
    #[error("caller role may not perform this action")]
    WrongRole,
    #[error("step is not the product's next lifecycle step")]
    OutOfOrder,
    #[error("step already anchored for this product")]
    DuplicateStep,
    #[error("certification gate not satisfied")]
    GateNotSatisfied,
}

/// Emitted event. Serializes as `{"topic": ..., "payload": {...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "topic", content = "payload")]
pub enum Event {
    RegisteredActor {
        address: Address,
        role: Role,
        admin: Address,
    },
    StatusChanged {
        address: Address,
        status: ActorStatus,
    },
    StepAnchored {
        product_id: ProductId,
        step: LifecycleStep,
        actor: Address,
    },
    EvidenceAnchored {
        product_id: ProductId,
        step: LifecycleStep,
        cid: Cid,
        submitter: Address,
    },
    DocumentRegistered {
        doc_id: DocId,
        cid: Cid,
        version: u32,
        registrant: Address,
    },
    Attestation {
        product_id: ProductId,
        step: LifecycleStep,
        verdict: Verdict,
        certifier: Address,
        evidence_cid: Option<Cid>,
    },
}

impl Event {
    pub fn topic(&self) -> &'static str {
        match self {
            Event::RegisteredActor { .. } => "RegisteredActor",
            Event::StatusChanged { .. } => "StatusChanged",
            Event::StepAnchored { .. } => "StepAnchored",
            Event::EvidenceAnchored { .. } => "EvidenceAnchored",
            Event::DocumentRegistered { .. } => "DocumentRegistered",
            Event::Attestation { .. } => "Attestation",
        }
    }

    pub fn product_id(&self) -> Option<&ProductId> {
        match self {
            Event::StepAnchored { product_id, .. }
            | Event::EvidenceAnchored { product_id, .. }
            | Event::Attestation { product_id, .. } => Some(product_id),
            _ => None,
        }
    }

    /// The account the event is attributed to.
    pub fn actor(&self) -> &Address {
        match self {
            Event::RegisteredActor { admin, .. } => admin,
            Event::StatusChanged { address, .. } => address,
            Event::StepAnchored { actor, .. } => actor,
            Event::EvidenceAnchored { submitter, .. } => submitter,
            Event::DocumentRegistered { registrant, .. } => registrant,
            Event::Attestation { certifier, .. } => certifier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub admin: Address,
    /// Require an approving attestation on `AtRetail` before `Sold` may be anchored.
    #[serde(default)]
    pub certification_gate: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            admin: Address::new("admin"),
            certification_gate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReadError {
    #[error("unknown product {0}")]
    UnknownProduct(ProductId),
}

/// Read-only view of one product's provenance chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductTrace {
    pub product_id: ProductId,
    pub entries: Vec<HistoryEntry>,
    pub attestations: Vec<Attestation>,
    pub next: StepProgress,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContractSuite {
    config: SuiteConfig,
    actors: BTreeMap<Address, ActorRecord>,
    products: BTreeMap<ProductId, ProductRecord>,
    used_step_keys: BTreeSet<StepKey>,
    rollup: Vec<EvidenceCommitment>,
    documents: BTreeMap<DocId, Vec<DocumentVersion>>,
    attestations: BTreeMap<ProductId, Vec<Attestation>>,
}

impl ContractSuite {
    pub fn new(config: SuiteConfig) -> Self {
        ContractSuite {
            config,
            ..Default::default()
        }
    }

    pub fn config(&self) -> &SuiteConfig {
        &self.config
    }

    pub fn set_certification_gate(&mut self, on: bool) {
        self.config.certification_gate = on;
    }

    pub fn actor(&self, address: &Address) -> Option<&ActorRecord> {
        self.actors.get(address)
    }

    pub fn product(&self, id: &ProductId) -> Option<&ProductRecord> {
        self.products.get(id)
    }

    pub fn is_step_used(&self, product_id: &ProductId, step: LifecycleStep) -> bool {
        self.used_step_keys.contains(&StepKey {
            product_id: product_id.clone(),
            step,
        })
    }

    pub fn rollup(&self) -> &[EvidenceCommitment] {
        &self.rollup
    }

    pub fn document_versions(&self, doc_id: &DocId) -> &[DocumentVersion] {
        self.documents.get(doc_id).map_or(&[], Vec::as_slice)
    }

    pub fn product_trace(&self, id: &ProductId) -> Result<ProductTrace, ReadError> {
        let record = self
            .products
            .get(id)
            .ok_or_else(|| ReadError::UnknownProduct(id.clone()))?;
        Ok(ProductTrace {
            product_id: id.clone(),
            entries: record.history.clone(),
            attestations: self.attestations.get(id).cloned().unwrap_or_default(),
            next: record.next_step(),
        })
    }

    fn active_actor(&self, sender: &Address) -> Result<&ActorRecord, RevertReason> {
        let record = self.actors.get(sender).ok_or(RevertReason::Unauthorised)?;
        if record.status != ActorStatus::Active {
            return Err(RevertReason::ActorInactive);
        }
        Ok(record)
    }

    fn require_admin(&self, sender: &Address) -> Result<(), RevertReason> {
        if *sender == self.config.admin {
            Ok(())
        } else {
            Err(RevertReason::NotAdmin)
        }
    }

    fn gate_satisfied(&self, product_id: &ProductId) -> bool {
        self.attestations
            .get(product_id)
            .and_then(|atts| {
                atts.iter()
                    .rev()
                    .find(|a| a.step == LifecycleStep::AtRetail)
            })
            .is_some_and(|a| a.verdict == Verdict::Approve)
    }

    /// Executes one call on behalf of `sender`. On `Err` the state is unchanged.
    pub fn execute(
        &mut self,
        sender: &Address,
        tx_id: TxId,
        call: &ContractCall,
    ) -> Result<Vec<Event>, RevertReason> {
        match call {
            ContractCall::RegisterActor { address, role } => {
                self.require_admin(sender)?;
                if self.actors.contains_key(address) {
                    return Err(RevertReason::AlreadyRegistered);
                }
                self.actors.insert(
                    address.clone(),
                    ActorRecord {
                        address: address.clone(),
                        role: *role,
                        status: ActorStatus::Active,
                    },
                );
                Ok(vec![Event::RegisteredActor {
                    address: address.clone(),
                    role: *role,
                    admin: sender.clone(),
                }])
            }
            ContractCall::SetActorStatus { address, status } => {
                self.require_admin(sender)?;
                let record = self
                    .actors
                    .get_mut(address)
                    .ok_or(RevertReason::UnknownActor)?;
                record.status = *status;
                Ok(vec![Event::StatusChanged {
                    address: address.clone(),
                    status: *status,
                }])
            }
            ContractCall::AnchorStep {
                product_id,
                step,
                evidence,
            } => {
                let actor = self.active_actor(sender)?;
                if actor.role != step.authorized_role() {
                    return Err(RevertReason::WrongRole);
                }
                if self.is_step_used(product_id, *step) {
                    return Err(RevertReason::DuplicateStep);
                }
                let next = self
                    .products
                    .get(product_id)
                    .map_or(StepProgress::Next(LifecycleStep::Produced), |p| {
                        p.next_step()
                    });
                if next != StepProgress::Next(*step) {
                    return Err(RevertReason::OutOfOrder);
                }
                if *step == LifecycleStep::Sold
                    && self.config.certification_gate
                    && !self.gate_satisfied(product_id)
                {
                    return Err(RevertReason::GateNotSatisfied);
                }

                self.used_step_keys.insert(StepKey {
                    product_id: product_id.clone(),
                    step: *step,
                });
                self.products
                    .entry(product_id.clone())
                    .or_insert_with(|| ProductRecord {
                        product_id: product_id.clone(),
                        history: Vec::new(),
                    })
                    .history
                    .push(HistoryEntry {
                        step: *step,
                        actor: sender.clone(),
                        tx_id,
                        evidence: evidence.clone(),
                    });
                let mut events = Vec::with_capacity(1 + evidence.len());
                events.push(Event::StepAnchored {
                    product_id: product_id.clone(),
                    step: *step,
                    actor: sender.clone(),
                });
                for cid in evidence {
                    self.rollup.push(EvidenceCommitment {
                        product_id: product_id.clone(),
                        step: *step,
                        cid: *cid,
                        submitter: sender.clone(),
                        tx_id,
                    });
                    events.push(Event::EvidenceAnchored {
                        product_id: product_id.clone(),
                        step: *step,
                        cid: *cid,
                        submitter: sender.clone(),
                    });
                }
                Ok(events)
            }
            ContractCall::SubmitCidBatch { commitments } => {
                self.active_actor(sender)?;
                let mut events = Vec::with_capacity(commitments.len());
                for c in commitments {
                    self.rollup.push(EvidenceCommitment {
                        product_id: c.product_id.clone(),
                        step: c.step,
                        cid: c.cid,
                        submitter: sender.clone(),
                        tx_id,
                    });
                    events.push(Event::EvidenceAnchored {
                        product_id: c.product_id.clone(),
                        step: c.step,
                        cid: c.cid,
                        submitter: sender.clone(),
                    });
                }
                Ok(events)
            }
            ContractCall::RegisterDocument { doc_id, cid } => {
                self.active_actor(sender)?;
                let versions = self.documents.entry(doc_id.clone()).or_default();
                let version = versions.len() as u32 + 1;
                versions.push(DocumentVersion {
                    version,
                    cid: *cid,
                    registrant: sender.clone(),
                    tx_id,
                });
                Ok(vec![Event::DocumentRegistered {
                    doc_id: doc_id.clone(),
                    cid: *cid,
                    version,
                    registrant: sender.clone(),
                }])
            }
            ContractCall::Attest {
                product_id,
                step,
                verdict,
                evidence_cid,
            } => {
                let actor = self.active_actor(sender)?;
                if actor.role != Role::Certifier {
                    return Err(RevertReason::WrongRole);
                }
                let att = Attestation {
                    product_id: product_id.clone(),
                    step: *step,
                    verdict: *verdict,
                    certifier: sender.clone(),
                    evidence_cid: *evidence_cid,
                };
                self.attestations
                    .entry(product_id.clone())
                    .or_default()
                    .push(att);
                Ok(vec![Event::Attestation {
                    product_id: product_id.clone(),
                    step: *step,
                    verdict: *verdict,
                    certifier: sender.clone(),
                    evidence_cid: *evidence_cid,
                }])
            }
            ContractCall::RoutePayment { .. } => Ok(Vec::new()),
        }
    }
}

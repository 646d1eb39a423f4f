//! End-to-end coffee batch walk-through, the negative-case suite and the
//! false-event injection experiment.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    core_metrics, detection_prob, AnalyticsError, CoreMetrics, CoreMetricsInput,
};
use crate::auditor::{
    reconstruct, verify_evidence, AqlBreakdown, AuditError, AuditTrail, CacheState,
    EvidenceVerification,
};
use crate::contracts::{
    ActorStatus, ContractCall, ContractSuite, LifecycleStep, ReadError, RevertReason, Role,
    StepProgress, SuiteConfig, Verdict,
};
use crate::evidence::{
    synthetic_payload, EvidenceStore, PinPolicy, ProviderConfig, StoreError, KIB,
};
use crate::ids::{Address, ProductId, TxId};
use crate::ledger::{ChainConfig, Ledger, LedgerError, TxStatus};
use crate::rpc::{RpcModel, RpcSession};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("negative suite deviations: {}", .0.join("; "))]
    SuiteFailure(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    /// Number of false events injected.
    pub events: u64,
    /// Probability the submission gate rejects a false event.
    pub v: f64,
    /// Audit sampling rate for events that pass the gate.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub product_id: ProductId,
    pub roster: BTreeMap<Role, Address>,
    /// Evidence objects per lifecycle step, in step order.
    pub allocation: Vec<usize>,
    pub payload_size: usize,
    pub certification_gate: bool,
    /// Whether the certifier approves the retail step before sale.
    pub certify: bool,
    /// Steps deliberately not anchored.
    pub skip_steps: Vec<LifecycleStep>,
    /// Re-activate the suspended actor before its negative-case write.
    pub reactivate_suspended: bool,
    pub injection: Option<InjectionConfig>,
}

pub const REFERENCE_ALLOCATION: [usize; 6] = [3, 2, 2, 2, 2, 2];

impl Default for ScenarioConfig {
    fn default() -> Self {
        let roster = [
            (Role::Producer, "finca-producer"),
            (Role::Processor, "wet-mill-processor"),
            (Role::Retailer, "roastery-retailer"),
            (Role::Certifier, "fairtrade-certifier"),
            (Role::Regulator, "customs-regulator"),
            (Role::Consumer, "consumer-app"),
        ]
        .into_iter()
        .map(|(r, a)| (r, Address::new(a)))
        .collect();
        ScenarioConfig {
            seed: 42,
            product_id: ProductId::new("coffee-batch-001"),
            roster,
            allocation: REFERENCE_ALLOCATION.to_vec(),
            payload_size: 64 * KIB,
            certification_gate: false,
            certify: true,
            skip_steps: Vec::new(),
            reactivate_suspended: false,
            injection: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        if let Some(role) = Role::ALL.iter().find(|r| !self.roster.contains_key(r)) {
            return bad(format!("roster has no {role:?}"));
        }
        if self.allocation.len() != LifecycleStep::ALL.len() {
            return bad(format!(
                "allocation needs {} entries, got {}",
                LifecycleStep::ALL.len(),
                self.allocation.len()
            ));
        }
        if self.payload_size == 0 {
            return bad("payload_size must be >= 1".into());
        }
        if let Some(inj) = &self.injection {
            if inj.events == 0 || !(0.0..=1.0).contains(&inj.v) || !(0.0..=1.0).contains(&inj.s) {
                return bad(format!(
                    "injection needs events >= 1 and v, s in [0, 1], got {inj:?}"
                ));
            }
        }
        Ok(())
    }

    fn actor(&self, role: Role) -> &Address {
        &self.roster[&role]
    }
}

/// Chain, store and RPC settings shared by scenario runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEnv {
    pub chain: ChainConfig,
    pub providers: Vec<ProviderConfig>,
    pub pin: PinPolicy,
    pub rpc: RpcModel,
}

impl Default for ScenarioEnv {
    fn default() -> Self {
        ScenarioEnv {
            chain: ChainConfig::default(),
            providers: vec![
                ProviderConfig::reference("pinning-a"),
                ProviderConfig::reference("pinning-b"),
            ],
            pin: PinPolicy::default(),
            rpc: RpcModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: LifecycleStep,
    pub actor: Address,
    pub tx_id: Option<TxId>,
    pub status: Option<TxStatus>,
    pub evidence: usize,
    pub block_number: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub tx_count: usize,
    pub events: usize,
    pub blocks: usize,
    pub t_receipts: f64,
    pub t_timestamps: f64,
    pub wall_clock: AuditWallClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditWallClock {
    pub t_decode: f64,
    pub t_sort: f64,
    pub total: f64,
}

impl AuditSummary {
    fn new(trail: &AuditTrail, b: &AqlBreakdown) -> Self {
        AuditSummary {
            tx_count: trail.tx_count,
            events: trail.records.len(),
            blocks: trail.block_count,
            t_receipts: b.t_receipts,
            t_timestamps: b.t_timestamps,
            wall_clock: AuditWallClock {
                t_decode: b.t_decode,
                t_sort: b.t_sort,
                total: b.total,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub product_id: ProductId,
    pub steps: Vec<StepOutcome>,
    pub next_step: StepProgress,
    pub metrics: CoreMetrics,
    pub anchored_steps: Vec<LifecycleStep>,
    pub commitments_anchored: usize,
    pub store_objects: usize,
    pub evidence: EvidenceVerification,
    pub audit: Option<AuditSummary>,
    pub trail: Option<AuditTrail>,
    pub negative_cases: NegativeSuiteReport,
    pub detection: Option<OracleExperiment>,
}

/// Onboards `config`'s roster on a fresh chain. Returns the ledger.
fn onboard(
    config: &ScenarioConfig,
    env: &ScenarioEnv,
    extra: &[(&str, Role)],
) -> Result<Ledger, ScenarioError> {
    let suite = SuiteConfig {
        certification_gate: config.certification_gate,
        ..SuiteConfig::default()
    };
    let admin = suite.admin.clone();
    let mut ledger = Ledger::new(env.chain, suite)?;
    let actors = config
        .roster
        .iter()
        .map(|(r, a)| (a.clone(), *r))
        .chain(extra.iter().map(|(a, r)| (Address::new(a), *r)));
    for (address, role) in actors {
        ledger.submit(admin.clone(), ContractCall::RegisterActor { address, role })?;
    }
    ledger.drain();
    Ok(ledger)
}

/// Submits `call` alone in the next block and returns its id and status.
fn execute_alone(
    ledger: &mut Ledger,
    sender: &Address,
    call: ContractCall,
) -> Result<(TxId, TxStatus, u64), ScenarioError> {
    let id = ledger.submit(sender.clone(), call)?;
    ledger.drain();
    let r = ledger.get_receipt(id, None)?;
    Ok((id, r.status, r.block_number))
}

/// Runs the reference lifecycle: onboarding, six anchored steps with fresh
/// evidence, consumer verification, audit reconstruction and the negative
/// suite on a separate chain.
pub fn run_reference(
    config: &ScenarioConfig,
    env: &ScenarioEnv,
) -> Result<ScenarioReport, ScenarioError> {
    config.validate()?;
    let mut ledger = onboard(config, env, &[])?;
    let mut store = EvidenceStore::new(env.providers.iter().cloned())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let product = &config.product_id;

    let mut steps = Vec::with_capacity(LifecycleStep::ALL.len());
    let mut payload_index = 0u64;
    for (step, &n_evidence) in LifecycleStep::ALL.iter().zip(&config.allocation) {
        let actor = config.actor(step.authorized_role()).clone();
        if config.skip_steps.contains(step) {
            steps.push(StepOutcome {
                step: *step,
                actor,
                tx_id: None,
                status: None,
                evidence: 0,
                block_number: None,
            });
            continue;
        }
        if *step == LifecycleStep::Sold && config.certify {
            let call = ContractCall::Attest {
                product_id: product.clone(),
                step: LifecycleStep::AtRetail,
                verdict: Verdict::Approve,
                evidence_cid: None,
            };
            execute_alone(&mut ledger, config.actor(Role::Certifier), call)?;
        }
        let mut evidence = Vec::with_capacity(n_evidence);
        for _ in 0..n_evidence {
            let bytes = synthetic_payload(config.seed, payload_index, config.payload_size);
            payload_index += 1;
            evidence.push(store.put(&bytes, env.pin, &mut rng)?.cid);
        }
        let call = ContractCall::AnchorStep {
            product_id: product.clone(),
            step: *step,
            evidence,
        };
        let (id, status, block) = execute_alone(&mut ledger, &actor, call)?;
        steps.push(StepOutcome {
            step: *step,
            actor,
            tx_id: Some(id),
            status: Some(status),
            evidence: n_evidence,
            block_number: Some(block),
        });
    }

    let next_step = match ledger.contracts().product_trace(product) {
        Ok(trace) => trace.next,
        Err(ReadError::UnknownProduct(_)) => StepProgress::Next(LifecycleStep::Produced),
    };

    let mut session = RpcSession::new(env.rpc, config.seed);
    let audited = match reconstruct(product, &ledger, &mut session, &mut CacheState::new()) {
        Ok(x) => Some(x),
        Err(AuditError::UnknownProduct(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let evidence = match &audited {
        Some((trail, _)) => verify_evidence(trail, &store, &mut rng),
        None => verify_evidence(
            &AuditTrail {
                product_id: product.clone(),
                records: Vec::new(),
                tx_count: 0,
                block_count: 0,
            },
            &store,
            &mut rng,
        ),
    };
    let complete = audited.as_ref().is_some_and(|(t, _)| t.is_complete());
    let metrics = core_metrics(&CoreMetricsInput {
        n_b: 1,
        n_b_full: complete as u64,
        n_e: evidence.n,
        n_e_fetch: evidence.fetched,
        n_e_cid: evidence.matched,
    })?;

    let negative_cases = run_negative_suite(config, env)?;
    let detection = config
        .injection
        .map(|inj| run_oracle_experiment(inj.events, inj.v, inj.s, config.seed))
        .transpose()?;

    Ok(ScenarioReport {
        product_id: product.clone(),
        steps,
        next_step,
        metrics,
        anchored_steps: audited
            .as_ref()
            .map(|(t, _)| t.anchored_steps())
            .unwrap_or_default(),
        commitments_anchored: audited.as_ref().map_or(0, |(t, _)| t.commitments().count()),
        store_objects: store.object_count(),
        evidence,
        audit: audited.as_ref().map(|(t, b)| AuditSummary::new(t, b)),
        trail: audited.map(|(t, _)| t),
        negative_cases,
        detection,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeCase {
    UnregisteredWrite,
    SuspendedActorWrite,
    Replay,
    SameBlockCollision,
}

impl NegativeCase {
    pub const ALL: [NegativeCase; 4] = [
        NegativeCase::UnregisteredWrite,
        NegativeCase::SuspendedActorWrite,
        NegativeCase::Replay,
        NegativeCase::SameBlockCollision,
    ];

    pub fn expected(self) -> RevertReason {
        match self {
            NegativeCase::UnregisteredWrite => RevertReason::Unauthorised,
            NegativeCase::SuspendedActorWrite => RevertReason::ActorInactive,
            NegativeCase::Replay | NegativeCase::SameBlockCollision => RevertReason::DuplicateStep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeCaseResult {
    pub case: NegativeCase,
    pub expected: RevertReason,
    pub observed: TxStatus,
    /// Contract state after the rejected write equals the state it would
    /// have without it.
    pub state_unchanged: bool,
    /// Successful `StepAnchored` logs for the contested (product, step).
    pub anchors_for_key: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeSuiteReport {
    pub cases: Vec<NegativeCaseResult>,
    pub rejected: usize,
    pub total: usize,
    pub deviations: Vec<String>,
}

impl NegativeSuiteReport {
    pub fn all_passed(&self) -> bool {
        self.deviations.is_empty()
    }

    pub fn into_result(self) -> Result<Self, ScenarioError> {
        if self.all_passed() {
            Ok(self)
        } else {
            Err(ScenarioError::SuiteFailure(self.deviations))
        }
    }
}

const SUSPENDED: &str = "suspended-producer";
const RIVAL: &str = "rival-producer";
const OUTSIDER: &str = "unregistered-account";

fn anchor(product: &str) -> ContractCall {
    ContractCall::AnchorStep {
        product_id: product.into(),
        step: LifecycleStep::Produced,
        evidence: Vec::new(),
    }
}

fn anchors_for(ledger: &Ledger, product: &str) -> usize {
    let product = ProductId::new(product);
    ledger
        .logs()
        .filter(|l| {
            matches!(&l.event, crate::contracts::Event::StepAnchored { product_id, step, .. }
                if *product_id == product && *step == LifecycleStep::Produced)
        })
        .count()
}

/// Runs the four rejection cases on a fresh chain holding the reference
/// roster plus a second producer and a producer that gets suspended. Cases
/// that do not revert as designated are listed in `deviations`.
pub fn run_negative_suite(
    config: &ScenarioConfig,
    env: &ScenarioEnv,
) -> Result<NegativeSuiteReport, ScenarioError> {
    config.validate()?;
    let gate_free = ScenarioConfig {
        certification_gate: false,
        ..config.clone()
    };
    let mut ledger = onboard(
        &gate_free,
        env,
        &[(SUSPENDED, Role::Producer), (RIVAL, Role::Producer)],
    )?;
    let admin = ledger.contracts().config().admin.clone();
    let producer = config.actor(Role::Producer).clone();

    execute_alone(
        &mut ledger,
        &admin,
        ContractCall::SetActorStatus {
            address: SUSPENDED.into(),
            status: ActorStatus::Suspended,
        },
    )?;
    if config.reactivate_suspended {
        execute_alone(
            &mut ledger,
            &admin,
            ContractCall::SetActorStatus {
                address: SUSPENDED.into(),
                status: ActorStatus::Active,
            },
        )?;
    }
    execute_alone(&mut ledger, &producer, anchor("replayed-batch"))?;

    let mut cases = Vec::with_capacity(4);
    let single = [
        (
            NegativeCase::UnregisteredWrite,
            Address::new(OUTSIDER),
            "outsider-batch",
        ),
        (
            NegativeCase::SuspendedActorWrite,
            Address::new(SUSPENDED),
            "suspended-batch",
        ),
        (NegativeCase::Replay, producer.clone(), "replayed-batch"),
    ];
    for (case, sender, product) in single {
        let before: ContractSuite = ledger.contracts().clone();
        let (_, observed, _) = execute_alone(&mut ledger, &sender, anchor(product))?;
        cases.push(NegativeCaseResult {
            case,
            expected: case.expected(),
            observed,
            state_unchanged: *ledger.contracts() == before,
            anchors_for_key: anchors_for(&ledger, product),
            passed: false,
        });
    }

    // Two producers race for the same (product, step) inside one block.
    let before = ledger.contracts().clone();
    let first = ledger.submit(producer.clone(), anchor("contested-batch"))?;
    let second = ledger.submit(RIVAL.into(), anchor("contested-batch"))?;
    ledger.drain();
    let (r1, r2) = (
        ledger.get_receipt(first, None)?,
        ledger.get_receipt(second, None)?,
    );
    let same_block = r1.block_number == r2.block_number;
    let mut winner_only = before;
    let _ = winner_only.execute(&producer, first, &anchor("contested-batch"));
    cases.push(NegativeCaseResult {
        case: NegativeCase::SameBlockCollision,
        expected: NegativeCase::SameBlockCollision.expected(),
        observed: if same_block {
            r2.status
        } else {
            TxStatus::Success
        },
        state_unchanged: *ledger.contracts() == winner_only,
        anchors_for_key: anchors_for(&ledger, "contested-batch"),
        passed: false,
    });

    let mut deviations = Vec::new();
    for c in &mut cases {
        let single_anchor_expected = c.case != NegativeCase::UnregisteredWrite
            && c.case != NegativeCase::SuspendedActorWrite;
        let anchors_ok = c.anchors_for_key == usize::from(single_anchor_expected);
        c.passed = c.observed == TxStatus::Reverted(c.expected) && c.state_unchanged && anchors_ok;
        if !c.passed {
            deviations.push(format!(
                "{:?}: expected Reverted({:?}), observed {:?}, state unchanged: {}, anchors: {}",
                c.case, c.expected, c.observed, c.state_unchanged, c.anchors_for_key
            ));
        }
    }
    Ok(NegativeSuiteReport {
        rejected: cases
            .iter()
            .filter(|c| matches!(c.observed, TxStatus::Reverted(_)))
            .count(),
        total: cases.len(),
        cases,
        deviations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleExperiment {
    pub events: u64,
    pub v: f64,
    pub s: f64,
    pub gated: u64,
    pub audited: u64,
    pub detected: u64,
    pub empirical_d: f64,
    pub analytic_d: f64,
    /// Binomial standard deviation of the empirical rate.
    pub sigma: f64,
}

impl OracleExperiment {
    /// Distance from the analytic value in binomial standard deviations;
    /// zero when both are exact.
    pub fn z(&self) -> f64 {
        let gap = (self.empirical_d - self.analytic_d).abs();
        if self.sigma > 0.0 {
            gap / self.sigma
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Injects `events` false events. Each is rejected at the gate with
/// probability `v`; each survivor is independently audited, and so caught,
/// with probability `s`.
pub fn run_oracle_experiment(
    events: u64,
    v: f64,
    s: f64,
    seed: u64,
) -> Result<OracleExperiment, ScenarioError> {
    if events == 0 {
        return Err(AnalyticsError::Domain("injection needs at least one event".into()).into());
    }
    let analytic_d = detection_prob(v, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x6f72_6163_6c65);
    let (mut gated, mut audited) = (0u64, 0u64);
    for _ in 0..events {
        if rng.random_bool(v) {
            gated += 1;
        } else if rng.random_bool(s) {
            audited += 1;
        }
    }
    let detected = gated + audited;
    Ok(OracleExperiment {
        events,
        v,
        s,
        gated,
        audited,
        detected,
        empirical_d: detected as f64 / events as f64,
        analytic_d,
        sigma: (analytic_d * (1.0 - analytic_d) / events as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_run_is_complete() {
        let r = run_reference(&ScenarioConfig::default(), &ScenarioEnv::default()).unwrap();
        assert_eq!(r.metrics.completeness, Some(1.0));
        assert_eq!(r.anchored_steps, LifecycleStep::ALL);
        assert_eq!(
            (r.evidence.n, r.evidence.fetched, r.evidence.matched),
            (13, 13, 13)
        );
        assert_eq!(r.commitments_anchored, 13);
        assert_eq!(r.store_objects, 13);
        assert_eq!(r.next_step, StepProgress::Complete);
        assert!(
            r.negative_cases.all_passed(),
            "{:?}",
            r.negative_cases.deviations
        );
    }

    #[test]
    fn skipped_step_breaks_order() {
        let cfg = ScenarioConfig {
            skip_steps: vec![LifecycleStep::AtRetail],
            ..ScenarioConfig::default()
        };
        let r = run_reference(&cfg, &ScenarioEnv::default()).unwrap();
        let sold = r
            .steps
            .iter()
            .find(|s| s.step == LifecycleStep::Sold)
            .unwrap();
        assert_eq!(
            sold.status,
            Some(TxStatus::Reverted(RevertReason::OutOfOrder))
        );
        assert_eq!(r.metrics.completeness, Some(0.0));
    }

    #[test]
    fn gate_without_attestation_blocks_sale() {
        let cfg = ScenarioConfig {
            certification_gate: true,
            certify: false,
            ..ScenarioConfig::default()
        };
        let r = run_reference(&cfg, &ScenarioEnv::default()).unwrap();
        let sold = r
            .steps
            .iter()
            .find(|s| s.step == LifecycleStep::Sold)
            .unwrap();
        assert_eq!(
            sold.status,
            Some(TxStatus::Reverted(RevertReason::GateNotSatisfied))
        );

        let cfg = ScenarioConfig {
            certification_gate: true,
            ..ScenarioConfig::default()
        };
        let r = run_reference(&cfg, &ScenarioEnv::default()).unwrap();
        assert_eq!(r.metrics.completeness, Some(1.0));
    }

    #[test]
    fn reactivated_actor_is_a_deviation() {
        let cfg = ScenarioConfig {
            reactivate_suspended: true,
            ..ScenarioConfig::default()
        };
        let r = run_negative_suite(&cfg, &ScenarioEnv::default()).unwrap();
        assert_eq!(r.deviations.len(), 1);
        let c = &r.cases[1];
        assert_eq!(c.case, NegativeCase::SuspendedActorWrite);
        assert_eq!(c.observed, TxStatus::Success);
        assert!(r.into_result().is_err());
    }

    #[test]
    fn collision_leaves_one_anchor() {
        let r = run_negative_suite(&ScenarioConfig::default(), &ScenarioEnv::default()).unwrap();
        let c = r
            .cases
            .iter()
            .find(|c| c.case == NegativeCase::SameBlockCollision)
            .unwrap();
        assert_eq!(c.anchors_for_key, 1);
        assert!(c.passed);
        assert_eq!(r.rejected, 4);
    }

    #[test]
    fn incomplete_roster_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.roster.remove(&Role::Regulator);
        assert!(matches!(
            run_reference(&cfg, &ScenarioEnv::default()),
            Err(ScenarioError::Config(_))
        ));
    }

    #[test]
    fn oracle_extremes_are_exact() {
        let e = run_oracle_experiment(1_000, 1.0, 0.3, 1).unwrap();
        assert_eq!(e.empirical_d, 1.0);
        let e = run_oracle_experiment(1_000, 0.0, 1.0, 1).unwrap();
        assert_eq!(e.empirical_d, 1.0);
        assert_eq!(e.z(), 0.0);
        assert!(run_oracle_experiment(0, 0.2, 0.1, 1).is_err());
        assert!(run_oracle_experiment(10, 1.2, 0.1, 1).is_err());
    }
}

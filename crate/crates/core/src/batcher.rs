//! Time-and-size batching: flush when `B` commitments are queued or when the
//! flush window reaches `tau` seconds, whichever comes first.
//!
//! The window clock starts at the previous flush (or at `t = 0`), so with a
//! steady arrival stream the events in a window are spread uniformly over it
//! and the mean wait is half the window.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{CidCommitment, ContractCall, LifecycleStep};
use crate::evidence::compute_cid;
use crate::ids::{Address, ProductId, TxId};
use crate::ledger::{Ledger, LedgerError};
use crate::stats::{mean, nearest_rank};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BatchError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("flush transaction {0} reverted")]
    Reverted(TxId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchPolicy {
    #[serde(rename = "B")]
    pub max_batch: usize,
    /// Seconds.
    pub tau: f64,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy {
            max_batch: 512,
            tau: 1.0,
        }
    }
}

impl BatchPolicy {
    pub fn validate(&self) -> Result<(), BatchError> {
        if self.max_batch == 0 || !(self.tau > 0.0) {
            return Err(BatchError::Domain(format!(
                "policy needs B >= 1 and tau > 0, got B={}, tau={}",
                self.max_batch, self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrivalKind {
    /// Evenly spaced, at the midpoint of each `1/lambda` slot.
    Deterministic,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    pub lambda: f64,
    pub kind: ArrivalKind,
}

impl ArrivalModel {
    pub fn deterministic(lambda: f64) -> Self {
        ArrivalModel {
            lambda,
            kind: ArrivalKind::Deterministic,
        }
    }

    pub fn poisson(lambda: f64) -> Self {
        ArrivalModel {
            lambda,
            kind: ArrivalKind::Poisson,
        }
    }

    /// Arrival times in `[0, duration)`.
    pub fn times<R: Rng + ?Sized>(
        &self,
        duration: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>, BatchError> {
        if !(self.lambda > 0.0) {
            return Err(BatchError::Domain(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        let mut out = Vec::with_capacity((self.lambda * duration).ceil().max(0.0) as usize);
        match self.kind {
            ArrivalKind::Deterministic => {
                let mut k = 0u64;
                loop {
                    let t = (k as f64 + 0.5) / self.lambda;
                    if t >= duration {
                        break;
                    }
                    out.push(t);
                    k += 1;
                }
            }
            ArrivalKind::Poisson => {
                let gap = Exp::new(self.lambda).map_err(|e| BatchError::Domain(e.to_string()))?;
                let mut t = gap.sample(rng);
                while t < duration {
                    out.push(t);
                    t += gap.sample(rng);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlushTrigger {
    Size,
    Timeout,
    /// End of the arrival horizon; not a policy decision.
    Drain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flush {
    pub time: f64,
    pub arrivals: Vec<f64>,
    pub trigger: FlushTrigger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatcherState {
    policy: BatchPolicy,
    open: Vec<f64>,
    window_start: f64,
}

impl BatcherState {
    pub fn new(policy: BatchPolicy, start: f64) -> Result<Self, BatchError> {
        policy.validate()?;
        Ok(BatcherState {
            policy,
            open: Vec::with_capacity(policy.max_batch),
            window_start: start,
        })
    }

    pub fn open_len(&self) -> usize {
        self.open.len()
    }

    pub fn window_start(&self) -> f64 {
        self.window_start
    }

    fn deadline(&self) -> f64 {
        self.window_start + self.policy.tau
    }

    /// Fires every timeout due at or before `now`.
    pub fn poll(&mut self, now: f64, out: &mut Vec<Flush>) {
        while self.deadline() <= now {
            let at = self.deadline();
            if !self.open.is_empty() {
                out.push(Flush {
                    time: at,
                    arrivals: std::mem::take(&mut self.open),
                    trigger: FlushTrigger::Timeout,
                });
            }
            self.window_start = at;
        }
    }

    /// Adds one arrival at `t` (non-decreasing). A timeout due at exactly `t`
    /// fires before the arrival joins.
    pub fn offer(&mut self, t: f64, out: &mut Vec<Flush>) {
        self.poll(t, out);
        self.open.push(t);
        if self.open.len() >= self.policy.max_batch {
            out.push(Flush {
                time: t,
                arrivals: std::mem::take(&mut self.open),
                trigger: FlushTrigger::Size,
            });
            self.window_start = t;
        }
    }

    /// Flushes whatever is open at the window's own deadline.
    pub fn drain(&mut self) -> Option<Flush> {
        if self.open.is_empty() {
            return None;
        }
        let at = self.deadline();
        self.window_start = at;
        Some(Flush {
            time: at,
            arrivals: std::mem::take(&mut self.open),
            trigger: FlushTrigger::Drain,
        })
    }
}

/// Maximum batching wait for an event: `min(tau, B / lambda)`.
pub fn w_max(lambda: f64, max_batch: usize, tau: f64) -> Result<f64, BatchError> {
    if !(lambda > 0.0) {
        return Err(BatchError::Domain(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    Ok(tau.min(max_batch as f64 / lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub w_max: f64,
    pub e_w: f64,
    pub w_p95: f64,
    pub e_d: f64,
    pub d_p95: f64,
}

/// Closed-form delay with uniformly spread waits and a constant inclusion latency.
pub fn analytic_delay(
    lambda: f64,
    policy: &BatchPolicy,
    s_include: f64,
) -> Result<DelayStats, BatchError> {
    policy.validate()?;
    if !(s_include >= 0.0) {
        return Err(BatchError::Domain(format!(
            "s_include must be >= 0, got {s_include}"
        )));
    }
    let w = w_max(lambda, policy.max_batch, policy.tau)?;
    let e_w = w / 2.0;
    let w_p95 = 0.95 * w;
    Ok(DelayStats {
        w_max: w,
        e_w,
        w_p95,
        e_d: e_w + s_include,
        d_p95: w_p95 + s_include,
    })
}

/// Per-event timing observed by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventTiming {
    pub t_arrive: f64,
    pub t_flush: f64,
    pub t_included: f64,
}

impl EventTiming {
    pub fn wait(&self) -> f64 {
        self.t_flush - self.t_arrive
    }

    pub fn delay(&self) -> f64 {
        self.t_included - self.t_arrive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub arrivals: ArrivalModel,
    pub policy: BatchPolicy,
    pub duration: f64,
    pub events: usize,
    pub flushes: usize,
    pub size_triggered: usize,
    pub timeout_triggered: usize,
    /// Mean size over policy-triggered flushes (horizon drain excluded).
    pub mean_batch_size: Option<f64>,
    pub max_batch_size: usize,
    pub e_w: Option<f64>,
    pub w_p95: Option<f64>,
    pub max_w: Option<f64>,
    pub e_d: Option<f64>,
    pub d_p95: Option<f64>,
    pub max_d: Option<f64>,
    pub mean_inclusion: Option<f64>,
    pub blocks: u64,
    #[serde(skip)]
    pub timings: Vec<EventTiming>,
}

/// Drives arrivals through a batcher and anchors every flush on `ledger` as a
/// `submit_cid_batch` from `submitter`. The ledger clock tracks simulated time
/// one block interval at a time; each flush enters the queue at the head
/// block's time and its inclusion latency is what the ledger reports
/// (block timestamp minus submission time).
pub fn simulate<R: Rng + ?Sized>(
    arrivals: &ArrivalModel,
    policy: &BatchPolicy,
    duration: f64,
    ledger: &mut Ledger,
    submitter: &Address,
    rng: &mut R,
) -> Result<SimulationReport, BatchError> {
    let times = arrivals.times(duration, rng)?;
    let t0 = ledger.now();
    let interval = ledger.config().block_interval;
    let first_block = ledger.head().number;
    let product = ProductId::new("batched-stream");
    let mut state = BatcherState::new(*policy, 0.0)?;
    let mut flushes = Vec::new();
    let mut submitted: Vec<(Flush, TxId)> = Vec::new();
    let mut seq = 0u64;

    let mut submit = |ledger: &mut Ledger, flush: Flush, submitted: &mut Vec<(Flush, TxId)>| {
        while ledger.now() + interval <= t0 + flush.time {
            ledger.advance_block();
        }
        let commitments = flush
            .arrivals
            .iter()
            .map(|_| {
                seq += 1;
                CidCommitment {
                    product_id: product.clone(),
                    step: LifecycleStep::Produced,
                    cid: compute_cid(&seq.to_be_bytes()),
                }
            })
            .collect();
        let id = ledger.submit(
            submitter.clone(),
            ContractCall::SubmitCidBatch { commitments },
        )?;
        submitted.push((flush, id));
        Ok::<_, BatchError>(())
    };

    for &t in &times {
        state.offer(t, &mut flushes);
        for f in flushes.drain(..) {
            submit(ledger, f, &mut submitted)?;
        }
    }
    state.poll(duration, &mut flushes);
    for f in flushes.drain(..) {
        submit(ledger, f, &mut submitted)?;
    }
    if let Some(f) = state.drain() {
        submit(ledger, f, &mut submitted)?;
    }
    ledger.drain();

    let mut timings = Vec::with_capacity(times.len());
    let mut inclusion = Vec::with_capacity(submitted.len());
    let (mut size_n, mut timeout_n, mut policy_sizes, mut max_size) = (0, 0, Vec::new(), 0);
    for (flush, id) in &submitted {
        let receipt = ledger.get_receipt(*id, None)?;
        if !receipt.is_success() {
            return Err(BatchError::Reverted(*id));
        }
        let block_ts = ledger.get_block_timestamp(receipt.block_number, None)?;
        let latency = block_ts - receipt.submit_time;
        inclusion.push(latency);
        match flush.trigger {
            FlushTrigger::Size => size_n += 1,
            FlushTrigger::Timeout => timeout_n += 1,
            FlushTrigger::Drain => {}
        }
        if flush.trigger != FlushTrigger::Drain {
            policy_sizes.push(flush.arrivals.len() as f64);
        }
        max_size = max_size.max(flush.arrivals.len());
        for &a in &flush.arrivals {
            timings.push(EventTiming {
                t_arrive: a,
                t_flush: flush.time,
                t_included: flush.time + latency,
            });
        }
    }

    let mut waits: Vec<f64> = timings.iter().map(EventTiming::wait).collect();
    let mut delays: Vec<f64> = timings.iter().map(EventTiming::delay).collect();
    waits.sort_by(f64::total_cmp);
    delays.sort_by(f64::total_cmp);

    Ok(SimulationReport {
        arrivals: *arrivals,
        policy: *policy,
        duration,
        events: times.len(),
        flushes: submitted.len(),
        size_triggered: size_n,
        timeout_triggered: timeout_n,
        mean_batch_size: mean(&policy_sizes),
        max_batch_size: max_size,
        e_w: mean(&waits),
        w_p95: nearest_rank(&waits, 0.95),
        max_w: waits.last().copied(),
        e_d: mean(&delays),
        d_p95: nearest_rank(&delays, 0.95),
        max_d: delays.last().copied(),
        mean_inclusion: mean(&inclusion),
        blocks: ledger.head().number - first_block,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{Role, SuiteConfig};
    use crate::ledger::ChainConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ledger_with_batcher() -> (Ledger, Address) {
        let mut l = Ledger::new(ChainConfig::default(), SuiteConfig::default()).unwrap();
        l.submit(
            "admin".into(),
            ContractCall::RegisterActor {
                address: "svc".into(),
                role: Role::Processor,
            },
        )
        .unwrap();
        l.advance_block();
        (l, "svc".into())
    }

    fn run(lambda: f64, duration: f64) -> SimulationReport {
        let (mut l, who) = ledger_with_batcher();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        simulate(
            &ArrivalModel::deterministic(lambda),
            &BatchPolicy::default(),
            duration,
            &mut l,
            &who,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn w_max_cases() {
        assert!((w_max(600.0, 512, 1.0).unwrap() - 0.853_333).abs() < 1e-6);
        assert!((w_max(1_200.0, 512, 1.0).unwrap() - 0.426_667).abs() < 1e-6);
        assert_eq!(w_max(1.0, 512, 1.0).unwrap(), 1.0);
        assert!(w_max(0.0, 512, 1.0).is_err());
        assert!(w_max(-3.0, 512, 1.0).is_err());
    }

    #[test]
    fn analytic_delay_cases() {
        let p = BatchPolicy::default();
        let d = analytic_delay(10.0, &p, 2.0).unwrap();
        assert_eq!((d.e_w, d.w_p95, d.e_d, d.d_p95), (0.5, 0.95, 2.5, 2.95));
        let d = analytic_delay(1_200.0, &p, 2.0).unwrap();
        assert!((d.e_d - 2.2133).abs() < 1e-4);
        assert!((d.d_p95 - 2.4053).abs() < 1e-4);
        let d = analytic_delay(1e-6, &p, 0.0).unwrap();
        assert_eq!(d.e_d, p.tau / 2.0);
        assert!(analytic_delay(10.0, &p, -1.0).is_err());
    }

    #[test]
    fn size_flush_resets_window() {
        let policy = BatchPolicy {
            max_batch: 3,
            tau: 1.0,
        };
        let mut s = BatcherState::new(policy, 0.0).unwrap();
        let mut out = Vec::new();
        for t in [0.1, 0.2, 0.3] {
            s.offer(t, &mut out);
        }
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].trigger, FlushTrigger::Size);
        assert_eq!(s.window_start(), 0.3);
        s.offer(1.2, &mut out);
        assert_eq!(out.len(), 1);
        s.offer(1.3, &mut out);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].trigger, FlushTrigger::Timeout);
        assert_eq!(out[1].time, 1.3);
        assert_eq!(out[1].arrivals, vec![1.2]);
    }

    #[test]
    fn invalid_policy_rejected() {
        assert!(BatcherState::new(
            BatchPolicy {
                max_batch: 0,
                tau: 1.0
            },
            0.0
        )
        .is_err());
        assert!(BatcherState::new(
            BatchPolicy {
                max_batch: 4,
                tau: 0.0
            },
            0.0
        )
        .is_err());
    }

    #[test]
    fn deterministic_lambda_10_matches_model() {
        let r = run(10.0, 600.0);
        assert!((r.e_w.unwrap() - 0.5).abs() / 0.5 < 0.05, "{:?}", r.e_w);
        assert!((r.e_d.unwrap() - 2.5).abs() / 2.5 < 0.05, "{:?}", r.e_d);
        assert_eq!(r.size_triggered, 0);
    }

    #[test]
    fn high_rate_is_size_triggered() {
        let r = run(1_200.0, 60.0);
        assert_eq!(r.timeout_triggered, 0);
        assert!(r.size_triggered > 100);
        assert_eq!(r.mean_batch_size, Some(512.0));
    }

    #[test]
    fn starvation_regime_single_event_batches() {
        let r = run(1.0, 600.0);
        assert_eq!(r.size_triggered, 0);
        assert_eq!(r.max_batch_size, 1);
        assert_eq!(r.mean_batch_size, Some(1.0));
    }

    #[test]
    fn bounded_delay_when_uncongested() {
        for lambda in [1.0, 50.0, 600.0] {
            let r = run(lambda, 120.0);
            assert!(
                r.max_d.unwrap() <= 1.0 + 2.0 + 1e-9,
                "lambda {lambda}: {:?}",
                r.max_d
            );
        }
    }

    #[test]
    fn poisson_runs_and_reports() {
        let (mut l, who) = ledger_with_batcher();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = simulate(
            &ArrivalModel::poisson(200.0),
            &BatchPolicy::default(),
            60.0,
            &mut l,
            &who,
            &mut rng,
        )
        .unwrap();
        assert!(r.events > 10_000);
        assert_eq!(r.mean_inclusion, Some(2.0));
    }
}

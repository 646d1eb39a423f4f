//! Subcommand bodies. Each returns an [`Output`]: a JSON payload plus the
//! tables and key facts used for CSV and Markdown.

use serde::Serialize;
use serde_json::{json, Value};

use crate::analytics::{
    availability_table, batching_table, cost_batch, cost_table, detection_table, fairness_check,
    format_probability, scorecard, AvailabilityRow, BatchingRow, CoreMetrics, CostRow,
    DetectionRow, FairnessParams, ScorecardInputs,
};
use crate::auditor::{run_aql_benchmark, AuditWorkload, CacheRegime};
use crate::batcher::{simulate, ArrivalModel};
use crate::bench::{bench_ledger, find_max_batch, probe_batch, run_throughput};
use crate::contracts::{ContractCall, LifecycleStep};
use crate::evidence::{compute_cid, run_evidence_loop, simulate_availability, EvidenceStore};
use crate::report::{fmt_num, fmt_opt, Table};
use crate::scenario::{run_oracle_experiment, run_reference};

use super::config::RunConfig;

#[derive(Debug)]
pub enum CommandError {
    /// Bad configuration or inputs; exit code 1.
    Validation(String),
}

impl<E: std::fmt::Display> From<E> for CommandError {
    fn from(e: E) -> Self {
        CommandError::Validation(e.to_string())
    }
}

type CmdResult = Result<Output, CommandError>;

#[derive(Debug, Clone)]
pub struct Output {
    pub command: &'static str,
    pub stem: &'static str,
    pub payload: Value,
    pub tables: Vec<Table>,
    pub summary: Vec<(String, String)>,
    /// Set when a suite-level check failed; exit code 2.
    pub suite_failure: Option<String>,
}

impl Output {
    fn new(
        command: &'static str,
        stem: &'static str,
        payload: impl Serialize,
    ) -> Result<Self, CommandError> {
        Ok(Output {
            command,
            stem,
            payload: serde_json::to_value(payload)?,
            tables: Vec::new(),
            summary: Vec::new(),
            suite_failure: None,
        })
    }

    fn fact(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_owned(), value.to_string()));
    }
}

fn b(x: bool) -> String {
    x.to_string()
}

pub fn scenario_run(cfg: &RunConfig) -> CmdResult {
    let report = run_reference(&cfg.scenario, &cfg.scenario_env())?;
    let mut out = Output::new("scenario run", "scenario-run", &report)?;

    let mut steps = Table::new(
        "steps",
        "Lifecycle steps",
        &["Step", "Actor", "Status", "Evidence", "Block"],
    );
    for s in &report.steps {
        steps.push(vec![
            format!("{:?}", s.step),
            s.actor.to_string(),
            s.status
                .map_or("skipped".to_owned(), |st| format!("{st:?}")),
            s.evidence.to_string(),
            s.block_number.map(|n| n.to_string()).unwrap_or_default(),
        ]);
    }
    let m = &report.metrics;
    let mut metrics = Table::new("metrics", "Core metrics", &["C", "R", "M", "V"]);
    metrics.push(vec![
        fmt_opt(m.completeness),
        fmt_opt(m.retrievability),
        fmt_opt(m.match_rate),
        fmt_opt(m.verifiability),
    ]);
    let mut neg = Table::new(
        "negative_cases",
        "Negative cases",
        &["Case", "Expected", "Observed", "State unchanged", "Passed"],
    );
    for c in &report.negative_cases.cases {
        neg.push(vec![
            format!("{:?}", c.case),
            format!("Reverted({:?})", c.expected),
            format!("{:?}", c.observed),
            b(c.state_unchanged),
            b(c.passed),
        ]);
    }
    out.tables = vec![steps, metrics, neg];
    out.fact("C", fmt_opt(m.completeness));
    out.fact("V", fmt_opt(m.verifiability));
    out.fact(
        "evidence verified",
        format!("{}/{}", report.evidence.matched, report.evidence.n),
    );
    out.fact(
        "negative cases rejected",
        format!(
            "{}/{}",
            report.negative_cases.rejected, report.negative_cases.total
        ),
    );
    if let Some(d) = &report.detection {
        out.fact("empirical detection", fmt_num(d.empirical_d));
    }
    if !report.negative_cases.all_passed() {
        out.suite_failure = Some(report.negative_cases.deviations.join("; "));
    }
    Ok(out)
}

pub fn bench_anchor(cfg: &RunConfig, max_batch_search: bool) -> CmdResult {
    let chain = cfg.chain;
    let ops: Vec<(&str, u64, ContractCall)> = vec![
        (
            "anchor_step",
            0,
            ContractCall::AnchorStep {
                product_id: "gas-probe".into(),
                step: LifecycleStep::Produced,
                evidence: Vec::new(),
            },
        ),
        (
            "anchor_step",
            3,
            ContractCall::AnchorStep {
                product_id: "gas-probe".into(),
                step: LifecycleStep::Produced,
                evidence: (0..3u8).map(|i| compute_cid(&[i])).collect(),
            },
        ),
        ("submit_cid_batch", 1, probe_batch(1)),
        ("submit_cid_batch", 13, probe_batch(13)),
        (
            "submit_cid_batch",
            chain.max_batch(),
            probe_batch(chain.max_batch()),
        ),
    ];
    let mut gas_rows = Vec::new();
    let mut gas = Table::new(
        "gas",
        "Gas per operation",
        &["Operation", "Commitments", "Gas"],
    );
    for (op, n, call) in &ops {
        let g = chain.gas_of_batch(call.commitment_units()).ok();
        gas_rows.push(json!({"operation": op, "commitments": n, "gas": g}));
        gas.push(vec![
            (*op).to_owned(),
            n.to_string(),
            g.map(|g| g.to_string()).unwrap_or_default(),
        ]);
    }

    let mut throughput = Vec::new();
    let mut tp = Table::new(
        "throughput",
        "Sustained throughput",
        &[
            "Fill",
            "Blocks",
            "Commitments",
            "Commitments/s",
            "Ceiling/s",
        ],
    );
    if chain.max_batch() > 0 {
        for &fill in &cfg.anchor_bench.fill {
            let r = run_throughput(chain, cfg.anchor_bench.blocks, fill)?;
            tp.push(vec![
                format!("{fill:?}"),
                r.blocks.to_string(),
                r.commitments.to_string(),
                fmt_num(r.commitments_per_second),
                fmt_num(r.ceiling_per_second),
            ]);
            throughput.push(r);
        }
    }

    let search = if max_batch_search {
        let (ledger, submitter) = bench_ledger(chain)?;
        Some(find_max_batch(&ledger, &submitter))
    } else {
        None
    };

    let mut out = Output::new(
        "bench anchor",
        "bench-anchor",
        json!({
            "chain": chain,
            "gas": gas_rows,
            "throughput": throughput,
            "max_batch_search": search,
        }),
    )?;
    out.tables = vec![gas, tp];
    out.fact("max batch (admission)", chain.max_batch());
    out.fact(
        "throughput ceiling (commitments/s)",
        fmt_num(chain.throughput_ceiling()),
    );
    if let Some(s) = &search {
        out.fact("max batch (binary search)", s.max_batch);
        if let Some(w) = &s.warning {
            eprintln!("warning: {w}");
            out.fact("warning", w);
        }
    }
    Ok(out)
}

pub fn bench_evidence(cfg: &RunConfig) -> CmdResult {
    let mut store = EvidenceStore::new(cfg.store.providers.iter().cloned())?;
    let report = run_evidence_loop(&mut store, &cfg.store.evidence_loop, cfg.seed)?;
    let mut out = Output::new("bench evidence", "bench-evidence", &report)?;
    let mut sizes = Table::new(
        "latency",
        "Evidence latency by size",
        &[
            "Size (bytes)",
            "Upload p50 (ms)",
            "Upload p95 (ms)",
            "Fetch p50 (ms)",
            "Fetch p95 (ms)",
        ],
    );
    for s in &report.per_size {
        sizes.push(vec![
            s.size.to_string(),
            fmt_opt(s.upload_ms.map(|p| p.p50)),
            fmt_opt(s.upload_ms.map(|p| p.p95)),
            fmt_opt(s.fetch_ms.map(|p| p.p50)),
            fmt_opt(s.fetch_ms.map(|p| p.p95)),
        ]);
    }
    let mut rates = Table::new(
        "verification",
        "Evidence verification",
        &["n", "R", "M", "V", "Failures"],
    );
    rates.push(vec![
        report.n.to_string(),
        fmt_opt(report.retrievability),
        fmt_opt(report.match_rate),
        fmt_opt(report.verifiability),
        report.failures.to_string(),
    ]);
    out.tables = vec![sizes, rates];
    out.fact("n", report.n);
    out.fact("V", fmt_opt(report.verifiability));
    Ok(out)
}

pub fn bench_audit(cfg: &RunConfig) -> CmdResult {
    let workload = AuditWorkload::build(cfg.chain, &cfg.audit.evidence_batches)?;
    let bench = run_aql_benchmark(
        &workload,
        cfg.rpc,
        cfg.audit.runs,
        cfg.audit.warmup,
        cfg.seed,
    )?;
    let mut out = Output::new("bench audit", "bench-audit", &bench)?;
    let mut t = Table::new(
        "aql",
        "Audit query latency (ms)",
        &[
            "Regime",
            "T_receipts mean",
            "T_timestamps mean",
            "T_decode mean",
            "T_sort mean",
            "AQL p50",
            "AQL mean",
            "AQL p95",
            "AQL max",
        ],
    );
    for r in &bench.regimes {
        let w = &r.wall_clock;
        t.push(vec![
            match r.regime {
                CacheRegime::Uncached => "UNCACHED".to_owned(),
                CacheRegime::Cached => "CACHED".to_owned(),
            },
            fmt_num(r.t_receipts.mean),
            fmt_num(r.t_timestamps.mean),
            fmt_num(w.t_decode.mean),
            fmt_num(w.t_sort.mean),
            fmt_num(w.total.p50),
            fmt_num(w.total.mean),
            fmt_num(w.total.p95),
            fmt_num(w.total.max),
        ]);
    }
    out.tables = vec![t];
    let s = bench.shape;
    out.fact(
        "workload (tx / events / blocks)",
        format!("{} / {} / {}", s.txs, s.events, s.blocks),
    );
    out.fact("runs", format!("{} (+{} warmup)", bench.runs, bench.warmup));
    Ok(out)
}

#[derive(Serialize)]
struct SimulatedRow {
    lambda: f64,
    events: usize,
    flushes: usize,
    size_triggered: usize,
    timeout_triggered: usize,
    mean_batch_size: Option<f64>,
    e_w: Option<f64>,
    w_p95: Option<f64>,
    e_d: Option<f64>,
    d_p95: Option<f64>,
    max_d: Option<f64>,
}

pub fn stress_batching(cfg: &RunConfig) -> CmdResult {
    let bc = &cfg.batcher;
    let s_include = cfg.chain.block_interval;
    let analytic = batching_table(&bc.arrival_rates, &bc.policy, s_include)?;
    let mut simulated = Vec::with_capacity(bc.arrival_rates.len());
    for (i, &lambda) in bc.arrival_rates.iter().enumerate() {
        let (mut ledger, submitter) = bench_ledger(cfg.chain)?;
        let arrivals = ArrivalModel {
            lambda,
            kind: bc.arrivals,
        };
        let mut rng = crate::evidence::trial_rng(cfg.seed, i as u64);
        let r = simulate(
            &arrivals,
            &bc.policy,
            bc.duration,
            &mut ledger,
            &submitter,
            &mut rng,
        )?;
        simulated.push(SimulatedRow {
            lambda,
            events: r.events,
            flushes: r.flushes,
            size_triggered: r.size_triggered,
            timeout_triggered: r.timeout_triggered,
            mean_batch_size: r.mean_batch_size,
            e_w: r.e_w,
            w_p95: r.w_p95,
            e_d: r.e_d,
            d_p95: r.d_p95,
            max_d: r.max_d,
        });
    }
    let mut out = Output::new(
        "stress batching",
        "stress-batching",
        json!({
            "policy": bc.policy,
            "s_include": s_include,
            "arrivals": bc.arrivals,
            "duration": bc.duration,
            "analytic": analytic,
            "simulated": simulated,
        }),
    )?;
    let mut t = Table::new(
        "batching_delay",
        "Batching delay, analytic",
        &[
            "Arrival rate λ",
            "W_max (s)",
            "E[W] (s)",
            "W_p95 (s)",
            "E[D] (s)",
            "D_p95 (s)",
        ],
    );
    for r in &analytic {
        t.push(
            [r.lambda, r.w_max, r.e_w, r.w_p95, r.e_d, r.d_p95]
                .into_iter()
                .map(fmt_num)
                .collect(),
        );
    }
    let mut sim = Table::new(
        "batching_simulated",
        "Batching delay, simulated",
        &[
            "Arrival rate λ",
            "Flushes",
            "Size-triggered",
            "Timeout-triggered",
            "Mean batch",
            "E[W] (s)",
            "W_p95 (s)",
            "E[D] (s)",
            "D_p95 (s)",
        ],
    );
    for r in &simulated {
        sim.push(vec![
            fmt_num(r.lambda),
            r.flushes.to_string(),
            r.size_triggered.to_string(),
            r.timeout_triggered.to_string(),
            fmt_opt(r.mean_batch_size),
            fmt_opt(r.e_w),
            fmt_opt(r.w_p95),
            fmt_opt(r.e_d),
            fmt_opt(r.d_p95),
        ]);
    }
    out.tables = vec![t, sim];
    out.fact("B", bc.policy.max_batch);
    out.fact("tau (s)", fmt_num(bc.policy.tau));
    Ok(out)
}

pub fn stress_fees(cfg: &RunConfig) -> CmdResult {
    let a = &cfg.analytics;
    let rows = cost_table(&a.gas_prices, &a.cost, a.commitments_per_batch)?;
    let mut out = Output::new(
        "stress fees",
        "stress-fees",
        json!({"params": a.cost, "commitments_per_batch": a.commitments_per_batch, "rows": rows}),
    )?;
    let mut t = Table::new(
        "cost_sensitivity",
        "Anchoring cost by gas price",
        &[
            "Gas price (gwei)",
            "Cost per batch (USD)",
            "Cost per CID (USD)",
        ],
    );
    for r in &rows {
        t.push(vec![
            fmt_num(r.gas_price_gwei),
            fmt_num(r.cost_per_batch_usd),
            fmt_num(r.cost_per_cid_usd),
        ]);
    }
    out.tables = vec![t];
    out.fact("G_batch", a.cost.g_batch);
    out.fact("P (USD/ETH)", fmt_num(a.cost.eth_usd));
    Ok(out)
}

pub fn stress_fairness(cfg: &RunConfig) -> CmdResult {
    let f = &cfg.analytics.fairness;
    let premium = f.premium.ok_or_else(|| {
        CommandError::Validation(
            "stress fairness needs a premium in USD per pound (--premium or analytics.fairness.premium)".into(),
        )
    })?;
    let c_batch = cost_batch(&cfg.analytics.cost);
    let params = FairnessParams {
        premium_usd_per_lb: premium,
        alpha: f.alpha,
        batch_mass_lb: f.batch_mass.unwrap_or(0.0),
        c_batch_usd: c_batch,
    };
    let outcome = fairness_check(&params)?;
    let mut out = Output::new(
        "stress fairness",
        "stress-fairness",
        json!({
            "premium": premium,
            "alpha": f.alpha,
            "C_batch": c_batch,
            "gas_price_gwei": cfg.analytics.cost.gas_price_gwei,
            "mass_threshold_lb": outcome.mass_threshold_lb,
            "batch_mass": f.batch_mass,
            "ok": f.batch_mass.map(|_| outcome.ok),
        }),
    )?;
    let mut t = Table::new(
        "fairness",
        "Fee fairness break-even",
        &[
            "Premium (USD/lb)",
            "alpha",
            "C_batch (USD)",
            "Minimum mass (lb)",
            "Batch mass (lb)",
            "Within bound",
        ],
    );
    t.push(vec![
        fmt_num(premium),
        fmt_num(f.alpha),
        fmt_num(c_batch),
        fmt_num(outcome.mass_threshold_lb),
        fmt_opt(f.batch_mass),
        f.batch_mass.map(|_| b(outcome.ok)).unwrap_or_default(),
    ]);
    out.tables = vec![t];
    out.fact(
        "minimum mass per batch (lb)",
        fmt_num(outcome.mass_threshold_lb),
    );
    Ok(out)
}

#[derive(Serialize)]
struct AvailabilityCell {
    #[serde(flatten)]
    analytic: AvailabilityRow,
    display: Value,
    monte_carlo: Option<crate::evidence::AvailabilityEstimate>,
    sigma: Option<f64>,
}

pub fn stress_availability(cfg: &RunConfig) -> CmdResult {
    let a = &cfg.analytics;
    let rows = availability_table(&a.availability_p, &a.availability_k)?;
    let mut cells = Vec::with_capacity(rows.len());
    let mut t = Table::new(
        "availability",
        "Evidence availability under churn",
        &[
            "p",
            "k",
            "P(retrievable)",
            "Expected tries",
            "Monte Carlo",
            "Trials",
        ],
    );
    for (i, row) in rows.iter().enumerate() {
        let mc = (a.availability_trials > 0)
            .then(|| {
                simulate_availability(
                    row.p,
                    row.k,
                    a.availability_trials,
                    cfg.seed.wrapping_add(i as u64),
                )
            })
            .transpose()?;
        let shown_p = format_probability(row.p_retrievable);
        let shown_tries = format!("{:.2}", row.expected_tries);
        t.push(vec![
            fmt_num(row.p),
            row.k.to_string(),
            shown_p.clone(),
            shown_tries.clone(),
            mc.map(|m| fmt_num(m.frequency)).unwrap_or_default(),
            a.availability_trials.to_string(),
        ]);
        cells.push(AvailabilityCell {
            analytic: *row,
            display: json!({"p_retrievable": shown_p, "expected_tries": shown_tries}),
            monte_carlo: mc,
            sigma: mc
                .map(|m| (row.p_retrievable * (1.0 - row.p_retrievable) / m.trials as f64).sqrt()),
        });
    }
    let mut out = Output::new(
        "stress availability",
        "stress-availability",
        json!({"trials": a.availability_trials, "rows": cells}),
    )?;
    out.tables = vec![t];
    Ok(out)
}

pub fn stress_oracle(cfg: &RunConfig) -> CmdResult {
    let a = &cfg.analytics;
    let analytic = detection_table(&a.detection_grid)?;
    let mut experiments = Vec::with_capacity(analytic.len());
    let mut t = Table::new(
        "oracle_sensitivity",
        "Detection probability",
        &["Gate v", "Sampling s", "Detection d", "Empirical d", "z"],
    );
    for (i, row) in analytic.iter().enumerate() {
        let e = run_oracle_experiment(
            a.injected_events,
            row.v,
            row.s,
            cfg.seed.wrapping_add(i as u64),
        )?;
        t.push(vec![
            fmt_num(row.v),
            fmt_num(row.s),
            format!("{:.3}", row.d),
            fmt_num(e.empirical_d),
            fmt_num(e.z()),
        ]);
        experiments.push(json!({"experiment": e, "z": e.z()}));
    }
    let mut out = Output::new(
        "stress oracle",
        "stress-oracle",
        json!({"events": a.injected_events, "analytic": analytic, "experiments": experiments}),
    )?;
    out.tables = vec![t];
    Ok(out)
}

/// Payloads the scorecard draws on, by report stem.
pub const SCORECARD_SOURCES: [&str; 8] = [
    "scenario-run",
    "bench-evidence",
    "bench-audit",
    "stress-batching",
    "stress-fairness",
    "stress-fees",
    "stress-availability",
    "stress-oracle",
];

/// Computes every source payload in-process. Sources that cannot run with
/// this config (fairness without a premium) come back as `None`.
pub fn compute_sources(
    cfg: &RunConfig,
) -> Result<Vec<(&'static str, Option<Value>)>, CommandError> {
    let mut out = Vec::new();
    for stem in SCORECARD_SOURCES {
        let result = match stem {
            "scenario-run" => scenario_run(cfg),
            "bench-evidence" => bench_evidence(cfg),
            "bench-audit" => bench_audit(cfg),
            "stress-batching" => stress_batching(cfg),
            "stress-fairness" if cfg.analytics.fairness.premium.is_none() => {
                out.push((stem, None));
                continue;
            }
            "stress-fairness" => stress_fairness(cfg),
            "stress-fees" => stress_fees(cfg),
            "stress-availability" => stress_availability(cfg),
            "stress-oracle" => stress_oracle(cfg),
            _ => unreachable!("every source stem is handled"),
        };
        out.push((stem, Some(result?.payload)));
    }
    Ok(out)
}

fn pick<T: serde::de::DeserializeOwned>(v: Option<&Value>, pointer: &str) -> Option<T> {
    v.and_then(|v| v.pointer(pointer))
        .and_then(|x| serde_json::from_value(x.clone()).ok())
}

fn subset(v: Option<&Value>, keys: &[&str]) -> Option<Value> {
    let obj = v?.as_object()?;
    Some(Value::Object(
        keys.iter()
            .filter_map(|k| obj.get(*k).map(|x| ((*k).to_owned(), x.clone())))
            .collect(),
    ))
}

pub fn report_scorecard(sources: &[(&'static str, Option<Value>)]) -> CmdResult {
    let get = |stem: &str| {
        sources
            .iter()
            .find(|(s, _)| *s == stem)
            .and_then(|(_, v)| v.as_ref())
    };
    let scenario = get("scenario-run");
    let inputs = ScorecardInputs {
        core: pick::<CoreMetrics>(scenario, "/metrics"),
        evidence: subset(
            get("bench-evidence"),
            &["n", "fetched", "matched", "R", "M", "V", "failures"],
        ),
        negative_cases: scenario
            .and_then(|s| s.get("negative_cases"))
            .and_then(|n| subset(Some(n), &["rejected", "total", "deviations"])),
        audit: get("bench-audit").cloned(),
        batching: pick::<Vec<BatchingRow>>(get("stress-batching"), "/analytic"),
        fairness: get("stress-fairness").cloned(),
        costs: pick::<Vec<CostRow>>(get("stress-fees"), "/rows"),
        availability: pick::<Vec<AvailabilityRow>>(get("stress-availability"), "/rows"),
        detection: pick::<Vec<DetectionRow>>(get("stress-oracle"), "/analytic"),
    };
    let card = scorecard(&inputs);
    let mut out = Output::new("report scorecard", "report-scorecard", &card)?;
    let mut t = Table::new(
        "scorecard",
        "Scorecard",
        &[
            "Principle",
            "Operational check",
            "Status",
            "Results",
            "Missing",
        ],
    );
    for r in &card.rows {
        t.push(vec![
            format!("{:?}", r.principle),
            r.check.clone(),
            format!("{:?}", r.status),
            r.results.keys().cloned().collect::<Vec<_>>().join(", "),
            r.missing.join(", "),
        ]);
    }
    out.tables = vec![t];
    if let Some(c) = &inputs.core {
        out.fact("C", fmt_opt(c.completeness));
        out.fact("V", fmt_opt(c.verifiability));
    }
    Ok(out)
}

//! Closed-form metrics and stress models: completeness and evidence rates,
//! anchoring delay, fee cost, the fairness break-even, detection probability,
//! and the principle-keyed scorecard that gathers them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::batcher::{analytic_delay, BatchPolicy};
use crate::evidence::{analytic_availability, expected_tries};
use crate::stats::ratio;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("inclusion at {t_included} precedes arrival at {t_arrive}")]
    NegativeDelay { t_arrive: f64, t_included: f64 },
}

fn domain(msg: impl Into<String>) -> AnalyticsError {
    AnalyticsError::Domain(msg.into())
}

fn unit_interval(name: &str, x: f64) -> Result<(), AnalyticsError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(domain(format!("{name} must be in [0, 1], got {x}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoreMetricsInput {
    pub n_b: u64,
    pub n_b_full: u64,
    pub n_e: u64,
    pub n_e_fetch: u64,
    pub n_e_cid: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreMetrics {
    #[serde(rename = "C")]
    pub completeness: Option<f64>,
    #[serde(rename = "R")]
    pub retrievability: Option<f64>,
    #[serde(rename = "M")]
    pub match_rate: Option<f64>,
    #[serde(rename = "V")]
    pub verifiability: Option<f64>,
}

/// Rates with a zero denominator are `None`.
pub fn core_metrics(input: &CoreMetricsInput) -> Result<CoreMetrics, AnalyticsError> {
    let i = input;
    if i.n_b_full > i.n_b || i.n_e_fetch > i.n_e || i.n_e_cid > i.n_e_fetch {
        return Err(domain(format!("inconsistent counts {i:?}")));
    }
    Ok(CoreMetrics {
        completeness: ratio(i.n_b_full, i.n_b),
        retrievability: ratio(i.n_e_fetch, i.n_e),
        match_rate: ratio(i.n_e_cid, i.n_e_fetch),
        verifiability: ratio(i.n_e_cid, i.n_e),
    })
}

pub fn anchoring_delay(t_arrive: f64, t_included: f64) -> Result<f64, AnalyticsError> {
    if t_included < t_arrive {
        return Err(AnalyticsError::NegativeDelay {
            t_arrive,
            t_included,
        });
    }
    Ok(t_included - t_arrive)
}

pub const DEFAULT_ETH_USD: f64 = 1_850.0;
/// Thirteen commitments at the calibrated per-commitment gas.
pub const DEFAULT_G_BATCH: u64 = 816_933;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    #[serde(rename = "G_batch")]
    pub g_batch: u64,
    /// Effective gas price in gwei.
    #[serde(rename = "g")]
    pub gas_price_gwei: f64,
    /// ETH to USD.
    #[serde(rename = "P")]
    pub eth_usd: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            g_batch: DEFAULT_G_BATCH,
            gas_price_gwei: 1.0,
            eth_usd: DEFAULT_ETH_USD,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if !(self.gas_price_gwei >= 0.0) || !(self.eth_usd >= 0.0) {
            return Err(domain(format!(
                "cost parameters must be >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// USD cost of one batch.
pub fn cost_batch(params: &CostParams) -> f64 {
    params.g_batch as f64 * params.gas_price_gwei * 1e-9 * params.eth_usd
}

pub fn cost_per_cid(params: &CostParams, n: u64) -> Result<f64, AnalyticsError> {
    if n == 0 {
        return Err(domain("per-commitment cost needs n >= 1"));
    }
    Ok(cost_batch(params) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub gas_price_gwei: f64,
    pub cost_per_batch_usd: f64,
    pub cost_per_cid_usd: f64,
}

pub const REFERENCE_GAS_PRICES: [f64; 5] = [0.001, 0.01, 0.1, 0.5, 1.0];

/// One row per gas price; `params.gas_price_gwei` is ignored.
pub fn cost_table(
    gas_prices: &[f64],
    params: &CostParams,
    n: u64,
) -> Result<Vec<CostRow>, AnalyticsError> {
    gas_prices
        .iter()
        .map(|&g| {
            let p = CostParams {
                gas_price_gwei: g,
                ..*params
            };
            p.validate()?;
            Ok(CostRow {
                gas_price_gwei: g,
                cost_per_batch_usd: cost_batch(&p),
                cost_per_cid_usd: cost_per_cid(&p, n)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessParams {
    /// Price premium in USD per pound. No default.
    #[serde(rename = "premium")]
    pub premium_usd_per_lb: f64,
    pub alpha: f64,
    #[serde(rename = "batch_mass")]
    pub batch_mass_lb: f64,
    #[serde(rename = "C_batch")]
    pub c_batch_usd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessOutcome {
    pub ok: bool,
    pub mass_threshold_lb: f64,
    pub premium_share_usd: f64,
}

/// Anchoring is fair when it costs no more than `alpha` of the batch premium.
pub fn fairness_check(params: &FairnessParams) -> Result<FairnessOutcome, AnalyticsError> {
    let p = params;
    if !(p.premium_usd_per_lb > 0.0) {
        return Err(domain(format!(
            "premium must be > 0, got {}",
            p.premium_usd_per_lb
        )));
    }
    if !(p.alpha > 0.0 && p.alpha <= 1.0) {
        return Err(domain(format!("alpha must be in (0, 1], got {}", p.alpha)));
    }
    if !(p.batch_mass_lb >= 0.0) || !(p.c_batch_usd >= 0.0) {
        return Err(domain("batch mass and batch cost must be >= 0"));
    }
    let share = p.alpha * p.premium_usd_per_lb * p.batch_mass_lb;
    Ok(FairnessOutcome {
        ok: p.c_batch_usd <= share,
        mass_threshold_lb: p.c_batch_usd / (p.alpha * p.premium_usd_per_lb),
        premium_share_usd: share,
    })
}

/// Probability that a false event is caught: rejected at the gate with
/// probability `v`, otherwise audited with probability `s`.
pub fn detection_prob(v: f64, s: f64) -> Result<f64, AnalyticsError> {
    unit_interval("v", v)?;
    unit_interval("s", s)?;
    Ok(v + (1.0 - v) * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub v: f64,
    pub s: f64,
    pub d: f64,
}

pub const REFERENCE_DETECTION_GRID: [(f64, f64); 4] =
    [(0.2, 0.01), (0.2, 0.10), (0.6, 0.01), (0.6, 0.10)];

pub fn detection_table(grid: &[(f64, f64)]) -> Result<Vec<DetectionRow>, AnalyticsError> {
    grid.iter()
        .map(|&(v, s)| {
            Ok(DetectionRow {
                v,
                s,
                d: detection_prob(v, s)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchingRow {
    pub lambda: f64,
    pub w_max: f64,
    pub e_w: f64,
    pub w_p95: f64,
    pub e_d: f64,
    pub d_p95: f64,
}

pub const REFERENCE_ARRIVAL_RATES: [f64; 6] = [1.0, 10.0, 50.0, 200.0, 600.0, 1_200.0];

pub fn batching_table(
    lambdas: &[f64],
    policy: &BatchPolicy,
    s_include: f64,
) -> Result<Vec<BatchingRow>, AnalyticsError> {
    lambdas
        .iter()
        .map(|&lambda| {
            let d = analytic_delay(lambda, policy, s_include).map_err(|e| domain(e.to_string()))?;
            Ok(BatchingRow {
                lambda,
                w_max: d.w_max,
                e_w: d.e_w,
                w_p95: d.w_p95,
                e_d: d.e_d,
                d_p95: d.d_p95,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityRow {
    pub p: f64,
    pub k: u32,
    pub p_retrievable: f64,
    pub expected_tries: f64,
}

pub const REFERENCE_AVAILABILITY: [f64; 3] = [0.95, 0.98, 0.99];

pub fn availability_table(ps: &[f64], ks: &[u32]) -> Result<Vec<AvailabilityRow>, AnalyticsError> {
    let mut rows = Vec::with_capacity(ps.len() * ks.len());
    for &p in ps {
        for &k in ks {
            let err = |e: crate::evidence::StoreError| domain(e.to_string());
            rows.push(AvailabilityRow {
                p,
                k,
                p_retrievable: analytic_availability(p, k).map_err(err)?,
                expected_tries: expected_tries(p, k).map_err(err)?,
            });
        }
    }
    Ok(rows)
}

/// Four decimals, or six when four would print a misleading `1.0000`.
pub fn format_probability(x: f64) -> String {
    let short = format!("{x:.4}");
    if short == "1.0000" && x < 1.0 {
        format!("{x:.6}")
    } else {
        short
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Principle {
    Transparency,
    Accountability,
    Fairness,
    Ethics,
    Safety,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Reported,
    MissingInput,
    /// No quantitative check applies.
    Qualitative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorecardRow {
    pub principle: Principle,
    pub check: String,
    pub status: RowStatus,
    pub results: BTreeMap<String, Value>,
    pub missing: Vec<String>,
}

/// Artifacts gathered from scenario, benchmark and stress runs. Absent ones
/// are reported as missing in the rows that need them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScorecardInputs {
    pub core: Option<CoreMetrics>,
    pub evidence: Option<Value>,
    pub negative_cases: Option<Value>,
    pub audit: Option<Value>,
    pub batching: Option<Vec<BatchingRow>>,
    pub fairness: Option<Value>,
    pub costs: Option<Vec<CostRow>>,
    pub availability: Option<Vec<AvailabilityRow>>,
    pub detection: Option<Vec<DetectionRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub rows: Vec<ScorecardRow>,
}

impl Scorecard {
    pub fn row(&self, principle: Principle) -> Option<&ScorecardRow> {
        self.rows.iter().find(|r| r.principle == principle)
    }
}

struct RowBuilder {
    row: ScorecardRow,
}

impl RowBuilder {
    fn new(principle: Principle, check: &str) -> Self {
        RowBuilder {
            row: ScorecardRow {
                principle,
                check: check.to_owned(),
                status: RowStatus::Reported,
                results: BTreeMap::new(),
                missing: Vec::new(),
            },
        }
    }

    fn put<T: Serialize>(&mut self, key: &str, value: &Option<T>) {
        match value {
            Some(v) => {
                let v = serde_json::to_value(v).expect("scorecard values serialize");
                self.row.results.insert(key.to_owned(), v);
            }
            None => self.row.missing.push(key.to_owned()),
        }
    }

    fn finish(mut self) -> ScorecardRow {
        if !self.row.missing.is_empty() {
            self.row.status = RowStatus::MissingInput;
        }
        self.row
    }
}

pub fn scorecard(inputs: &ScorecardInputs) -> Scorecard {
    let mut t = RowBuilder::new(
        Principle::Transparency,
        "complete provenance chain and verifiable evidence linkage",
    );
    t.put("core_metrics", &inputs.core);
    t.put("evidence", &inputs.evidence);

    let mut a = RowBuilder::new(
        Principle::Accountability,
        "attributable actions, unauthorised actions rejected, audit reconstruction feasible",
    );
    a.put("negative_cases", &inputs.negative_cases);
    a.put("audit_query_latency", &inputs.audit);
    a.put("detection", &inputs.detection);

    let mut f = RowBuilder::new(
        Principle::Fairness,
        "low operational burden and near real time recording",
    );
    f.put("batching_delay", &inputs.batching);
    f.put("fee_fairness", &inputs.fairness);

    let mut e = RowBuilder::new(
        Principle::Ethics,
        "supports fair trade outcomes beyond documentation",
    );
    e.row.status = RowStatus::Qualitative;

    let mut s = RowBuilder::new(
        Principle::Safety,
        "cost viability and resilience under churn",
    );
    s.put("cost_sensitivity", &inputs.costs);
    s.put("availability", &inputs.availability);

    Scorecard {
        rows: vec![t.finish(), a.finish(), f.finish(), e.row, s.finish()],
    }
}

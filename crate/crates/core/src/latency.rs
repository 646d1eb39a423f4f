//! Simulated latency distributions shared by the evidence store and the RPC model.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

const BYTES_PER_MIB: f64 = 1024.0 * 1024.0;

/// A latency distribution in milliseconds.
///
/// `per_mib_ms` adds a deterministic size-proportional transfer term, so that
/// larger evidence objects take longer to upload and fetch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyModel {
    Constant {
        ms: f64,
        #[serde(default)]
        per_mib_ms: f64,
    },
    LogNormal {
        median_ms: f64,
        sigma: f64,
        #[serde(default)]
        per_mib_ms: f64,
    },
}

impl LatencyModel {
    pub const ZERO: LatencyModel = LatencyModel::Constant {
        ms: 0.0,
        per_mib_ms: 0.0,
    };

    pub fn constant(ms: f64) -> Self {
        LatencyModel::Constant {
            ms,
            per_mib_ms: 0.0,
        }
    }

    pub fn log_normal(median_ms: f64, sigma: f64) -> Self {
        LatencyModel::LogNormal {
            median_ms,
            sigma,
            per_mib_ms: 0.0,
        }
    }

    pub fn with_per_mib(self, per_mib: f64) -> Self {
        match self {
            LatencyModel::Constant { ms, .. } => LatencyModel::Constant {
                ms,
                per_mib_ms: per_mib,
            },
            LatencyModel::LogNormal {
                median_ms, sigma, ..
            } => LatencyModel::LogNormal {
                median_ms,
                sigma,
                per_mib_ms: per_mib,
            },
        }
    }

    /// Draws one latency sample for a call moving `bytes` of payload.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, bytes: usize) -> f64 {
        let (base, per_mib) = match *self {
            LatencyModel::Constant { ms, per_mib_ms } => (ms, per_mib_ms),
            LatencyModel::LogNormal {
                median_ms,
                sigma,
                per_mib_ms,
            } => {
                let base = if sigma > 0.0 && median_ms > 0.0 {
                    // median of LogNormal(mu, sigma) is exp(mu)
                    LogNormal::new(median_ms.ln(), sigma)
                        .map(|d| d.sample(rng))
                        .unwrap_or(median_ms)
                } else {
                    median_ms
                };
                (base, per_mib_ms)
            }
        };
        base + per_mib * bytes as f64 / BYTES_PER_MIB
    }

    /// Distribution mean for a zero-byte call.
    pub fn mean(&self) -> f64 {
        match *self {
            LatencyModel::Constant { ms, .. } => ms,
            LatencyModel::LogNormal {
                median_ms, sigma, ..
            } => median_ms * (sigma * sigma / 2.0).exp(),
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            LatencyModel::Constant { ms, per_mib_ms } => ms >= 0.0 && per_mib_ms >= 0.0,
            LatencyModel::LogNormal {
                median_ms,
                sigma,
                per_mib_ms,
            } => median_ms >= 0.0 && sigma >= 0.0 && per_mib_ms >= 0.0,
        }
    }
}

/// Accumulates simulated milliseconds charged to one caller.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct LatencyMeter {
    pub total_ms: f64,
    pub calls: u64,
}

impl LatencyMeter {
    pub fn charge(&mut self, ms: f64) {
        self.total_ms += ms;
        self.calls += 1;
    }
}

//! Simulated JSON-RPC latency. Calls are charged to a per-session meter and
//! never touch chain state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::latency::{LatencyMeter, LatencyModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpcModel {
    pub rtt: LatencyModel,
    /// Maximum calls in flight at once.
    pub concurrency: usize,
}

impl Default for RpcModel {
    fn default() -> Self {
        RpcModel {
            rtt: LatencyModel::log_normal(230.0, 0.2),
            concurrency: 8,
        }
    }
}

impl RpcModel {
    pub fn constant(ms: f64, concurrency: usize) -> Self {
        RpcModel {
            rtt: LatencyModel::constant(ms),
            concurrency,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RpcSession {
    pub model: RpcModel,
    pub meter: LatencyMeter,
    rng: ChaCha8Rng,
}

impl RpcSession {
    pub fn new(model: RpcModel, seed: u64) -> Self {
        RpcSession {
            model,
            meter: LatencyMeter::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// One round trip, charged to the meter.
    pub fn call(&mut self) -> f64 {
        let ms = self.model.rtt.sample(&mut self.rng, 0);
        self.meter.charge(ms);
        ms
    }

    /// `n` independent calls issued in sequential waves of at most
    /// `concurrency`; each wave lasts as long as its slowest call. Returns the
    /// elapsed time, which is also what the meter is charged.
    pub fn waves(&mut self, n: usize) -> f64 {
        let c = self.model.concurrency.max(1);
        let mut elapsed = 0.0;
        let mut left = n;
        while left > 0 {
            let wave = left.min(c);
            let slowest = (0..wave)
                .map(|_| self.model.rtt.sample(&mut self.rng, 0))
                .fold(0.0, f64::max);
            elapsed += slowest;
            left -= wave;
        }
        self.meter.total_ms += elapsed;
        self.meter.calls += n as u64;
        elapsed
    }
}

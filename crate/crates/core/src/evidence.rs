//! Content-addressed evidence store.
//!
//! Objects are addressed by the SHA-256 digest of their bytes and pinned on
//! `k` simulated providers. Each provider is independently reachable with its
//! own probability on every retrieval attempt; retrieval walks the pinned
//! providers in registration order and stops at the first success. Churn only
//! ever affects whether bytes come back, never which bytes: integrity is
//! checked by recomputing the CID from whatever was returned.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::latency::LatencyModel;
use crate::stats::{ratio, Percentiles};

pub const CID_PREFIX: &str = "cid1-";

/// Content identifier: `cid1-` followed by the lowercase hex SHA-256 of the bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cid([u8; 32]);

impl Cid {
    pub fn digest(&self) -> &[u8; 32] {
        &self.0
    }
}

pub fn compute_cid(bytes: &[u8]) -> Cid {
    Cid(Sha256::digest(bytes).into())
}

pub fn verify(cid: &Cid, bytes: &[u8]) -> bool {
    compute_cid(bytes) == *cid
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{CID_PREFIX}{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed CID: {0}")]
pub struct ParseCidError(String);

impl FromStr for Cid {
    type Err = ParseCidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex_part = s
            .strip_prefix(CID_PREFIX)
            .ok_or_else(|| ParseCidError(s.to_string()))?;
        if hex_part.len() != 64 || hex_part.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(ParseCidError(s.to_string()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(hex_part, &mut out).map_err(|_| ParseCidError(s.to_string()))?;
        Ok(Cid(out))
    }
}

impl Serialize for Cid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceObject {
    pub bytes: Vec<u8>,
}

impl EvidenceObject {
    pub fn new(bytes: Vec<u8>) -> Self {
        EvidenceObject { bytes }
    }

    pub fn size(&self) -> usize {
        self.bytes.len()
    }

    pub fn cid(&self) -> Cid {
        compute_cid(&self.bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("pin policy needs {requested} providers but only {available} are configured")]
    InsufficientProviders { requested: usize, available: usize },
    #[error("{0} was never pinned on any provider")]
    UnknownCid(Cid),
    #[error("{cid} is pinned but all {tries} retrieval attempts failed")]
    Unavailable { cid: Cid, tries: usize },
    #[error("domain error: {0}")]
    Domain(String),
}

/// Static description of a pinning provider, as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub id: String,
    pub availability: f64,
    pub fetch_latency: LatencyModel,
    pub upload_latency: LatencyModel,
}

impl ProviderConfig {
    /// Always-up provider with latency scales in the range observed for a
    /// hosted pinning service.
    pub fn reference(id: impl Into<String>) -> Self {
        ProviderConfig {
            id: id.into(),
            availability: 1.0,
            fetch_latency: LatencyModel::log_normal(330.0, 0.2).with_per_mib(80.0),
            upload_latency: LatencyModel::log_normal(450.0, 0.35).with_per_mib(950.0),
        }
    }

    pub fn with_availability(mut self, p: f64) -> Self {
        self.availability = p;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ProviderModel {
    pub config: ProviderConfig,
    pinned: BTreeMap<Cid, Arc<[u8]>>,
    forced_down: bool,
}

impl ProviderModel {
    pub fn new(config: ProviderConfig) -> Result<Self, StoreError> {
        if !(0.0..=1.0).contains(&config.availability) {
            return Err(StoreError::Domain(format!(
                "provider {} availability {} outside [0, 1]",
                config.id, config.availability
            )));
        }
        if !config.fetch_latency.is_valid() || !config.upload_latency.is_valid() {
            return Err(StoreError::Domain(format!(
                "provider {} has a negative latency parameter",
                config.id
            )));
        }
        Ok(ProviderModel {
            config,
            pinned: BTreeMap::new(),
            forced_down: false,
        })
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn is_pinned(&self, cid: &Cid) -> bool {
        self.pinned.contains_key(cid)
    }

    pub fn pinned_count(&self) -> usize {
        self.pinned.len()
    }

    fn attempt<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        // one draw per attempt keeps RNG consumption independent of outages
        let up = rng.random_bool(self.config.availability);
        up && !self.forced_down
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinPolicy {
    pub k: usize,
}

impl Default for PinPolicy {
    fn default() -> Self {
        PinPolicy { k: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PutOutcome {
    pub cid: Cid,
    /// Indices of the providers that pinned the object.
    pub providers: Vec<usize>,
    /// One upload sample per pinning provider.
    pub upload_ms: Vec<f64>,
}

impl PutOutcome {
    /// Pins proceed in parallel, so the put completes with the slowest one.
    pub fn latency_ms(&self) -> f64 {
        self.upload_ms.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub bytes: Arc<[u8]>,
    pub tries: usize,
    pub provider: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EvidenceStore {
    providers: Vec<ProviderModel>,
}

impl EvidenceStore {
    pub fn new(configs: impl IntoIterator<Item = ProviderConfig>) -> Result<Self, StoreError> {
        let providers = configs
            .into_iter()
            .map(ProviderModel::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EvidenceStore { providers })
    }

    pub fn providers(&self) -> &[ProviderModel] {
        &self.providers
    }

    pub fn set_forced_down(&mut self, provider: usize, down: bool) {
        if let Some(p) = self.providers.get_mut(provider) {
            p.forced_down = down;
        }
    }

    pub fn set_availability(&mut self, provider: usize, p: f64) -> Result<(), StoreError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(StoreError::Domain(format!(
                "availability {p} outside [0, 1]"
            )));
        }
        if let Some(m) = self.providers.get_mut(provider) {
            m.config.availability = p;
        }
        Ok(())
    }

    /// Pins `bytes` on the first `k` providers in registration order.
    pub fn put<R: Rng + ?Sized>(
        &mut self,
        bytes: &[u8],
        policy: PinPolicy,
        rng: &mut R,
    ) -> Result<PutOutcome, StoreError> {
        if policy.k == 0 {
            return Err(StoreError::Domain(
                "replication factor k must be >= 1".into(),
            ));
        }
        if policy.k > self.providers.len() {
            return Err(StoreError::InsufficientProviders {
                requested: policy.k,
                available: self.providers.len(),
            });
        }
        let cid = compute_cid(bytes);
        let shared: Arc<[u8]> = Arc::from(bytes);
        let mut upload_ms = Vec::with_capacity(policy.k);
        for provider in &mut self.providers[..policy.k] {
            upload_ms.push(provider.config.upload_latency.sample(rng, bytes.len()));
            provider.pinned.insert(cid, Arc::clone(&shared));
        }
        Ok(PutOutcome {
            cid,
            providers: (0..policy.k).collect(),
            upload_ms,
        })
    }

    /// Walks the pinned providers in registration order until one answers.
    pub fn get<R: Rng + ?Sized>(&self, cid: &Cid, rng: &mut R) -> Result<Retrieval, StoreError> {
        let mut tries = 0;
        let mut latency_ms = 0.0;
        for (idx, provider) in self.providers.iter().enumerate() {
            let Some(bytes) = provider.pinned.get(cid) else {
                continue;
            };
            tries += 1;
            latency_ms += provider.config.fetch_latency.sample(rng, bytes.len());
            if provider.attempt(rng) {
                return Ok(Retrieval {
                    bytes: Arc::clone(bytes),
                    tries,
                    provider: idx,
                    latency_ms,
                });
            }
        }
        if tries == 0 {
            Err(StoreError::UnknownCid(*cid))
        } else {
            Err(StoreError::Unavailable { cid: *cid, tries })
        }
    }

    /// Replaces the stored payload for `cid` on every provider that pins it.
    /// Test and scenario hook for tamper injection; returns whether anything
    /// was pinned.
    pub fn tamper(&mut self, cid: &Cid, edit: impl Fn(&mut Vec<u8>)) -> bool {
        let mut hit = false;
        for provider in &mut self.providers {
            if let Some(bytes) = provider.pinned.get_mut(cid) {
                let mut copy = bytes.to_vec();
                edit(&mut copy);
                *bytes = Arc::from(copy);
                hit = true;
            }
        }
        hit
    }

    pub fn object_count(&self) -> usize {
        let mut all: Vec<&Cid> = self
            .providers
            .iter()
            .flat_map(|p| p.pinned.keys())
            .collect();
        all.sort();
        all.dedup();
        all.len()
    }
}

/// Closed-form probability that at least one of `k` independent pins answers.
pub fn analytic_availability(p: f64, k: u32) -> Result<f64, StoreError> {
    if !(0.0..=1.0).contains(&p) || k == 0 {
        return Err(StoreError::Domain(format!(
            "availability needs 0 <= p <= 1 and k >= 1, got p={p}, k={k}"
        )));
    }
    Ok(1.0 - (1.0 - p).powi(k as i32))
}

/// Expected number of attempts, conditioned on the retrieval succeeding.
pub fn expected_tries(p: f64, k: u32) -> Result<f64, StoreError> {
    if !(p > 0.0 && p <= 1.0) || k == 0 {
        return Err(StoreError::Domain(format!(
            "expected tries needs 0 < p <= 1 and k >= 1, got p={p}, k={k}"
        )));
    }
    let q = 1.0 - p;
    // P(first success on attempt i) = q^(i-1) p; the denominator is the same
    // sum, which equals 1 - q^k but keeps k = 1 exact
    let (weighted, success) = (1..=k).fold((0.0, 0.0), |(w, s), i| {
        let term = q.powi(i as i32 - 1) * p;
        (w + i as f64 * term, s + term)
    });
    Ok(weighted / success)
}

/// Per-trial RNG: the seed fixes the key and the trial index picks the stream,
/// so trials are independent and can be evaluated in any order.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityEstimate {
    pub p: f64,
    pub k: u32,
    pub trials: u64,
    pub successes: u64,
    pub frequency: f64,
    /// Mean attempts over successful retrievals.
    pub mean_tries: Option<f64>,
}

/// Monte-Carlo retrieval over a store with `k` identical providers.
pub fn simulate_availability(
    p: f64,
    k: u32,
    trials: u64,
    seed: u64,
) -> Result<AvailabilityEstimate, StoreError> {
    analytic_availability(p, k)?;
    let configs = (0..k).map(|i| ProviderConfig {
        id: format!("provider-{i}"),
        availability: p,
        fetch_latency: LatencyModel::ZERO,
        upload_latency: LatencyModel::ZERO,
    });
    let mut store = EvidenceStore::new(configs)?;
    let mut setup = ChaCha8Rng::seed_from_u64(seed);
    let cid = store
        .put(
            b"availability probe",
            PinPolicy { k: k as usize },
            &mut setup,
        )?
        .cid;

    let mut successes = 0u64;
    let mut tries_total = 0u64;
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial);
        match store.get(&cid, &mut rng) {
            Ok(r) => {
                successes += 1;
                tries_total += r.tries as u64;
            }
            Err(StoreError::Unavailable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(AvailabilityEstimate {
        p,
        k,
        trials,
        successes,
        frequency: successes as f64 / trials.max(1) as f64,
        mean_tries: ratio(tries_total, successes),
    })
}

/// Forces one provider offline from a given trial index onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outage {
    pub provider: usize,
    pub from_trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceLoopConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub policy: PinPolicy,
    #[serde(default)]
    pub outage: Option<Outage>,
}

pub const KIB: usize = 1024;
pub const MIB: usize = 1024 * 1024;

impl Default for EvidenceLoopConfig {
    fn default() -> Self {
        EvidenceLoopConfig {
            sizes: vec![10 * KIB, 100 * KIB, MIB, 5 * MIB],
            repeats: 10,
            policy: PinPolicy { k: 1 },
            outage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeLatency {
    pub size: usize,
    pub upload_ms: Option<Percentiles>,
    pub fetch_ms: Option<Percentiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub n: u64,
    pub fetched: u64,
    pub matched: u64,
    pub per_size: Vec<SizeLatency>,
    pub upload_ms: Option<Percentiles>,
    pub fetch_ms: Option<Percentiles>,
    #[serde(rename = "R")]
    pub retrievability: Option<f64>,
    #[serde(rename = "M")]
    pub match_rate: Option<f64>,
    #[serde(rename = "V")]
    pub verifiability: Option<f64>,
    pub failures: u64,
}

/// Deterministic pseudo-random payload for trial `index` of a run seeded `seed`.
pub fn synthetic_payload(seed: u64, index: u64, size: usize) -> Vec<u8> {
    let mut rng = trial_rng(seed ^ 0x6576_6964_656e_6365, index);
    let mut bytes = vec![0u8; size];
    rng.fill_bytes(&mut bytes);
    bytes
}

/// Upload, fetch and verify `repeats` objects of every size.
pub fn run_evidence_loop(
    store: &mut EvidenceStore,
    config: &EvidenceLoopConfig,
    seed: u64,
) -> Result<EvidenceReport, StoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = 0u64;
    let mut fetched = 0u64;
    let mut matched = 0u64;
    let mut all_up = Vec::new();
    let mut all_fetch = Vec::new();
    let mut per_size = Vec::with_capacity(config.sizes.len());
    let mut trial = 0usize;

    for &size in &config.sizes {
        let mut up = Vec::with_capacity(config.repeats);
        let mut fetch = Vec::with_capacity(config.repeats);
        for _ in 0..config.repeats {
            if let Some(outage) = config.outage {
                if trial >= outage.from_trial {
                    store.set_forced_down(outage.provider, true);
                }
            }
            let bytes = synthetic_payload(seed, trial as u64, size);
            let expected = compute_cid(&bytes);
            let put = store.put(&bytes, config.policy, &mut rng)?;
            debug_assert_eq!(put.cid, expected);
            up.push(put.latency_ms());
            n += 1;
            match store.get(&expected, &mut rng) {
                Ok(r) => {
                    fetched += 1;
                    fetch.push(r.latency_ms);
                    if verify(&expected, &r.bytes) {
                        matched += 1;
                    }
                }
                Err(StoreError::Unavailable { .. }) => {}
                Err(e) => return Err(e),
            }
            trial += 1;
        }
        all_up.extend_from_slice(&up);
        all_fetch.extend_from_slice(&fetch);
        per_size.push(SizeLatency {
            size,
            upload_ms: Percentiles::of(&up),
            fetch_ms: Percentiles::of(&fetch),
        });
    }

    Ok(EvidenceReport {
        n,
        fetched,
        matched,
        per_size,
        upload_ms: Percentiles::of(&all_up),
        fetch_ms: Percentiles::of(&all_fetch),
        retrievability: ratio(fetched, n),
        match_rate: ratio(matched, fetched),
        verifiability: ratio(matched, n),
        failures: n - matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn always_up(n: usize) -> EvidenceStore {
        EvidenceStore::new((0..n).map(|i| ProviderConfig::reference(format!("p{i}")))).unwrap()
    }

    #[test]
    fn cid_is_pure_and_prefixed() {
        let a = compute_cid(b"coffee lot 7");
        assert_eq!(a, compute_cid(b"coffee lot 7"));
        let s = a.to_string();
        assert!(s.starts_with("cid1-"));
        assert_eq!(s.len(), 5 + 64);
        assert_eq!(s.parse::<Cid>().unwrap(), a);
    }

    #[test]
    fn empty_payload_has_fixed_cid() {
        assert_eq!(
            compute_cid(&[]).to_string(),
            "cid1-e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn single_bit_flip_changes_cid() {
        let b = b"certificate of origin".to_vec();
        let mut flipped = b.clone();
        flipped[3] ^= 0x01;
        assert_ne!(compute_cid(&b), compute_cid(&flipped));
    }

    #[test]
    fn malformed_cids_rejected() {
        assert!("cid0-00".parse::<Cid>().is_err());
        assert!("cid1-zz".parse::<Cid>().is_err());
        let upper = format!("cid1-{}", "AB".repeat(32));
        assert!(upper.parse::<Cid>().is_err());
    }

    #[test]
    fn verify_cases() {
        let bytes = b"inspection report".to_vec();
        let cid = compute_cid(&bytes);
        assert!(verify(&cid, &bytes));
        let mut tampered = bytes.clone();
        tampered[0] ^= 0xff;
        assert!(!verify(&cid, &tampered));
        assert!(!verify(&compute_cid(b"other"), &bytes));
    }

    #[test]
    fn put_pins_first_k_providers() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut one = always_up(1);
        let out = one.put(b"x", PinPolicy { k: 1 }, &mut rng).unwrap();
        assert_eq!(out.providers, vec![0]);
        assert_eq!(out.upload_ms.len(), 1);

        let mut three = always_up(3);
        let out = three.put(b"y", PinPolicy { k: 2 }, &mut rng).unwrap();
        assert_eq!(out.providers, vec![0, 1]);
        let pins: Vec<bool> = three
            .providers()
            .iter()
            .map(|p| p.is_pinned(&out.cid))
            .collect();
        assert_eq!(pins, vec![true, true, false]);

        assert_eq!(
            three.put(b"z", PinPolicy { k: 4 }, &mut rng),
            Err(StoreError::InsufficientProviders {
                requested: 4,
                available: 3
            })
        );
    }

    #[test]
    fn get_success_first_try_when_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = always_up(2);
        let cid = store.put(b"doc", PinPolicy { k: 2 }, &mut rng).unwrap().cid;
        let r = store.get(&cid, &mut rng).unwrap();
        assert_eq!(r.tries, 1);
        assert_eq!(&*r.bytes, b"doc");
    }

    #[test]
    fn get_unavailable_vs_unknown() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = always_up(2);
        let cid = store.put(b"doc", PinPolicy { k: 2 }, &mut rng).unwrap().cid;
        store.set_availability(0, 0.0).unwrap();
        store.set_availability(1, 0.0).unwrap();
        assert_eq!(
            store.get(&cid, &mut rng),
            Err(StoreError::Unavailable { cid, tries: 2 })
        );
        let stranger = compute_cid(b"never stored");
        assert_eq!(
            store.get(&stranger, &mut rng),
            Err(StoreError::UnknownCid(stranger))
        );
    }

    #[test]
    fn fallback_charges_both_latencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mk = |id: &str, p: f64| ProviderConfig {
            id: id.into(),
            availability: p,
            fetch_latency: LatencyModel::constant(100.0),
            upload_latency: LatencyModel::ZERO,
        };
        let mut store = EvidenceStore::new([mk("a", 1.0), mk("b", 1.0)]).unwrap();
        let cid = store.put(b"doc", PinPolicy { k: 2 }, &mut rng).unwrap().cid;
        store.set_forced_down(0, true);
        let r = store.get(&cid, &mut rng).unwrap();
        assert_eq!((r.tries, r.provider), (2, 1));
        assert_eq!(r.latency_ms, 200.0);
    }

    #[test]
    fn tamper_breaks_match_not_retrieval() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = always_up(1);
        let cid = store
            .put(b"lab result", PinPolicy { k: 1 }, &mut rng)
            .unwrap()
            .cid;
        assert!(store.tamper(&cid, |b| b[0] ^= 1));
        let r = store.get(&cid, &mut rng).unwrap();
        assert!(!verify(&cid, &r.bytes));
    }

    #[test]
    fn analytic_availability_cells() {
        assert!((analytic_availability(0.95, 2).unwrap() - 0.9975).abs() < 1e-12);
        assert!((analytic_availability(0.99, 3).unwrap() - 0.999999).abs() < 1e-12);
        assert_eq!(analytic_availability(0.37, 1).unwrap(), 0.37);
        assert!(analytic_availability(1.2, 1).is_err());
        assert!(analytic_availability(0.5, 0).is_err());
    }

    #[test]
    fn expected_tries_cells() {
        // hand-evaluated: (0.95 + 2*0.05*0.95) / 0.9975
        assert!((expected_tries(0.95, 2).unwrap() - 1.047_619_047_6).abs() < 1e-9);
        assert_eq!(expected_tries(0.3, 1).unwrap(), 1.0);
        let t = expected_tries(0.98, 3).unwrap();
        assert!((t - 1.0204).abs() < 5e-5, "{t}");
        assert!(expected_tries(0.0, 2).is_err());
    }

    #[test]
    fn evidence_loop_pinned_no_churn() {
        let mut store = always_up(1);
        let cfg = EvidenceLoopConfig {
            sizes: vec![10 * KIB, 100 * KIB],
            repeats: 3,
            ..Default::default()
        };
        let r = run_evidence_loop(&mut store, &cfg, 1).unwrap();
        assert_eq!((r.n, r.fetched, r.matched, r.failures), (6, 6, 6, 0));
        assert_eq!(r.retrievability, Some(1.0));
        assert_eq!(r.match_rate, Some(1.0));
        assert_eq!(r.verifiability, Some(1.0));
        assert_eq!(r.per_size.len(), 2);
    }

    #[test]
    fn evidence_loop_outage_lowers_retrievability() {
        let mut store = always_up(1);
        let cfg = EvidenceLoopConfig {
            sizes: vec![KIB],
            repeats: 10,
            policy: PinPolicy { k: 1 },
            outage: Some(Outage {
                provider: 0,
                from_trial: 6,
            }),
        };
        let r = run_evidence_loop(&mut store, &cfg, 3).unwrap();
        assert_eq!(r.fetched, 6);
        assert_eq!(r.retrievability, Some(0.6));
        assert_eq!(r.match_rate, Some(1.0));
        assert_eq!(r.verifiability, Some(0.6));
    }

    #[test]
    fn evidence_loop_zero_repeats_is_empty() {
        let mut store = always_up(1);
        let cfg = EvidenceLoopConfig {
            repeats: 0,
            ..Default::default()
        };
        let r = run_evidence_loop(&mut store, &cfg, 3).unwrap();
        assert_eq!(r.n, 0);
        assert_eq!(r.retrievability, None);
        assert_eq!(r.match_rate, None);
        assert_eq!(r.verifiability, None);
        assert_eq!(r.upload_ms, None);
    }

    #[test]
    fn payloads_reproducible() {
        assert_eq!(synthetic_payload(9, 3, 64), synthetic_payload(9, 3, 64));
        assert_ne!(synthetic_payload(9, 3, 64), synthetic_payload(9, 4, 64));
    }
}

//! Desk-scale simulator for label-provenance anchoring: a simulated Layer-2
//! ledger running the actor/lifecycle/anchoring contract suite, a
//! content-addressed evidence store with churn, a batching engine, an audit
//! reconstructor, and the closed-form and Monte-Carlo stress models around them.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod auditor;
pub mod batcher;
pub mod bench;
pub mod cli;
pub mod contracts;
pub mod evidence;
pub mod ids;
pub mod latency;
pub mod ledger;
pub mod report;
pub mod rpc;
pub mod scenario;
pub mod stats;

//! Deterministic simulator and library for a permissioned-blockchain
//! ride-hailing network.
//!
//! The crate models the full transaction pipeline of an endorsement-based
//! permissioned ledger — proposal endorsement, ordering with block cutting,
//! validation, and commit — together with the ride-hailing chaincode that
//! runs on the endorsing peers, a discrete-event network simulation with
//! virtual time, and a load-testing harness that measures peer, orderer,
//! and event latency under configurable traffic.
//!
//! Everything runs in virtual time from a single seed: identical
//! `(seed, config)` inputs produce byte-identical ledgers, metrics files,
//! and reports.
//!
//! Module map:
//! - [`identity`] — organizations, membership registries, signing.
//! - [`ledger`] — versioned world state, read-write sets, MVCC validation,
//!   hash-chained block store.
//! - [`chaincode`] — the ride-hailing transaction logic with built-in
//!   access control and co-rider privacy.
//! - [`netsim`] — discrete-event scheduler, virtual clock, FIFO node
//!   servers, seeded RNG.
//! - [`txflow`] — endorsement collection, policies, block cutting, the
//!   simulated network pipeline.
//! - [`workload`] — traffic generators, benchmarks, restructuring sweeps,
//!   adversary scenarios.
//! - [`scenario`] — scripted end-to-end runs with ledger assertions.
//! - [`config`] — network topology and tuning knobs.

pub mod canonical;
pub mod chaincode;
pub mod config;
pub mod identity;
pub mod ledger;
pub mod netsim;
pub mod scenario;
pub mod txflow;
pub mod workload;

pub use canonical::Digest256;

//! World state and transaction simulation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical;

use super::key::StateKey;
use super::rwset::{ReadEntry, ReadWriteSet, Version, WriteEntry, WriteOp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedValue {
    #[serde(with = "canonical::hex_bytes")]
    pub bytes: Vec<u8>,
    pub version: Version,
}

/// The versioned key-value view materialized from all valid committed
/// writes. Deletions remove the entry; a read of a deleted key observes
/// "absent", exactly like a key never written.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    entries: BTreeMap<StateKey, VersionedValue>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &StateKey) -> Option<&VersionedValue> {
        self.entries.get(key)
    }

    pub fn version_of(&self, key: &StateKey) -> Option<Version> {
        self.entries.get(key).map(|v| v.version)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, &VersionedValue)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Apply one write at `version`. Versions of a key strictly increase
    /// because commits apply block by block, transaction by transaction.
    pub fn apply(&mut self, key: &StateKey, op: &WriteOp, version: Version) {
        if let Some(existing) = self.entries.get(key) {
            debug_assert!(existing.version < version, "version must increase");
        }
        match op {
            WriteOp::Put(bytes) => {
                self.entries.insert(
                    key.clone(),
                    VersionedValue {
                        bytes: bytes.clone(),
                        version,
                    },
                );
            }
            WriteOp::Delete => {
                self.entries.remove(key);
            }
        }
    }

    /// Seed an entry before any block is committed (version height 0).
    /// Every peer is seeded identically, so genesis state is part of the
    /// shared initial configuration, not of any block.
    pub fn seed(&mut self, key: StateKey, bytes: Vec<u8>) {
        self.entries.insert(
            key,
            VersionedValue {
                bytes,
                version: Version { height: 0, tx_index: 0 },
            },
        );
    }

    /// Canonical byte dump of the full state, for peer-equality checks.
    pub fn dump_canonical(&self) -> Vec<u8> {
        canonical::canonical_bytes(&self.entries)
    }
}

/// Records the reads and buffers the writes of one transaction executed
/// against an immutable state view. No mutation of the underlying state
/// ever happens here.
pub struct TxSimulator<'a> {
    state: &'a WorldState,
    reads: BTreeMap<StateKey, Option<Version>>,
    writes: BTreeMap<StateKey, WriteOp>,
    read_after_write: bool,
}

impl<'a> TxSimulator<'a> {
    pub fn new(state: &'a WorldState) -> Self {
        TxSimulator {
            state,
            reads: BTreeMap::new(),
            writes: BTreeMap::new(),
            read_after_write: false,
        }
    }

    /// Read a key. A key already written in this simulation returns the
    /// pending value and raises the read-after-write diagnostic; otherwise
    /// the committed value is returned and the observed version recorded
    /// (once per key).
    pub fn get(&mut self, key: &StateKey) -> Option<Vec<u8>> {
        if let Some(pending) = self.writes.get(key) {
            self.read_after_write = true;
            return match pending {
                WriteOp::Put(bytes) => Some(bytes.clone()),
                WriteOp::Delete => None,
            };
        }
        let committed = self.state.get(key);
        self.reads
            .entry(key.clone())
            .or_insert_with(|| committed.map(|v| v.version));
        committed.map(|v| v.bytes.clone())
    }

    pub fn put(&mut self, key: &StateKey, bytes: Vec<u8>) {
        self.writes.insert(key.clone(), WriteOp::Put(bytes));
    }

    pub fn delete(&mut self, key: &StateKey) {
        self.writes.insert(key.clone(), WriteOp::Delete);
    }

    pub fn into_rwset(self) -> ReadWriteSet {
        ReadWriteSet {
            reads: self
                .reads
                .into_iter()
                .map(|(key, version)| ReadEntry { key, version })
                .collect(),
            writes: self
                .writes
                .into_iter()
                .map(|(key, op)| WriteEntry { key, op })
                .collect(),
            read_after_write: self.read_after_write,
        }
    }
}

/// Commit-time check: the transaction stays valid only if every key it
/// read still carries the version it observed. Must be called in block
/// order, after applying the writes of all prior valid transactions in
/// the same block.
pub fn mvcc_validate(state: &WorldState, rwset: &ReadWriteSet) -> bool {
    rwset
        .reads
        .iter()
        .all(|r| state.version_of(&r.key) == r.version)
}

//! Read-write sets recorded during transaction simulation.

use serde::{Deserialize, Serialize};

use crate::canonical::{self, Digest256};

use super::key::StateKey;

/// Commit position of a write: the block height and the transaction's
/// index inside that block. Versions of a key strictly increase.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Version {
    pub height: u64,
    pub tx_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WriteOp {
    Put(#[serde(with = "canonical::hex_bytes")] Vec<u8>),
    /// Tombstone. A later read of the key observes "absent".
    Delete,
}

/// One recorded read: the key and the version observed, `None` when the
/// key was absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadEntry {
    pub key: StateKey,
    pub version: Option<Version>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteEntry {
    pub key: StateKey,
    pub op: WriteOp,
}

/// The effect of one simulated transaction. Keys are unique within each
/// list and sorted, so equal effects always encode to equal bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ReadWriteSet {
    pub reads: Vec<ReadEntry>,
    pub writes: Vec<WriteEntry>,
    /// Diagnostic: the transaction read a key it had already written in
    /// the same simulation. Surfaced in reports, never an error.
    pub read_after_write: bool,
}

impl ReadWriteSet {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::canonical_bytes(self)
    }

    pub fn digest(&self) -> Digest256 {
        Digest256::of(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn versions_order_by_height_then_index() {
        let a = Version { height: 1, tx_index: 9 };
        let b = Version { height: 2, tx_index: 0 };
        let c = Version { height: 2, tx_index: 1 };
        assert!(a < b && b < c);
    }

    #[test]
    fn equal_rwsets_have_equal_digests() {
        let k = StateKey::parse("User~m~u").unwrap();
        let mk = || ReadWriteSet {
            reads: vec![ReadEntry {
                key: k.clone(),
                version: Some(Version { height: 3, tx_index: 1 }),
            }],
            writes: vec![WriteEntry {
                key: k.clone(),
                op: WriteOp::Put(b"v".to_vec()),
            }],
            read_after_write: false,
        };
        assert_eq!(mk().digest(), mk().digest());
        assert_eq!(mk().canonical_bytes(), mk().canonical_bytes());
    }
}

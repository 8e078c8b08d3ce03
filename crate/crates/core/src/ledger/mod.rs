//! Versioned key-value world state, read-write sets, and the hash-chained
//! block store.
//!
//! Each peer holds a [`PeerLedger`]: the world state materialized from all
//! valid committed writes plus the chain of blocks that produced it.
//! Transaction logic never touches the state directly — it runs against a
//! [`TxSimulator`] that records every read with the version observed and
//! buffers every write, producing a [`ReadWriteSet`]. At commit time each
//! transaction is revalidated: it stays valid only if every key it read
//! still carries the version it saw (multi-version concurrency control).

mod block;
mod key;
mod rwset;
mod state;

pub use block::{Block, BlockStore, ChainBreak, LedgerTx, PeerLedger};
pub use key::{KeyError, Namespace, StateKey};
pub use rwset::{ReadEntry, ReadWriteSet, Version, WriteEntry, WriteOp};
pub use state::{mvcc_validate, TxSimulator, VersionedValue, WorldState};

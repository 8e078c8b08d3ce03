//! Hash-chained block store and the commit path.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{self, Digest256};

use super::rwset::{ReadWriteSet, Version};
use super::state::{mvcc_validate, WorldState};

/// Anything the ledger can commit: it must expose the agreed read-write
/// set of the transaction.
pub trait LedgerTx {
    fn rwset(&self) -> &ReadWriteSet;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainBreak {
    #[error("expected block height {expected}, got {got}")]
    Height { expected: u64, got: u64 },
    #[error("previous-hash mismatch at height {height}")]
    PrevHash { height: u64 },
}

/// A batch of ordered transactions. `validity_flags` is empty when the
/// block leaves the ordering service and is filled at commit; it is not
/// part of the hashed content, so every peer stores the same chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block<Tx> {
    pub height: u64,
    pub prev_hash: Digest256,
    pub timestamp_us: u64,
    pub txs: Vec<Tx>,
    pub validity_flags: Vec<bool>,
}

#[derive(Serialize)]
struct BlockContent<'a, Tx> {
    height: u64,
    prev_hash: &'a Digest256,
    timestamp_us: u64,
    txs: &'a [Tx],
}

impl<Tx: Serialize> Block<Tx> {
    pub fn genesis() -> Self {
        Block {
            height: 0,
            prev_hash: Digest256::ZERO,
            timestamp_us: 0,
            txs: Vec::new(),
            validity_flags: Vec::new(),
        }
    }

    /// Digest of the hashed content (height, previous hash, timestamp,
    /// transactions). Validity flags are commit metadata and excluded.
    pub fn content_digest(&self) -> Digest256 {
        Digest256::of(&BlockContent {
            height: self.height,
            prev_hash: &self.prev_hash,
            timestamp_us: self.timestamp_us,
            txs: &self.txs,
        })
    }
}

/// Append-only chain of committed blocks plus the digest of the tip.
#[derive(Debug, Clone)]
pub struct BlockStore<Tx> {
    blocks: Vec<Block<Tx>>,
    tip_hash: Digest256,
}

impl<Tx: Serialize> BlockStore<Tx> {
    pub fn new() -> Self {
        let genesis = Block::genesis();
        let tip_hash = genesis.content_digest();
        BlockStore {
            blocks: vec![genesis],
            tip_hash,
        }
    }

    pub fn height(&self) -> u64 {
        (self.blocks.len() - 1) as u64
    }

    pub fn tip_hash(&self) -> Digest256 {
        self.tip_hash
    }

    pub fn blocks(&self) -> &[Block<Tx>] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block<Tx>> {
        self.blocks.get(height as usize)
    }

    fn push(&mut self, block: Block<Tx>) {
        self.tip_hash = block.content_digest();
        self.blocks.push(block);
    }

    /// Walk the chain: heights must be consecutive from zero, every
    /// `prev_hash` must match the recomputed digest of its predecessor,
    /// and the recorded tip digest must match the last block. Returns the
    /// first height at which the chain breaks.
    pub fn verify_chain(&self) -> Result<(), u64> {
        let mut prev_digest: Option<Digest256> = None;
        for (i, block) in self.blocks.iter().enumerate() {
            let expected_height = i as u64;
            if block.height != expected_height {
                return Err(expected_height);
            }
            match prev_digest {
                None => {
                    if block.prev_hash != Digest256::ZERO {
                        return Err(0);
                    }
                }
                Some(d) => {
                    if block.prev_hash != d {
                        return Err(expected_height);
                    }
                }
            }
            prev_digest = Some(block.content_digest());
        }
        if prev_digest != Some(self.tip_hash) {
            return Err(self.height());
        }
        Ok(())
    }

    /// One block per line, then a trailer line recording the tip, so a
    /// dump can be re-verified standalone.
    pub fn dump_jsonl(&self) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            out.push_str(&String::from_utf8(canonical::canonical_bytes(block)).expect("json"));
            out.push('\n');
        }
        let trailer = serde_json::json!({"tip_hash": self.tip_hash, "tip_height": self.height()});
        out.push_str(&String::from_utf8(canonical::canonical_bytes(&trailer)).expect("json"));
        out.push('\n');
        out
    }

    #[cfg(test)]
    pub(crate) fn replace_block_for_test(&mut self, height: u64, block: Block<Tx>) {
        self.blocks[height as usize] = block;
    }
}

impl<Tx: Serialize + DeserializeOwned> BlockStore<Tx> {
    /// Parse a dump produced by [`BlockStore::dump_jsonl`].
    pub fn parse_jsonl(text: &str) -> Result<Self, String> {
        let mut lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let trailer_line = lines.pop().ok_or("empty dump")?;
        let trailer: serde_json::Value =
            serde_json::from_str(trailer_line).map_err(|e| e.to_string())?;
        let tip_hash = trailer
            .get("tip_hash")
            .and_then(|v| v.as_str())
            .and_then(Digest256::from_hex)
            .ok_or("missing tip_hash trailer")?;
        let mut blocks = Vec::with_capacity(lines.len());
        for line in lines {
            blocks.push(serde_json::from_str::<Block<Tx>>(line).map_err(|e| e.to_string())?);
        }
        if blocks.is_empty() {
            return Err("dump has no blocks".into());
        }
        Ok(BlockStore { blocks, tip_hash })
    }
}

impl<Tx: Serialize> Default for BlockStore<Tx> {
    fn default() -> Self {
        Self::new()
    }
}

/// World state plus block chain of one peer.
#[derive(Debug, Clone)]
pub struct PeerLedger<Tx> {
    pub state: WorldState,
    pub store: BlockStore<Tx>,
}

impl<Tx: LedgerTx + Serialize> PeerLedger<Tx> {
    pub fn new() -> Self {
        PeerLedger {
            state: WorldState::new(),
            store: BlockStore::new(),
        }
    }

    /// Validate and commit a block cut by the ordering service. For each
    /// transaction in order: it must pass the caller-supplied policy check
    /// and MVCC revalidation against the state including all prior valid
    /// transactions of this block; only then are its writes applied, at
    /// version `(height, tx_index)`. The block is stored with the
    /// resulting flags.
    pub fn commit_block(
        &mut self,
        mut block: Block<Tx>,
        mut policy_ok: impl FnMut(&Tx) -> bool,
    ) -> Result<Vec<bool>, ChainBreak> {
        let expected = self.store.height() + 1;
        if block.height != expected {
            return Err(ChainBreak::Height {
                expected,
                got: block.height,
            });
        }
        if block.prev_hash != self.store.tip_hash() {
            return Err(ChainBreak::PrevHash { height: block.height });
        }
        let mut flags = Vec::with_capacity(block.txs.len());
        for (idx, tx) in block.txs.iter().enumerate() {
            let valid = policy_ok(tx) && mvcc_validate(&self.state, tx.rwset());
            if valid {
                let version = Version {
                    height: block.height,
                    tx_index: idx as u32,
                };
                for w in &tx.rwset().writes {
                    self.state.apply(&w.key, &w.op, version);
                }
            }
            flags.push(valid);
        }
        block.validity_flags = flags.clone();
        self.store.push(block);
        Ok(flags)
    }
}

impl<Tx: LedgerTx + Serialize> Default for PeerLedger<Tx> {
    fn default() -> Self {
        Self::new()
    }
}

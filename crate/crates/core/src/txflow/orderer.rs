//! Block cutting.

use crate::canonical::Digest256;
use crate::ledger::Block;
use crate::netsim::SimTime;

use super::{EndorsedTx, OrderingConfig};

/// Request to be called back at `at` unless the batch `epoch` was cut
/// before then.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimerRequest {
    pub at: SimTime,
    pub epoch: u64,
}

/// The ordering service's batching state machine. Transactions are
/// appended in arrival order and a block is cut as soon as either rule
/// fires: the batch reaches `max_message_count`, or the oldest pending
/// transaction reaches `batch_timeout_us` of age. Ordering never inspects
/// read-write sets.
#[derive(Debug)]
pub struct BlockCutter {
    cfg: OrderingConfig,
    pending: Vec<EndorsedTx>,
    epoch: u64,
    next_height: u64,
    prev_hash: Digest256,
}

impl BlockCutter {
    pub fn new(cfg: OrderingConfig) -> Self {
        let genesis: Block<EndorsedTx> = Block::genesis();
        BlockCutter {
            cfg,
            pending: Vec::new(),
            epoch: 0,
            next_height: 1,
            prev_hash: genesis.content_digest(),
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Append one transaction. Returns the cut block when this arrival
    /// fills the batch, otherwise a timer request when this arrival opened
    /// a fresh batch.
    pub fn on_tx(
        &mut self,
        tx: EndorsedTx,
        now: SimTime,
    ) -> (Option<Block<EndorsedTx>>, Option<TimerRequest>) {
        self.pending.push(tx);
        if self.pending.len() >= self.cfg.max_message_count {
            return (Some(self.cut(now)), None);
        }
        if self.pending.len() == 1 {
            return (
                None,
                Some(TimerRequest {
                    at: now.plus_us(self.cfg.batch_timeout_us),
                    epoch: self.epoch,
                }),
            );
        }
        (None, None)
    }

    /// Timeout callback. Cuts whatever is pending, unless the batch the
    /// timer was armed for is already gone.
    pub fn on_timer(&mut self, epoch: u64, now: SimTime) -> Option<Block<EndorsedTx>> {
        if epoch != self.epoch || self.pending.is_empty() {
            return None;
        }
        Some(self.cut(now))
    }

    fn cut(&mut self, now: SimTime) -> Block<EndorsedTx> {
        let block = Block {
            height: self.next_height,
            prev_hash: self.prev_hash,
            timestamp_us: now.as_us(),
            txs: std::mem::take(&mut self.pending),
            validity_flags: Vec::new(),
        };
        self.prev_hash = block.content_digest();
        self.next_height += 1;
        self.epoch += 1;
        block
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{Registry, Role};
    use crate::ledger::ReadWriteSet;
    use crate::txflow::{ChaincodeResponse, Endorsement, Proposal, Verdict};

    fn dummy_tx(reg: &Registry, n: u64) -> EndorsedTx {
        let msp = crate::identity::MspId::new("OrgAMSP").unwrap();
        let creds = reg.credentials(&msp, &reg.org(&msp).unwrap().peers[0]).unwrap();
        let proposal = Proposal::build(
            format!("tx-{n:06}"),
            &creds,
            ("ridehail", "1.0"),
            "noop",
            vec![],
        );
        let response = ChaincodeResponse {
            ok: true,
            return_value: vec![],
            error: None,
            events: vec![],
        };
        let rwset = ReadWriteSet::default();
        let payload = Endorsement::signed_payload(&proposal.tx_id, &rwset, &response);
        let signature = creds.sign(&payload);
        EndorsedTx {
            proposal,
            endorsements: vec![Endorsement {
                tx_id: format!("tx-{n:06}"),
                endorser_msp: msp,
                endorser_uid: creds.identity.uid.clone(),
                verdict: Verdict::Accepted,
                rwset,
                response,
                signature,
            }],
        }
    }

    fn fixture() -> (Registry, BlockCutter) {
        let mut reg = Registry::new(3);
        reg.provision_org("OrgA", 1, 1).unwrap();
        (reg, BlockCutter::new(OrderingConfig::default()))
    }

    #[test]
    fn twenty_five_simultaneous_arrivals_cut_ten_ten_five() {
        let (reg, mut cutter) = fixture();
        let t0 = SimTime(1_000);
        let mut blocks = Vec::new();
        let mut timer = None;
        for n in 0..25 {
            let (block, t) = cutter.on_tx(dummy_tx(&reg, n), t0);
            if let Some(b) = block {
                blocks.push(b);
            }
            if let Some(t) = t {
                timer = Some(t);
            }
        }
        assert_eq!(blocks.iter().map(|b| b.txs.len()).collect::<Vec<_>>(), vec![10, 10]);
        // the 21st arrival opened the last batch; its timer fires 2s later
        let timer = timer.expect("third batch armed a timer");
        assert_eq!(timer.at, t0.plus_us(2_000_000));
        let final_block = cutter.on_timer(timer.epoch, timer.at).expect("timeout cut");
        assert_eq!(final_block.txs.len(), 5);
        assert_eq!(final_block.height, 3);
    }

    #[test]
    fn lone_tx_cut_by_timeout() {
        let (reg, mut cutter) = fixture();
        let (block, timer) = cutter.on_tx(dummy_tx(&reg, 0), SimTime(500));
        assert!(block.is_none());
        let timer = timer.unwrap();
        assert_eq!(timer.at, SimTime(500 + 2_000_000));
        let block = cutter.on_timer(timer.epoch, timer.at).unwrap();
        assert_eq!(block.txs.len(), 1);
        assert_eq!(block.timestamp_us, 2_000_500);
    }

    #[test]
    fn tenth_tx_cuts_immediately_and_stale_timer_is_ignored() {
        let (reg, mut cutter) = fixture();
        let mut timer = None;
        let mut block = None;
        for n in 0..10 {
            let (b, t) = cutter.on_tx(dummy_tx(&reg, n), SimTime(n * 10));
            if t.is_some() {
                timer = t;
            }
            if b.is_some() {
                block = b;
            }
        }
        let block = block.expect("size cut at ten");
        assert_eq!(block.txs.len(), 10);
        assert_eq!(block.timestamp_us, 90);
        // the timer armed by the first arrival refers to a cut batch
        let timer = timer.unwrap();
        assert!(cutter.on_timer(timer.epoch, timer.at).is_none());
    }

    #[test]
    fn chain_links_blocks_in_order() {
        let (reg, mut cutter) = fixture();
        let mut prev = Block::<EndorsedTx>::genesis().content_digest();
        for round in 0..3u64 {
            for n in 0..10 {
                if let (Some(block), _) = cutter.on_tx(dummy_tx(&reg, round * 10 + n), SimTime(n))
                {
                    assert_eq!(block.height, round + 1);
                    assert_eq!(block.prev_hash, prev);
                    prev = block.content_digest();
                }
            }
        }
    }
}

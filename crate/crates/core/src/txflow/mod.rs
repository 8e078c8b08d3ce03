//! The execute-order-validate pipeline: endorsement collection under a
//! policy, ordering with block cutting, validation, commit, and
//! post-commit event delivery.
//!
//! A client signs a proposal and sends it to endorsing peers. Each peer
//! simulates the chaincode against its own current snapshot and returns a
//! signed endorsement carrying the resulting read-write set. The client
//! accepts the transaction only if the policy is satisfied and all
//! accepted endorsements agree byte-for-byte — disagreement means a stale
//! or partitioned peer (or non-deterministic chaincode) and is surfaced as
//! [`CollectOutcome::Divergence`] rather than silently committed. Endorsed
//! transactions go to the ordering service, which cuts blocks by size or
//! age; every peer then revalidates (policy and MVCC) and commits, and
//! events from valid transactions are delivered to subscribers.

mod orderer;
pub mod sim;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{self, Digest256};
use crate::chaincode::RideEvent;
use crate::identity::{Credentials, MspId, Registry, Signature};
use crate::ledger::{LedgerTx, ReadWriteSet};

pub use orderer::BlockCutter;
pub use sim::{
    AppDriver, ClientId, Counters, EndorseFailKind, Notification, NullDriver, PeerId,
    RecorderDriver, SimNetwork, SimWorld, TxHandle, TxOutcome, TxRecord,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TxFlowError {
    #[error("proposal names chaincode {proposed} but {installed} is installed")]
    VersionMismatch { proposed: String, installed: String },
    #[error("bad signature from {0}")]
    BadSignature(String),
    #[error("unknown event name {0:?}")]
    UnknownEvent(String),
    #[error("endorsement set is empty")]
    NoEndorsements,
}

/// A signed invocation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Proposal {
    pub tx_id: String,
    pub invoker_msp: MspId,
    pub invoker_uid: String,
    pub chaincode_name: String,
    pub chaincode_version: String,
    pub function: String,
    pub args: Vec<String>,
    pub signature: Signature,
}

#[derive(Serialize)]
struct ProposalPayload<'a> {
    tx_id: &'a str,
    invoker_msp: &'a MspId,
    invoker_uid: &'a str,
    chaincode_name: &'a str,
    chaincode_version: &'a str,
    function: &'a str,
    args: &'a [String],
}

impl Proposal {
    pub fn build(
        tx_id: String,
        invoker: &Credentials,
        chaincode: (&str, &str),
        function: &str,
        args: Vec<String>,
    ) -> Proposal {
        let payload = canonical::canonical_bytes(&ProposalPayload {
            tx_id: &tx_id,
            invoker_msp: &invoker.identity.msp,
            invoker_uid: &invoker.identity.uid,
            chaincode_name: chaincode.0,
            chaincode_version: chaincode.1,
            function,
            args: &args,
        });
        Proposal {
            tx_id,
            invoker_msp: invoker.identity.msp.clone(),
            invoker_uid: invoker.identity.uid.clone(),
            chaincode_name: chaincode.0.to_string(),
            chaincode_version: chaincode.1.to_string(),
            function: function.to_string(),
            args,
            signature: invoker.sign(&payload),
        }
    }

    pub fn signed_payload(&self) -> Vec<u8> {
        canonical::canonical_bytes(&ProposalPayload {
            tx_id: &self.tx_id,
            invoker_msp: &self.invoker_msp,
            invoker_uid: &self.invoker_uid,
            chaincode_name: &self.chaincode_name,
            chaincode_version: &self.chaincode_version,
            function: &self.function,
            args: &self.args,
        })
    }

    pub fn verify_signature(&self, registry: &Registry) -> bool {
        registry
            .verify(&self.signature, &self.signed_payload())
            .unwrap_or(false)
    }
}

/// What a peer's simulation returned, embedded in the endorsement's
/// response bytes so the signature covers it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChaincodeResponse {
    pub ok: bool,
    #[serde(with = "canonical::hex_bytes")]
    pub return_value: Vec<u8>,
    pub error: Option<String>,
    pub events: Vec<RideEvent>,
}

impl ChaincodeResponse {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::canonical_bytes(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Rejected,
}

/// A peer's signed verdict on one proposal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Endorsement {
    pub tx_id: String,
    pub endorser_msp: MspId,
    pub endorser_uid: String,
    pub verdict: Verdict,
    pub rwset: ReadWriteSet,
    pub response: ChaincodeResponse,
    pub signature: Signature,
}

#[derive(Serialize)]
struct EndorsementPayload<'a> {
    tx_id: &'a str,
    rwset_digest: Digest256,
    response: &'a [u8],
}

impl Endorsement {
    pub fn signed_payload(tx_id: &str, rwset: &ReadWriteSet, response: &ChaincodeResponse) -> Vec<u8> {
        canonical::canonical_bytes(&EndorsementPayload {
            tx_id,
            rwset_digest: rwset.digest(),
            response: &response.canonical_bytes(),
        })
    }

    pub fn verify_signature(&self, registry: &Registry) -> bool {
        let payload = Self::signed_payload(&self.tx_id, &self.rwset, &self.response);
        registry.verify(&self.signature, &payload).unwrap_or(false)
    }
}

/// A proposal with the endorsements that satisfied the policy. All stored
/// endorsements are accepted and carry byte-identical read-write sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndorsedTx {
    pub proposal: Proposal,
    pub endorsements: Vec<Endorsement>,
}

impl EndorsedTx {
    pub fn response(&self) -> &ChaincodeResponse {
        &self.endorsements[0].response
    }

    pub fn events(&self) -> &[RideEvent] {
        &self.endorsements[0].response.events
    }
}

impl LedgerTx for EndorsedTx {
    fn rwset(&self) -> &ReadWriteSet {
        &self.endorsements[0].rwset
    }
}

/// Predicate over the set of endorsements a transaction must gather,
/// checked before ordering and again at commit. All variants are
/// monotone: adding endorsements never unsatisfies a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndorsementPolicy {
    /// Every peer of every organization must endorse.
    AllOrgPeers,
    /// Any single endorsement suffices; clients spread proposals
    /// round-robin across peers.
    AnyOne,
    /// Endorsements from at least `k` organizations other than the
    /// invoker's, which is what defeats single-organization eclipses.
    CrossOrg(u32),
}

impl EndorsementPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ALL_ORG_PEERS" => Some(EndorsementPolicy::AllOrgPeers),
            "ANY_ONE" => Some(EndorsementPolicy::AnyOne),
            other => {
                let k = other.strip_prefix("CROSS_ORG:")?;
                Some(EndorsementPolicy::CrossOrg(k.parse().ok()?))
            }
        }
    }

    pub fn as_str(&self) -> String {
        match self {
            EndorsementPolicy::AllOrgPeers => "ALL_ORG_PEERS".into(),
            EndorsementPolicy::AnyOne => "ANY_ONE".into(),
            EndorsementPolicy::CrossOrg(k) => format!("CROSS_ORG:{k}"),
        }
    }

    /// Is the policy satisfied by accepted endorsements from `endorsers`?
    /// `all_peers` lists every (org, peer uid) in the network.
    pub fn satisfied(
        &self,
        endorsers: &BTreeSet<(MspId, String)>,
        invoker_msp: &MspId,
        all_peers: &BTreeSet<(MspId, String)>,
    ) -> bool {
        match self {
            EndorsementPolicy::AllOrgPeers => all_peers.iter().all(|p| endorsers.contains(p)),
            EndorsementPolicy::AnyOne => !endorsers.is_empty(),
            EndorsementPolicy::CrossOrg(k) => {
                let foreign: BTreeSet<&MspId> = endorsers
                    .iter()
                    .map(|(msp, _)| msp)
                    .filter(|msp| *msp != invoker_msp)
                    .collect();
                !endorsers.is_empty() && foreign.len() >= *k as usize
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum CollectOutcome {
    Endorsed(EndorsedTx),
    /// The accepted endorsements do not satisfy the policy. Carries the
    /// first rejection reason, when any peer rejected.
    PolicyUnsatisfied { rejection: Option<String> },
    /// Accepted endorsements disagree on the read-write set or response:
    /// some peer endorsed against a different state.
    Divergence { endorsers: Vec<String> },
}

/// Gather a transaction from raw endorsements. Signature verification is
/// a precondition: any invalid signature is an error, not a policy miss.
pub fn collect(
    policy: EndorsementPolicy,
    proposal: &Proposal,
    endorsements: Vec<Endorsement>,
    registry: &Registry,
    all_peers: &BTreeSet<(MspId, String)>,
) -> Result<CollectOutcome, TxFlowError> {
    for e in &endorsements {
        if !e.verify_signature(registry) {
            return Err(TxFlowError::BadSignature(format!(
                "{}/{}",
                e.endorser_msp, e.endorser_uid
            )));
        }
    }
    let accepted: Vec<&Endorsement> = endorsements
        .iter()
        .filter(|e| e.verdict == Verdict::Accepted)
        .collect();
    let rejection = endorsements
        .iter()
        .find(|e| e.verdict == Verdict::Rejected)
        .and_then(|e| e.response.error.clone());
    if !accepted.is_empty() {
        let reference = (
            accepted[0].rwset.canonical_bytes(),
            accepted[0].response.canonical_bytes(),
        );
        let diverged = accepted.iter().any(|e| {
            (e.rwset.canonical_bytes(), e.response.canonical_bytes()) != reference
        });
        if diverged {
            return Ok(CollectOutcome::Divergence {
                endorsers: accepted
                    .iter()
                    .map(|e| format!("{}/{}", e.endorser_msp, e.endorser_uid))
                    .collect(),
            });
        }
    }
    let endorsers: BTreeSet<(MspId, String)> = accepted
        .iter()
        .map(|e| (e.endorser_msp.clone(), e.endorser_uid.clone()))
        .collect();
    if !policy.satisfied(&endorsers, &proposal.invoker_msp, all_peers) {
        return Ok(CollectOutcome::PolicyUnsatisfied { rejection });
    }
    Ok(CollectOutcome::Endorsed(EndorsedTx {
        proposal: proposal.clone(),
        endorsements: endorsements
            .into_iter()
            .filter(|e| e.verdict == Verdict::Accepted)
            .collect(),
    }))
}

/// Block-cutting parameters of the ordering service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingConfig {
    pub batch_timeout_us: u64,
    pub max_message_count: usize,
}

impl Default for OrderingConfig {
    fn default() -> Self {
        OrderingConfig {
            batch_timeout_us: 2_000_000,
            max_message_count: 10,
        }
    }
}

//! The simulated network: peers, one logical ordering service, clients,
//! and the full proposal→endorse→order→commit→event pipeline running on
//! the discrete-event scheduler.
//!
//! Every node is a single-server FIFO queue: endorsement and commit jobs
//! share one server per peer, clients serialize their outbound sends, and
//! the ordering service processes envelopes one at a time. All cross-node
//! interaction is a scheduled message; simulated nodes share no mutable
//! state except through those messages.

use std::collections::{BTreeMap, BTreeSet};

use crate::chaincode::{self, CallerInfo, ChaincodeConfig, EventName, RideEvent};
use crate::config::{ConfigError, NetworkConfig};
use crate::identity::{Credentials, MspId, Registry};
use crate::ledger::{Block, LedgerTx, PeerLedger, StateKey};
use crate::netsim::{FifoServer, Links, NodeProfile, Scheduler, SimTime};

use super::{
    collect, BlockCutter, ChaincodeResponse, CollectOutcome, Endorsement, EndorsedTx, Proposal,
    TxFlowError, Verdict,
};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId(pub String);

impl std::fmt::Display for PeerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClientId(pub String);

impl std::fmt::Display for ClientId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque correlation tag chosen by the submitting application code and
/// echoed back in notifications.
pub type TxHandle = u64;

const ORDERER_NODE: &str = "orderer";

pub struct Peer {
    pub id: PeerId,
    pub org: MspId,
    pub identity_uid: String,
    pub ledger: PeerLedger<EndorsedTx>,
    pub server: FifoServer,
    /// Blocks whose service finished but whose predecessor has not
    /// committed yet (out-of-order delivery).
    ready_blocks: BTreeMap<u64, Block<EndorsedTx>>,
}

struct OrdererNode {
    cutter: BlockCutter,
    server: FifoServer,
}

pub struct Client {
    pub id: ClientId,
    pub org: MspId,
    pub identity_uid: String,
    pub event_peer: PeerId,
    pub server: FifoServer,
    /// When set, the client can reach only these peers (isolation
    /// scenarios); otherwise every peer in the network.
    pub reachable: Option<BTreeSet<PeerId>>,
    rr_cursor: usize,
}

enum EndorseReply {
    Endorsed(Endorsement),
    Failed(EndorseFailKind, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndorseFailKind {
    ChaincodeRejected,
    PolicyUnsatisfied,
    Divergence,
    VersionMismatch,
    BadSignature,
}

#[derive(Debug, Clone)]
pub enum TxOutcome {
    Committed { valid: bool, height: u64 },
    EndorseFailed { kind: EndorseFailKind, detail: String },
}

impl TxOutcome {
    pub fn committed_valid(&self) -> bool {
        matches!(self, TxOutcome::Committed { valid: true, .. })
    }
}

#[derive(Debug, Clone)]
pub enum Notification {
    /// Final word on a submission, delivered to the submitting client by
    /// its event peer (or immediately on endorsement failure).
    TxSettled {
        client: ClientId,
        handle: TxHandle,
        outcome: TxOutcome,
    },
    /// A chaincode event from a committed valid transaction, delivered to
    /// a subscriber.
    Event {
        client: ClientId,
        event: RideEvent,
        height: u64,
        tx_index: u32,
    },
}

/// Application logic driving the network: benchmark submitters, scenario
/// runners, adversaries. Invoked for every notification.
pub trait AppDriver {
    fn on_notification(
        &mut self,
        net: &mut SimNetwork,
        sched: &mut Scheduler<SimWorld>,
        note: Notification,
    );
}

/// A driver that ignores everything; useful for direct pipeline tests.
pub struct NullDriver;

impl AppDriver for NullDriver {
    fn on_notification(&mut self, _: &mut SimNetwork, _: &mut Scheduler<SimWorld>, _: Notification) {
    }
}

/// A driver that stores every notification for later inspection, shared
/// with the harness through `Rc<RefCell<..>>`. Lets sequential harness
/// code submit, run to quiescence, and then examine what happened.
pub struct RecorderDriver {
    pub log: std::rc::Rc<std::cell::RefCell<Vec<Notification>>>,
}

impl RecorderDriver {
    pub fn new() -> (Self, std::rc::Rc<std::cell::RefCell<Vec<Notification>>>) {
        let log = std::rc::Rc::new(std::cell::RefCell::new(Vec::new()));
        (
            RecorderDriver {
                log: std::rc::Rc::clone(&log),
            },
            log,
        )
    }
}

impl AppDriver for RecorderDriver {
    fn on_notification(
        &mut self,
        _: &mut SimNetwork,
        _: &mut Scheduler<SimWorld>,
        note: Notification,
    ) {
        self.log.borrow_mut().push(note);
    }
}

/// The scheduler's world: the network plus the application driver.
pub struct SimWorld {
    pub net: SimNetwork,
    pub driver: Box<dyn AppDriver>,
}

impl SimWorld {
    pub fn new(net: SimNetwork, driver: Box<dyn AppDriver>) -> Self {
        SimWorld { net, driver }
    }
}

struct PendingTx {
    handle: TxHandle,
    client: ClientId,
    creds: Credentials,
    function: String,
    args: Vec<String>,
    proposal: Proposal,
    expected: usize,
    replies: Vec<EndorseReply>,
    retried: bool,
}

/// Per-transaction phase timestamps and outcome, in submission order.
#[derive(Debug, Clone)]
pub struct TxRecord {
    pub handle: TxHandle,
    pub tx_id: String,
    pub ride_id: String,
    pub function: String,
    pub t_submit: SimTime,
    /// All endorsement replies back at the client.
    pub t_endorsed: Option<SimTime>,
    /// Endorsements handed to the ordering service (also the moment the
    /// commit-event listener is registered).
    pub t_order_submit: Option<SimTime>,
    /// Ordering-service acknowledgment received by the client.
    pub t_ack: Option<SimTime>,
    /// Commit event received by the client.
    pub t_event: Option<SimTime>,
    pub valid: Option<bool>,
    pub height: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub submitted: u64,
    pub committed_valid: u64,
    pub committed_invalid: u64,
    pub policy_unsatisfied: u64,
    pub divergence_failures: u64,
    pub chaincode_rejected: u64,
    pub version_mismatch: u64,
    pub retries: u64,
    /// Endorsed transactions whose read-write set carried the
    /// read-after-write diagnostic.
    pub raw_flags: u64,
    pub events_delivered: u64,
    /// Commits whose validity flags disagreed with another peer's
    /// (must stay zero).
    pub flag_divergence: u64,
    /// Event deliveries that would have been duplicates (must stay zero).
    pub duplicate_event_deliveries: u64,
}

impl Counters {
    /// Every submission is accounted for exactly once.
    pub fn settled(&self) -> u64 {
        self.committed_valid
            + self.committed_invalid
            + self.policy_unsatisfied
            + self.divergence_failures
            + self.chaincode_rejected
            + self.version_mismatch
    }
}

pub struct SimNetwork {
    pub registry: Registry,
    pub policy: super::EndorsementPolicy,
    pub peers: BTreeMap<PeerId, Peer>,
    pub clients: BTreeMap<ClientId, Client>,
    orderer: OrdererNode,
    pub links: Links,
    pub profile: NodeProfile,
    pub chaincode_cfg: ChaincodeConfig,
    pub installed_name: String,
    pub installed_version: String,
    all_peers: BTreeSet<(MspId, String)>,
    peer_order: Vec<PeerId>,
    subscriptions: Vec<(ClientId, EventName)>,
    pending: BTreeMap<String, PendingTx>,
    tx_index_by_id: BTreeMap<String, usize>,
    pub records: Vec<TxRecord>,
    pub counters: Counters,
    tx_counter: u64,
    client_counter: u64,
    /// Heights whose validity flags were already counted/recorded.
    first_commit_flags: BTreeMap<u64, Vec<bool>>,
    /// Peers currently cut off from block delivery.
    blocked_block_delivery: BTreeSet<PeerId>,
    delivered_events: BTreeSet<(ClientId, u64, u32, u8)>,
    pub first_submit: Option<SimTime>,
    pub last_commit: Option<SimTime>,
}

impl SimNetwork {
    /// Build the network: provision organizations, stand up peers and the
    /// single logical ordering service.
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<SimNetwork, ConfigError> {
        let mut registry = Registry::new(seed);
        let mut peers = BTreeMap::new();
        let mut all_peers = BTreeSet::new();
        let mut peer_order = Vec::new();
        for org_cfg in &config.orgs {
            let org = registry
                .provision_org(&org_cfg.name, org_cfg.peers, org_cfg.orderers)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let msp = org.msp.clone();
            let peer_uids = org.peers.clone();
            for (i, uid) in peer_uids.into_iter().enumerate() {
                let id = PeerId(format!("{}/peer{}", org_cfg.name, i));
                all_peers.insert((msp.clone(), uid.clone()));
                peer_order.push(id.clone());
                peers.insert(
                    id.clone(),
                    Peer {
                        id,
                        org: msp.clone(),
                        identity_uid: uid,
                        ledger: PeerLedger::new(),
                        server: FifoServer::new(),
                        ready_blocks: BTreeMap::new(),
                    },
                );
            }
        }
        let profile = config.node_profile()?;
        let ordering = config.ordering_config()?;
        Ok(SimNetwork {
            registry,
            policy: config.policy()?,
            peers,
            clients: BTreeMap::new(),
            orderer: OrdererNode {
                cutter: BlockCutter::new(ordering),
                server: FifoServer::new(),
            },
            links: Links::uniform((config.link_latency_ms * 1000.0).round() as u64),
            profile,
            chaincode_cfg: ChaincodeConfig {
                epsilon_m: config.location_epsilon_m,
            },
            installed_name: config.chaincode.name.clone(),
            installed_version: config.chaincode.version.clone(),
            all_peers,
            peer_order,
            subscriptions: Vec::new(),
            pending: BTreeMap::new(),
            tx_index_by_id: BTreeMap::new(),
            records: Vec::new(),
            counters: Counters::default(),
            tx_counter: 0,
            client_counter: 0,
            first_commit_flags: BTreeMap::new(),
            blocked_block_delivery: BTreeSet::new(),
            delivered_events: BTreeSet::new(),
            first_submit: None,
            last_commit: None,
        })
    }

    /// Register a client endpoint bound to an organization. Its event
    /// peer is the organization's first peer.
    pub fn add_client(&mut self, org_name: &str) -> Result<ClientId, ConfigError> {
        let msp = MspId::for_org(org_name).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.client_counter += 1;
        let creds = self
            .registry
            .enroll_identity(&msp, crate::identity::Role::Admin, 3_000_000 + self.client_counter)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let event_peer = self
            .peer_order
            .iter()
            .find(|p| self.peers[p].org == msp)
            .ok_or_else(|| ConfigError::Invalid(format!("org {org_name} has no peers")))?
            .clone();
        let id = ClientId(format!("client-{}", self.client_counter));
        self.clients.insert(
            id.clone(),
            Client {
                id: id.clone(),
                org: msp,
                identity_uid: creds.identity.uid,
                event_peer,
                server: FifoServer::new(),
                reachable: None,
                rr_cursor: 0,
            },
        );
        Ok(id)
    }

    /// Seed identical pre-genesis world state on every peer.
    pub fn seed_state(&mut self, entries: &[(StateKey, Vec<u8>)]) {
        for peer in self.peers.values_mut() {
            for (key, bytes) in entries {
                peer.ledger.state.seed(key.clone(), bytes.clone());
            }
        }
    }

    /// Restrict a client to its own organization's peers (isolation).
    pub fn eclipse_client(&mut self, client: &ClientId) {
        let org = self.clients[client].org.clone();
        let own: BTreeSet<PeerId> = self
            .peer_order
            .iter()
            .filter(|p| self.peers[*p].org == org)
            .cloned()
            .collect();
        self.clients.get_mut(client).expect("client exists").reachable = Some(own);
    }

    /// Stop delivering blocks to a peer; it will fall behind and stay
    /// behind even after deliveries resume.
    pub fn withhold_blocks_from(&mut self, peer: &PeerId, withhold: bool) {
        if withhold {
            self.blocked_block_delivery.insert(peer.clone());
        } else {
            self.blocked_block_delivery.remove(peer);
        }
    }

    pub fn subscribe(&mut self, client: &ClientId, event_name: &str) -> Result<(), TxFlowError> {
        let name = EventName::parse(event_name)
            .ok_or_else(|| TxFlowError::UnknownEvent(event_name.to_string()))?;
        if !self
            .subscriptions
            .iter()
            .any(|(c, n)| c == client && *n == name)
        {
            self.subscriptions.push((client.clone(), name));
        }
        Ok(())
    }

    pub fn record_for_handle(&self, handle: TxHandle) -> Option<&TxRecord> {
        self.records.iter().rev().find(|r| r.handle == handle)
    }

    /// Reference peer used for harness-level ledger inspection.
    pub fn reference_peer(&self) -> &Peer {
        &self.peers[&self.peer_order[0]]
    }

    pub fn peer_ids(&self) -> &[PeerId] {
        &self.peer_order
    }

    fn next_tx_id(&mut self) -> String {
        self.tx_counter += 1;
        format!("tx-{:06}", self.tx_counter)
    }

    fn target_peers(&mut self, client_id: &ClientId) -> Vec<PeerId> {
        let client = self.clients.get_mut(client_id).expect("client exists");
        let reachable: Vec<PeerId> = match &client.reachable {
            Some(set) => self.peer_order.iter().filter(|p| set.contains(p)).cloned().collect(),
            None => self.peer_order.clone(),
        };
        match self.policy {
            super::EndorsementPolicy::AnyOne => {
                let pick = reachable[client.rr_cursor % reachable.len()].clone();
                client.rr_cursor += 1;
                vec![pick]
            }
            _ => reachable,
        }
    }

    /// Submit one invocation as `creds` through `client_id`. The pipeline
    /// runs on the scheduler; the driver hears back via notifications.
    pub fn submit(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        client_id: &ClientId,
        creds: &Credentials,
        function: &str,
        args: Vec<String>,
        ride_id: &str,
        handle: TxHandle,
    ) {
        let version = self.installed_version.clone();
        self.submit_with_version(sched, client_id, creds, function, args, ride_id, handle, &version)
    }

    /// As [`SimNetwork::submit`], but naming an explicit chaincode
    /// version (for version-pinning checks).
    #[allow(clippy::too_many_arguments)]
    pub fn submit_with_version(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        client_id: &ClientId,
        creds: &Credentials,
        function: &str,
        args: Vec<String>,
        ride_id: &str,
        handle: TxHandle,
        version: &str,
    ) {
        self.counters.submitted += 1;
        let now = sched.now();
        self.first_submit.get_or_insert(now);
        let tx_id = self.next_tx_id();
        let proposal = Proposal::build(
            tx_id.clone(),
            creds,
            (&self.installed_name, version),
            function,
            args.clone(),
        );
        self.records.push(TxRecord {
            handle,
            tx_id: tx_id.clone(),
            ride_id: ride_id.to_string(),
            function: function.to_string(),
            t_submit: now,
            t_endorsed: None,
            t_order_submit: None,
            t_ack: None,
            t_event: None,
            valid: None,
            height: None,
        });
        self.tx_index_by_id.insert(tx_id.clone(), self.records.len() - 1);
        self.pending.insert(
            tx_id.clone(),
            PendingTx {
                handle,
                client: client_id.clone(),
                creds: creds.clone(),
                function: function.to_string(),
                args,
                proposal: proposal.clone(),
                expected: 0,
                replies: Vec::new(),
                retried: false,
            },
        );
        self.dispatch_proposal(sched, client_id, proposal);
    }

    fn dispatch_proposal(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        client_id: &ClientId,
        proposal: Proposal,
    ) {
        let now = sched.now();
        let targets = self.target_peers(client_id);
        self.pending
            .get_mut(&proposal.tx_id)
            .expect("pending entry exists")
            .expected = targets.len();
        let overhead = self.profile.submit_overhead_us;
        let client = self.clients.get_mut(client_id).expect("client exists");
        for peer_id in targets {
            // outbound sends serialize on the client's processor
            let depart = client.server.admit(now, overhead);
            let arrival = depart.plus_us(self.links.latency_us(&client.id.0, &peer_id.0));
            let proposal = proposal.clone();
            let peer_id2 = peer_id.clone();
            let reply_to = client_id.clone();
            sched
                .schedule(arrival, move |w, s| {
                    w.net.peer_receive_proposal(s, peer_id2, proposal, reply_to)
                })
                .expect("future");
        }
    }

    fn peer_receive_proposal(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        peer_id: PeerId,
        proposal: Proposal,
        reply_to: ClientId,
    ) {
        let now = sched.now();
        let service = self.profile.endorse_service_us;
        let peer = self.peers.get_mut(&peer_id).expect("peer exists");
        let done = peer.server.admit(now, service);
        sched
            .schedule(done, move |w, s| {
                w.net.peer_endorse(s, peer_id, proposal, reply_to)
            })
            .expect("future");
    }

    /// Runs at endorsement-job completion: simulate the chaincode against
    /// this peer's current snapshot and send the signed verdict back.
    fn peer_endorse(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        peer_id: PeerId,
        proposal: Proposal,
        reply_to: ClientId,
    ) {
        let reply = self.endorse_on_peer(&peer_id, &proposal);
        let latency = self.links.latency_us(&peer_id.0, &reply_to.0);
        let tx_id = proposal.tx_id.clone();
        sched.schedule_in(latency, move |w, s| {
            w.net.client_receive_reply(s, reply_to, tx_id, reply)
        });
    }

    fn endorse_on_peer(&self, peer_id: &PeerId, proposal: &Proposal) -> EndorseReply {
        if proposal.chaincode_name != self.installed_name
            || proposal.chaincode_version != self.installed_version
        {
            return EndorseReply::Failed(
                EndorseFailKind::VersionMismatch,
                format!(
                    "peer has {}:{} installed",
                    self.installed_name, self.installed_version
                ),
            );
        }
        if !proposal.verify_signature(&self.registry) {
            return EndorseReply::Failed(EndorseFailKind::BadSignature, "proposal".into());
        }
        let invoker = match self
            .registry
            .identity(&proposal.invoker_msp, &proposal.invoker_uid)
        {
            Ok(id) => id.clone(),
            Err(e) => return EndorseReply::Failed(EndorseFailKind::BadSignature, e.to_string()),
        };
        let caller = CallerInfo {
            msp: invoker.msp,
            uid: invoker.uid,
            role: invoker.role,
        };
        let peer = &self.peers[peer_id];
        let (verdict, rwset, response) = match chaincode::invoke(
            &peer.ledger.state,
            &caller,
            &proposal.function,
            &proposal.args,
            &self.chaincode_cfg,
        ) {
            Ok(out) => (
                Verdict::Accepted,
                out.rwset,
                ChaincodeResponse {
                    ok: true,
                    return_value: out.response,
                    error: None,
                    events: out.events,
                },
            ),
            Err(err) => (
                Verdict::Rejected,
                Default::default(),
                ChaincodeResponse {
                    ok: false,
                    return_value: Vec::new(),
                    error: Some(err.to_string()),
                    events: Vec::new(),
                },
            ),
        };
        let peer_creds = self
            .registry
            .credentials(&peer.org, &peer.identity_uid)
            .expect("peer identity enrolled at provisioning");
        let payload = Endorsement::signed_payload(&proposal.tx_id, &rwset, &response);
        EndorseReply::Endorsed(Endorsement {
            tx_id: proposal.tx_id.clone(),
            endorser_msp: peer.org.clone(),
            endorser_uid: peer.identity_uid.clone(),
            verdict,
            rwset,
            response,
            signature: peer_creds.sign(&payload),
        })
    }

    fn client_receive_reply(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        client_id: ClientId,
        tx_id: String,
        reply: EndorseReply,
    ) {
        let entry = match self.pending.get_mut(&tx_id) {
            Some(e) => e,
            None => return,
        };
        entry.replies.push(reply);
        if entry.replies.len() < entry.expected {
            return;
        }
        // all endorsement replies are back
        let now = sched.now();
        if let Some(&idx) = self.tx_index_by_id.get(&tx_id) {
            self.records[idx].t_endorsed = Some(now);
        }
        let entry = self.pending.get_mut(&tx_id).expect("checked above");
        let mut endorsements = Vec::new();
        let mut transport_failure: Option<(EndorseFailKind, String)> = None;
        for reply in std::mem::take(&mut entry.replies) {
            match reply {
                EndorseReply::Endorsed(e) => endorsements.push(e),
                EndorseReply::Failed(kind, detail) => {
                    transport_failure.get_or_insert((kind, detail));
                }
            }
        }
        if let Some((kind, detail)) = transport_failure {
            self.fail_tx(sched, &tx_id, kind, detail);
            return;
        }
        let entry = self.pending.get(&tx_id).expect("checked above");
        let all_rejected = endorsements.iter().all(|e| e.verdict == Verdict::Rejected);
        let outcome = collect(
            self.policy,
            &entry.proposal,
            endorsements,
            &self.registry,
            &self.all_peers,
        );
        match outcome {
            Err(TxFlowError::BadSignature(who)) => {
                self.fail_tx(sched, &tx_id, EndorseFailKind::BadSignature, who);
            }
            Err(other) => {
                self.fail_tx(sched, &tx_id, EndorseFailKind::PolicyUnsatisfied, other.to_string());
            }
            Ok(CollectOutcome::Divergence { endorsers }) => {
                let entry = self.pending.get(&tx_id).expect("still pending");
                if entry.retried {
                    self.fail_tx(
                        sched,
                        &tx_id,
                        EndorseFailKind::Divergence,
                        format!("rwsets disagree: {}", endorsers.join(", ")),
                    );
                } else {
                    self.retry_tx(sched, &tx_id, client_id);
                }
            }
            Ok(CollectOutcome::PolicyUnsatisfied { rejection }) => {
                if all_rejected {
                    let detail = rejection.unwrap_or_else(|| "rejected".into());
                    self.fail_tx(sched, &tx_id, EndorseFailKind::ChaincodeRejected, detail);
                } else {
                    self.fail_tx(
                        sched,
                        &tx_id,
                        EndorseFailKind::PolicyUnsatisfied,
                        rejection.unwrap_or_else(|| "not enough endorsements".into()),
                    );
                }
            }
            Ok(CollectOutcome::Endorsed(endorsed)) => {
                if endorsed.rwset().read_after_write {
                    self.counters.raw_flags += 1;
                }
                if let Some(&idx) = self.tx_index_by_id.get(&tx_id) {
                    self.records[idx].t_order_submit = Some(now);
                }
                // send the endorsed envelope to the ordering service
                let overhead = self.profile.submit_overhead_us;
                let client = self.clients.get_mut(&client_id).expect("client exists");
                let depart = client.server.admit(now, overhead);
                let arrival = depart.plus_us(self.links.latency_us(&client_id.0, ORDERER_NODE));
                sched
                    .schedule(arrival, move |w, s| {
                        w.net.orderer_receive(s, client_id, endorsed)
                    })
                    .expect("future");
            }
        }
    }

    /// One retry against a fresh peer set after divergence.
    fn retry_tx(&mut self, sched: &mut Scheduler<SimWorld>, tx_id: &str, client_id: ClientId) {
        self.counters.retries += 1;
        let entry = self.pending.remove(tx_id).expect("pending entry exists");
        let new_tx_id = self.next_tx_id();
        let proposal = Proposal::build(
            new_tx_id.clone(),
            &entry.creds,
            (&self.installed_name, &self.installed_version),
            &entry.function,
            entry.args.clone(),
        );
        // the retry replaces the original attempt in the records
        if let Some(idx) = self.tx_index_by_id.remove(tx_id) {
            let rec = &mut self.records[idx];
            rec.tx_id = new_tx_id.clone();
            rec.t_submit = sched.now();
            rec.t_endorsed = None;
            self.tx_index_by_id.insert(new_tx_id.clone(), idx);
        }
        self.pending.insert(
            new_tx_id.clone(),
            PendingTx {
                proposal: proposal.clone(),
                expected: 0,
                replies: Vec::new(),
                retried: true,
                ..entry
            },
        );
        self.dispatch_proposal(sched, &client_id, proposal);
    }

    fn fail_tx(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        tx_id: &str,
        kind: EndorseFailKind,
        detail: String,
    ) {
        let entry = self.pending.remove(tx_id).expect("pending entry exists");
        match kind {
            EndorseFailKind::ChaincodeRejected => self.counters.chaincode_rejected += 1,
            EndorseFailKind::PolicyUnsatisfied => self.counters.policy_unsatisfied += 1,
            EndorseFailKind::Divergence => self.counters.divergence_failures += 1,
            EndorseFailKind::VersionMismatch => self.counters.version_mismatch += 1,
            EndorseFailKind::BadSignature => self.counters.policy_unsatisfied += 1,
        }
        self.notify(
            sched,
            sched.now(),
            Notification::TxSettled {
                client: entry.client,
                handle: entry.handle,
                outcome: TxOutcome::EndorseFailed { kind, detail },
            },
        );
    }

    fn orderer_receive(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        client_id: ClientId,
        endorsed: EndorsedTx,
    ) {
        let now = sched.now();
        let done = self.orderer.server.admit(now, self.profile.order_service_us);
        sched
            .schedule(done, move |w, s| w.net.orderer_process(s, client_id, endorsed))
            .expect("future");
    }

    /// Runs when the ordering service finishes processing one envelope:
    /// acknowledge to the client, append to the batch, cut when a rule
    /// fires.
    fn orderer_process(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        client_id: ClientId,
        endorsed: EndorsedTx,
    ) {
        let now = sched.now();
        let tx_id = endorsed.proposal.tx_id.clone();
        let ack_at = now.plus_us(self.links.latency_us(ORDERER_NODE, &client_id.0));
        sched
            .schedule(ack_at, move |w, s| {
                let now = s.now();
                if let Some(&idx) = w.net.tx_index_by_id.get(&tx_id) {
                    w.net.records[idx].t_ack = Some(now);
                }
            })
            .expect("future");
        let (block, timer) = self.orderer.cutter.on_tx(endorsed, now);
        if let Some(block) = block {
            self.broadcast_block(sched, block);
        }
        if let Some(req) = timer {
            sched
                .schedule(req.at, move |w, s| {
                    let now = s.now();
                    if let Some(block) = w.net.orderer.cutter.on_timer(req.epoch, now) {
                        w.net.broadcast_block(s, block);
                    }
                })
                .expect("future");
        }
    }

    fn broadcast_block(&mut self, sched: &mut Scheduler<SimWorld>, block: Block<EndorsedTx>) {
        for peer_id in self.peer_order.clone() {
            if self.blocked_block_delivery.contains(&peer_id) {
                continue;
            }
            let arrival = sched
                .now()
                .plus_us(self.links.latency_us(ORDERER_NODE, &peer_id.0));
            let block = block.clone();
            sched
                .schedule(arrival, move |w, s| {
                    w.net.peer_receive_block(s, peer_id, block)
                })
                .expect("future");
        }
    }

    fn peer_receive_block(
        &mut self,
        sched: &mut Scheduler<SimWorld>,
        peer_id: PeerId,
        block: Block<EndorsedTx>,
    ) {
        let now = sched.now();
        let service = block
            .txs
            .iter()
            .map(|tx| self.profile.commit_service_us(tx.endorsements.len()))
            .sum::<u64>()
            .max(self.profile.commit_service_us_per_tx);
        let peer = self.peers.get_mut(&peer_id).expect("peer exists");
        let done = peer.server.admit(now, service);
        sched
            .schedule(done, move |w, s| w.net.peer_commit(s, peer_id, block))
            .expect("future");
    }

    /// Runs at commit-job completion: revalidate and commit this block,
    /// plus any buffered successors that became committable.
    fn peer_commit(&mut self, sched: &mut Scheduler<SimWorld>, peer_id: PeerId, block: Block<EndorsedTx>) {
        {
            let peer = self.peers.get_mut(&peer_id).expect("peer exists");
            if block.height <= peer.ledger.store.height() {
                return; // duplicate delivery
            }
            peer.ready_blocks.insert(block.height, block);
        }
        loop {
            let next_height = {
                let peer = &self.peers[&peer_id];
                peer.ledger.store.height() + 1
            };
            let block = {
                let peer = self.peers.get_mut(&peer_id).expect("peer exists");
                match peer.ready_blocks.remove(&next_height) {
                    Some(b) => b,
                    None => break,
                }
            };
            self.commit_one(sched, &peer_id, block);
        }
    }

    fn commit_one(&mut self, sched: &mut Scheduler<SimWorld>, peer_id: &PeerId, block: Block<EndorsedTx>) {
        let now = sched.now();
        let height = block.height;
        let registry = &self.registry;
        let policy = self.policy;
        let all_peers = &self.all_peers;
        let peer = self.peers.get_mut(peer_id).expect("peer exists");
        let flags = peer
            .ledger
            .commit_block(block.clone(), |tx| {
                let mut endorsers = BTreeSet::new();
                for e in &tx.endorsements {
                    if !e.verify_signature(registry) {
                        return false;
                    }
                    endorsers.insert((e.endorser_msp.clone(), e.endorser_uid.clone()));
                }
                policy.satisfied(&endorsers, &tx.proposal.invoker_msp, all_peers)
            })
            .expect("ordering service delivers blocks in sequence");

        // first committer of a height fixes the reference flags and counts
        match self.first_commit_flags.get(&height) {
            None => {
                self.first_commit_flags.insert(height, flags.clone());
                for &valid in &flags {
                    if valid {
                        self.counters.committed_valid += 1;
                    } else {
                        self.counters.committed_invalid += 1;
                    }
                }
                self.last_commit = Some(now);
            }
            Some(reference) => {
                if *reference != flags {
                    self.counters.flag_divergence += 1;
                }
            }
        }

        // deliveries to clients listening on this peer
        let listeners: Vec<ClientId> = self
            .clients
            .values()
            .filter(|c| &c.event_peer == peer_id)
            .map(|c| c.id.clone())
            .collect();
        for client_id in listeners {
            let latency = self.links.latency_us(&peer_id.0, &client_id.0);
            let deliver_at = now.plus_us(latency);
            for (i, tx) in block.txs.iter().enumerate() {
                let valid = flags[i];
                let tx_id = &tx.proposal.tx_id;
                // settle notification for the submitting client
                if let Some(entry) = self.pending.get(tx_id) {
                    if entry.client == client_id {
                        let entry = self.pending.remove(tx_id).expect("present");
                        if let Some(&idx) = self.tx_index_by_id.get(tx_id) {
                            let rec = &mut self.records[idx];
                            rec.t_event = Some(deliver_at);
                            rec.valid = Some(valid);
                            rec.height = Some(height);
                        }
                        self.notify(
                            sched,
                            deliver_at,
                            Notification::TxSettled {
                                client: entry.client,
                                handle: entry.handle,
                                outcome: TxOutcome::Committed { valid, height },
                            },
                        );
                    }
                }
                if !valid {
                    continue; // invalid transactions emit nothing
                }
                for event in tx.events() {
                    let subscribed = self
                        .subscriptions
                        .iter()
                        .any(|(c, n)| *c == client_id && *n == event.name);
                    if !subscribed {
                        continue;
                    }
                    let dedupe_key =
                        (client_id.clone(), height, i as u32, event.name as u8);
                    if !self.delivered_events.insert(dedupe_key) {
                        self.counters.duplicate_event_deliveries += 1;
                        continue;
                    }
                    self.counters.events_delivered += 1;
                    self.notify(
                        sched,
                        deliver_at,
                        Notification::Event {
                            client: client_id.clone(),
                            event: event.clone(),
                            height,
                            tx_index: i as u32,
                        },
                    );
                }
            }
        }
    }

    fn notify(&mut self, sched: &mut Scheduler<SimWorld>, at: SimTime, note: Notification) {
        sched
            .schedule(at, move |w, s| {
                let SimWorld { net, driver } = w;
                driver.on_notification(net, s, note);
            })
            .expect("future");
    }
}

//! Scripted end-to-end executions with ledger assertions.
//!
//! A scenario file names its actors, a strictly ordered list of chaincode
//! invocations, and state assertions to check after individual steps and
//! at the end. Every step waits for its commit event (and any expected
//! chaincode events) before the next step is submitted. Placeholders like
//! `{R1.ride_key}` or `{loc:Nissan Stadium}` are substituted from the
//! enrolled actors and the scenario's location table, so scripts stay
//! readable while uids may be derived from seeds.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaincode::{EventName, RideRecord, UserRecord};
use crate::config::NetworkConfig;
use crate::identity::{Credentials, MspId, Role};
use crate::ledger::{Namespace, StateKey};
use crate::netsim::Scheduler;
use crate::txflow::{
    AppDriver, ClientId, Notification, SimNetwork, SimWorld, TxHandle, TxOutcome,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario setup error: {0}")]
    Setup(String),
    #[error("step {index} ({actor} {function}) failed: {message}")]
    Step {
        index: usize,
        actor: String,
        function: String,
        message: String,
    },
    #[error("assertion failed: {0}")]
    Assertion(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActorSpec {
    pub org: String,
    /// Fixture scripts may pin the uid; otherwise it is derived from the
    /// enrollment seed.
    #[serde(default)]
    pub uid: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateAssert {
    /// Key to inspect (placeholders allowed). Absent for count checks.
    #[serde(default)]
    pub key: Option<String>,
    /// The key must not exist.
    #[serde(default)]
    pub absent: bool,
    /// Field-by-field expectations on the decoded record; `null` means
    /// the field must be absent.
    #[serde(default)]
    pub fields: Option<BTreeMap<String, serde_json::Value>>,
    /// Count keys with this prefix...
    #[serde(default)]
    pub count_prefix: Option<String>,
    /// ...and expect exactly this many.
    #[serde(default)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step {
    pub actor: String,
    /// Chaincode function; omitted for subscription-only steps.
    #[serde(default)]
    pub r#fn: Option<String>,
    #[serde(default)]
    pub args: Vec<String>,
    /// Event name to subscribe to instead of invoking.
    #[serde(default)]
    pub subscribe: Option<String>,
    /// Chaincode events this step must produce (delivered to at least one
    /// subscriber) before the script continues.
    #[serde(default)]
    pub events: Vec<String>,
    /// The step is expected to fail with an error containing this text.
    #[serde(default)]
    pub expect_error: Option<String>,
    /// Assertions evaluated right after this step commits.
    #[serde(default)]
    pub assert_state: Vec<StateAssert>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioScript {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub locations: BTreeMap<String, String>,
    pub actors: BTreeMap<String, ActorSpec>,
    pub steps: Vec<Step>,
    #[serde(default)]
    pub final_assertions: Vec<StateAssert>,
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }
}

/// Per-assertion outcome line plus overall result.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub description: String,
    pub steps_run: usize,
    pub steps_total: usize,
    pub assertion_lines: Vec<String>,
    pub failure: Option<String>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

struct Actor {
    creds: Credentials,
    client: ClientId,
}

struct ScenarioState {
    actors: BTreeMap<String, Actor>,
    steps: Vec<Step>,
    locations: BTreeMap<String, String>,
    current: usize,
    /// Set once the current step's transaction settles successfully.
    settled: bool,
    awaiting_handle: Option<TxHandle>,
    seen_events: Vec<EventName>,
    next_handle: TxHandle,
    assertion_lines: Vec<String>,
    failure: Option<String>,
    finished: bool,
    final_assertions: Vec<StateAssert>,
}

impl ScenarioState {
    fn substitute(&self, input: &str) -> Result<String, String> {
        let mut out = String::new();
        let mut rest = input;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| format!("unbalanced placeholder in {input:?}"))?
                + open;
            let token = &rest[open + 1..close];
            out.push_str(&self.resolve_token(token)?);
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    fn resolve_token(&self, token: &str) -> Result<String, String> {
        if let Some(name) = token.strip_prefix("loc:") {
            return self
                .locations
                .get(name)
                .cloned()
                .ok_or_else(|| format!("unknown location {name:?}"));
        }
        let (alias, attr) = token
            .split_once('.')
            .ok_or_else(|| format!("bad placeholder {token:?}"))?;
        let actor = self
            .actors
            .get(alias)
            .ok_or_else(|| format!("unknown actor {alias:?}"))?;
        let id = &actor.creds.identity;
        Ok(match attr {
            "uid" => id.uid.clone(),
            "msp" => id.msp.to_string(),
            "id" => format!("ID-{}", id.uid),
            "ride_key" => StateKey::ride_request(&id.msp, &id.uid).to_string(),
            "user_key" => StateKey::user(&id.msp, &id.uid).to_string(),
            other => return Err(format!("unknown actor attribute {other:?}")),
        })
    }
}

struct ScenarioDriver {
    state: Rc<RefCell<ScenarioState>>,
}

impl ScenarioDriver {
    /// Submit steps until one goes asynchronous (a chaincode invocation)
    /// or the script ends. Subscription steps complete synchronously.
    fn advance(state: &Rc<RefCell<ScenarioState>>, net: &mut SimNetwork, sched: &mut Scheduler<SimWorld>) {
        loop {
            let (index, step) = {
                let st = state.borrow();
                if st.failure.is_some() || st.finished {
                    return;
                }
                if st.current >= st.steps.len() {
                    drop(st);
                    Self::finish(state, net);
                    return;
                }
                (st.current, st.steps[st.current].clone())
            };
            let fail = |state: &Rc<RefCell<ScenarioState>>, msg: String| {
                state.borrow_mut().failure = Some(format!(
                    "step {index} ({} {}): {msg}",
                    step.actor,
                    step.r#fn.clone().or(step.subscribe.clone()).unwrap_or_default()
                ));
            };
            let (client, creds) = {
                let st = state.borrow();
                match st.actors.get(&step.actor) {
                    Some(a) => (a.client.clone(), a.creds.clone()),
                    None => {
                        drop(st);
                        fail(state, format!("unknown actor {:?}", step.actor));
                        return;
                    }
                }
            };
            if let Some(event_name) = &step.subscribe {
                if let Err(e) = net.subscribe(&client, event_name) {
                    fail(state, e.to_string());
                    return;
                }
                state.borrow_mut().current += 1;
                continue;
            }
            let Some(function) = step.r#fn.clone() else {
                fail(state, "step has neither fn nor subscribe".into());
                return;
            };
            let args: Result<Vec<String>, String> = {
                let st = state.borrow();
                step.args.iter().map(|a| st.substitute(a)).collect()
            };
            let args = match args {
                Ok(a) => a,
                Err(e) => {
                    fail(state, e);
                    return;
                }
            };
            let handle = {
                let mut st = state.borrow_mut();
                st.next_handle += 1;
                st.settled = false;
                st.seen_events.clear();
                st.awaiting_handle = Some(st.next_handle);
                st.next_handle
            };
            net.submit(sched, &client, &creds, &function, args, "", handle);
            return;
        }
    }

    /// Step done (settled plus expected events): run its assertions,
    /// housekeeping, move on.
    fn complete_step(state: &Rc<RefCell<ScenarioState>>, net: &mut SimNetwork, sched: &mut Scheduler<SimWorld>) {
        let (index, step) = {
            let st = state.borrow();
            (st.current, st.steps[st.current].clone())
        };
        // the on-ledger role change is mirrored on the identity registry
        if step.r#fn.as_deref() == Some("upgradeToDriver") {
            let (msp, uid) = {
                let st = state.borrow();
                let id = &st.actors[&step.actor].creds.identity;
                (id.msp.clone(), id.uid.clone())
            };
            if net.registry.identity(&msp, &uid).map(|i| i.role) == Ok(Role::Rider) {
                net.registry
                    .promote_to_driver(&msp, &uid)
                    .expect("rider promotes to driver");
            }
            let mut st = state.borrow_mut();
            let actor = st.actors.get_mut(&step.actor).expect("actor exists");
            actor.creds = net
                .registry
                .credentials(&actor.creds.identity.msp, &actor.creds.identity.uid)
                .expect("actor stays enrolled");
        }
        let checks: Vec<StateAssert> = step.assert_state.clone();
        for assert in checks {
            let outcome = run_assert(state, net, &assert);
            let mut st = state.borrow_mut();
            match outcome {
                Ok(line) => st.assertion_lines.push(format!("step {index}: {line}")),
                Err(e) => {
                    st.failure = Some(format!("step {index} assertion: {e}"));
                    return;
                }
            }
        }
        {
            let mut st = state.borrow_mut();
            st.current += 1;
            st.awaiting_handle = None;
        }
        Self::advance(state, net, sched);
    }

    fn finish(state: &Rc<RefCell<ScenarioState>>, net: &SimNetwork) {
        let finals: Vec<StateAssert> = {
            let mut st = state.borrow_mut();
            if st.finished {
                return;
            }
            st.finished = true;
            st.final_assertions.clone()
        };
        for assert in finals {
            let outcome = run_assert(state, net, &assert);
            let mut st = state.borrow_mut();
            match outcome {
                Ok(line) => st.assertion_lines.push(format!("final: {line}")),
                Err(e) => {
                    st.failure = Some(format!("final assertion: {e}"));
                    return;
                }
            }
        }
    }
}

fn run_assert(
    state: &Rc<RefCell<ScenarioState>>,
    net: &SimNetwork,
    assert: &StateAssert,
) -> Result<String, String> {
    let st = state.borrow();
    let ledger_state = &net.reference_peer().ledger.state;
    if let Some(prefix) = &assert.count_prefix {
        let prefix = st.substitute(prefix)?;
        let expected = assert.count.ok_or("count_prefix without count")?;
        let actual = ledger_state
            .iter()
            .filter(|(k, _)| k.to_string().starts_with(&prefix))
            .count();
        if actual != expected {
            return Err(format!(
                "expected {expected} keys with prefix {prefix:?}, found {actual}"
            ));
        }
        return Ok(format!("{actual} keys under {prefix:?}"));
    }
    let key_str = st.substitute(assert.key.as_deref().ok_or("assertion without key")?)?;
    let key = StateKey::parse(&key_str).map_err(|e| e.to_string())?;
    let value = ledger_state.get(&key);
    if assert.absent {
        return match value {
            None => Ok(format!("{key_str} absent")),
            Some(_) => Err(format!("expected {key_str} to be absent")),
        };
    }
    let value = value.ok_or_else(|| format!("key {key_str} not found"))?;
    let record: serde_json::Value =
        serde_json::from_slice(&value.bytes).map_err(|e| e.to_string())?;
    if let Some(fields) = &assert.fields {
        for (field, expected) in fields {
            let expected = match expected {
                serde_json::Value::String(s) => serde_json::Value::String(st.substitute(s)?),
                other => other.clone(),
            };
            let actual = record.get(field).cloned().unwrap_or(serde_json::Value::Null);
            if actual != expected {
                return Err(format!(
                    "{key_str}.{field}: expected {expected}, found {actual}"
                ));
            }
        }
    }
    Ok(format!("{key_str} matches"))
}

impl AppDriver for ScenarioDriver {
    fn on_notification(
        &mut self,
        net: &mut SimNetwork,
        sched: &mut Scheduler<SimWorld>,
        note: Notification,
    ) {
        let state = Rc::clone(&self.state);
        match note {
            Notification::TxSettled { handle, outcome, .. } => {
                let proceed = {
                    let mut st = state.borrow_mut();
                    if st.awaiting_handle != Some(handle) || st.failure.is_some() {
                        return;
                    }
                    let step = &st.steps[st.current];
                    match (&outcome, &step.expect_error) {
                        (TxOutcome::Committed { valid: true, .. }, None) => {
                            st.settled = true;
                            true
                        }
                        (TxOutcome::Committed { valid: true, .. }, Some(expected)) => {
                            st.failure = Some(format!(
                                "step {} committed but expected error {expected:?}",
                                st.current
                            ));
                            false
                        }
                        (TxOutcome::Committed { valid: false, height }, _) => {
                            st.failure = Some(format!(
                                "step {} invalidated at commit (height {height})",
                                st.current
                            ));
                            false
                        }
                        (TxOutcome::EndorseFailed { detail, .. }, Some(expected)) => {
                            if detail.contains(expected.as_str()) {
                                // expected rejection: step complete, no events
                                st.settled = true;
                                st.seen_events.clear();
                                true
                            } else {
                                st.failure = Some(format!(
                                    "step {} failed with {detail:?}, expected {expected:?}",
                                    st.current
                                ));
                                false
                            }
                        }
                        (TxOutcome::EndorseFailed { kind, detail }, None) => {
                            st.failure = Some(format!(
                                "step {} endorsement failed ({kind:?}): {detail}",
                                st.current
                            ));
                            false
                        }
                    }
                };
                if proceed && Self::step_ready(&state) {
                    Self::complete_step(&state, net, sched);
                }
            }
            Notification::Event { event, .. } => {
                {
                    let mut st = state.borrow_mut();
                    if st.finished || st.failure.is_some() || st.awaiting_handle.is_none() {
                        return;
                    }
                    st.seen_events.push(event.name);
                }
                if Self::step_ready(&state) {
                    Self::complete_step(&state, net, sched);
                }
            }
        }
    }
}

impl ScenarioDriver {
    fn step_ready(state: &Rc<RefCell<ScenarioState>>) -> bool {
        let st = state.borrow();
        if !st.settled {
            return false;
        }
        let step = &st.steps[st.current];
        if step.expect_error.is_some() {
            return true;
        }
        step.events.iter().all(|name| {
            EventName::parse(name)
                .map(|n| st.seen_events.contains(&n))
                .unwrap_or(false)
        })
    }
}

/// Execute a script on a freshly built network. Actors are enrolled (and
/// their client endpoints registered) before the first step runs.
pub fn run_scenario(
    config: &NetworkConfig,
    seed: u64,
    script: &ScenarioScript,
) -> Result<ScenarioReport, ScenarioError> {
    run_scenario_with_world(config, seed, script).map(|(report, _)| report)
}

/// As [`run_scenario`], also returning the finished world so callers can
/// inspect ledger state and block stores.
pub fn run_scenario_with_world(
    config: &NetworkConfig,
    seed: u64,
    script: &ScenarioScript,
) -> Result<(ScenarioReport, SimWorld), ScenarioError> {
    let mut net = SimNetwork::build(config, seed).map_err(|e| ScenarioError::Setup(e.to_string()))?;
    let mut actors = BTreeMap::new();
    for (i, (alias, spec)) in script.actors.iter().enumerate() {
        let msp = MspId::for_org(&spec.org).map_err(|e| ScenarioError::Setup(e.to_string()))?;
        let enroll_seed = 5_000_000 + i as u64;
        let creds = match &spec.uid {
            Some(uid) => net
                .registry
                .enroll_identity_with_uid(&msp, Role::Rider, enroll_seed, uid),
            None => net.registry.enroll_identity(&msp, Role::Rider, enroll_seed),
        }
        .map_err(|e| ScenarioError::Setup(e.to_string()))?;
        let client = net
            .add_client(&spec.org)
            .map_err(|e| ScenarioError::Setup(e.to_string()))?;
        actors.insert(alias.clone(), Actor { creds, client });
    }
    let state = Rc::new(RefCell::new(ScenarioState {
        actors,
        steps: script.steps.clone(),
        locations: script.locations.clone(),
        current: 0,
        settled: false,
        awaiting_handle: None,
        seen_events: Vec::new(),
        next_handle: 1,
        assertion_lines: Vec::new(),
        failure: None,
        finished: false,
        final_assertions: script.final_assertions.clone(),
    }));
    let driver = ScenarioDriver {
        state: Rc::clone(&state),
    };
    let mut world = SimWorld::new(net, Box::new(driver));
    let mut sched: Scheduler<SimWorld> = Scheduler::new();
    {
        let state2 = Rc::clone(&state);
        sched
            .schedule(crate::netsim::SimTime::ZERO, move |w, s| {
                ScenarioDriver::advance(&state2, &mut w.net, s)
            })
            .expect("start of time");
    }
    sched.run_until_quiescent(&mut world);
    // end-of-script assertions also run when the script stalls cleanly
    if state.borrow().failure.is_none() && !state.borrow().finished {
        let st = state.borrow();
        let current = st.current;
        let total = st.steps.len();
        drop(st);
        if current >= total {
            ScenarioDriver::finish(&state, &world.net);
        } else {
            state.borrow_mut().failure = Some(format!(
                "script stalled at step {current} of {total} (no settlement)"
            ));
        }
    }
    let report = {
        let st = state.borrow();
        ScenarioReport {
            description: script.description.clone(),
            steps_run: st.current,
            steps_total: st.steps.len(),
            assertion_lines: st.assertion_lines.clone(),
            failure: st.failure.clone(),
        }
    };
    Ok((report, world))
}

/// Outcome of a client-side ledger query attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryOutcome {
    Value(Vec<u8>),
    AccessDenied,
}

/// Attempt to read `key` as `creds`. The only read surface a client has
/// is the chaincode, and the only chaincode query returns the caller's
/// own user record; every other key — another user's record, any ride
/// object, anything — is unreachable, so the attempt is denied without
/// touching any peer state.
pub fn query_as(
    world: &mut SimWorld,
    sched: &mut Scheduler<SimWorld>,
    client: &ClientId,
    creds: &Credentials,
    key: &StateKey,
    handle: TxHandle,
) -> QueryOutcome {
    let own_user_key = key.namespace() == Namespace::User
        && key.msp_part() == creds.identity.msp.as_str()
        && key.uid_part() == creds.identity.uid;
    if !own_user_key {
        return QueryOutcome::AccessDenied;
    }
    world
        .net
        .submit(sched, client, creds, "getUserInfo", vec![], "", handle);
    sched.run_until_quiescent(world);
    let record = world.net.record_for_handle(handle);
    let (tx_id, height) = match record {
        Some(r) if r.valid == Some(true) => (r.tx_id.clone(), r.height.expect("committed")),
        _ => return QueryOutcome::AccessDenied,
    };
    let peer = world.net.reference_peer();
    let block = peer.ledger.store.block(height).expect("committed height");
    let tx = block
        .txs
        .iter()
        .find(|t| t.proposal.tx_id == tx_id)
        .expect("tx in its block");
    QueryOutcome::Value(tx.response().return_value.clone())
}

/// Decode helpers for assertion writing in fixtures and tests.
pub fn decode_ride(bytes: &[u8]) -> Option<RideRecord> {
    serde_json::from_slice(bytes).ok()
}

pub fn decode_user(bytes: &[u8]) -> Option<UserRecord> {
    serde_json::from_slice(bytes).ok()
}

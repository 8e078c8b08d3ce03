//! The ride-hailing transaction logic installed on every endorsing peer.
//!
//! Every function here is a deterministic transition over an immutable
//! state snapshot: no clock reads, no randomness, no peer-local state.
//! Caller identity (MSP, uid, role) comes exclusively from the verified
//! signature on the proposal — never from arguments — and every ledger key
//! a function writes is derived from that identity, which is what confines
//! each participant to their own records. Timestamps are supplied by the
//! client as transaction arguments; a peer clock would make endorsements
//! non-deterministic.

pub mod geo;
mod ridehail;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::identity::{MspId, Role};
use crate::ledger::{ReadWriteSet, StateKey, TxSimulator, WorldState};

pub use geo::{distance_m, GeoPoint};

/// Chaincode deployment name pinned in network configuration.
pub const CHAINCODE_NAME: &str = "ridehail";
/// Chaincode version pinned in network configuration; proposals naming a
/// different version are rejected before execution.
pub const CHAINCODE_VERSION: &str = "1.0";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChaincodeError {
    #[error("already registered")]
    AlreadyRegistered,
    #[error("caller is not registered")]
    NotRegistered,
    #[error("a ride is in progress")]
    RideInProgress,
    #[error("caller is already a driver")]
    AlreadyDriver,
    #[error("caller already has an active ride request")]
    RideAlreadyActive,
    #[error("caller is not a driver")]
    NotADriver,
    #[error("ride not found")]
    RideNotFound,
    #[error("ride already accepted")]
    AlreadyAccepted,
    #[error("caller does not own this ride")]
    NotOwner,
    #[error("operation not allowed in the ride's current status")]
    WrongStatus,
    #[error("caller is not the assigned driver")]
    NotAssignedDriver,
    #[error("ride is not ongoing")]
    RideNotOngoing,
    #[error("driver is not at the expected location")]
    WrongLocation,
    #[error("observed rider is not onboard")]
    ObserverNotPresent,
    #[error("co-rider field already set")]
    FieldAlreadySet,
    #[error("rider has not been picked up")]
    NotPickedUp,
    #[error("ride has no destination")]
    NoDestination,
    #[error("ride is not completed")]
    RideNotCompleted,
    #[error("invalid timestamp: {0}")]
    InvalidTimestamp(String),
    #[error("permanent ride key already exists")]
    KeyCollision,
    #[error("unknown chaincode function {0:?}")]
    UnknownFunction(String),
    #[error("bad arguments: {0}")]
    BadArguments(String),
}

/// Identity of the invoking client, extracted from the verified
/// certificate on the proposal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallerInfo {
    pub msp: MspId,
    pub uid: String,
    pub role: Role,
}

/// Per-invocation context handed to each function.
#[derive(Debug, Clone)]
pub struct ChaincodeContext {
    pub caller: CallerInfo,
    /// Client-supplied timestamp argument, `M/D/YYYY HH:MM`. Present only
    /// for functions that record times.
    pub now: Option<String>,
}

/// Network-wide chaincode parameters, part of the shared configuration so
/// all peers execute identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaincodeConfig {
    /// Location tolerance for pickup/dropoff checks, in meters.
    pub epsilon_m: f64,
}

impl Default for ChaincodeConfig {
    fn default() -> Self {
        ChaincodeConfig { epsilon_m: 150.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserRole {
    Rider,
    Driver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RideStatus {
    Requested,
    Accepted,
    Completed,
}

/// Ledger record at `User~{msp}~{uid}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub pw_hash: String,
    pub pw_salt: String,
    pub role: UserRole,
    /// Keys of the user's permanent ride records, append-only.
    pub ride_keys: Vec<String>,
}

/// The in-flight ride object at `RideRequest~{msp}~{uid}` while a ride is
/// underway, and — copied verbatim — the permanent record at
/// `Ride~{msp}~{uid}~{dropoff_time}` once it ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RideRecord {
    pub ride_id: String,
    pub driver_id: Option<String>,
    pub status: RideStatus,
    pub pickup_loc: String,
    pub dropoff_loc: Option<String>,
    pub pickup_time: Option<String>,
    pub dropoff_time: Option<String>,
    pub co_rider_id: Option<String>,
    pub co_rider_pickup_loc: Option<String>,
    pub co_rider_dropoff_loc: Option<String>,
}

impl RideRecord {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::canonical_bytes(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventName {
    RideRequested,
    RideAccepted,
    DriverArrived,
    RideEnding,
}

impl EventName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "RideRequested" => Some(EventName::RideRequested),
            "RideAccepted" => Some(EventName::RideAccepted),
            "DriverArrived" => Some(EventName::DriverArrived),
            "RideEnding" => Some(EventName::RideEnding),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EventName::RideRequested => "RideRequested",
            EventName::RideAccepted => "RideAccepted",
            EventName::DriverArrived => "DriverArrived",
            EventName::RideEnding => "RideEnding",
        }
    }
}

/// Chaincode event, delivered to subscribers only after the containing
/// block commits and only from valid transactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RideEvent {
    pub name: EventName,
    pub ride_key: StateKey,
    pub payload: serde_json::Value,
}

/// Everything one simulated execution produces.
#[derive(Debug, Clone, PartialEq)]
pub struct InvokeOutput {
    pub rwset: ReadWriteSet,
    pub response: Vec<u8>,
    pub events: Vec<RideEvent>,
}

/// The record `registerUser` would create for this identity (with the
/// role applied), for pre-seeding world state ahead of a benchmark.
pub fn seeded_user_record(msp: &MspId, uid: &str, password: &str, role: UserRole) -> UserRecord {
    let salt = ridehail::salt_for(msp.as_str(), uid);
    UserRecord {
        pw_hash: ridehail::password_hash(&salt, password),
        pw_salt: hex::encode(&salt),
        role,
        ride_keys: Vec::new(),
    }
}

/// Execute `function(args)` as `caller` against an immutable snapshot.
/// Errors reject the endorsement; nothing is ever written directly.
pub fn invoke(
    state: &WorldState,
    caller: &CallerInfo,
    function: &str,
    args: &[String],
    cfg: &ChaincodeConfig,
) -> Result<InvokeOutput, ChaincodeError> {
    let sim = TxSimulator::new(state);
    ridehail::dispatch(sim, caller, function, args, cfg)
}

/// Parsed `M/D/YYYY HH:MM` timestamp, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RideTimestamp {
    pub year: u16,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
}

impl RideTimestamp {
    pub fn parse(s: &str) -> Result<Self, ChaincodeError> {
        let bad = || ChaincodeError::InvalidTimestamp(s.to_string());
        let (date, time) = s.split_once(' ').ok_or_else(bad)?;
        let mut dmy = date.split('/');
        let month: u8 = dmy.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let day: u8 = dmy.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let year: u16 = dmy.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        if dmy.next().is_some() {
            return Err(bad());
        }
        let (h, m) = time.split_once(':').ok_or_else(bad)?;
        let hour: u8 = h.parse().map_err(|_| bad())?;
        let minute: u8 = m.parse().map_err(|_| bad())?;
        if month == 0 || month > 12 || day == 0 || day > 31 || hour > 23 || minute > 59 {
            return Err(bad());
        }
        Ok(RideTimestamp {
            year,
            month,
            day,
            hour,
            minute,
        })
    }
}

#[cfg(test)]
mod timestamp_tests {
    use super::RideTimestamp;

    #[test]
    fn parses_and_orders() {
        let a = RideTimestamp::parse("12/5/2018 12:34").unwrap();
        let b = RideTimestamp::parse("12/5/2018 12:36").unwrap();
        assert!(a < b);
        assert!(RideTimestamp::parse("13/5/2018 12:00").is_err());
        assert!(RideTimestamp::parse("12/5/2018").is_err());
    }
}

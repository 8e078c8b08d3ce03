//! Composite state keys.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::identity::{MspId, KEY_SEPARATOR};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("key part {0:?} contains the separator or is empty")]
    BadPart(String),
    #[error("unknown key namespace {0:?}")]
    BadNamespace(String),
    #[error("key needs at least a namespace and one part")]
    TooShort,
}

/// Leading tag of every state key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Namespace {
    User,
    RideRequest,
    Ride,
}

impl Namespace {
    pub fn as_str(&self) -> &'static str {
        match self {
            Namespace::User => "User",
            Namespace::RideRequest => "RideRequest",
            Namespace::Ride => "Ride",
        }
    }

    fn parse(s: &str) -> Result<Self, KeyError> {
        match s {
            "User" => Ok(Namespace::User),
            "RideRequest" => Ok(Namespace::RideRequest),
            "Ride" => Ok(Namespace::Ride),
            other => Err(KeyError::BadNamespace(other.to_string())),
        }
    }
}

/// An ordered sequence of parts joined by `~`, e.g.
/// `RideRequest~Org2PeerOrgMSP~eDUwOT`. The first part is always a
/// [`Namespace`]; parts never contain the separator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateKey {
    parts: Vec<String>,
}

impl StateKey {
    pub fn new(parts: Vec<String>) -> Result<Self, KeyError> {
        if parts.len() < 2 {
            return Err(KeyError::TooShort);
        }
        Namespace::parse(&parts[0])?;
        for p in &parts {
            if p.is_empty() || p.contains(KEY_SEPARATOR) {
                return Err(KeyError::BadPart(p.clone()));
            }
        }
        Ok(StateKey { parts })
    }

    pub fn parse(s: &str) -> Result<Self, KeyError> {
        Self::new(s.split(KEY_SEPARATOR).map(str::to_string).collect())
    }

    pub fn user(msp: &MspId, uid: &str) -> Self {
        StateKey::new(vec![
            Namespace::User.as_str().into(),
            msp.to_string(),
            uid.into(),
        ])
        .expect("msp and uid are separator-free by construction")
    }

    pub fn ride_request(msp: &MspId, uid: &str) -> Self {
        StateKey::new(vec![
            Namespace::RideRequest.as_str().into(),
            msp.to_string(),
            uid.into(),
        ])
        .expect("msp and uid are separator-free by construction")
    }

    pub fn permanent_ride(msp: &MspId, uid: &str, dropoff_time: &str) -> Result<Self, KeyError> {
        StateKey::new(vec![
            Namespace::Ride.as_str().into(),
            msp.to_string(),
            uid.into(),
            dropoff_time.into(),
        ])
    }

    pub fn namespace(&self) -> Namespace {
        Namespace::parse(&self.parts[0]).expect("validated at construction")
    }

    pub fn parts(&self) -> &[String] {
        &self.parts
    }

    /// The MSP part, present in every namespace this system defines.
    pub fn msp_part(&self) -> &str {
        &self.parts[1]
    }

    /// The uid part, present in every namespace this system defines.
    pub fn uid_part(&self) -> &str {
        &self.parts[2]
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.parts.join("~"))
    }
}

impl fmt::Debug for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateKey({self})")
    }
}

impl Serialize for StateKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StateKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        StateKey::parse(&s).map_err(serde::de::Error::custom)
    }
}

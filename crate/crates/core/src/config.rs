//! Network configuration: topology, endorsement policy, ordering
//! parameters, node profiles, and tuning knobs.
//!
//! Loaded from JSON, e.g.:
//!
//! ```json
//! {
//!   "orgs": [
//!     {"name": "Org1PeerOrg", "peers": 2, "orderers": 1},
//!     {"name": "Org2PeerOrg", "peers": 2, "orderers": 1}
//!   ],
//!   "seed": 42,
//!   "policy": "ALL_ORG_PEERS",
//!   "ordering": {"batch_timeout_ms": 2000, "max_message_count": 10},
//!   "profile": "server"
//! }
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::NodeProfile;
use crate::txflow::{EndorsementPolicy, OrderingConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("seed is required: pass --seed or set \"seed\" in the config")]
    MissingSeed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrgConfig {
    pub name: String,
    pub peers: u32,
    #[serde(default = "default_orderers")]
    pub orderers: u32,
}

fn default_orderers() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderingConfigFile {
    #[serde(default = "default_batch_timeout_ms")]
    pub batch_timeout_ms: f64,
    #[serde(default = "default_max_message_count")]
    pub max_message_count: usize,
}

fn default_batch_timeout_ms() -> f64 {
    2000.0
}

fn default_max_message_count() -> usize {
    10
}

impl Default for OrderingConfigFile {
    fn default() -> Self {
        OrderingConfigFile {
            batch_timeout_ms: default_batch_timeout_ms(),
            max_message_count: default_max_message_count(),
        }
    }
}

/// Node profile: a named preset or explicit service times in ms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileConfig {
    Preset(String),
    Explicit {
        endorse_service_ms: f64,
        commit_service_ms_per_tx: f64,
        #[serde(default = "default_commit_ms_per_endorsement")]
        commit_service_ms_per_endorsement: f64,
        order_service_ms: f64,
        #[serde(default = "default_submit_overhead_ms")]
        submit_overhead_ms: f64,
    },
}

fn default_submit_overhead_ms() -> f64 {
    0.5
}

fn default_commit_ms_per_endorsement() -> f64 {
    0.2
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig::Preset("server".into())
    }
}

impl ProfileConfig {
    pub fn resolve(&self) -> Result<NodeProfile, ConfigError> {
        match self {
            ProfileConfig::Preset(name) => match name.as_str() {
                "server" => Ok(NodeProfile::server()),
                "pi" => Ok(NodeProfile::pi()),
                other => Err(ConfigError::Invalid(format!(
                    "unknown profile preset {other:?}, expected \"server\" or \"pi\""
                ))),
            },
            ProfileConfig::Explicit {
                endorse_service_ms,
                commit_service_ms_per_tx,
                commit_service_ms_per_endorsement,
                order_service_ms,
                submit_overhead_ms,
            } => Ok(NodeProfile {
                endorse_service_us: ms_to_us(*endorse_service_ms)?,
                commit_service_us_per_tx: ms_to_us(*commit_service_ms_per_tx)?,
                commit_service_us_per_endorsement: ms_to_us(*commit_service_ms_per_endorsement)?,
                order_service_us: ms_to_us(*order_service_ms)?,
                submit_overhead_us: ms_to_us(*submit_overhead_ms)?,
            }),
        }
    }
}

fn ms_to_us(ms: f64) -> Result<u64, ConfigError> {
    if !ms.is_finite() || ms < 0.0 {
        return Err(ConfigError::Invalid(format!("negative duration {ms}ms")));
    }
    Ok((ms * 1000.0).round() as u64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChaincodePin {
    pub name: String,
    pub version: String,
}

impl Default for ChaincodePin {
    fn default() -> Self {
        ChaincodePin {
            name: crate::chaincode::CHAINCODE_NAME.into(),
            version: crate::chaincode::CHAINCODE_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub orgs: Vec<OrgConfig>,
    /// Master seed. Mandatory somewhere: here or on the command line;
    /// there is no wall-clock fallback.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default)]
    pub ordering: OrderingConfigFile,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default = "default_link_latency_ms")]
    pub link_latency_ms: f64,
    #[serde(default = "default_epsilon_m")]
    pub location_epsilon_m: f64,
    #[serde(default)]
    pub chaincode: ChaincodePin,
}

fn default_policy() -> String {
    "ALL_ORG_PEERS".into()
}

fn default_link_latency_ms() -> f64 {
    1.0
}

fn default_epsilon_m() -> f64 {
    150.0
}

impl NetworkConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: NetworkConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A two-organization, two-peers-each network; the default layout.
    pub fn two_orgs_two_peers() -> Self {
        NetworkConfig {
            orgs: vec![
                OrgConfig {
                    name: "Org1PeerOrg".into(),
                    peers: 2,
                    orderers: 1,
                },
                OrgConfig {
                    name: "Org2PeerOrg".into(),
                    peers: 2,
                    orderers: 1,
                },
            ],
            seed: None,
            policy: default_policy(),
            ordering: OrderingConfigFile::default(),
            profile: ProfileConfig::default(),
            link_latency_ms: default_link_latency_ms(),
            location_epsilon_m: default_epsilon_m(),
            chaincode: ChaincodePin::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.orgs.is_empty() {
            return Err(ConfigError::Invalid("at least one organization".into()));
        }
        for org in &self.orgs {
            if org.peers == 0 {
                return Err(ConfigError::Invalid(format!(
                    "organization {} must have at least one peer",
                    org.name
                )));
            }
        }
        if self.ordering.batch_timeout_ms <= 0.0 {
            return Err(ConfigError::Invalid("batch_timeout_ms must be positive".into()));
        }
        if self.ordering.max_message_count == 0 {
            return Err(ConfigError::Invalid("max_message_count must be positive".into()));
        }
        if self.link_latency_ms < 0.0 {
            return Err(ConfigError::Invalid("link_latency_ms must be non-negative".into()));
        }
        if self.location_epsilon_m < 0.0 {
            return Err(ConfigError::Invalid("location_epsilon_m must be non-negative".into()));
        }
        self.policy()?;
        self.profile.resolve()?;
        Ok(())
    }

    pub fn policy(&self) -> Result<EndorsementPolicy, ConfigError> {
        EndorsementPolicy::parse(&self.policy)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown policy {:?}", self.policy)))
    }

    pub fn ordering_config(&self) -> Result<OrderingConfig, ConfigError> {
        Ok(OrderingConfig {
            batch_timeout_us: ms_to_us(self.ordering.batch_timeout_ms)?,
            max_message_count: self.ordering.max_message_count,
        })
    }

    pub fn node_profile(&self) -> Result<NodeProfile, ConfigError> {
        self.profile.resolve()
    }

    pub fn seed_or(&self, flag: Option<u64>) -> Result<u64, ConfigError> {
        flag.or(self.seed).ok_or(ConfigError::MissingSeed)
    }
}

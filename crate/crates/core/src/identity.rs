//! Organizations, membership registries, and signing.
//!
//! Each organization runs a membership service provider (MSP) that enrolls
//! peers, orderers, and end users and vouches for their identities. The
//! simulator does not need real asymmetric cryptography: signatures are
//! deterministic keyed MACs over the payload, verified through the shared
//! registry that holds every enrolled identity's secret. That preserves the
//! two properties the rest of the system relies on — sign/verify is
//! deterministic, and no identity can produce a signature that verifies as
//! another's.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::canonical::Digest256;

/// Reserved network-wide as the ledger key separator; no name or id may
/// contain it.
pub const KEY_SEPARATOR: char = '~';

/// Length of derived user ids.
pub const UID_LEN: usize = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
    #[error("organization {0} already provisioned")]
    DuplicateOrg(String),
    #[error("organization must have at least one peer")]
    ZeroPeers,
    #[error("unknown organization {0}")]
    UnknownOrg(String),
    #[error("unknown signer {msp}/{uid}")]
    UnknownSigner { msp: String, uid: String },
    #[error("uid {uid} already enrolled in {msp}")]
    UidCollision { msp: String, uid: String },
    #[error("invalid name {0:?}: must be non-empty and must not contain '~'")]
    InvalidName(String),
    #[error("role transition {from}->{to} not allowed for {msp}/{uid}")]
    RoleTransition {
        msp: String,
        uid: String,
        from: Role,
        to: Role,
    },
}

/// MSP identifier, e.g. `Org2PeerOrgMSP`. Unique across the network.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MspId(String);

impl MspId {
    pub fn new(name: &str) -> Result<Self, IdentityError> {
        if name.is_empty() || name.contains(KEY_SEPARATOR) {
            return Err(IdentityError::InvalidName(name.to_string()));
        }
        Ok(MspId(name.to_string()))
    }

    /// MSP id for an organization name: `Org2PeerOrg` -> `Org2PeerOrgMSP`.
    pub fn for_org(org_name: &str) -> Result<Self, IdentityError> {
        Self::new(&format!("{org_name}MSP"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MspId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for MspId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MspId({})", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Rider,
    Driver,
    Peer,
    Orderer,
    Admin,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Rider => "Rider",
            Role::Driver => "Driver",
            Role::Peer => "Peer",
            Role::Orderer => "Orderer",
            Role::Admin => "Admin",
        };
        f.write_str(s)
    }
}

/// Public face of an enrolled participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    pub msp: MspId,
    pub uid: String,
    pub role: Role,
    /// Public verification material; the uid is derived from it.
    pub public: Digest256,
}

/// An identity together with its signing secret. Handed out at enrollment;
/// signing is a pure function of `(secret, payload)`.
#[derive(Debug, Clone)]
pub struct Credentials {
    pub identity: Identity,
    secret: [u8; 32],
}

impl Credentials {
    pub fn sign(&self, payload: &[u8]) -> Signature {
        Signature {
            signer_msp: self.identity.msp.clone(),
            signer_uid: self.identity.uid.clone(),
            mac: mac(&self.secret, payload),
            payload_digest: Digest256::of_bytes(payload),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub signer_msp: MspId,
    pub signer_uid: String,
    pub mac: Digest256,
    pub payload_digest: Digest256,
}

fn mac(secret: &[u8; 32], payload: &[u8]) -> Digest256 {
    let mut h = Sha256::new();
    h.update(b"rhsim-mac-v1");
    h.update(secret);
    h.update((payload.len() as u64).to_le_bytes());
    h.update(payload);
    Digest256(h.finalize().into())
}

fn derive_secret(network_seed: u64, msp: &MspId, role: Role, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"rhsim-enroll-v1");
    h.update(network_seed.to_le_bytes());
    h.update(msp.as_str().as_bytes());
    h.update([role as u8]);
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

fn public_of(secret: &[u8; 32]) -> Digest256 {
    let mut h = Sha256::new();
    h.update(b"rhsim-public-v1");
    h.update(secret);
    Digest256(h.finalize().into())
}

const B64URL: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

/// First `UID_LEN` base64url characters of the public material digest.
fn derive_uid(public: &Digest256) -> String {
    let b = &public.0;
    let mut out = String::with_capacity(UID_LEN);
    // 6 chars consume 36 bits = 4.5 bytes of the digest.
    let groups = [
        b[0] >> 2,
        ((b[0] & 0x03) << 4) | (b[1] >> 4),
        ((b[1] & 0x0f) << 2) | (b[2] >> 6),
        b[2] & 0x3f,
        b[3] >> 2,
        ((b[3] & 0x03) << 4) | (b[4] >> 4),
    ];
    for g in groups {
        out.push(B64URL[g as usize] as char);
    }
    out
}

/// Root certificate-authority record for an organization. Only its outcome
/// is modeled: a trust anchor all enrolled identities chain to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaRecord {
    pub msp: MspId,
    pub cert_digest: Digest256,
}

#[derive(Debug, Clone)]
struct Member {
    identity: Identity,
    secret: [u8; 32],
}

/// An organization: MSP id, root CA, and its enrolled members.
#[derive(Debug, Clone)]
pub struct Org {
    pub name: String,
    pub msp: MspId,
    pub root_ca: CaRecord,
    members: BTreeMap<String, Member>,
    /// uids of the node identities, in provisioning order.
    pub peers: Vec<String>,
    pub orderers: Vec<String>,
}

/// Network-wide identity registry. Populated while the network is built;
/// read-only afterwards (the one sanctioned later write is the
/// rider-to-driver promotion).
#[derive(Debug, Clone)]
pub struct Registry {
    network_seed: u64,
    orgs: BTreeMap<MspId, Org>,
}

impl Registry {
    pub fn new(network_seed: u64) -> Self {
        Registry {
            network_seed,
            orgs: BTreeMap::new(),
        }
    }

    pub fn orgs(&self) -> impl Iterator<Item = &Org> {
        self.orgs.values()
    }

    pub fn org(&self, msp: &MspId) -> Result<&Org, IdentityError> {
        self.orgs
            .get(msp)
            .ok_or_else(|| IdentityError::UnknownOrg(msp.to_string()))
    }

    /// Create an organization with `peer_count` peer identities,
    /// `orderer_count` orderer identities, and a root CA record.
    pub fn provision_org(
        &mut self,
        name: &str,
        peer_count: u32,
        orderer_count: u32,
    ) -> Result<&Org, IdentityError> {
        if peer_count == 0 {
            return Err(IdentityError::ZeroPeers);
        }
        let msp = MspId::for_org(name)?;
        if self.orgs.contains_key(&msp) {
            return Err(IdentityError::DuplicateOrg(name.to_string()));
        }
        let ca_secret = derive_secret(self.network_seed, &msp, Role::Admin, u64::MAX);
        let org = Org {
            name: name.to_string(),
            msp: msp.clone(),
            root_ca: CaRecord {
                msp: msp.clone(),
                cert_digest: public_of(&ca_secret),
            },
            members: BTreeMap::new(),
            peers: Vec::new(),
            orderers: Vec::new(),
        };
        self.orgs.insert(msp.clone(), org);
        for i in 0..peer_count {
            let creds = self.enroll_member(&msp, Role::Peer, 1_000_000 + u64::from(i), None)?;
            self.orgs
                .get_mut(&msp)
                .expect("just inserted")
                .peers
                .push(creds.identity.uid);
        }
        for i in 0..orderer_count {
            let creds = self.enroll_member(&msp, Role::Orderer, 2_000_000 + u64::from(i), None)?;
            self.orgs
                .get_mut(&msp)
                .expect("just inserted")
                .orderers
                .push(creds.identity.uid);
        }
        Ok(self.orgs.get(&msp).expect("just inserted"))
    }

    /// Enroll an end-user identity. The uid is a 6-character base64url
    /// encoding of the leading bits of the public material digest; a uid
    /// collision within the MSP aborts enrollment.
    pub fn enroll_identity(
        &mut self,
        msp: &MspId,
        role: Role,
        seed: u64,
    ) -> Result<Credentials, IdentityError> {
        self.enroll_member(msp, role, seed, None)
    }

    /// Enroll with a caller-chosen uid instead of the derived one. Used by
    /// scripted fixtures that must reproduce specific recorded ids.
    pub fn enroll_identity_with_uid(
        &mut self,
        msp: &MspId,
        role: Role,
        seed: u64,
        uid: &str,
    ) -> Result<Credentials, IdentityError> {
        if uid.is_empty() || uid.contains(KEY_SEPARATOR) {
            return Err(IdentityError::InvalidName(uid.to_string()));
        }
        self.enroll_member(msp, role, seed, Some(uid.to_string()))
    }

    fn enroll_member(
        &mut self,
        msp: &MspId,
        role: Role,
        seed: u64,
        pinned_uid: Option<String>,
    ) -> Result<Credentials, IdentityError> {
        if !self.orgs.contains_key(msp) {
            return Err(IdentityError::UnknownOrg(msp.to_string()));
        }
        let secret = derive_secret(self.network_seed, msp, role, seed);
        let public = public_of(&secret);
        let uid = pinned_uid.unwrap_or_else(|| derive_uid(&public));
        let org = self.orgs.get_mut(msp).expect("checked above");
        if org.members.contains_key(&uid) {
            return Err(IdentityError::UidCollision {
                msp: msp.to_string(),
                uid,
            });
        }
        let identity = Identity {
            msp: msp.clone(),
            uid: uid.clone(),
            role,
            public,
        };
        org.members.insert(
            uid,
            Member {
                identity: identity.clone(),
                secret,
            },
        );
        Ok(Credentials { identity, secret })
    }

    pub fn identity(&self, msp: &MspId, uid: &str) -> Result<&Identity, IdentityError> {
        self.orgs
            .get(msp)
            .and_then(|o| o.members.get(uid))
            .map(|m| &m.identity)
            .ok_or_else(|| IdentityError::UnknownSigner {
                msp: msp.to_string(),
                uid: uid.to_string(),
            })
    }

    pub fn credentials(&self, msp: &MspId, uid: &str) -> Result<Credentials, IdentityError> {
        self.orgs
            .get(msp)
            .and_then(|o| o.members.get(uid))
            .map(|m| Credentials {
                identity: m.identity.clone(),
                secret: m.secret,
            })
            .ok_or_else(|| IdentityError::UnknownSigner {
                msp: msp.to_string(),
                uid: uid.to_string(),
            })
    }

    /// True iff `sig` was produced by the registered signer over `payload`.
    pub fn verify(&self, sig: &Signature, payload: &[u8]) -> Result<bool, IdentityError> {
        let member = self
            .orgs
            .get(&sig.signer_msp)
            .and_then(|o| o.members.get(&sig.signer_uid))
            .ok_or_else(|| IdentityError::UnknownSigner {
                msp: sig.signer_msp.to_string(),
                uid: sig.signer_uid.clone(),
            })?;
        Ok(sig.payload_digest == Digest256::of_bytes(payload)
            && sig.mac == mac(&member.secret, payload))
    }

    /// The only role transition allowed after enrollment.
    pub fn promote_to_driver(&mut self, msp: &MspId, uid: &str) -> Result<(), IdentityError> {
        let member = self
            .orgs
            .get_mut(msp)
            .and_then(|o| o.members.get_mut(uid))
            .ok_or_else(|| IdentityError::UnknownSigner {
                msp: msp.to_string(),
                uid: uid.to_string(),
            })?;
        if member.identity.role != Role::Rider {
            return Err(IdentityError::RoleTransition {
                msp: msp.to_string(),
                uid: uid.to_string(),
                from: member.identity.role,
                to: Role::Driver,
            });
        }
        member.identity.role = Role::Driver;
        Ok(())
    }
}

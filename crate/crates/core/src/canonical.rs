//! Canonical serialization and hashing.
//!
//! Every byte sequence that crosses a trust boundary — ledger records,
//! read-write sets, block contents, signature payloads — is encoded
//! canonically: JSON with object keys sorted and no insignificant
//! whitespace. Two peers encoding the same value always produce identical
//! bytes, which is what makes byte-wise endorsement comparison and hash
//! chaining sound.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// Encode a value canonically. Routing through `serde_json::Value` sorts
/// object keys (the default `Map` is ordered), so field order in the
/// source struct does not leak into the bytes.
pub fn canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("value is JSON-representable");
    serde_json::to_vec(&v).expect("JSON value always serializes")
}

/// A 256-bit digest. Displayed and serialized as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest256(pub [u8; 32]);

impl Digest256 {
    pub const ZERO: Digest256 = Digest256([0u8; 32]);

    pub fn of_bytes(bytes: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(bytes);
        Digest256(h.finalize().into())
    }

    /// Digest of the canonical encoding of `value`.
    pub fn of<T: Serialize>(value: &T) -> Self {
        Self::of_bytes(&canonical_bytes(value))
    }

    /// Digest over several byte slices with length framing, so that
    /// `("ab","c")` and `("a","bc")` never collide.
    pub fn of_parts(parts: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        Digest256(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest256(arr))
    }
}

impl fmt::Debug for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest256({})", self.to_hex())
    }
}

impl fmt::Display for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest256 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest256 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest256::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex chars"))
    }
}

/// Serde adapter: opaque byte fields as lowercase hex strings, keeping
/// dumps line-oriented and canonical bytes free of JSON number arrays.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Serialize)]
    struct A {
        zebra: u32,
        apple: u32,
    }

    #[test]
    fn canonical_sorts_keys() {
        let bytes = canonical_bytes(&A { zebra: 1, apple: 2 });
        assert_eq!(bytes, br#"{"apple":2,"zebra":1}"#.to_vec());
    }

    #[test]
    fn canonical_is_stable_for_maps() {
        let mut m = BTreeMap::new();
        m.insert("b", 1);
        m.insert("a", 2);
        assert_eq!(canonical_bytes(&m), br#"{"a":2,"b":1}"#.to_vec());
    }

    #[test]
    fn digest_roundtrips_hex() {
        let d = Digest256::of_bytes(b"hello");
        assert_eq!(Digest256::from_hex(&d.to_hex()), Some(d));
    }

    #[test]
    fn part_framing_prevents_concat_collisions() {
        let a = Digest256::of_parts(&[b"ab", b"c"]);
        let b = Digest256::of_parts(&[b"a", b"bc"]);
        assert_ne!(a, b);
    }
}

//! Stable-key-ordered JSON used for every machine-readable output.

use serde::Serialize;

/// Serializes through `serde_json::Value`, whose maps are key-sorted, so the
/// output does not depend on struct declaration order or map insertion order.
pub fn to_canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(value)?;
    serde_json::to_string_pretty(&value)
}

/// Single-line form, used for JSON-lines output.
pub fn to_canonical_line<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(value)?;
    serde_json::to_string(&value)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

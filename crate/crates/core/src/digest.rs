//! Canonical JSON encoding and SHA-256 digests.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Serialize through `serde_json::Value` so object keys come out sorted.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("value is representable as JSON");
    serde_json::to_string(&value).expect("JSON value serializes")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the canonical JSON form of `value`.
pub fn digest_of<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(canonical_json(value).as_bytes())
}

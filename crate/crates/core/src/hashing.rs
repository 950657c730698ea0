use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Hash of a value's canonical JSON form: object keys sorted, no
/// insignificant whitespace.
pub fn canonical_hash<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(canonical_json(value))
}

pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    // serde_json::Value keeps object keys in a BTreeMap (no preserve_order).
    let v = serde_json::to_value(value).expect("value serializes to JSON");
    serde_json::to_string(&v).expect("JSON value serializes")
}

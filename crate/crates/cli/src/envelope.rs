//! Result envelope: hashes and timestamps around a deterministic payload.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ENVELOPE_VERSION: u32 = 1;

/// One acceptance rule of a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Rule {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    /// `observed <= bound`.
    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self::new(name, observed <= bound, format!("{observed:e} <= {bound:e}"))
    }

    /// `observed >= bound`.
    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self::new(name, observed >= bound, format!("{observed:e} >= {bound:e}"))
    }

    pub fn count(name: impl Into<String>, passed: usize, total: usize) -> Self {
        Self::new(name, passed == total, format!("{passed}/{total}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Refused,
}

/// Everything that must be byte-identical across reruns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub subcommand: String,
    pub status: Status,
    pub rules: Vec<Rule>,
    pub report: serde_json::Value,
    /// CSV files written next to the envelope.
    pub files: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub envelope_version: u32,
    pub tool: String,
    /// SHA-256 of the canonical resolved config.
    pub config_sha256: String,
    /// Git-style blob hash (`sha256("blob <len>\0" + bytes)`) of the raw config file.
    pub input_blob_sha256: String,
    /// Hashes of the written CSV files, same scheme as the input.
    pub file_blob_sha256: Vec<(String, String)>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub threads: usize,
    pub payload: Payload,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Canonical bytes of a JSON value (keys sorted, compact).
pub fn canonical(v: &serde_json::Value) -> Vec<u8> {
    serde_json::to_vec(v).expect("JSON values always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_sha256_objects() {
        // `git hash-object --object-format=sha256` of the empty file and of "abc".
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
        assert_eq!(
            blob_hash(b"abc"),
            "c1cf6e465077930e88dc5136641d402f72a229ddd996f627d60e9639eaba35a6"
        );
    }

    #[test]
    fn canonical_form_sorts_keys_and_drops_whitespace() {
        let v: serde_json::Value = serde_json::from_str(r#"{ "b": [1, {"d": 2, "c": null}], "a": "x" }"#).unwrap();
        assert_eq!(canonical(&v), br#"{"a":"x","b":[1,{"c":null,"d":2}]}"#);
        assert_eq!(
            sha256_hex(&canonical(&v)),
            "874fbcb0e6da8112d8af27b2afa671653e9d96a92b9e8f8cbb91d36b5469bc59"
        );
    }
}

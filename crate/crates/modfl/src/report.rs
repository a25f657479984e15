//! Serializable record envelope shared with the command-line front end.
//!
//! Results files are line-delimited JSON; every line wraps one payload in
//! `{record_type, schema_version, payload}`.

use nalgebra::DVector;
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// One line of a results file.
#[derive(Debug, Clone, Serialize)]
pub struct Record<T: Serialize> {
    pub record_type: &'static str,
    pub schema_version: u32,
    pub payload: T,
}

impl<T: Serialize> Record<T> {
    pub fn new(record_type: &'static str, payload: T) -> Self {
        Self { record_type, schema_version: SCHEMA_VERSION, payload }
    }

    pub fn to_json_line(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }
}

/// Stable 64-bit digest of a vector's exact bit pattern, for compact
/// snapshots of model iterates in results files.
pub fn vector_hash(v: &DVector<f64>) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for value in v.iter() {
        for byte in value.to_bits().to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{hash:016x}")
}

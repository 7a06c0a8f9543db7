//! Fit cache files.
//!
//! Layout: one header line `MCGLMFIT v1 sha256=<hex>` followed by a JSON
//! payload `{"spec_hash": "<hex>", "fit": {...}}`. The checksum covers the
//! payload bytes. Floats are written with round-trip precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::FittedModel;
use crate::model::ModelSpec;

pub const MAGIC: &str = "MCGLMFIT";
pub const VERSION: &str = "v1";

#[derive(Serialize)]
struct PayloadRef<'a> {
    spec_hash: String,
    fit: &'a FittedModel,
}

#[derive(Deserialize)]
struct Payload {
    spec_hash: String,
    fit: FittedModel,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the canonical JSON form of a model specification.
pub fn spec_hash(spec: &ModelSpec) -> Result<String> {
    Ok(sha256_hex(spec.to_json()?.as_bytes()))
}

pub fn encode_fit(fit: &FittedModel) -> Result<String> {
    let payload = serde_json::to_string(&PayloadRef {
        spec_hash: spec_hash(&fit.spec)?,
        fit,
    })?;
    Ok(format!("{MAGIC} {VERSION} sha256={}\n{payload}", sha256_hex(payload.as_bytes())))
}

/// Decode a fit file; when `expected` is given its hash must match the stored one.
pub fn decode_fit(text: &str, expected: Option<&ModelSpec>) -> Result<FittedModel> {
    let (header, payload) = text.split_once('\n').ok_or(Error::Checksum)?;
    let mut parts = header.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(Error::VersionMismatch {
            found: header.chars().take(32).collect(),
            expected: format!("{MAGIC} {VERSION}"),
        });
    }
    let version = parts.next().unwrap_or("");
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version.to_string(),
            expected: VERSION.to_string(),
        });
    }
    let sum = parts
        .next()
        .and_then(|s| s.strip_prefix("sha256="))
        .ok_or(Error::Checksum)?;
    if sum != sha256_hex(payload.as_bytes()) {
        return Err(Error::Checksum);
    }
    let p: Payload = serde_json::from_str(payload)?;
    if let Some(spec) = expected {
        if spec_hash(spec)? != p.spec_hash {
            return Err(Error::SpecHashMismatch);
        }
    }
    Ok(p.fit)
}

pub fn save_fit(fit: &FittedModel, path: &Path) -> Result<()> {
    fs::write(path, encode_fit(fit)?)?;
    Ok(())
}

pub fn load_fit(path: &Path, expected: Option<&ModelSpec>) -> Result<FittedModel> {
    decode_fit(&fs::read_to_string(path)?, expected)
}

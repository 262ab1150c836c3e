//! Versioned JSON checkpoints.
//!
//! A file is `{"format": "mec-learn", "version": 1, "body": ...}` where the
//! body is whatever state the caller serializes (network specs with flat
//! parameters, optimizer moments, step counters). Floats round-trip exactly.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::LearnError;

pub const FORMAT: &str = "mec-learn";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    body: T,
}

pub fn to_string<T: Serialize>(body: &T) -> Result<String, LearnError> {
    let env = Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        body,
    };
    serde_json::to_string(&env).map_err(|e| LearnError::Checkpoint(e.to_string()))
}

pub fn from_str<T: DeserializeOwned>(text: &str) -> Result<T, LearnError> {
    let env: Envelope<T> = serde_json::from_str(text).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
    check_header(&env.format, env.version)?;
    Ok(env.body)
}

fn check_header(format: &str, version: u32) -> Result<(), LearnError> {
    if format != FORMAT {
        return Err(LearnError::Checkpoint(format!("unknown format {format:?}")));
    }
    if version != VERSION {
        return Err(LearnError::Checkpoint(format!("unsupported version {version}")));
    }
    Ok(())
}

/// Writes to a sibling temp file and renames, so a crash never leaves a
/// truncated checkpoint behind.
pub fn save<T: Serialize>(path: &Path, body: &T) -> Result<(), LearnError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        let env = Envelope {
            format: FORMAT.to_string(),
            version: VERSION,
            body,
        };
        serde_json::to_writer(&mut w, &env).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, LearnError> {
    let r = BufReader::new(fs::File::open(path)?);
    let env: Envelope<T> = serde_json::from_reader(r).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
    check_header(&env.format, env.version)?;
    Ok(env.body)
}

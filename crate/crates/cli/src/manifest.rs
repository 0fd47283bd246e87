use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Provenance embedded in every JSON output. Only `timing` varies between
/// otherwise identical invocations.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub version: String,
    pub timing: Timing,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub unix_timestamp: u64,
    pub runtime_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_runtimes_secs: Option<serde_json::Map<String, Value>>,
}

impl Manifest {
    pub fn new(
        subcommand: &str,
        config: &impl Serialize,
        inputs: &[&Path],
        start: Instant,
    ) -> Result<Self, Box<dyn std::error::Error>> {
        let inputs = inputs
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p)
                    .map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: hex(&Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(Self {
            subcommand: subcommand.to_string(),
            config: serde_json::to_value(config)?,
            inputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timing: Timing {
                unix_timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
                runtime_secs: start.elapsed().as_secs_f64(),
                point_runtimes_secs: None,
            },
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

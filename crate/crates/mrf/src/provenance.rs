use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    /// SHA-256 of the effective configuration serialized as TOML, with the
    /// `[io]` section reset so output locations do not change it.
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Self {
        let mut hashed = config.clone();
        hashed.io = Default::default();
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(hashed.to_toml().as_bytes()),
            seed: config.mc.seed,
        }
    }

    /// `#`-prefixed first line for CSV outputs.
    pub fn csv_comment(&self) -> String {
        format!(
            "# {} {} config_sha256={} seed={}\n",
            self.tool, self.version, self.config_sha256, self.seed
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::token::DEFAULT_TOKEN_NAME;
use crate::server::{load_toml, ConfigError};

pub const CONFIG_ENV: &str = "DS_PROXY_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxyConfig {
    pub listen: SocketAddr,
    /// Base URL of the snapshot service, e.g. `http://127.0.0.1:8090`.
    pub ds_server: String,
    /// Hook script file; the bundled hook when unset.
    pub hook_path: Option<PathBuf>,
    /// Request-state timeout.
    pub timeout_secs: u64,
    pub token_name: String,
    /// Origin-relative path the hook posts snapshots to.
    pub post_path: String,
    /// Send every origin request to this address, keeping the Host header.
    pub origin_override: Option<SocketAddr>,
    pub ds_timeout_ms: u64,
    pub origin_timeout_ms: u64,
    pub max_body_bytes: usize,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            ds_server: "http://127.0.0.1:8090".to_owned(),
            hook_path: None,
            timeout_secs: 30,
            token_name: DEFAULT_TOKEN_NAME.to_owned(),
            post_path: "/__ds/post".to_owned(),
            origin_override: None,
            ds_timeout_ms: 2_000,
            origin_timeout_ms: 15_000,
            max_body_bytes: 32 << 20,
        }
    }
}

impl ProxyConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        load_toml(path)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::from_file(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }

    pub fn load_hook(&self) -> std::io::Result<Vec<u8>> {
        match &self.hook_path {
            Some(p) => std::fs::read(p),
            None => Ok(super::inject::DEFAULT_HOOK.to_vec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("proxy.toml");
        std::fs::write(&p, "ds_server = \"http://ds:1\"\ntimeout_secs = 5\norigin_override = \"127.0.0.1:9\"\n").unwrap();
        let cfg = ProxyConfig::from_file(&p).unwrap();
        assert_eq!(cfg.ds_server, "http://ds:1");
        assert_eq!(cfg.timeout_secs, 5);
        assert_eq!(cfg.origin_override, Some(SocketAddr::from(([127, 0, 0, 1], 9))));
        assert_eq!(cfg.post_path, "/__ds/post");
        assert!(ProxyConfig::from_file(&dir.path().join("nope")).is_err());
        assert!(!cfg.load_hook().unwrap().is_empty());
    }
}

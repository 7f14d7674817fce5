use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::desensitizer::Desensitizer;
use crate::harvester::HarvestConfig;
use crate::model::FormFactorBuckets;
use crate::proxy::token::DEFAULT_TOKEN_NAME;

pub const CONFIG_ENV: &str = "DS_SERVER_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    /// Persistent store root; in-memory when unset.
    pub store_dir: Option<PathBuf>,
    pub token_name: String,
    pub workers: usize,
    pub max_post_bytes: usize,
    /// Seconds between freshness sweeps; 0 disables the sweep.
    pub sweep_interval_secs: u64,
    pub form_factor: FormFactorBuckets,
    pub desensitizer: Desensitizer,
    #[serde(flatten)]
    pub harvest: HarvestConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8090)),
            store_dir: None,
            token_name: DEFAULT_TOKEN_NAME.to_owned(),
            workers: 2,
            max_post_bytes: 32 << 20,
            sweep_interval_secs: 60,
            form_factor: FormFactorBuckets::default(),
            desensitizer: Desensitizer::default(),
            harvest: HarvestConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub(crate) fn load_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

impl ServerConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        load_toml(path)
    }

    /// Config named by `DS_SERVER_CONFIG`, or defaults when unset.
    pub fn from_env() -> Result<Self, ConfigError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::from_file(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reverso_core::gateway::GatewayConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub port: u16,
    pub data_dir: PathBuf,
    /// How often open workspaces are checked for a due periodic snapshot.
    pub snapshot_tick_secs: u64,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            port: 8080,
            data_dir: PathBuf::from("reverso-data"),
            snapshot_tick_secs: 5,
        }
    }
}

/// Contents of the TOML configuration file.
///
/// ```toml
/// [server]
/// port = 8080
/// data_dir = "reverso-data"
///
/// [provider]
/// endpoint = "https://api.openai.com/v1/chat/completions"
/// model = "gpt-4o"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerSection,
    pub provider: GatewayConfig,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigFileError> {
        toml::from_str(text).map_err(|source| ConfigFileError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Config::parse(&text, path)
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envmodel::{EnvState, SmokeChainParams};
use crate::gateway::{ConfigError, GatewayConfig};
use crate::gsm::{validate_number, ModemConfig};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

impl LoadError {
    pub(crate) fn parse(path: &str, e: serde_json::Error) -> Self {
        LoadError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Everything needed to build a simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SimConfig {
    pub gateway: GatewayConfig,
    pub modem: ModemConfig,
    pub env: EnvState,
    pub smoke_chain: SmokeChainParams,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let config: SimConfig =
            serde_json::from_str(text).map_err(|e| LoadError::parse("<config>", e))?;
        config
            .validate()
            .map_err(|e| LoadError::Invalid(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = read_file(path)?;
        let config: SimConfig = serde_json::from_str(&text)
            .map_err(|e| LoadError::parse(&path.display().to_string(), e))?;
        config
            .validate()
            .map_err(|e| LoadError::Invalid(e.to_string()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gateway.validate()?;
        validate_number(&self.modem.number)
            .map_err(|_| ConfigError::BadDestination(self.modem.number.clone()))?;
        Ok(())
    }

    pub fn with_destinations(mut self, destinations: &[&str]) -> Self {
        self.gateway.destinations = destinations.iter().map(|d| d.to_string()).collect();
        self
    }
}

//! Versioned JSON checkpoints: an architecture record, then for every net a
//! shape manifest with flat row-major value arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{ActorCriticNet, Architecture, ParamTensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT: &str = "ipo-actor-critic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    /// Free-form provenance, e.g. method and seed.
    #[serde(default)]
    pub meta: serde_json::Value,
    pub nets: Vec<Vec<ParamTensor>>,
}

impl Checkpoint {
    pub fn from_nets(nets: &[ActorCriticNet], meta: serde_json::Value) -> Result<Self> {
        let first = nets
            .first()
            .ok_or_else(|| Error::Checkpoint("no nets to save".into()))?;
        let architecture = first.architecture();
        if nets.iter().any(|n| n.architecture() != architecture) {
            return Err(Error::Checkpoint("nets differ in architecture".into()));
        }
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture,
            meta,
            nets: nets.iter().map(ActorCriticNet::tensors).collect(),
        })
    }

    pub fn into_nets(self) -> Result<Vec<ActorCriticNet>> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.nets.is_empty() {
            return Err(Error::Checkpoint("checkpoint holds no nets".into()));
        }
        self.nets
            .iter()
            .map(|t| ActorCriticNet::from_tensors(self.architecture, t))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

pub fn save_nets(path: &Path, nets: &[ActorCriticNet], meta: serde_json::Value) -> Result<()> {
    Checkpoint::from_nets(nets, meta)?.save(path)
}

pub fn load_nets(path: &Path) -> Result<Vec<ActorCriticNet>> {
    Checkpoint::load(path)?.into_nets()
}

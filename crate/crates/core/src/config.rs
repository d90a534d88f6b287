//! Engine-wide knobs, loadable from a JSON file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{q, qstr, Q};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Uniform grid intervals used for sup-norm and trace brackets.
    pub resolution: usize,
    /// Residual tolerance for algebraic identities.
    pub tolerance: f64,
    /// Seed for every randomized choice.
    pub seed: u64,
    /// Override for the expansion-factor search box.
    pub search_bound: Option<u64>,
    /// Mesh of each sequence step.
    #[serde(with = "qstr")]
    pub mesh: Q,
    /// Refuse amalgamation when the mesh preconditions fail instead of
    /// reporting them.
    pub enforce_mesh: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { resolution: 64, tolerance: 1e-10, seed: 0, search_bound: None, mesh: q(1, 2), enforce_mesh: false }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 8 {
            return Err(Error::InvalidConfig(format!("resolution {} below 8", self.resolution)));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-3) {
            return Err(Error::InvalidConfig(format!("tolerance {} outside (0, 1e-3]", self.tolerance)));
        }
        if self.mesh <= q(0, 1) || self.mesh > q(1, 1) {
            return Err(Error::InvalidConfig("mesh outside (0, 1]".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: EngineConfig = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        EngineConfig::default().validate().unwrap();
        assert_eq!(EngineConfig::from_json("{}").unwrap(), EngineConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(EngineConfig::from_json(r#"{"resolution": 4}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"tolerance": 0.1}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"mesh": "3/2"}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"colour": 1}"#).is_err());
        let c = EngineConfig::from_json(r#"{"resolution": 128, "mesh": "1/3", "seed": 7}"#).unwrap();
        assert_eq!((c.resolution, c.mesh, c.seed), (128, q(1, 3), 7));
    }
}

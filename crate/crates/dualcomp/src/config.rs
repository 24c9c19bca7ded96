//! Run configuration: a UTF-8 TOML file validated against every module's
//! range constraints at load time, serialized verbatim beside each command's
//! outputs so runs are reproducible from the snapshot plus seeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::UnrollMode;
use crate::igsr::IgsrConfig;
use crate::router::RouterDims;
use crate::scsa::ScsaConfig;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScsaSection {
    pub tau_min: f64,
    pub tau_max: f64,
    pub theta_min: usize,
    pub theta_max: usize,
}

impl Default for ScsaSection {
    fn default() -> Self {
        let cfg = ScsaConfig::default();
        Self {
            tau_min: cfg.tau_min,
            tau_max: cfg.tau_max,
            theta_min: cfg.theta_min,
            theta_max: cfg.theta_max,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct IgsrSection {
    pub beta: f64,
    pub neighborhood_radius: usize,
    pub min_anchors: usize,
}

impl Default for IgsrSection {
    fn default() -> Self {
        let cfg = IgsrConfig::default();
        Self {
            beta: cfg.beta,
            neighborhood_radius: cfg.neighborhood_radius,
            min_anchors: cfg.min_anchors,
        }
    }
}

/// Retention-ratio training targets per task class, a documented default in
/// lieu of any principled supervision source.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RhoTargets {
    pub semantic: f64,
    pub balanced: f64,
    pub geometric: f64,
}

impl Default for RhoTargets {
    fn default() -> Self {
        Self {
            semantic: 0.02,
            balanced: 0.08,
            geometric: 0.20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RouterSection {
    pub rho_min: f64,
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Provider-vs-rule fusion weight α.
    pub alpha: f64,
    pub learning_rate: f64,
    pub rho_targets: RhoTargets,
}

impl Default for RouterSection {
    fn default() -> Self {
        let dims = RouterDims::default();
        Self {
            rho_min: 0.01,
            input_dim: dims.input,
            hidden1: dims.hidden1,
            hidden2: dims.hidden2,
            alpha: 0.5,
            learning_rate: 0.05,
            rho_targets: RhoTargets::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    /// Apply the λ weights to serialized vectors (the weighted view). Content
    /// vectors and weights are stored either way.
    pub scale_vectors: bool,
    pub unroll_mode: String,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            scale_vectors: true,
            unroll_mode: UnrollMode::Topological.as_str().to_string(),
        }
    }
}

/// Linear-plus-quadratic host-cost estimate `a·tokens + b·tokens²`; defaults
/// approximate an 8B-parameter, 32-layer, 4096-hidden host (2·params FLOPs
/// per token, 2·layers·hidden per token pair). Used only for relative
/// comparisons in reports.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FlopsSection {
    pub per_token: f64,
    pub per_token_pair: f64,
}

impl Default for FlopsSection {
    fn default() -> Self {
        Self {
            per_token: 1.6e10,
            per_token_pair: 2.6e5,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub model: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scsa: ScsaSection,
    pub igsr: IgsrSection,
    pub router: RouterSection,
    pub fusion: FusionSection,
    pub flops: FlopsSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scsa_config().validate()?;
        self.igsr_config().validate()?;
        let r = &self.router;
        if !(r.rho_min > 0.0 && r.rho_min < 1.0) {
            return Err(Error::Config(format!("rho_min {} outside (0,1)", r.rho_min)));
        }
        if r.input_dim == 0 || r.hidden1 == 0 || r.hidden2 == 0 {
            return Err(Error::Config("router dims must be positive".into()));
        }
        if !(0.0..=1.0).contains(&r.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0,1]", r.alpha)));
        }
        if !(r.learning_rate > 0.0 && r.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, rho) in [
            ("semantic", r.rho_targets.semantic),
            ("balanced", r.rho_targets.balanced),
            ("geometric", r.rho_targets.geometric),
        ] {
            if !(r.rho_min..=1.0).contains(&rho) {
                return Err(Error::Config(format!(
                    "rho target {name} = {rho} outside [{}, 1]",
                    r.rho_min
                )));
            }
        }
        self.unroll_mode()?;
        let f = &self.flops;
        if f.per_token < 0.0 || f.per_token_pair < 0.0 {
            return Err(Error::Config("flops constants must be >= 0".into()));
        }
        Ok(())
    }

    pub fn scsa_config(&self) -> ScsaConfig {
        ScsaConfig {
            tau_min: self.scsa.tau_min,
            tau_max: self.scsa.tau_max,
            theta_min: self.scsa.theta_min,
            theta_max: self.scsa.theta_max,
        }
    }

    pub fn igsr_config(&self) -> IgsrConfig {
        IgsrConfig {
            beta: self.igsr.beta,
            neighborhood_radius: self.igsr.neighborhood_radius,
            min_anchors: self.igsr.min_anchors,
        }
    }

    pub fn router_dims(&self) -> RouterDims {
        RouterDims {
            input: self.router.input_dim,
            hidden1: self.router.hidden1,
            hidden2: self.router.hidden2,
        }
    }

    pub fn unroll_mode(&self) -> Result<UnrollMode> {
        self.fusion.unroll_mode.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let config = RunConfig::default();
        config.validate().unwrap();
        let text = config.to_toml_string();
        let reparsed = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, reparsed);
    }

    #[test]
    fn range_constraints_enforced() {
        let mut config = RunConfig::default();
        config.scsa.tau_min = 0.99;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.igsr.beta = -1.0;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.router.rho_min = 0.0;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.fusion.unroll_mode = "spiral".into();
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.router.rho_targets.semantic = 0.001; // below rho_min
        assert!(config.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[scsa]\nradius = 4\n").is_err());
    }
}

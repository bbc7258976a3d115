//! Experiment configuration.
//!
//! Configs are TOML files; every key is optional and command-line flags take
//! precedence over the file. Example:
//!
//! ```toml
//! key = "2b7e151628aed2a6abf7158809cf4f3c"
//! n_traces = 20000
//! noise_sigma = 4.0
//! bit_weight = 1.0
//! seed = 1
//! byte_index = 0
//! checkpoint_stride = 100
//!
//! [augmentation]
//! byte = 0
//! bit = 2
//! offset = 8.0            # or: n_ro = 70, alpha = 0.1143, pulse_fraction = 1.0
//! trigger = "on-static"
//!
//! [output]
//! traces = "campaign.sctr"
//!
//! [metadata]
//! clock = "10 MHz"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sca_core::cpa::DEFAULT_CHECKPOINT_STRIDE;
use sca_core::{ro_offset_model, Augmentation, Block, LeakageConfig, Trigger};
use serde::{Deserialize, Serialize};

pub const DEFAULT_KEY: &str = "2b7e151628aed2a6abf7158809cf4f3c";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub key: Block,
    pub n_traces: usize,
    pub noise_sigma: f64,
    pub bit_weight: f64,
    pub baseline: f64,
    pub samples_per_trace: usize,
    pub poi_index: usize,
    pub seed: u64,
    pub byte_index: usize,
    pub checkpoint_stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<AugmentationSpec>,
    #[serde(skip_serializing_if = "OutputPaths::is_empty")]
    pub output: OutputPaths,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    /// Free-text description of the capture setup; carried, never interpreted.
    pub metadata: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            key: Block::from_hex(DEFAULT_KEY).unwrap(),
            n_traces: 5000,
            noise_sigma: 0.0,
            bit_weight: 1.0,
            baseline: 0.0,
            samples_per_trace: 1,
            poi_index: 0,
            seed: 1,
            byte_index: 0,
            checkpoint_stride: DEFAULT_CHECKPOINT_STRIDE,
            augmentation: None,
            output: OutputPaths::default(),
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traces: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evolution: Option<PathBuf>,
}

impl OutputPaths {
    pub fn is_empty(&self) -> bool {
        *self == OutputPaths::default()
    }
}

/// Augmentation as written in a config: either an explicit offset or a ring
/// oscillator bank (`n_ro`, `alpha`, `pulse_fraction`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    pub byte: usize,
    pub bit: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_ro: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub pulse_fraction: f64,
    pub trigger: Trigger,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            byte: 0,
            bit: 2,
            offset: None,
            n_ro: None,
            alpha: None,
            pulse_fraction: 1.0,
            trigger: Trigger::OnStatic,
        }
    }
}

impl AugmentationSpec {
    pub fn resolved_offset(&self) -> Result<f64> {
        match (self.offset, self.n_ro, self.alpha) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                bail!("augmentation: give either offset or n_ro/alpha, not both")
            }
            (Some(o), None, None) => Ok(o),
            (None, Some(n_ro), Some(alpha)) => {
                Ok(ro_offset_model(n_ro, self.pulse_fraction, alpha)?)
            }
            (None, Some(_), None) => bail!("augmentation: n_ro needs alpha"),
            (None, None, Some(_)) => bail!("augmentation: alpha needs n_ro"),
            (None, None, None) => bail!("augmentation: missing offset (or n_ro and alpha)"),
        }
    }

    pub fn resolve(&self) -> Result<Augmentation> {
        Ok(Augmentation::new(
            self.byte,
            self.bit,
            self.resolved_offset()?,
            self.trigger,
        )?)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn leakage(&self) -> Result<LeakageConfig> {
        let aug = self
            .augmentation
            .as_ref()
            .map(|a| a.resolve())
            .transpose()?;
        let cfg = LeakageConfig::equal_weights(self.bit_weight)
            .with_baseline(self.baseline)
            .with_noise(self.noise_sigma)
            .with_samples(self.samples_per_trace, self.poi_index)
            .with_augmentation(aug);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traces == 0 {
            bail!("n_traces must be at least 1");
        }
        if self.byte_index >= 16 {
            bail!("byte_index {} out of range 0..16", self.byte_index);
        }
        if self.checkpoint_stride == 0 {
            bail!("checkpoint_stride must be at least 1");
        }
        self.leakage()?;
        Ok(())
    }

    /// The config with any ring-oscillator description replaced by the
    /// offset it resolves to.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if let Some(aug) = out.augmentation.as_mut() {
            let offset = aug.resolved_offset()?;
            aug.offset = Some(offset);
            aug.n_ro = None;
            aug.alpha = None;
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            key = "2B7E151628AED2A6ABF7158809CF4F3C"
            n_traces = 20000
            noise_sigma = 4.0
            seed = 1

            [augmentation]
            n_ro = 70
            alpha = 0.0571428571428571
            trigger = "on-static"

            [metadata]
            clock = "10 MHz"
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let aug = cfg.leakage().unwrap().augmentation.unwrap();
        assert_eq!((aug.byte_index, aug.bit_index), (0, 2));
        assert!((aug.offset - 4.0).abs() < 1e-12);
        assert_eq!(cfg.metadata["clock"], "10 MHz");
    }

    #[test]
    fn rejects_unknown_keys_and_ambiguous_offsets() {
        assert!(toml::from_str::<ExperimentConfig>("n_trace = 5").is_err());
        let both = AugmentationSpec {
            offset: Some(1.0),
            n_ro: Some(3),
            alpha: Some(1.0),
            ..Default::default()
        };
        assert!(both.resolve().is_err());
        assert!(AugmentationSpec::default().resolve().is_err());
        let cfg = ExperimentConfig {
            byte_index: 16,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn resolved_config_roundtrips_through_toml() {
        let cfg = ExperimentConfig {
            augmentation: Some(AugmentationSpec {
                n_ro: Some(70),
                alpha: Some(0.1),
                pulse_fraction: 0.5,
                ..Default::default()
            }),
            ..Default::default()
        }
        .resolved()
        .unwrap();
        let text = cfg.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!((back.augmentation.unwrap().offset.unwrap() - 3.5).abs() < 1e-12);
    }
}

//! TOML run configuration. Every section is optional so a file can override
//! just part of a preset; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::fidelity::{linspace_step, SweepGrid};
use crate::fock::{ScsMeasurementSpec, TruncationDim};
use crate::povm::DetectorModel;
use crate::qdt::{ProbeScheme, ProbeSet};
use crate::sim::DEFAULT_SHOTS;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign: Option<CampaignConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tomography: Option<TomographyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub alpha: f64,
    #[serde(default = "half")]
    pub c0sq: f64,
    #[serde(default)]
    pub phi: f64,
}

fn half() -> f64 {
    0.5
}

/// Either an explicit list or an inclusive `start..=stop` range with `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Axis::List(v) => Ok(v.clone()),
            Axis::Range { start, stop, step } => {
                if !(step.is_finite() && *step > 0.0) || !(start.is_finite() && stop.is_finite()) {
                    return Err(Error::Config(format!(
                        "range needs finite bounds and a positive step, got {start}..{stop} by {step}"
                    )));
                }
                if stop < start {
                    return Ok(Vec::new());
                }
                Ok(linspace_step(*start, *stop, *step))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub c0sq: Axis,
    pub alpha_sq: Axis,
    #[serde(default = "zero_axis")]
    pub phi: Axis,
}

fn zero_axis() -> Axis {
    Axis::List(vec![0.0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "yes")]
    pub homodyne: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_levels: Option<Vec<f64>>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_shots")]
    pub shots: u64,
    /// Probe amplitude; defaults to the target's `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_alpha: Option<f64>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            gammas: default_gammas(),
            shots: default_shots(),
            probe_alpha: None,
        }
    }
}

fn default_gammas() -> Vec<f64> {
    vec![0.2, 0.3]
}

fn default_shots() -> u64 {
    DEFAULT_SHOTS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthModel {
    /// Displaced POVM with an ideal PNRD at the given displacement.
    DisplacedPnrd,
    /// On/off detection with the configured detector.
    DisplacedOnoff,
    /// Displacement re-optimized for the target: PNRD model when the detector
    /// is ideal, on/off otherwise.
    Optimal,
    Homodyne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub model: TruthModel,
    #[serde(default)]
    pub beta_abs: f64,
    #[serde(default)]
    pub beta_phase: f64,
    #[serde(default)]
    pub x_th: f64,
    #[serde(default)]
    pub lo_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    /// Read clicks from this CSV instead of simulating them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clicks_file: Option<PathBuf>,
    #[serde(default)]
    pub compensate_loss: bool,
    #[serde(default)]
    pub alpha_sigma: f64,
    #[serde(default)]
    pub scheme: ProbeScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
}

/// Replicates a figure-style table: one simulated reconstruction per
/// `(φ, c₀²)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub c0sq: Axis,
    #[serde(default = "zero_axis")]
    pub phi: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_levels: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Fields set here win; missing ones come from `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        RunConfig {
            preset: self.preset.or(base.preset),
            n_max: self.n_max.or(base.n_max),
            seed: self.seed.or(base.seed),
            output: self.output.or(base.output),
            spec: self.spec.or(base.spec),
            grid: self.grid.or(base.grid),
            detector: self.detector.or(base.detector),
            sweep: self.sweep.or(base.sweep),
            campaign: self.campaign.or(base.campaign),
            truth: self.truth.or(base.truth),
            tomography: self.tomography.or(base.tomography),
        }
    }

    /// Expands the named preset underneath this config.
    pub fn resolved(&self) -> Result<RunConfig> {
        match &self.preset {
            Some(name) => Ok(self.clone().over(super::presets::preset(name)?)),
            None => Ok(self.clone()),
        }
    }

    pub fn dim(&self) -> Result<TruncationDim> {
        TruncationDim::new(self.n_max.unwrap_or(TruncationDim::DEFAULT_N_MAX))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn detector(&self) -> Result<DetectorModel> {
        let d = self.detector.unwrap_or_default();
        d.validate()?;
        Ok(d)
    }

    pub fn spec(&self) -> Result<ScsMeasurementSpec> {
        let s = self
            .spec
            .as_ref()
            .ok_or_else(|| Error::Config("missing [spec] section".into()))?;
        if !(0.0..=1.0).contains(&s.c0sq) {
            return Err(Error::Config(format!("spec.c0sq must lie in [0, 1], got {}", s.c0sq)));
        }
        ScsMeasurementSpec::from_c0_squared(s.alpha, s.c0sq, s.phi)
    }

    pub fn grid(&self) -> Result<SweepGrid> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::Config("missing [grid] section".into()))?;
        SweepGrid::new(g.c0sq.values()?, g.alpha_sq.values()?, g.phi.values()?)
    }

    pub fn campaign(&self) -> CampaignConfig {
        self.campaign.clone().unwrap_or_default()
    }

    pub fn probes(&self, alpha: f64) -> Result<ProbeSet> {
        let c = self.campaign();
        ProbeSet::new(c.probe_alpha.unwrap_or(alpha), c.gammas)
    }

    /// Canonical JSON encoding, the input to [`RunConfig::hash`]. The output
    /// path is left out since it does not affect any payload.
    pub fn canonical(&self) -> String {
        let content = RunConfig {
            output: None,
            ..self.clone()
        };
        serde_json::to_string(&content).expect("config serializes")
    }

    /// SHA-256 of the canonical encoding, hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Checks every section that is present.
    pub fn validate(&self) -> Result<()> {
        self.dim()?;
        if let Some(d) = &self.detector {
            d.validate()?;
        }
        if self.spec.is_some() {
            self.spec()?;
        }
        if self.grid.is_some() {
            self.grid()?;
        }
        if let Some(c) = &self.campaign {
            if c.shots == 0 {
                return Err(Error::Config("campaign.shots must be positive".into()));
            }
            ProbeSet::new(c.probe_alpha.unwrap_or(1.0), c.gammas.clone())?;
        }
        if let Some(t) = &self.tomography {
            if !(t.alpha_sigma.is_finite() && t.alpha_sigma >= 0.0) {
                return Err(Error::Config("tomography.alpha_sigma must be non-negative".into()));
            }
            if let Some(s) = &t.scan {
                let c = s.c0sq.values()?;
                if c.is_empty() || c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Config("scan.c0sq must be a non-empty list in [0, 1]".into()));
                }
                if s.phi.values()?.is_empty() {
                    return Err(Error::Config("scan.phi is empty".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ranges_and_lists() {
        let cfg = RunConfig::from_toml(
            r#"
            n_max = 12
            [grid]
            c0sq = { start = 0.5, stop = 1.0, step = 0.05 }
            alpha_sq = [0.25]
            "#,
        )
        .unwrap();
        let g = cfg.grid().unwrap();
        assert_eq!(g.c0sq_values.len(), 11);
        assert_eq!(g.phi_values, vec![0.0]);
        assert_eq!(cfg.dim().unwrap().n_max(), 12);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_toml("nmax = 3").is_err());
        assert!(RunConfig::from_toml("[detector]\neta = 0.5\nnu = 0.0\nvisibility = 1.0\ngain = 2").is_err());
    }

    #[test]
    fn rejects_bad_detector_and_empty_grid() {
        let cfg = RunConfig::from_toml("[detector]\neta = 1.5\nnu = 0.0\nvisibility = 1.0").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_toml("[grid]\nc0sq = []\nalpha_sq = [0.25]").unwrap();
        assert!(cfg.grid().is_err());
    }

    #[test]
    fn override_and_hash() {
        let base = RunConfig {
            n_max: Some(20),
            seed: Some(1),
            ..Default::default()
        };
        let top = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        let m = top.over(base);
        assert_eq!(m.n_max, Some(20));
        assert_eq!(m.seed, Some(9));
        assert_eq!(m.hash(), m.clone().hash());
        let other = RunConfig { seed: Some(10), ..m.clone() };
        assert_ne!(m.hash(), other.hash());
    }
}

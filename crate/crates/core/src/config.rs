//! Flat run configuration: a single TOML file with documented keys, every
//! one overridable from the command line. Unknown keys are hard errors.

use crate::cascade::Regression;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Scene preset: plane-wall, shelf or orchard.
    pub scene: String,
    /// Output directory for all artifacts.
    pub out_dir: String,
    pub seed: u64,
    /// Number of rendered views.
    pub views: usize,
    /// Per-stage hypothesis counts.
    pub stages: Vec<usize>,
    /// Range shrink factor between consecutive stages (stages-1 entries).
    pub shrink: Vec<f64>,
    /// Matching window side length (odd).
    pub window: usize,
    pub temperature: f64,
    pub regression: Regression,
    /// Instance-aware refinement pass.
    pub ifads: bool,
    /// Percentile truncation of instance ranges (requires ifads).
    pub fiic: bool,
    /// Conditional-probability confidence instead of the plain per-stage
    /// maximum.
    pub cpc: bool,
    /// IF-ADS outer iterations.
    pub iterations: usize,
    /// FIIC keep fraction (middle mass retained).
    pub keep: f64,
    /// Fractional margin when expanding truncated instance ranges.
    pub margin_frac: f64,
    /// Confidence threshold applied before fusion.
    pub tau_conf: f64,
    /// Half-width of the final confidence interval, mm. 0 = half the finest
    /// hypothesis spacing.
    pub delta: f64,
    /// Fuse the renderer's ground-truth depth maps instead of estimates.
    pub gt_bypass: bool,
    /// Dump per-stage probability volumes.
    pub dump_volumes: bool,
    /// Test-only: visit instance masks in inverted hierarchy order.
    pub inverted_order: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: "plane-wall".into(),
            out_dir: "out".into(),
            seed: 0,
            views: 5,
            stages: vec![64, 32, 16],
            shrink: vec![0.25, 0.25],
            window: 7,
            temperature: 0.1,
            regression: Regression::Expectation,
            ifads: false,
            fiic: false,
            cpc: false,
            iterations: 1,
            keep: 0.98,
            margin_frac: 0.05,
            tau_conf: 0.3,
            delta: 0.0,
            gt_bypass: false,
            dump_volumes: false,
            inverted_order: false,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.stages.is_empty() || self.stages.iter().any(|&l| l < 2) {
            return Err(ConfigError::Invalid(
                "stages must be non-empty with every count >= 2".into(),
            ));
        }
        if self.shrink.len() + 1 != self.stages.len() {
            return Err(ConfigError::Invalid(format!(
                "shrink needs {} entries for {} stages, found {}",
                self.stages.len() - 1,
                self.stages.len(),
                self.shrink.len()
            )));
        }
        if self.shrink.iter().any(|&w| !(0.0 < w && w < 1.0)) {
            return Err(ConfigError::Invalid("shrink factors must lie in (0,1)".into()));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(ConfigError::Invalid("window must be odd and >= 3".into()));
        }
        if self.temperature <= 0.0 {
            return Err(ConfigError::Invalid("temperature must be positive".into()));
        }
        if !(0.0 < self.keep && self.keep <= 1.0) {
            return Err(ConfigError::Invalid("keep must lie in (0,1]".into()));
        }
        if self.views < 2 {
            return Err(ConfigError::Invalid("views must be >= 2".into()));
        }
        if self.iterations == 0 {
            return Err(ConfigError::Invalid("iterations must be >= 1".into()));
        }
        if self.delta < 0.0 {
            return Err(ConfigError::Invalid("delta must be >= 0".into()));
        }
        if self.fiic && !self.ifads {
            return Err(ConfigError::Invalid(
                "fiic requires ifads (truncation applies to instance ranges)".into(),
            ));
        }
        Ok(())
    }

    /// Ablation variant name matching the comparison table rows.
    pub fn variant_name(&self) -> &'static str {
        match (self.ifads, self.fiic, self.cpc) {
            (false, _, false) => "baseline",
            (true, false, false) => "ifads",
            (true, true, false) => "ifads_fiic",
            (true, true, true) => "full",
            _ => "custom",
        }
    }

    /// Key/value echo for the run manifest, sorted by key.
    pub fn manifest_lines(&self) -> Vec<(String, String)> {
        let mut lines = vec![
            ("scene".into(), self.scene.clone()),
            ("out_dir".into(), self.out_dir.clone()),
            ("seed".into(), self.seed.to_string()),
            ("views".into(), self.views.to_string()),
            (
                "stages".into(),
                self.stages
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "shrink".into(),
                self.shrink
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("window".into(), self.window.to_string()),
            ("temperature".into(), self.temperature.to_string()),
            (
                "regression".into(),
                match self.regression {
                    Regression::Expectation => "expectation".into(),
                    Regression::Argmax => "argmax".into(),
                },
            ),
            ("ifads".into(), self.ifads.to_string()),
            ("fiic".into(), self.fiic.to_string()),
            ("cpc".into(), self.cpc.to_string()),
            ("iterations".into(), self.iterations.to_string()),
            ("keep".into(), self.keep.to_string()),
            ("margin_frac".into(), self.margin_frac.to_string()),
            ("tau_conf".into(), self.tau_conf.to_string()),
            ("delta".into(), self.delta.to_string()),
            ("gt_bypass".into(), self.gt_bypass.to_string()),
        ];
        lines.sort();
        lines
    }
}

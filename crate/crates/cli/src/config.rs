//! JSON run configuration. Every field is optional; unknown keys are
//! rejected.

use std::path::Path;

use convmcd::loss::{HeadVariant, LossWeights};
use convmcd::metrics::{default_mf_thresholds, default_trimap_widths, MetricProtocol};
use convmcd::targets::{ContourRadius, D1Direction, DistanceMapKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Load { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Contour radius as written in JSON: a positive integer or `"AUTO"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadiusSetting {
    Pixels(u32),
    Named(String),
}

impl Default for RadiusSetting {
    fn default() -> Self {
        Self::Named("AUTO".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSettings {
    pub mask: f64,
    pub contour: f64,
    pub distance: f64,
}

impl Default for WeightSettings {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            mask: w.mask,
            contour: w.contour,
            distance: w.distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSettings {
    pub trimap_widths: Vec<u32>,
    pub mf_tolerance: f64,
    pub mf_thresholds: Vec<f64>,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            trimap_widths: default_trimap_widths(),
            mf_tolerance: convmcd::metrics::DEFAULT_MF_TOLERANCE,
            mf_thresholds: default_mf_thresholds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub distance: String,
    pub radius: RadiusSetting,
    pub d1_direction: String,
    pub loss_weights: WeightSettings,
    pub variant: String,
    pub metrics: MetricSettings,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            distance: DistanceMapKind::D3.to_string(),
            radius: RadiusSetting::default(),
            d1_direction: "to_foreground".into(),
            loss_weights: WeightSettings::default(),
            variant: HeadVariant::Mcd.to_string(),
            metrics: MetricSettings::default(),
            seed: 0,
        }
    }
}

/// A [`RunConfig`] with every field parsed and checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub distance: DistanceMapKind,
    pub radius: ContourRadius,
    pub d1_direction: D1Direction,
    pub weights: LossWeights,
    pub variant: HeadVariant,
    pub protocol: MetricProtocol,
    pub seed: u64,
}

pub fn parse_radius(text: &str) -> Result<ContourRadius, ConfigError> {
    text.parse().map_err(|e: convmcd::Error| ConfigError::Invalid(e.to_string()))
}

pub fn parse_distance(text: &str) -> Result<DistanceMapKind, ConfigError> {
    text.parse().map_err(|e: convmcd::Error| ConfigError::Invalid(e.to_string()))
}

pub fn parse_variant(text: &str) -> Result<HeadVariant, ConfigError> {
    text.parse().map_err(|e: convmcd::Error| ConfigError::Invalid(e.to_string()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let load_err = |message: String| ConfigError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<Validated, ConfigError> {
        let radius = match &self.radius {
            RadiusSetting::Pixels(0) => {
                return Err(ConfigError::Invalid("radius must be positive or \"AUTO\"".into()))
            }
            RadiusSetting::Pixels(n) => ContourRadius::Fixed(*n),
            RadiusSetting::Named(s) => parse_radius(s)?,
        };
        let d1_direction = match self.d1_direction.as_str() {
            "to_foreground" => D1Direction::ToForeground,
            "to_background" => D1Direction::ToBackground,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "d1_direction must be \"to_foreground\" or \"to_background\", got {other:?}"
                )))
            }
        };
        let w = &self.loss_weights;
        let weights = LossWeights::new(w.mask, w.contour, w.distance)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let m = &self.metrics;
        if m.trimap_widths.is_empty()
            || m.trimap_widths[0] == 0
            || m.trimap_widths.windows(2).any(|p| p[0] >= p[1])
        {
            return Err(ConfigError::Invalid(
                "metrics.trimap_widths must be non-empty, positive and strictly increasing".into(),
            ));
        }
        if !(m.mf_tolerance >= 0.0 && m.mf_tolerance.is_finite()) {
            return Err(ConfigError::Invalid("metrics.mf_tolerance must be >= 0".into()));
        }
        if m.mf_thresholds.is_empty() || m.mf_thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(ConfigError::Invalid(
                "metrics.mf_thresholds must be non-empty and inside (0, 1)".into(),
            ));
        }
        Ok(Validated {
            distance: parse_distance(&self.distance)?,
            radius,
            d1_direction,
            weights,
            variant: parse_variant(&self.variant)?,
            protocol: MetricProtocol {
                trimap_widths: m.trimap_widths.clone(),
                mf_tolerance: m.mf_tolerance,
                mf_thresholds: m.mf_thresholds.clone(),
            },
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Result<Validated, String> {
        let c: RunConfig = serde_json::from_str(json).map_err(|e| e.to_string())?;
        c.validate().map_err(|e| e.to_string())
    }

    #[test]
    fn defaults_and_overrides() {
        let v = parse("{}").unwrap();
        assert_eq!(v.radius, ContourRadius::Auto);
        assert_eq!(v.distance, DistanceMapKind::D3);
        assert_eq!(v.protocol, MetricProtocol::default());
        let v = parse(r#"{"radius": 3, "distance": "d1", "variant": "md", "seed": 7}"#).unwrap();
        assert_eq!(v.radius, ContourRadius::Fixed(3));
        assert_eq!(v.variant, HeadVariant::Md);
        assert_eq!(v.seed, 7);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse(r#"{"radious": 3}"#).unwrap_err().contains("unknown field"));
        assert!(parse(r#"{"metrics": {"tolerance": 1}}"#).is_err());
        assert!(parse(r#"{"radius": 0}"#).is_err());
        assert!(parse(r#"{"radius": "big"}"#).is_err());
        assert!(parse(r#"{"loss_weights": {"mask": -1}}"#).is_err());
        assert!(parse(r#"{"metrics": {"trimap_widths": [2, 1]}}"#).is_err());
        assert!(parse(r#"{"metrics": {"mf_thresholds": [1.0]}}"#).is_err());
        assert!(parse(r#"{"variant": "m"}"#).is_err());
    }
}

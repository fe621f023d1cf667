//! Threshold configuration: a single JSON file can override the involvement
//! policy, loss weights, focal parameters, and dice smoothing; individual
//! flags override the file.

use std::path::Path;

use aspects_core::losses::{FocalParams, LossWeights};
use aspects_core::{Error, InvolvementPolicy, Result};
use serde::Deserialize;

/// The config file schema. Every field is optional; missing fields keep
/// their defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub policy: Option<InvolvementPolicy>,
    pub weights: Option<LossWeights>,
    pub focal: Option<FocalParams>,
    pub smooth: Option<f64>,
}

/// Fully resolved settings after merging defaults, config file, and flags.
#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub policy: InvolvementPolicy,
    pub weights: LossWeights,
    pub focal: FocalParams,
    pub smooth: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            policy: InvolvementPolicy::default(),
            weights: LossWeights::default(),
            focal: FocalParams::default(),
            smooth: 1.0,
        }
    }
}

/// Merges defaults <- config file <- inline flag JSON, validating as it
/// goes. Either source may be absent.
pub fn resolve(
    config_path: Option<&Path>,
    policy_json: Option<&str>,
    weights_json: Option<&str>,
) -> Result<Settings> {
    let mut settings = Settings::default();

    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)?;
        let file: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| Error::domain(format!("config {}: {e}", path.display())))?;
        if let Some(p) = file.policy {
            settings.policy = p;
        }
        if let Some(w) = file.weights {
            settings.weights = validated_weights(w)?;
        }
        if let Some(f) = file.focal {
            settings.focal = f;
        }
        if let Some(s) = file.smooth {
            settings.smooth = validated_smooth(s)?;
        }
    }

    if let Some(text) = policy_json {
        settings.policy = serde_json::from_str(text)
            .map_err(|e| Error::domain(format!("--policy: {e}")))?;
    }
    if let Some(text) = weights_json {
        let w: LossWeights = serde_json::from_str(text)
            .map_err(|e| Error::domain(format!("--weights: {e}")))?;
        settings.weights = validated_weights(w)?;
    }
    Ok(settings)
}

// plain-derive deserialization bypasses the constructors, so re-validate
fn validated_weights(w: LossWeights) -> Result<LossWeights> {
    LossWeights::new(w.alpha, w.beta, w.gamma)
}

fn validated_smooth(s: f64) -> Result<f64> {
    if !s.is_finite() || s <= 0.0 {
        return Err(Error::domain(format!("smooth must be positive, got {s}")));
    }
    Ok(s)
}

//! Pre-thresholding and the mean-shifted truncated-Gaussian significance
//! test.

use serde::{Deserialize, Serialize};

use crate::peaks::Peak;
use crate::special::{ln_norm_sf_diff, norm_isf, norm_sf};
use crate::{Error, Result};

/// How the significance threshold `u` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UMode {
    /// `u = u_TG(α, v)`.
    TgCalibrated,
    /// A fixed threshold `u ≥ v`.
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub v: f64,
    pub alpha: f64,
    pub u_mode: UMode,
    pub dimension: usize,
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "alpha {} outside (0,1]",
                self.alpha
            )));
        }
        if let UMode::Explicit(u) = self.u_mode {
            if !(u >= self.v) {
                return Err(Error::Parameter(format!(
                    "explicit u = {u} below pre-threshold v = {}",
                    self.v
                )));
            }
        }
        Ok(())
    }

    /// The threshold this configuration resolves to.
    pub fn threshold(&self) -> Result<f64> {
        self.validate()?;
        match self.u_mode {
            UMode::TgCalibrated => tg_threshold(self.alpha, self.v, self.dimension),
            UMode::Explicit(u) => Ok(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub prethresholded: Vec<Peak>,
    pub discoveries: Vec<Peak>,
    pub u_used: f64,
}

/// `S_v(u, d/v) = Ψ(u − d/v)/Ψ(v − d/v)`.
pub fn tg_survival(u: f64, v: f64, d: usize) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Parameter(format!(
            "pre-threshold v = {v} must be positive"
        )));
    }
    if u < v {
        return Err(Error::Parameter(format!("u = {u} below v = {v}")));
    }
    let shift = d as f64 / v;
    Ok(ln_norm_sf_diff(u - shift, v - shift).exp())
}

/// `u_TG(α, v) = d/v + Q(α Ψ(v − d/v))`, the level-`α` TG threshold.
pub fn tg_threshold(alpha: f64, v: f64, d: usize) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Parameter(format!(
            "pre-threshold v = {v} must be positive"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("alpha {alpha} outside (0,1]")));
    }
    if alpha == 1.0 {
        return Ok(v);
    }
    let shift = d as f64 / v;
    Ok(shift + norm_isf(alpha * norm_sf(v - shift)))
}

/// Non-degenerate peaks strictly above `v`, order preserved.
pub fn prethreshold(peaks: &[Peak], v: f64) -> Vec<Peak> {
    peaks
        .iter()
        .filter(|p| !p.degenerate && p.height > v)
        .cloned()
        .collect()
}

/// Declares significant the pre-thresholded peaks above the configured
/// threshold.
pub fn tg_test(prethresholded: &[Peak], config: &DetectionConfig) -> Result<DetectionResult> {
    let u = config.threshold()?;
    let discoveries = prethresholded
        .iter()
        .filter(|p| p.height > u)
        .cloned()
        .collect();
    Ok(DetectionResult {
        prethresholded: prethresholded.to_vec(),
        discoveries,
        u_used: u,
    })
}

/// Raw thresholds `(σ_γ v, σ_γ u)` for testing `Y^sel`, whose marginal
/// standard deviation is `σ_γ = √(1+γ)`.
pub fn selection_thresholds(v: f64, u: f64, gamma: f64) -> (f64, f64) {
    let s = (1.0 + gamma).sqrt();
    (s * v, s * u)
}

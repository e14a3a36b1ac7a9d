//! Multi-scale rendering pipeline with a replaceable low-resolution core.
//!
//! The input is shrunk until every blur radius fits the core's range, rendered
//! there, then upsampled in halving steps. Each step re-renders at the new
//! resolution with clipped defocus and keeps the re-rendered pixels only where
//! no clipped pixel could have contaminated them.

mod core;
mod pipeline;
mod schedule;

pub use self::core::{render_core_layered, render_core_unchecked};
pub use pipeline::{
    arnet_stage, clip_reach, iunet_stage, render_neural, ArnetOutput, NeuralOutput, StageOutput,
};
pub(crate) use pipeline::render_neural_cached;
pub use schedule::{adaptive_factor, build_schedule, stage_dims, PyramidSchedule};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::errormap::ErrorMapConfig;

pub const DEFAULT_R_HAT: f64 = 10.0;

/// Which defocus map drives the keep-or-replace mask of an upsampling step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// Keep every re-rendered pixel.
    None,
    /// Threshold the stage defocus itself.
    Signed,
    /// Threshold the disc max-filter of the stage defocus.
    Dilated,
}

/// Pipeline presets, from the full method down to plain upsampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NrMode {
    /// Clipping plus the dilated-defocus mask.
    Full,
    /// Clipping plus a mask on the undilated defocus.
    Sfuse,
    /// Clipping, no mask.
    Clip,
    /// Neither clipping nor mask; the core sees out-of-range defocus.
    Noclip,
    /// Upsampling steps never re-render.
    Bilinear,
}

impl NrMode {
    pub const ALL: [NrMode; 5] = [NrMode::Full, NrMode::Sfuse, NrMode::Clip, NrMode::Noclip, NrMode::Bilinear];

    pub fn as_str(self) -> &'static str {
        match self {
            NrMode::Full => "full",
            NrMode::Sfuse => "sfuse",
            NrMode::Clip => "clip",
            NrMode::Noclip => "noclip",
            NrMode::Bilinear => "bilinear",
        }
    }
}

impl fmt::Display for NrMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NrMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown pipeline mode {s:?}")))
    }
}

/// Settings of the neural-style pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreConfig {
    /// Largest blur radius, in pixels, the core accepts.
    pub r_hat: f64,
    pub bilinear_only: bool,
    pub disable_clip: bool,
    pub mask_source: MaskSource,
    pub errormap: ErrorMapConfig,
}

impl Default for CoreConfig {
    fn default() -> Self {
        CoreConfig::for_mode(NrMode::Full)
    }
}

impl CoreConfig {
    pub fn for_mode(mode: NrMode) -> Self {
        let (bilinear_only, disable_clip, mask_source) = match mode {
            NrMode::Full => (false, false, MaskSource::Dilated),
            NrMode::Sfuse => (false, false, MaskSource::Signed),
            NrMode::Clip => (false, false, MaskSource::None),
            NrMode::Noclip => (false, true, MaskSource::None),
            NrMode::Bilinear => (true, false, MaskSource::None),
        };
        CoreConfig {
            r_hat: DEFAULT_R_HAT,
            bilinear_only,
            disable_clip,
            mask_source,
            errormap: ErrorMapConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_hat > 0.0 && self.r_hat.is_finite()) {
            return Err(Error::Validation(format!("r_hat must be positive, got {}", self.r_hat)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in NrMode::ALL {
            assert_eq!(m.as_str().parse::<NrMode>().unwrap(), m);
        }
        assert!("dfuse".parse::<NrMode>().is_err());
    }

    #[test]
    fn default_is_full_with_r_hat_ten() {
        let c = CoreConfig::default();
        assert_eq!(c.r_hat, 10.0);
        assert_eq!(c.mask_source, MaskSource::Dilated);
        assert!(!c.disable_clip && !c.bilinear_only);
        assert!(CoreConfig { r_hat: 0.0, ..c }.validate().is_err());
    }
}

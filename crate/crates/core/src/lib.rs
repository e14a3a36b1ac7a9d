//! Hybrid depth-of-field rendering.
//!
//! An all-in-focus image and a disparity map are rendered twice: once by a
//! pixel-scattering renderer that reproduces aperture-shaped bokeh faithfully
//! but bleeds color across depth edges, and once by an occlusion-aware
//! multi-scale pipeline that handles depth edges. An analytic error map marks
//! the pixels where scattering is unreliable and blends the two results.
//!
//! Module map:
//!
//! * [`imgcore`]: rasters, file formats, resampling, morphology, gamma.
//! * [`aperture`]: circle / polygon blur kernels.
//! * [`classical`]: the scattering renderer and a gather oracle.
//! * [`errormap`]: boundary geometry and the fusion weight map.
//! * [`oracle`]: a two-plane thin-lens ground truth and scene generator.
//! * [`neuralpipe`]: adaptive resizing, layered core, iterative upsampling.
//! * [`fusion`]: the top-level render entry point.
//! * [`eval`]: metrics, losses, disparity corruption and benchmarks.

pub mod aperture;
pub mod classical;
pub mod error;
pub mod errormap;
pub mod eval;
pub mod fusion;
pub mod imgcore;
pub mod neuralpipe;
pub mod oracle;

mod par;
mod splat;

pub use error::{Error, Result};
pub use imgcore::{ApertureSpec, DisparityMap, ImageBuffer, Plane, RenderParams, SignedDefocusMap};

//! Ground-truth lens rendering of two-plane scenes and a synthetic scene
//! generator.
//!
//! The renderer traces rays through a sampled aperture: each ray hits the
//! foreground plane if the mask says so at its foreground intersection and
//! continues to the background otherwise. Unlike scattering, this handles
//! occlusion at depth edges correctly.

#[cfg(feature = "io")]
mod dataset;
mod render;
mod scene;

#[cfg(feature = "io")]
pub use dataset::{generate_dataset, DatasetSpec, Manifest, RenderEntry, SceneEntry};
pub use render::{aperture_samples, render_oracle, render_oracle_seeded, DEFAULT_SAMPLES};
pub use scene::{generate_scene, generate_scene_with, Mask, SceneConfig, TwoPlaneScene};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{save_disparity, save_image, RenderParams};
use crate::par;

use super::render::{render_oracle, DEFAULT_SAMPLES};
use super::scene::{generate_scene_with, SceneConfig};

/// What to render into a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub scene_count: usize,
    pub blur_grid: Vec<f64>,
    pub focus_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub samples: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            scene_count: 150,
            blur_grid: vec![12.0, 24.0],
            focus_grid: (1..=20).map(|k| k as f64 / 20.0).collect(),
            gamma_grid: (1..=5).map(f64::from).collect(),
            seed: 0,
            width: 128,
            height: 128,
            samples: DEFAULT_SAMPLES,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.blur_grid.is_empty() || self.focus_grid.is_empty() || self.gamma_grid.is_empty() {
            return Err(Error::Validation("dataset grids must be nonempty".into()));
        }
        if self.samples == 0 {
            return Err(Error::Validation("dataset needs at least one aperture sample".into()));
        }
        for &k in &self.blur_grid {
            for &f in &self.focus_grid {
                for &g in &self.gamma_grid {
                    RenderParams::new(k, f, g).validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn renders_per_scene(&self) -> usize {
        self.blur_grid.len() * self.focus_grid.len() * self.gamma_grid.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderEntry {
    pub blur: f64,
    pub focus: f64,
    pub gamma: f64,
    /// Relative to the dataset root.
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: usize,
    pub seed: u64,
    pub image: PathBuf,
    pub disparity: PathBuf,
    pub d_fg: f64,
    pub d_bg: f64,
    pub renders: Vec<RenderEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: DatasetSpec,
    pub scenes: Vec<SceneEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Renders `spec.scene_count` scenes with their full bokeh stacks into
/// `out_dir`, scene-parallel, and writes `manifest.json`.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let scene_cfg = SceneConfig::new(spec.width, spec.height);

    let results = par::map_range(spec.scene_count, |id| -> Result<SceneEntry> {
        let seed = spec.seed.wrapping_add(id as u64);
        let scene = generate_scene_with(seed, &scene_cfg)?;
        let rel = PathBuf::from(format!("scene_{id:04}"));
        let dir = out_dir.join(&rel);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let image = rel.join("image.png");
        save_image(&scene.composite(), out_dir.join(&image))?;
        let disparity = rel.join("disparity.pfm");
        save_disparity(&scene.disparity(), out_dir.join(&disparity))?;

        let mut renders = Vec::with_capacity(spec.renders_per_scene());
        for &blur in &spec.blur_grid {
            for &focus in &spec.focus_grid {
                for &gamma in &spec.gamma_grid {
                    let params = RenderParams::new(blur, focus, gamma);
                    let path = rel.join(format!("bokeh_K{blur}_df{focus}_g{gamma}.png"));
                    save_image(&render_oracle(&scene, &params, spec.samples), out_dir.join(&path))?;
                    renders.push(RenderEntry { blur, focus, gamma, path });
                }
            }
        }
        Ok(SceneEntry {
            id,
            seed,
            image,
            disparity,
            d_fg: scene.d_fg(),
            d_bg: scene.d_bg(),
            renders,
        })
    });
    let scenes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        spec: spec.clone(),
        scenes,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

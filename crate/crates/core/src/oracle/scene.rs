use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::errormap::boundary_field;
use crate::imgcore::{DisparityMap, ImageBuffer, Plane};

/// Binary raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::Validation(format!(
                "mask of {} values does not fit {width}x{height}",
                bits.len()
            )));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Mask {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask { width, height, bits }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Fraction of set pixels.
    pub fn coverage(&self) -> f64 {
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64
    }

    pub fn to_plane(&self) -> Plane {
        Plane::from_raw(
            self.width,
            self.height,
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// Distance from each pixel to the nearest pixel of the opposite value
    /// (`inf` for a uniform mask).
    pub fn distance_to_edge(&self) -> Vec<f64> {
        boundary_field(&self.to_plane(), 0.5, self.width + self.height)
            .distance()
            .to_vec()
    }
}

/// An opaque foreground plane over a background plane.
#[derive(Clone, Debug)]
pub struct TwoPlaneScene {
    fg_color: ImageBuffer,
    bg_color: ImageBuffer,
    fg_mask: Mask,
    d_fg: f64,
    d_bg: f64,
}

impl TwoPlaneScene {
    pub fn new(fg_color: ImageBuffer, bg_color: ImageBuffer, fg_mask: Mask, d_fg: f64, d_bg: f64) -> Result<Self> {
        Error::check_dims(fg_color.dims(), bg_color.dims())?;
        Error::check_dims(fg_color.dims(), fg_mask.dims())?;
        if !(0.0..=1.0).contains(&d_fg) || !(0.0..=1.0).contains(&d_bg) || d_fg <= d_bg {
            return Err(Error::Validation(format!(
                "need 0 <= d_bg < d_fg <= 1, got d_bg = {d_bg}, d_fg = {d_fg}"
            )));
        }
        Ok(TwoPlaneScene {
            fg_color,
            bg_color,
            fg_mask,
            d_fg,
            d_bg,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.fg_color.dims()
    }

    pub fn fg_color(&self) -> &ImageBuffer {
        &self.fg_color
    }

    pub fn bg_color(&self) -> &ImageBuffer {
        &self.bg_color
    }

    pub fn fg_mask(&self) -> &Mask {
        &self.fg_mask
    }

    pub fn d_fg(&self) -> f64 {
        self.d_fg
    }

    pub fn d_bg(&self) -> f64 {
        self.d_bg
    }

    /// The all-in-focus image: foreground over background.
    pub fn composite(&self) -> ImageBuffer {
        let (w, h) = self.dims();
        ImageBuffer::from_fn(w, h, |x, y| {
            if self.fg_mask.get(x, y) {
                self.fg_color.pixel(x, y)
            } else {
                self.bg_color.pixel(x, y)
            }
        })
    }

    pub fn disparity(&self) -> DisparityMap {
        let (w, h) = self.dims();
        DisparityMap::new(Plane::from_fn(w, h, |x, y| {
            if self.fg_mask.get(x, y) {
                self.d_fg
            } else {
                self.d_bg
            }
        }))
    }
}

/// Knobs of the synthetic scene generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Accepted foreground coverage, inclusive.
    pub coverage: (f64, f64),
    /// Background disparity range.
    pub d_bg: (f64, f64),
    /// Range of `d_fg - d_bg`; `d_fg` is capped at 1.
    pub gap: (f64, f64),
    /// Border width in pixels kept free of foreground.
    pub margin: usize,
}

impl SceneConfig {
    pub fn new(width: usize, height: usize) -> Self {
        SceneConfig {
            width,
            height,
            coverage: (0.1, 0.6),
            d_bg: (0.0, 0.3),
            gap: (0.3, 0.7),
            margin: 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.width >= 32
            && self.height >= 32
            && 0.0 < self.coverage.0
            && self.coverage.0 <= self.coverage.1
            && self.coverage.1 < 1.0
            && 0.0 <= self.d_bg.0
            && self.d_bg.0 <= self.d_bg.1
            && 0.15 <= self.gap.0
            && self.gap.0 <= self.gap.1
            && self.d_bg.1 + 0.15 <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid scene config {self:?}")))
        }
    }
}

/// Scene with default statistics; see [`generate_scene_with`].
///
/// Panics if either dimension is below 32.
pub fn generate_scene(seed: u64, width: usize, height: usize) -> TwoPlaneScene {
    generate_scene_with(seed, &SceneConfig::new(width, height)).expect("scene dimensions must be at least 32")
}

/// Deterministic random scene: smooth value-noise textures in a cool
/// background and a warm foreground palette, a foreground mask made of one to
/// three discs or polygons, and depths at least 0.15 apart.
pub fn generate_scene_with(seed: u64, cfg: &SceneConfig) -> Result<TwoPlaneScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cfg.width, cfg.height);

    let bg = textured(&mut rng, w, h, [0.10, 0.22, 0.42], [0.38, 0.62, 0.88]);
    let fg = textured(&mut rng, w, h, [0.50, 0.18, 0.10], [0.95, 0.72, 0.38]);
    let mask = random_mask(&mut rng, cfg);

    let d_bg = rng.gen_range(cfg.d_bg.0..=cfg.d_bg.1);
    let gap = rng.gen_range(cfg.gap.0..=cfg.gap.1);
    let d_fg = (d_bg + gap).min(1.0);
    TwoPlaneScene::new(fg, bg, mask, d_fg, d_bg)
}

/// Smooth noise in `[0, 1]`: three octaves of value noise with smoothstep
/// interpolation, coarsest lattice spanning the frame twice.
fn value_noise(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Plane {
    let size = w.max(h) as f64;
    let mut total = vec![0.0; w * h];
    let mut amp_sum = 0.0;
    for (cells, amp) in [(2.0, 1.0), (4.0, 0.5), (8.0, 0.25)] {
        let spacing = size / cells;
        let gw = (w as f64 / spacing).ceil() as usize + 2;
        let gh = (h as f64 / spacing).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen::<f64>()).collect();
        for y in 0..h {
            let fy = y as f64 / spacing;
            let iy = fy.floor() as usize;
            let ty = smooth(fy - iy as f64);
            for x in 0..w {
                let fx = x as f64 / spacing;
                let ix = fx.floor() as usize;
                let tx = smooth(fx - ix as f64);
                let g = |i: usize, j: usize| lattice[j * gw + i];
                let top = g(ix, iy) + tx * (g(ix + 1, iy) - g(ix, iy));
                let bot = g(ix, iy + 1) + tx * (g(ix + 1, iy + 1) - g(ix, iy + 1));
                total[y * w + x] += amp * (top + ty * (bot - top));
            }
        }
        amp_sum += amp;
    }
    Plane::from_raw(w, h, total.into_iter().map(|v| v / amp_sum).collect())
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn textured(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: [f64; 3], hi: [f64; 3]) -> ImageBuffer {
    let jitter: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.05..0.05));
    let tone = value_noise(rng, w, h);
    let tint = value_noise(rng, w, h);
    ImageBuffer::from_fn(w, h, |x, y| {
        let t = tone.get(x, y);
        let s = tint.get(x, y) - 0.5;
        std::array::from_fn(|c| (lo[c] + t * (hi[c] - lo[c]) + jitter[c] + 0.2 * s * (c as f64 - 1.0)).clamp(0.0, 1.0))
    })
}

enum Blob {
    Disc { cx: f64, cy: f64, r: f64 },
    Polygon { normals: Vec<(f64, f64, f64)> },
}

impl Blob {
    fn random(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Blob {
        let cx = rng.gen_range(0.2..0.8) * w as f64;
        let cy = rng.gen_range(0.2..0.8) * h as f64;
        let r = rng.gen_range(0.12..0.3) * w.min(h) as f64;
        if rng.gen_bool(0.5) {
            return Blob::Disc { cx, cy, r };
        }
        let sides = rng.gen_range(3..=8u32);
        let rot = rng.gen_range(0.0..std::f64::consts::TAU);
        let step = std::f64::consts::TAU / sides as f64;
        let apothem = r * (step / 2.0).cos();
        let normals = (0..sides)
            .map(|k| {
                let a = rot + (k as f64 + 0.5) * step;
                let (nx, ny) = (a.cos(), a.sin());
                (nx, ny, apothem + nx * cx + ny * cy)
            })
            .collect();
        Blob::Polygon { normals }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Blob::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Blob::Polygon { normals } => normals.iter().all(|&(nx, ny, c)| nx * x + ny * y <= c),
        }
    }
}

fn random_mask(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Mask {
    let (w, h, m) = (cfg.width, cfg.height, cfg.margin);
    let inside = |x: usize, y: usize| x >= m && y >= m && x + m < w && y + m < h;
    for _ in 0..200 {
        let count = rng.gen_range(1..=3);
        let blobs: Vec<Blob> = (0..count).map(|_| Blob::random(rng, w, h)).collect();
        let mask = Mask::from_fn(w, h, |x, y| {
            inside(x, y) && blobs.iter().any(|b| b.contains(x as f64, y as f64))
        });
        let c = mask.coverage();
        if (cfg.coverage.0..=cfg.coverage.1).contains(&c) {
            return mask;
        }
    }
    // Fallback: a centered disc at the middle of the coverage range.
    let target = 0.5 * (cfg.coverage.0 + cfg.coverage.1);
    let r = (target * (w * h) as f64 / std::f64::consts::PI).sqrt();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    Mask::from_fn(w, h, |x, y| {
        inside(x, y) && (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let a = generate_scene(42, 64, 48);
        let b = generate_scene(42, 64, 48);
        assert_eq!(a.composite(), b.composite());
        assert_eq!(a.fg_mask(), b.fg_mask());
        assert_eq!((a.d_fg(), a.d_bg()), (b.d_fg(), b.d_bg()));
        let c = generate_scene(43, 64, 48);
        assert_ne!(a.composite(), c.composite());
    }

    #[test]
    fn generator_contract_over_many_seeds() {
        for seed in 0..100 {
            let s = generate_scene(seed, 64, 64);
            let cov = s.fg_mask().coverage();
            assert!((0.1..=0.6).contains(&cov), "seed {seed}: coverage {cov}");
            assert!(s.d_fg() > s.d_bg());
            assert!(s.d_fg() - s.d_bg() >= 0.15 - 1e-12);
            assert!(s.fg_color().data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn margin_is_clear() {
        let s = generate_scene(7, 40, 36);
        let m = s.fg_mask();
        for y in 0..36 {
            for x in 0..40 {
                if x < 2 || y < 2 || x >= 38 || y >= 34 {
                    assert!(!m.get(x, y));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(generate_scene_with(0, &SceneConfig::new(16, 64)).is_err());
        let img = ImageBuffer::filled(4, 4, [0.5; 3]);
        let mask = Mask::filled(4, 4, false);
        assert!(TwoPlaneScene::new(img.clone(), img.clone(), mask.clone(), 0.2, 0.2).is_err());
        assert!(TwoPlaneScene::new(img.clone(), img.clone(), Mask::filled(3, 4, false), 0.5, 0.2).is_err());
        assert!(Mask::new(2, 2, vec![true]).is_err());
    }

    #[test]
    fn disparity_matches_mask() {
        let s = generate_scene(3, 50, 50);
        let d = s.disparity();
        for y in 0..50 {
            for x in 0..50 {
                let want = if s.fg_mask().get(x, y) { s.d_fg() } else { s.d_bg() };
                assert_eq!(d.get(x, y), want);
            }
        }
    }

    #[test]
    fn edge_distance() {
        let m = Mask::from_fn(5, 1, |x, _| x >= 3);
        assert_eq!(m.distance_to_edge(), vec![3.0, 2.0, 1.0, 1.0, 2.0]);
    }
}

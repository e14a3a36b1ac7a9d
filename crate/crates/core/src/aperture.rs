//! Aperture-shaped blur kernels.
//!
//! A kernel texel's weight is the fraction of the texel covered by the
//! aperture (a disc, or a regular polygon inscribed in that disc), estimated
//! with 8×8 supersampling and normalized so the kernel sums to one.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use crate::imgcore::ApertureSpec;

const SUPERSAMPLE: usize = 8;

/// Radii are snapped to this grid (in pixels) before a kernel is cached.
pub const RADIUS_QUANTUM: f64 = 1.0 / 64.0;

/// A run of equal weights `x0..=x1` within one kernel row, offsets relative
/// to the kernel center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Run {
    pub x0: i32,
    pub x1: i32,
    pub w: f64,
}

#[derive(Clone, Debug)]
pub struct ApertureKernel {
    radius: f64,
    size: usize,
    weights: Vec<f64>,
    area: f64,
    rows: Vec<Vec<Run>>,
}

impl ApertureKernel {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Side length, `2 * ceil(radius) + 1`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn half(&self) -> usize {
        self.size / 2
    }

    /// Row-major `size × size` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dx, dy)` from the center; zero outside the kernel.
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let h = self.half() as isize;
        if dx.abs() > h || dy.abs() > h {
            return 0.0;
        }
        self.weights[((dy + h) as usize) * self.size + (dx + h) as usize]
    }

    /// Total texel coverage before normalization, i.e. the estimated shape area.
    pub fn coverage_area(&self) -> f64 {
        self.area
    }

    /// Row `dy` (offset from center) as runs of equal nonzero weight.
    pub(crate) fn row_runs(&self, dy: isize) -> &[Run] {
        &self.rows[(dy + self.half() as isize) as usize]
    }
}

/// Inside test for the aperture scaled to `radius`.
struct Shape {
    radius: f64,
    /// Edge normals and the apothem for polygons; empty for a circle.
    normals: Vec<(f64, f64)>,
    apothem: f64,
}

impl Shape {
    fn new(radius: f64, spec: &ApertureSpec) -> Self {
        if spec.is_circle() {
            return Shape {
                radius,
                normals: Vec::new(),
                apothem: radius,
            };
        }
        let n = spec.blades as f64;
        let normals = (0..spec.blades)
            .map(|k| {
                let a = spec.rotation + (2 * k + 1) as f64 * PI / n;
                (a.cos(), a.sin())
            })
            .collect();
        Shape {
            radius,
            normals,
            apothem: radius * (PI / n).cos(),
        }
    }

    #[inline]
    fn contains(&self, x: f64, y: f64) -> bool {
        if self.normals.is_empty() {
            x * x + y * y <= self.radius * self.radius
        } else {
            self.normals
                .iter()
                .all(|&(nx, ny)| x * nx + y * ny <= self.apothem)
        }
    }

    /// True when no point of the cell centered at `(cx, cy)` can be inside.
    fn cell_outside(&self, cx: f64, cy: f64) -> bool {
        if self.normals.is_empty() {
            let nx = (cx.abs() - 0.5).max(0.0);
            let ny = (cy.abs() - 0.5).max(0.0);
            nx * nx + ny * ny > self.radius * self.radius
        } else {
            self.normals.iter().any(|&(nx, ny)| {
                corners(cx, cy)
                    .iter()
                    .all(|&(x, y)| x * nx + y * ny > self.apothem)
            })
        }
    }

    fn coverage(&self, cx: f64, cy: f64) -> f64 {
        if self.cell_outside(cx, cy) {
            return 0.0;
        }
        // Convex shape: all four corners inside means every sample is inside.
        if corners(cx, cy).iter().all(|&(x, y)| self.contains(x, y)) {
            return 1.0;
        }
        let step = 1.0 / SUPERSAMPLE as f64;
        let mut hits = 0usize;
        for sy in 0..SUPERSAMPLE {
            let y = cy - 0.5 + (sy as f64 + 0.5) * step;
            for sx in 0..SUPERSAMPLE {
                let x = cx - 0.5 + (sx as f64 + 0.5) * step;
                if self.contains(x, y) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
    }
}

fn corners(cx: f64, cy: f64) -> [(f64, f64); 4] {
    [
        (cx - 0.5, cy - 0.5),
        (cx + 0.5, cy - 0.5),
        (cx - 0.5, cy + 0.5),
        (cx + 0.5, cy + 0.5),
    ]
}

fn coverage_grid(radius: f64, spec: &ApertureSpec, half: usize) -> Vec<f64> {
    let shape = Shape::new(radius, spec);
    let size = 2 * half + 1;
    let h = half as f64;
    let mut grid = Vec::with_capacity(size * size);
    for j in 0..size {
        for i in 0..size {
            grid.push(shape.coverage(i as f64 - h, j as f64 - h));
        }
    }
    grid
}

fn runs_of(weights: &[f64], size: usize) -> Vec<Vec<Run>> {
    let half = (size / 2) as i32;
    weights
        .chunks_exact(size)
        .map(|row| {
            let mut runs: Vec<Run> = Vec::new();
            for (i, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let x = i as i32 - half;
                match runs.last_mut() {
                    Some(last) if last.w == w && last.x1 + 1 == x => last.x1 = x,
                    _ => runs.push(Run { x0: x, x1: x, w }),
                }
            }
            runs
        })
        .collect()
}

/// Builds the normalized kernel for a blur of `radius` pixels.
///
/// Radii below half a pixel blend a unit impulse with the half-pixel kernel
/// (impulse fraction `1 - 2r`), so blur grows continuously from zero.
pub fn build_kernel(radius: f64, spec: &ApertureSpec) -> ApertureKernel {
    assert!(radius >= 0.0 && radius.is_finite(), "radius must be finite and >= 0");
    if radius == 0.0 {
        return ApertureKernel {
            radius,
            size: 1,
            weights: vec![1.0],
            area: 0.0,
            rows: vec![vec![Run { x0: 0, x1: 0, w: 1.0 }]],
        };
    }
    let half = radius.ceil() as usize;
    let size = 2 * half + 1;
    let raw = coverage_grid(radius, spec, half);
    let area: f64 = raw.iter().sum();

    let weights = if radius < 0.5 {
        let base = coverage_grid(0.5, spec, half);
        let base_sum: f64 = base.iter().sum();
        let frac = 2.0 * radius;
        let center = half * size + half;
        let mut w: Vec<f64> = base.iter().map(|v| frac * v / base_sum).collect();
        w[center] += 1.0 - frac;
        w
    } else {
        raw.iter().map(|v| v / area).collect()
    };
    let rows = runs_of(&weights, size);
    ApertureKernel {
        radius,
        size,
        weights,
        area,
        rows,
    }
}

/// Snaps a radius onto the cache grid.
pub fn quantize_radius(radius: f64) -> u32 {
    (radius / RADIUS_QUANTUM).round() as u32
}

/// Shared kernel store keyed by quantized radius; safe for concurrent readers.
#[derive(Debug)]
pub struct KernelCache {
    spec: ApertureSpec,
    kernels: RwLock<HashMap<u32, Arc<ApertureKernel>>>,
}

impl KernelCache {
    pub fn new(spec: ApertureSpec) -> Self {
        KernelCache {
            spec,
            kernels: RwLock::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &ApertureSpec {
        &self.spec
    }

    /// Kernel for `radius` snapped to [`RADIUS_QUANTUM`].
    pub fn get(&self, radius: f64) -> Arc<ApertureKernel> {
        self.get_quantized(quantize_radius(radius))
    }

    pub fn get_quantized(&self, key: u32) -> Arc<ApertureKernel> {
        if let Some(k) = self.kernels.read().expect("kernel cache poisoned").get(&key) {
            return Arc::clone(k);
        }
        let kernel = Arc::new(build_kernel(key as f64 * RADIUS_QUANTUM, &self.spec));
        let mut map = self.kernels.write().expect("kernel cache poisoned");
        Arc::clone(map.entry(key).or_insert(kernel))
    }

    /// Builds every missing kernel for `keys` up front, in parallel.
    pub fn prefetch(&self, keys: impl IntoIterator<Item = u32>) {
        let mut missing: Vec<u32> = {
            let map = self.kernels.read().expect("kernel cache poisoned");
            keys.into_iter().filter(|k| !map.contains_key(k)).collect()
        };
        missing.sort_unstable();
        missing.dedup();
        let built = crate::par::map_range(missing.len(), |i| {
            build_kernel(missing[i] as f64 * RADIUS_QUANTUM, &self.spec)
        });
        let mut map = self.kernels.write().expect("kernel cache poisoned");
        for (k, kernel) in missing.into_iter().zip(built) {
            map.entry(k).or_insert_with(|| Arc::new(kernel));
        }
    }

    pub fn len(&self) -> usize {
        self.kernels.read().expect("kernel cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

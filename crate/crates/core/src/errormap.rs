//! Where does scattering go wrong?
//!
//! For every pixel we find the nearest pixel across a depth edge and compare
//! the distance to it against the larger of the two blur radii (`α`), and the
//! two radii against each other (`β`). Scattering is reliable once `α ≥ 1`
//! and degrades less as `β` approaches one; the error map encodes both.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{dilate, erode, DisparityMap, ImageBuffer, Plane, RenderParams, SignedDefocusMap};
use crate::par;

pub const DEFAULT_TAU: f64 = 0.04;
pub const DEFAULT_DELTA1: f64 = 4.0;
pub const DEFAULT_DELTA2: f64 = 2.0 / 3.0;

/// Nearest cross-edge pixel for every pixel of a raster.
#[derive(Clone, Debug)]
pub struct BoundaryField {
    width: usize,
    height: usize,
    /// Euclidean distance to the nearest cross-edge pixel; `inf` when none is
    /// within the search radius.
    distance: Vec<f64>,
    /// Raster value at that pixel (the pixel's own value when none was found).
    other: Vec<f64>,
}

impl BoundaryField {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn distance(&self) -> &[f64] {
        &self.distance
    }

    pub fn other(&self) -> &[f64] {
        &self.other
    }

    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.distance[i], self.other[i])
    }
}

/// Offsets within `radius`, nearest first; equal distances in scanline order.
fn search_offsets(radius: usize) -> Vec<(isize, isize, f64)> {
    let r = radius as isize;
    let mut v: Vec<(isize, isize, isize)> = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = dx * dx + dy * dy;
            if d2 > 0 && d2 <= r * r {
                v.push((d2, dy, dx));
            }
        }
    }
    v.sort_unstable();
    v.into_iter()
        .map(|(d2, dy, dx)| (dx, dy, (d2 as f64).sqrt()))
        .collect()
}

/// For each pixel `i`, the nearest pixel `j` with `|v_j - v_i| > tau` within
/// `search_radius`. Ties go to the smallest row, then the smallest column.
pub fn boundary_field(values: &Plane, tau: f64, search_radius: usize) -> BoundaryField {
    assert!(tau >= 0.0, "tau must be non-negative");
    let search_radius = search_radius.max(1);
    let (w, h) = values.dims();
    let offsets = search_offsets(search_radius);
    // A pixel whose square neighborhood spans at most tau either way has no
    // cross-edge neighbor inside the disc.
    let window = 2 * search_radius + 1;
    let hi = dilate(values, window);
    let lo = erode(values, window);
    let src = values.data();

    let mut packed = vec![(f64::INFINITY, 0.0); w * h];
    par::for_each_chunk_mut(&mut packed, w, |y, row| {
        for (x, slot) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let v = src[i];
            *slot = (f64::INFINITY, v);
            if hi.data()[i] - v <= tau && v - lo.data()[i] <= tau {
                continue;
            }
            for &(dx, dy, dist) in &offsets {
                let xx = x as isize + dx;
                let yy = y as isize + dy;
                if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                    continue;
                }
                let o = src[yy as usize * w + xx as usize];
                if (o - v).abs() > tau {
                    *slot = (dist, o);
                    break;
                }
            }
        }
    });
    let (distance, other) = packed.into_iter().unzip();
    BoundaryField {
        width: w,
        height: h,
        distance,
        other,
    }
}

/// `α` and `β` rasters. `α = inf`, `β = 1` where no edge is in reach or both
/// radii vanish. These rasters may hold `inf` and so bypass [`Plane::new`].
pub fn alpha_beta(field: &BoundaryField, d: &DisparityMap, params: &RenderParams) -> Result<(Plane, Plane)> {
    Error::check_dims(field.dims(), d.dims())?;
    let k = params.blur;
    let df = params.focus;
    Ok(alpha_beta_with(field, d.data(), |v| k * (v - df).abs()))
}

/// [`alpha_beta`] for a field computed on a signed defocus map.
pub fn alpha_beta_defocus(field: &BoundaryField, s: &SignedDefocusMap) -> Result<(Plane, Plane)> {
    Error::check_dims(field.dims(), s.dims())?;
    Ok(alpha_beta_with(field, s.data(), f64::abs))
}

fn alpha_beta_with(field: &BoundaryField, values: &[f64], radius: impl Fn(f64) -> f64) -> (Plane, Plane) {
    let (w, h) = field.dims();
    let mut alpha = Vec::with_capacity(w * h);
    let mut beta = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let l = field.distance[i];
        let ri = radius(values[i]);
        let ro = radius(field.other[i]);
        let big = ri.max(ro);
        if !l.is_finite() || big == 0.0 {
            alpha.push(f64::INFINITY);
            beta.push(1.0);
        } else {
            alpha.push(l / big);
            beta.push(ri.min(ro) / big);
        }
    }
    (Plane::from_raw(w, h, alpha), Plane::from_raw(w, h, beta))
}

/// Fusion weight raster with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap(Plane);

impl ErrorMap {
    pub fn new(plane: Plane) -> Result<Self> {
        if plane.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation("error map values must lie in [0, 1]".into()));
        }
        Ok(ErrorMap(plane))
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        ErrorMap(Plane::filled(width, height, value.clamp(0.0, 1.0)))
    }

    pub(crate) fn from_raw(plane: Plane) -> Self {
        debug_assert!(plane.data().iter().all(|v| (0.0..=1.0).contains(v)));
        ErrorMap(plane)
    }

    pub fn as_plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }
}

impl Deref for ErrorMap {
    type Target = Plane;

    fn deref(&self) -> &Plane {
        &self.0
    }
}

/// `E = 1(α < 1)`.
pub fn error_map_initial(alpha: &Plane) -> ErrorMap {
    ErrorMap::from_raw(alpha.map(|a| if a < 1.0 { 1.0 } else { 0.0 }))
}

fn improved_value(a: f64, b: f64, delta1: f64, delta2: f64, smooth: bool) -> f64 {
    // β ≤ 1 by construction; the guard only matters for foreign inputs.
    if !a.is_finite() || b > 1.0 {
        return 0.0;
    }
    let reach = (1.0 - a.powf(delta1)).max(0.0);
    let ratio = if smooth {
        0.5 + 0.5 * (10.0 * (delta2 - b)).tanh()
    } else if b < delta2 {
        1.0
    } else {
        0.0
    };
    (reach * ratio).clamp(0.0, 1.0)
}

/// `E = max(0, 1 - α^δ1) · (0.5 + 0.5·tanh(10·(δ2 - β)))`.
pub fn error_map_improved(alpha: &Plane, beta: &Plane, delta1: f64, delta2: f64) -> Result<ErrorMap> {
    improved(alpha, beta, delta1, delta2, true)
}

/// [`error_map_improved`] with the hard indicator `1(β < δ2)` in place of the
/// smooth ratio term.
pub fn error_map_improved_hard(alpha: &Plane, beta: &Plane, delta1: f64, delta2: f64) -> Result<ErrorMap> {
    improved(alpha, beta, delta1, delta2, false)
}

fn improved(alpha: &Plane, beta: &Plane, delta1: f64, delta2: f64, smooth: bool) -> Result<ErrorMap> {
    Error::check_dims(alpha.dims(), beta.dims())?;
    if !(delta1 > 0.0) || !(delta2 > 0.0 && delta2 <= 1.0) {
        return Err(Error::Validation(format!(
            "need delta1 > 0 and 0 < delta2 <= 1, got {delta1}, {delta2}"
        )));
    }
    let data = alpha
        .data()
        .iter()
        .zip(beta.data())
        .map(|(&a, &b)| improved_value(a, b, delta1, delta2, smooth))
        .collect();
    Ok(ErrorMap::from_raw(Plane::from_raw(alpha.width(), alpha.height(), data)))
}

/// Per-pixel maximum over channels of `|a - b|`.
pub fn color_difference_map(a: &ImageBuffer, b: &ImageBuffer) -> Result<Plane> {
    Error::check_dims(a.dims(), b.dims())?;
    let data = a
        .data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .map(|(p, q)| {
            (p[0] - q[0])
                .abs()
                .max((p[1] - q[1]).abs())
                .max((p[2] - q[2]).abs())
        })
        .collect();
    Ok(Plane::from_raw(a.width(), a.height(), data))
}

/// Tunables for the end-to-end error map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMapConfig {
    /// Minimum disparity jump that counts as a depth edge.
    pub tau: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl Default for ErrorMapConfig {
    fn default() -> Self {
        ErrorMapConfig {
            tau: DEFAULT_TAU,
            delta1: DEFAULT_DELTA1,
            delta2: DEFAULT_DELTA2,
        }
    }
}

/// All intermediate rasters of an error-map computation.
#[derive(Clone, Debug)]
pub struct ErrorAnalysis {
    pub field: BoundaryField,
    pub alpha: Plane,
    pub beta: Plane,
    pub initial: ErrorMap,
    pub improved: ErrorMap,
}

/// Error map from a normalized disparity map, searching `ceil(K) + 1` pixels.
pub fn analyze_disparity(d: &DisparityMap, params: &RenderParams, cfg: &ErrorMapConfig) -> Result<ErrorAnalysis> {
    let radius = params.blur.ceil() as usize + 1;
    let field = boundary_field(d, cfg.tau, radius);
    let (alpha, beta) = alpha_beta(&field, d, params)?;
    finish(field, alpha, beta, cfg)
}

/// Error map computed directly on a signed defocus map.
///
/// `tau` is still in disparity units; `blur_per_unit` converts it into the
/// defocus map's units (`K / w` for a map shrunk by factor `w`).
pub fn analyze_defocus(s: &SignedDefocusMap, blur_per_unit: f64, cfg: &ErrorMapConfig) -> Result<ErrorAnalysis> {
    let (w, h) = s.dims();
    if blur_per_unit <= 0.0 {
        let field = BoundaryField {
            width: w,
            height: h,
            distance: vec![f64::INFINITY; w * h],
            other: s.data().to_vec(),
        };
        let alpha = Plane::from_raw(w, h, vec![f64::INFINITY; w * h]);
        let beta = Plane::filled(w, h, 1.0);
        return finish(field, alpha, beta, cfg);
    }
    let radius = s.max_abs().ceil() as usize + 1;
    let field = boundary_field(s, cfg.tau * blur_per_unit, radius);
    let (alpha, beta) = alpha_beta_defocus(&field, s)?;
    finish(field, alpha, beta, cfg)
}

fn finish(field: BoundaryField, alpha: Plane, beta: Plane, cfg: &ErrorMapConfig) -> Result<ErrorAnalysis> {
    let initial = error_map_initial(&alpha);
    let improved = error_map_improved(&alpha, &beta, cfg.delta1, cfg.delta2)?;
    Ok(ErrorAnalysis {
        field,
        alpha,
        beta,
        initial,
        improved,
    })
}

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel floating-point raster, row-major with a top-left origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Validation(format!(
                "raster {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite raster value {v}")));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    /// Wraps data produced internally; callers guarantee the length.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped into the frame.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Three-channel color raster with nominal intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Validation(format!(
                "image {width}x{height} needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite pixel value {v}")));
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        ImageBuffer {
            width,
            height,
            data,
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        ImageBuffer {
            width,
            height,
            data,
        }
    }

    /// Builds an image from three channel planes of equal size.
    pub fn from_planes(planes: [&Plane; 3]) -> Result<Self> {
        let dims = planes[0].dims();
        for p in &planes[1..] {
            Error::check_dims(dims, p.dims())?;
        }
        let n = dims.0 * dims.1;
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            data.push(planes[0].data()[i]);
            data.push(planes[1].data()[i]);
            data.push(planes[2].data()[i]);
        }
        Ok(Self::from_raw(dims.0, dims.1, data))
    }

    pub fn channel(&self, c: usize) -> Plane {
        assert!(c < 3);
        Plane::from_raw(
            self.width,
            self.height,
            self.data.iter().skip(c).step_by(3).copied().collect(),
        )
    }

    pub fn planes(&self) -> [Plane; 3] {
        [self.channel(0), self.channel(1), self.channel(2)]
    }

    /// Per-pixel mean of the three channels.
    pub fn luma_mean(&self) -> Plane {
        Plane::from_raw(
            self.width,
            self.height,
            self.data
                .chunks_exact(3)
                .map(|p| (p[0] + p[1] + p[2]) / 3.0)
                .collect(),
        )
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        ImageBuffer::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Largest absolute per-sample difference.
    pub fn max_abs_diff(&self, other: &ImageBuffer) -> Result<f64> {
        Error::check_dims(self.dims(), other.dims())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

macro_rules! plane_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(Plane);

        impl $name {
            pub fn new(plane: Plane) -> Self {
                $name(plane)
            }

            pub fn as_plane(&self) -> &Plane {
                &self.0
            }

            pub fn into_plane(self) -> Plane {
                self.0
            }
        }

        impl Deref for $name {
            type Target = Plane;

            fn deref(&self) -> &Plane {
                &self.0
            }
        }

        impl From<Plane> for $name {
            fn from(p: Plane) -> Self {
                $name(p)
            }
        }
    };
}

plane_newtype!(
    /// Per-pixel disparity (inverse depth); larger is nearer.
    DisparityMap
);

plane_newtype!(
    /// Signed blur radius in pixels; positive in front of the focal plane.
    SignedDefocusMap
);

/// Aperture shape: `blades == 0` is a circle, otherwise a regular polygon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApertureSpec {
    pub blades: u32,
    /// Polygon rotation in radians.
    pub rotation: f64,
}

impl ApertureSpec {
    pub const CIRCLE: ApertureSpec = ApertureSpec {
        blades: 0,
        rotation: 0.0,
    };

    pub fn polygon(blades: u32, rotation: f64) -> Self {
        ApertureSpec { blades, rotation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blades == 1 || self.blades == 2 {
            return Err(Error::Validation(format!(
                "aperture needs 0 (circle) or at least 3 blades, got {}",
                self.blades
            )));
        }
        if !self.rotation.is_finite() {
            return Err(Error::Validation("aperture rotation must be finite".into()));
        }
        Ok(())
    }

    pub fn is_circle(&self) -> bool {
        self.blades == 0
    }
}

impl Default for ApertureSpec {
    fn default() -> Self {
        ApertureSpec::CIRCLE
    }
}

/// The user-facing rendering controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Blur parameter K: pixels of blur radius per unit of disparity.
    pub blur: f64,
    /// Refocused disparity d_f in `[0, 1]`.
    pub focus: f64,
    pub gamma: f64,
    pub aperture: ApertureSpec,
}

impl RenderParams {
    pub fn new(blur: f64, focus: f64, gamma: f64) -> Self {
        RenderParams {
            blur,
            focus,
            gamma,
            aperture: ApertureSpec::CIRCLE,
        }
    }

    pub fn with_aperture(mut self, aperture: ApertureSpec) -> Self {
        self.aperture = aperture;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blur.is_finite() && self.blur >= 0.0) {
            return Err(Error::Validation(format!(
                "blur parameter must be >= 0, got {}",
                self.blur
            )));
        }
        if !(0.0..=1.0).contains(&self.focus) {
            return Err(Error::Validation(format!(
                "focus disparity must lie in [0, 1], got {}",
                self.focus
            )));
        }
        if !(1.0..=5.0).contains(&self.gamma) {
            return Err(Error::Validation(format!(
                "gamma must lie in [1, 5], got {}",
                self.gamma
            )));
        }
        self.aperture.validate()
    }

    /// Blur radius of a point at disparity `d`: `K * |d - d_f|`.
    pub fn blur_radius(&self, d: f64) -> f64 {
        self.blur * (d - self.focus).abs()
    }
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams::new(20.0, 0.5, 2.2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_rejects_bad_shapes() {
        assert!(Plane::new(0, 2, vec![]).is_err());
        assert!(Plane::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Plane::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Plane::new(2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn image_channel_round_trip() {
        let img = ImageBuffer::from_fn(3, 2, |x, y| [x as f64, y as f64, 0.5]);
        let planes = img.planes();
        let back = ImageBuffer::from_planes([&planes[0], &planes[1], &planes[2]]).unwrap();
        assert_eq!(img, back);
        assert_eq!(img.pixel(2, 1), [2.0, 1.0, 0.5]);
    }

    #[test]
    fn params_validation() {
        assert!(RenderParams::new(10.0, 0.5, 2.2).validate().is_ok());
        assert!(RenderParams::new(-1.0, 0.5, 2.2).validate().is_err());
        assert!(RenderParams::new(10.0, 1.5, 2.2).validate().is_err());
        assert!(RenderParams::new(10.0, 0.5, 0.5).validate().is_err());
        let p = RenderParams::new(10.0, 0.5, 2.2).with_aperture(ApertureSpec::polygon(2, 0.0));
        assert!(p.validate().is_err());
    }

    #[test]
    fn blur_radius_examples() {
        assert!((RenderParams::new(10.0, 0.2, 1.0).blur_radius(0.5) - 3.0).abs() < 1e-12);
        assert_eq!(RenderParams::new(10.0, 0.2, 1.0).blur_radius(0.2), 0.0);
        assert_eq!(RenderParams::new(12.0, 1.0, 1.0).blur_radius(0.0), 12.0);
    }
}

//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Everything returned to the page is tightly packed RGBA bytes, ready for
//! `new ImageData(new Uint8ClampedArray(bytes), width)`.

use wasm_bindgen::prelude::*;

use bokeh_core::aperture::build_kernel;
use bokeh_core::fusion::{focus_from_point, render, RenderMode, RenderRequest};
use bokeh_core::oracle::generate_scene;
use bokeh_core::{ApertureSpec, DisparityMap, ImageBuffer, Plane, RenderParams};

/// Window of the median used by click-to-focus.
pub const FOCUS_WINDOW: usize = 11;

/// A generated two-plane scene and the rasters of its last render.
#[wasm_bindgen]
pub struct Demo {
    image: ImageBuffer,
    disparity: DisparityMap,
    last_error: Option<Plane>,
}

#[wasm_bindgen]
impl Demo {
    /// Sides below 32 pixels are raised to 32.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, width: usize, height: usize) -> Demo {
        let scene = generate_scene(seed as u64, width.max(32), height.max(32));
        Demo {
            image: scene.composite(),
            disparity: scene.disparity(),
            last_error: None,
        }
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.image.width()
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.image.height()
    }

    #[wasm_bindgen(js_name = imageRgba)]
    pub fn image_rgba(&self) -> Vec<u8> {
        rgba(&self.image)
    }

    /// Disparity as gray, near is bright.
    #[wasm_bindgen(js_name = disparityRgba)]
    pub fn disparity_rgba(&self) -> Vec<u8> {
        gray_rgba(&self.disparity)
    }

    /// Median disparity around a pixel.
    #[wasm_bindgen(js_name = focusAt)]
    pub fn focus_at(&self, x: usize, y: usize) -> Result<f64, JsError> {
        focus_from_point(&self.disparity, x, y, FOCUS_WINDOW).map_err(js)
    }

    /// Renders with `mode` one of `hybrid`, `classical_only`, `neural_only`;
    /// `rotation` is in degrees.
    #[wasm_bindgen(js_name = render)]
    pub fn render_js(
        &mut self,
        blur: f64,
        focus: f64,
        gamma: f64,
        blades: u32,
        rotation: f64,
        mode: &str,
    ) -> Result<Vec<u8>, JsError> {
        self.render_rgba(blur, focus, gamma, blades, rotation, mode).map_err(js)
    }

    /// Fusion weights of the last render as a heat map; black before any
    /// render.
    #[wasm_bindgen(js_name = errorRgba)]
    pub fn error_rgba(&self) -> Vec<u8> {
        match &self.last_error {
            Some(e) => heat_rgba(e),
            None => [0, 0, 0, 255].repeat(self.image.width() * self.image.height()),
        }
    }
}

impl Demo {
    pub fn image(&self) -> &ImageBuffer {
        &self.image
    }

    pub fn disparity(&self) -> &DisparityMap {
        &self.disparity
    }

    pub fn render_rgba(
        &mut self,
        blur: f64,
        focus: f64,
        gamma: f64,
        blades: u32,
        rotation: f64,
        mode: &str,
    ) -> Result<Vec<u8>, String> {
        let mode: RenderMode = mode.parse().map_err(|e| format!("{e}"))?;
        let params = RenderParams::new(blur, focus, gamma)
            .with_aperture(ApertureSpec::polygon(blades, rotation.to_radians()));
        let req = RenderRequest::new(self.image.clone(), self.disparity.clone(), params).with_mode(mode);
        let out = render(&req).map_err(|e| e.to_string())?;
        self.last_error = Some(out.error.into_plane());
        Ok(rgba(&out.image))
    }
}

/// The aperture kernel for a blur radius, normalized to its peak; the image
/// is `kernelSize(radius, ...)` pixels square.
#[wasm_bindgen(js_name = kernelRgba)]
pub fn kernel_rgba(radius: f64, blades: u32, rotation: f64) -> Vec<u8> {
    let k = build_kernel(radius.max(0.0), &ApertureSpec::polygon(blades, rotation.to_radians()));
    let peak = k.weights().iter().cloned().fold(0.0, f64::max);
    let n = k.size();
    let plane = Plane::from_fn(n, n, |x, y| if peak > 0.0 { k.weights()[y * n + x] / peak } else { 0.0 });
    gray_rgba(&plane)
}

#[wasm_bindgen(js_name = kernelSize)]
pub fn kernel_size(radius: f64, blades: u32, rotation: f64) -> usize {
    build_kernel(radius.max(0.0), &ApertureSpec::polygon(blades, rotation.to_radians())).size()
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn rgba(img: &ImageBuffer) -> Vec<u8> {
    img.data()
        .chunks_exact(3)
        .flat_map(|p| [byte(p[0]), byte(p[1]), byte(p[2]), 255])
        .collect()
}

pub fn gray_rgba(p: &Plane) -> Vec<u8> {
    p.data()
        .iter()
        .flat_map(|&v| {
            let b = byte(v);
            [b, b, b, 255]
        })
        .collect()
}

/// Black through red to yellow.
pub fn heat_rgba(p: &Plane) -> Vec<u8> {
    p.data()
        .iter()
        .flat_map(|&v| [byte(2.0 * v), byte(2.0 * v - 1.0), 0, 255])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgba_layout() {
        let img = ImageBuffer::new(2, 1, vec![1.0, 0.0, 0.5, 0.0, 2.0, -1.0]).unwrap();
        assert_eq!(rgba(&img), vec![255, 0, 128, 255, 0, 255, 0, 255]);
    }

    #[test]
    fn heat_endpoints() {
        let p = Plane::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(heat_rgba(&p), vec![0, 0, 0, 255, 255, 0, 0, 255, 255, 255, 0, 255]);
    }
}

//! Top-level renderer: classical scatter, the multi-scale pipeline, and their
//! blend `B = (1 - E)·B_cr + E·B_nr`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aperture::KernelCache;
use crate::classical::render_scatter_cached;
use crate::error::{Error, Result};
use crate::errormap::ErrorMap;
use crate::imgcore::{resize_bilinear, signed_defocus, DisparityMap, ImageBuffer, RenderParams};
use crate::neuralpipe::{CoreConfig, NeuralOutput};
use crate::neuralpipe::render_neural_cached;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    #[default]
    Hybrid,
    ClassicalOnly,
    NeuralOnly,
}

impl RenderMode {
    pub const ALL: [RenderMode; 3] = [RenderMode::Hybrid, RenderMode::ClassicalOnly, RenderMode::NeuralOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            RenderMode::Hybrid => "hybrid",
            RenderMode::ClassicalOnly => "classical_only",
            RenderMode::NeuralOnly => "neural_only",
        }
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RenderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RenderMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown render mode {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct RenderRequest {
    pub image: ImageBuffer,
    /// Resized to the image size if it differs.
    pub disparity: DisparityMap,
    pub params: RenderParams,
    pub cfg: CoreConfig,
    pub mode: RenderMode,
}

impl RenderRequest {
    pub fn new(image: ImageBuffer, disparity: DisparityMap, params: RenderParams) -> Self {
        RenderRequest {
            image,
            disparity,
            params,
            cfg: CoreConfig::default(),
            mode: RenderMode::Hybrid,
        }
    }

    pub fn with_mode(mut self, mode: RenderMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_config(mut self, cfg: CoreConfig) -> Self {
        self.cfg = cfg;
        self
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub image: ImageBuffer,
    pub error: ErrorMap,
    /// Classical result; absent in neural-only mode.
    pub classical: Option<ImageBuffer>,
    /// Pipeline result and its intermediates; absent in classical-only mode.
    pub neural: Option<NeuralOutput>,
}

/// `(1 - E)·a + E·b`, channelwise.
pub fn blend(a: &ImageBuffer, b: &ImageBuffer, e: &ErrorMap) -> Result<ImageBuffer> {
    Error::check_dims(a.dims(), b.dims())?;
    Error::check_dims(a.dims(), e.dims())?;
    let mut out = a.data().to_vec();
    for (i, px) in out.chunks_exact_mut(3).enumerate() {
        let w = e.data()[i];
        if w == 0.0 {
            continue;
        }
        for (c, v) in px.iter_mut().enumerate() {
            *v = (1.0 - w) * *v + w * b.data()[3 * i + c];
        }
    }
    Ok(ImageBuffer::new(a.width(), a.height(), out).expect("blend of valid images"))
}

/// Renders a request; see [`RenderMode`] for what each mode computes.
pub fn render(req: &RenderRequest) -> Result<RenderOutput> {
    req.params.validate()?;
    req.cfg.validate()?;
    let (w, h) = req.image.dims();
    let disparity = if req.disparity.dims() == (w, h) {
        req.disparity.clone()
    } else {
        DisparityMap::new(resize_bilinear(&req.disparity, w, h))
    };
    let s = signed_defocus(&disparity, &req.params);
    let cache = KernelCache::new(req.params.aperture);

    let classical = match req.mode {
        RenderMode::NeuralOnly => None,
        _ => Some(render_scatter_cached(&req.image, &s, req.params.gamma, &cache)?),
    };
    let neural = match req.mode {
        RenderMode::ClassicalOnly => None,
        _ => Some(render_neural_cached(&req.image, &s, &req.params, &req.cfg, &cache)?),
    };
    let (image, error) = match (&classical, &neural) {
        (Some(cr), Some(nr)) => (blend(cr, &nr.image, &nr.error)?, nr.error.clone()),
        (Some(cr), None) => (cr.clone(), ErrorMap::constant(w, h, 0.0)),
        (None, Some(nr)) => (nr.image.clone(), ErrorMap::constant(w, h, 1.0)),
        (None, None) => unreachable!("every mode runs at least one renderer"),
    };
    Ok(RenderOutput {
        image,
        error,
        classical,
        neural,
    })
}

/// Median disparity in a `window × window` box around `(x, y)`, clipped to
/// the frame. Even-length medians take the lower middle value.
pub fn focus_from_point(d: &DisparityMap, x: usize, y: usize, window: usize) -> Result<f64> {
    let (w, h) = d.dims();
    if x >= w || y >= h {
        return Err(Error::Validation(format!("point ({x}, {y}) outside {w}x{h} frame")));
    }
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Validation(format!("window must be odd and >= 1, got {window}")));
    }
    let r = window / 2;
    let mut vals = Vec::with_capacity(window * window);
    for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
        for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
            vals.push(d.get(xx, yy));
        }
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals[(vals.len() - 1) / 2])
}

pub const DEFAULT_FOCUS_WINDOW: usize = 11;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::{ApertureSpec, Plane};
    use crate::oracle::generate_scene;
    use proptest::prelude::*;

    fn request(seed: u64, blur: f64, mode: RenderMode) -> RenderRequest {
        let scene = generate_scene(seed, 64, 64);
        let params = RenderParams::new(blur, scene.d_bg(), 2.2);
        RenderRequest::new(scene.composite(), scene.disparity(), params).with_mode(mode)
    }

    #[test]
    fn blend_endpoints() {
        let a = ImageBuffer::filled(5, 4, [0.2, 0.4, 0.6]);
        let b = ImageBuffer::filled(5, 4, [0.9, 0.1, 0.3]);
        assert_eq!(blend(&a, &b, &ErrorMap::constant(5, 4, 0.0)).unwrap(), a);
        assert_eq!(blend(&a, &b, &ErrorMap::constant(5, 4, 1.0)).unwrap(), b);
    }

    #[test]
    fn modes_report_constant_error_maps() {
        let cr = render(&request(1, 20.0, RenderMode::ClassicalOnly)).unwrap();
        assert!(cr.error.data().iter().all(|&v| v == 0.0));
        assert_eq!(Some(&cr.image), cr.classical.as_ref());
        let nr = render(&request(1, 20.0, RenderMode::NeuralOnly)).unwrap();
        assert!(nr.error.data().iter().all(|&v| v == 1.0));
        assert_eq!(nr.image, nr.neural.unwrap().image);
    }

    #[test]
    fn zero_blur_is_identity_in_every_mode() {
        for mode in RenderMode::ALL {
            let req = request(2, 0.0, mode);
            let out = render(&req).unwrap();
            assert!(out.image.max_abs_diff(&req.image).unwrap() < 1e-3, "{mode}");
        }
    }

    #[test]
    fn hybrid_is_convex_and_exact_off_boundary() {
        let out = render(&request(3, 30.0, RenderMode::Hybrid)).unwrap();
        let cr = out.classical.as_ref().unwrap();
        let nr = &out.neural.as_ref().unwrap().image;
        for i in 0..out.image.data().len() {
            let (a, b, v) = (cr.data()[i], nr.data()[i], out.image.data()[i]);
            assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
            if out.error.data()[i / 3] == 0.0 {
                assert_eq!(v, a);
            }
        }
    }

    #[test]
    fn low_res_disparity_is_resized() {
        let scene = generate_scene(4, 64, 64);
        let small = DisparityMap::new(resize_bilinear(&scene.disparity(), 32, 32));
        let req = RenderRequest::new(scene.composite(), small, RenderParams::new(10.0, 0.3, 2.2));
        assert_eq!(render(&req).unwrap().image.dims(), (64, 64));
    }

    #[test]
    fn blades_keep_output_bounded() {
        let mut req = request(5, 25.0, RenderMode::Hybrid);
        let top = req.image.max_value();
        for blades in [0, 5, 6] {
            req.params.aperture = ApertureSpec::polygon(blades, 0.1);
            let out = render(&req).unwrap();
            assert!(out.image.data().iter().all(|&v| v >= 0.0 && v <= top + 1e-9));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut req = request(6, 10.0, RenderMode::Hybrid);
        req.params.gamma = 7.0;
        assert!(matches!(render(&req), Err(Error::Validation(_))));
    }

    #[test]
    fn focus_examples() {
        let d = DisparityMap::new(Plane::filled(30, 20, 0.3));
        assert_eq!(focus_from_point(&d, 0, 19, 11).unwrap(), 0.3);
        let d = DisparityMap::new(Plane::from_fn(40, 40, |x, _| if x < 20 { 0.8 } else { 0.1 }));
        assert_eq!(focus_from_point(&d, 8, 20, 11).unwrap(), 0.8);
        // 11x11 window over columns 14..=24: 6 columns at 0.2 and 5 at 0.9.
        let d = DisparityMap::new(Plane::from_fn(40, 40, |x, _| if x < 20 { 0.2 } else { 0.9 }));
        assert_eq!(focus_from_point(&d, 19, 20, 11).unwrap(), 0.2);
        assert!(focus_from_point(&d, 40, 0, 11).is_err());
        assert!(focus_from_point(&d, 0, 0, 4).is_err());
    }

    proptest! {
        #[test]
        fn focus_is_direct_median(vals in proptest::collection::vec(0.0f64..1.0, 144), x in 0usize..12, y in 0usize..12, half in 0usize..4) {
            let d = DisparityMap::new(Plane::new(12, 12, vals.clone()).unwrap());
            let window = 2 * half + 1;
            let mut v = Vec::new();
            for yy in 0..12usize {
                for xx in 0..12usize {
                    if xx.abs_diff(x) <= half && yy.abs_diff(y) <= half {
                        v.push(vals[yy * 12 + xx]);
                    }
                }
            }
            v.sort_by(f64::total_cmp);
            prop_assert_eq!(focus_from_point(&d, x, y, window).unwrap(), v[(v.len() - 1) / 2]);
        }
    }
}


use crate::aperture::KernelCache;
use crate::error::{Error, Result};
use crate::errormap::{analyze_defocus, ErrorMap};
use crate::imgcore::{resize_bilinear, resize_image_bilinear, ImageBuffer, Plane, RenderParams, SignedDefocusMap};

use super::core::render_core_cached;
use super::schedule::{adaptive_factor, build_schedule, stage_dims, PyramidSchedule};
use super::{CoreConfig, MaskSource};

/// Result of the low-resolution stage.
#[derive(Clone, Debug)]
pub struct ArnetOutput {
    pub image: ImageBuffer,
    /// Error map at working resolution.
    pub error: ErrorMap,
    pub w0: f64,
    /// Defocus at working resolution, in working-resolution pixels.
    pub defocus: SignedDefocusMap,
}

/// Result of one upsampling step.
#[derive(Clone, Debug)]
pub struct StageOutput {
    pub image: ImageBuffer,
    /// Bilinear upsampling of the previous stage.
    pub upsampled: ImageBuffer,
    /// Feathered keep-mask; 1 keeps the re-rendered pixel.
    pub mask: Plane,
}

#[derive(Clone, Debug)]
pub struct NeuralOutput {
    pub image: ImageBuffer,
    /// Error map restored to full resolution.
    pub error: ErrorMap,
    pub schedule: PyramidSchedule,
    pub low_res: ArnetOutput,
    pub stages: Vec<StageOutput>,
}

fn scaled_defocus(s: &SignedDefocusMap, dims: (usize, usize), w: f64) -> SignedDefocusMap {
    let mut p = resize_bilinear(s, dims.0, dims.1);
    p.data_mut().iter_mut().for_each(|v| *v /= w);
    SignedDefocusMap::new(p)
}

/// Shrinks the input by the adaptive factor, renders it with the core and
/// computes the error map at that resolution.
pub fn arnet_stage(img: &ImageBuffer, s: &SignedDefocusMap, params: &RenderParams, cfg: &CoreConfig) -> Result<ArnetOutput> {
    arnet_cached(img, s, params, cfg, &KernelCache::new(params.aperture))
}

fn arnet_cached(
    img: &ImageBuffer,
    s: &SignedDefocusMap,
    params: &RenderParams,
    cfg: &CoreConfig,
    cache: &KernelCache,
) -> Result<ArnetOutput> {
    Error::check_dims(img.dims(), s.dims())?;
    cfg.validate()?;
    let w0 = adaptive_factor(s, cfg.r_hat);
    let dims = stage_dims(img.dims(), w0);
    let small = resize_image_bilinear(img, dims.0, dims.1);
    let defocus = scaled_defocus(s, dims, w0);
    let image = render_core_cached(&small, &defocus, params.gamma, cache, cfg.r_hat, false)?;
    let error = analyze_defocus(&defocus, params.blur / w0, &cfg.errormap)?.improved;
    Ok(ArnetOutput {
        image,
        error,
        w0,
        defocus,
    })
}

/// Pixels touched by the true footprint of any pixel with `|s| > r_hat`.
///
/// A clipped pixel scatters at most `r_hat` but should reach `|s|`, so every
/// pixel its real kernel overlaps is wrong after clipping. Returns 1 there and
/// 0 elsewhere. Footprints use the kernel's support: offset `(dx, dy)` is
/// touched when the pixel square intersects the open disc.
pub fn clip_reach(s: &Plane, r_hat: f64) -> Plane {
    let (w, h) = s.dims();
    let mut diff = vec![0i32; (w + 1) * h];
    for ys in 0..h {
        for xs in 0..w {
            let r = s.get(xs, ys).abs();
            if r <= r_hat {
                continue;
            }
            let reach = (r + 0.5).ceil() as isize;
            for dy in -reach..=reach {
                let yt = ys as isize + dy;
                if yt < 0 || yt >= h as isize {
                    continue;
                }
                let ady = (dy.abs() as f64 - 0.5).max(0.0);
                if ady >= r {
                    continue;
                }
                let hw = ((r * r - ady * ady).sqrt() + 0.5).ceil() as isize - 1;
                let lo = (xs as isize - hw).max(0) as usize;
                let hi = (xs as isize + hw + 1).min(w as isize) as usize;
                let row = yt as usize * (w + 1);
                diff[row + lo] += 1;
                diff[row + hi] -= 1;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let mut run = 0;
        for x in 0..w {
            run += diff[y * (w + 1) + x];
            out[y * w + x] = if run > 0 { 1.0 } else { 0.0 };
        }
    }
    Plane::from_raw(w, h, out)
}

/// 3×3 box average with clamped edges.
fn feather(m: &Plane) -> Plane {
    let (w, h) = m.dims();
    Plane::from_fn(w, h, |x, y| {
        let mut sum = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                sum += m.get_clamped(x as isize + dx, y as isize + dy);
            }
        }
        sum / 9.0
    })
}

fn keep_mask(s_t: &Plane, cfg: &CoreConfig) -> Plane {
    let binary = match cfg.mask_source {
        MaskSource::None => return Plane::filled(s_t.width(), s_t.height(), 1.0),
        MaskSource::Signed => s_t.map(|v| if v.abs() <= cfg.r_hat { 1.0 } else { 0.0 }),
        MaskSource::Dilated => clip_reach(s_t, cfg.r_hat).map(|v| 1.0 - v),
    };
    feather(&binary)
}

/// One upsampling step: upsample `b_in` to the guide's size, re-render the
/// guide with clipped defocus and keep the re-rendered pixels where the mask
/// allows.
pub fn iunet_stage(
    b_in: &ImageBuffer,
    guide: &ImageBuffer,
    s_full: &SignedDefocusMap,
    params: &RenderParams,
    t: usize,
    schedule: &PyramidSchedule,
    cfg: &CoreConfig,
) -> Result<StageOutput> {
    iunet_cached(b_in, guide, s_full, params, t, schedule, cfg, &KernelCache::new(params.aperture))
}

#[allow(clippy::too_many_arguments)]
fn iunet_cached(
    b_in: &ImageBuffer,
    guide: &ImageBuffer,
    s_full: &SignedDefocusMap,
    params: &RenderParams,
    t: usize,
    schedule: &PyramidSchedule,
    cfg: &CoreConfig,
    cache: &KernelCache,
) -> Result<StageOutput> {
    if t == 0 || t > schedule.iterations() {
        return Err(Error::Validation(format!(
            "stage {t} outside 1..={}",
            schedule.iterations()
        )));
    }
    let dims = guide.dims();
    let want = stage_dims(s_full.dims(), schedule.factor(t));
    Error::check_dims(want, dims)?;
    let upsampled = resize_image_bilinear(b_in, dims.0, dims.1);
    if cfg.bilinear_only {
        return Ok(StageOutput {
            image: upsampled.clone(),
            upsampled,
            mask: Plane::filled(dims.0, dims.1, 0.0),
        });
    }
    let s_t = scaled_defocus(s_full, dims, schedule.factor(t));
    let refined = if cfg.disable_clip {
        render_core_cached(guide, &s_t, params.gamma, cache, cfg.r_hat, true)?
    } else {
        let clipped = SignedDefocusMap::new(s_t.map(|v| v.clamp(-cfg.r_hat, cfg.r_hat)));
        render_core_cached(guide, &clipped, params.gamma, cache, cfg.r_hat, false)?
    };
    let mask = keep_mask(&s_t, cfg);
    let mut out = upsampled.data().to_vec();
    for (i, px) in out.chunks_exact_mut(3).enumerate() {
        let m = mask.data()[i];
        if m == 0.0 {
            continue;
        }
        for (c, v) in px.iter_mut().enumerate() {
            *v = m * refined.data()[3 * i + c] + (1.0 - m) * *v;
        }
    }
    Ok(StageOutput {
        image: ImageBuffer::from_raw(dims.0, dims.1, out),
        upsampled,
        mask,
    })
}

/// Full pipeline: low-resolution render, then every upsampling step. The
/// error map is upsampled bilinearly.
pub fn render_neural(img: &ImageBuffer, s: &SignedDefocusMap, params: &RenderParams, cfg: &CoreConfig) -> Result<NeuralOutput> {
    render_neural_cached(img, s, params, cfg, &KernelCache::new(params.aperture))
}

pub(crate) fn render_neural_cached(
    img: &ImageBuffer,
    s: &SignedDefocusMap,
    params: &RenderParams,
    cfg: &CoreConfig,
    cache: &KernelCache,
) -> Result<NeuralOutput> {
    let low_res = arnet_cached(img, s, params, cfg, cache)?;
    let schedule = build_schedule(low_res.w0);
    let full = img.dims();
    let mut stages: Vec<StageOutput> = Vec::with_capacity(schedule.iterations());
    for t in 1..=schedule.iterations() {
        let dims = stage_dims(full, schedule.factor(t));
        let guide = resize_image_bilinear(img, dims.0, dims.1);
        let prev = stages.last().map_or(&low_res.image, |st| &st.image);
        let stage = iunet_cached(prev, &guide, s, params, t, &schedule, cfg, cache)?;
        stages.push(stage);
    }
    let image = stages.last().map_or_else(|| low_res.image.clone(), |st| st.image.clone());
    let error = ErrorMap::from_raw(resize_bilinear(&low_res.error, full.0, full.1));
    Ok(NeuralOutput {
        image,
        error,
        schedule,
        low_res,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::errormap::{analyze_disparity, ErrorMapConfig};
    use crate::imgcore::signed_defocus;
    use crate::neuralpipe::{render_core_layered, NrMode};
    use crate::oracle::generate_scene;
    use proptest::prelude::*;

    fn gradient(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| {
            [x as f64 / w as f64, y as f64 / h as f64, ((x * 7 + y * 3) % 11) as f64 / 10.0]
        })
    }

    fn brute_reach(s: &Plane, r_hat: f64) -> Plane {
        let (w, h) = s.dims();
        Plane::from_fn(w, h, |x, y| {
            let mut hit = false;
            for ys in 0..h {
                for xs in 0..w {
                    let r = s.get(xs, ys).abs();
                    if r <= r_hat {
                        continue;
                    }
                    let ax = ((x as f64 - xs as f64).abs() - 0.5).max(0.0);
                    let ay = ((y as f64 - ys as f64).abs() - 0.5).max(0.0);
                    hit |= ax * ax + ay * ay < r * r;
                }
            }
            if hit { 1.0 } else { 0.0 }
        })
    }

    #[test]
    fn zero_defocus_identity() {
        let img = gradient(37, 29);
        let s = SignedDefocusMap::new(Plane::filled(37, 29, 0.0));
        let out = render_neural(&img, &s, &RenderParams::new(20.0, 0.5, 2.2), &CoreConfig::default()).unwrap();
        assert_eq!(out.schedule.iterations(), 0);
        assert!(out.image.max_abs_diff(&img).unwrap() < 1e-3);
        assert!(out.error.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_blur_is_single_stage() {
        let scene = generate_scene(1, 48, 48);
        let params = RenderParams::new(8.0, scene.d_bg(), 2.2);
        let s = signed_defocus(&scene.disparity(), &params);
        let img = scene.composite();
        let out = render_neural(&img, &s, &params, &CoreConfig::default()).unwrap();
        assert_eq!(out.low_res.w0, 1.0);
        let core = render_core_layered(&img, &s, 2.2, &params.aperture, 10.0).unwrap();
        assert_eq!(out.image, core);
        let direct = analyze_disparity(&scene.disparity(), &params, &ErrorMapConfig::default()).unwrap();
        for (a, b) in out.error.data().iter().zip(direct.improved.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn odd_sizes_round_trip() {
        let img = gradient(53, 37);
        let s = SignedDefocusMap::new(Plane::from_fn(53, 37, |x, _| if x < 20 { -35.0 } else { 4.0 }));
        let params = RenderParams::new(50.0, 0.5, 2.2);
        for mode in NrMode::ALL {
            let out = render_neural(&img, &s, &params, &CoreConfig::for_mode(mode)).unwrap();
            assert_eq!(out.image.dims(), (53, 37));
            assert_eq!(out.error.dims(), (53, 37));
            assert_eq!(out.schedule.iterations(), 2);
        }
    }

    #[test]
    fn arnet_working_resolution() {
        let img = gradient(512, 512);
        let s = SignedDefocusMap::new(Plane::from_fn(512, 512, |x, _| if x < 256 { -20.0 } else { 5.0 }));
        let a = arnet_stage(&img, &s, &RenderParams::new(40.0, 0.5, 2.2), &CoreConfig::default()).unwrap();
        assert_eq!(a.w0, 2.0);
        assert_eq!(a.image.dims(), (256, 256));
        assert!(a.defocus.max_abs() <= 10.0);
        assert!(a.defocus.min_max().0 >= -10.0);
    }

    #[test]
    fn stage_without_clipping_is_full_rerender() {
        let img = gradient(40, 40);
        let s = SignedDefocusMap::new(Plane::from_fn(40, 40, |x, _| if x < 20 { -12.0 } else { 6.0 }));
        let params = RenderParams::new(30.0, 0.5, 2.2);
        let schedule = build_schedule(2.0);
        let cfg = CoreConfig::default();
        let b_in = gradient(20, 20);
        // Stage 1 of a w0 = 4 schedule runs at factor 2, where |S| <= 6.
        let schedule4 = build_schedule(4.0);
        let guide = resize_image_bilinear(&img, 20, 20);
        let st = iunet_stage(&gradient(10, 10), &guide, &s, &params, 1, &schedule4, &cfg).unwrap();
        assert!(st.mask.data().iter().all(|&m| m == 1.0));
        let s_t = scaled_defocus(&s, (20, 20), 2.0);
        let core = render_core_layered(&guide, &s_t, 2.2, &params.aperture, 10.0).unwrap();
        assert_eq!(st.image, core);

        // Everything beyond reach: output is the plain upsampling.
        let far = SignedDefocusMap::new(Plane::filled(40, 40, 25.0));
        let st = iunet_stage(&b_in, &img, &far, &params, 1, &schedule, &cfg).unwrap();
        assert!(st.mask.data().iter().all(|&m| m == 0.0));
        assert_eq!(st.image, st.upsampled);
    }

    #[test]
    fn bad_guide_size() {
        let s = SignedDefocusMap::new(Plane::filled(40, 40, 25.0));
        let r = iunet_stage(
            &gradient(10, 10),
            &gradient(30, 30),
            &s,
            &RenderParams::default(),
            1,
            &build_schedule(2.0),
            &CoreConfig::default(),
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn in_focus_plane_refined_every_stage() {
        let scene = generate_scene(8, 96, 96);
        let params = RenderParams::new(50.0, scene.d_bg(), 2.2);
        let s = signed_defocus(&scene.disparity(), &params);
        let out = render_neural(&scene.composite(), &s, &params, &CoreConfig::default()).unwrap();
        assert!(out.schedule.iterations() >= 2);
        let dist = scene.fg_mask().distance_to_edge();
        for (t, st) in out.stages.iter().enumerate() {
            let w = out.schedule.factor(t + 1);
            let (sw, sh) = st.mask.dims();
            for y in 0..sh {
                for x in 0..sw {
                    let (fx, fy) = (((x as f64 + 0.5) * w) as usize, ((y as f64 + 0.5) * w) as usize);
                    let (fx, fy) = (fx.min(95), fy.min(95));
                    // Background pixels beyond the foreground's blur reach.
                    let reach = params.blur_radius(scene.d_fg()) + 2.0 * w + 2.0;
                    if !scene.fg_mask().get(fx, fy) && dist[fy * 96 + fx] > reach {
                        assert_eq!(st.mask.get(x, y), 1.0, "stage {t} at ({x},{y})");
                    }
                }
            }
        }
    }

    #[test]
    fn in_focus_pixels_stay_sharp() {
        let scene = generate_scene(2, 96, 96);
        let params = RenderParams::new(40.0, scene.d_bg(), 2.2);
        let s = signed_defocus(&scene.disparity(), &params);
        let img = scene.composite();
        let out = render_neural(&img, &s, &params, &CoreConfig::default()).unwrap();
        let dist = scene.fg_mask().distance_to_edge();
        let mut checked = 0;
        for y in 0..96 {
            for x in 0..96 {
                let i = y * 96 + x;
                if !scene.fg_mask().get(x, y) && dist[i] > params.blur_radius(scene.d_fg()) + 2.0 * out.low_res.w0 + 2.0 {
                    let (a, b) = (out.image.pixel(x, y), img.pixel(x, y));
                    for c in 0..3 {
                        assert!((a[c] - b[c]).abs() < 1e-3, "({x},{y})");
                    }
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn reach_matches_brute_force(w in 1usize..24, h in 1usize..24, vals in proptest::collection::vec(-9.0f64..9.0, 576), r_hat in 0.0f64..7.5) {
            let p = Plane::from_fn(w, h, |x, y| vals[y * 24 + x]);
            prop_assert_eq!(clip_reach(&p, r_hat), brute_reach(&p, r_hat));
        }
    }
}

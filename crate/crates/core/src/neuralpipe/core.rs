//! Layered reference core: occlusion-aware compositing of per-depth scatters.

use std::collections::HashMap;

use crate::aperture::{quantize_radius, KernelCache};
use crate::error::{Error, Result};
use crate::imgcore::{gamma_decode, gamma_encode, ApertureSpec, ImageBuffer, SignedDefocusMap};
use crate::splat::{splat, SplatInput};

/// Renders `img` with one unit-wide defocus layer per integer radius in
/// `[-r_hat, r_hat]`, compositing from the most negative defocus (farthest)
/// forward.
///
/// Each pixel scatters with its own kernel into its layer; a layer's
/// accumulated kernel weight is its coverage. Coverage above one is
/// normalized away, so a fully covered pixel of a nearer layer hides
/// everything behind it. Before scattering, a layer is extrapolated into the
/// band of pixels that nearer layers hide, so a blurred near layer reveals a
/// plausible continuation of what lies behind it.
pub fn render_core_layered(
    img: &ImageBuffer,
    s: &SignedDefocusMap,
    gamma: f64,
    spec: &ApertureSpec,
    r_hat: f64,
) -> Result<ImageBuffer> {
    render_core_cached(img, s, gamma, &KernelCache::new(*spec), r_hat, false)
}

/// [`render_core_layered`] without the range check. Radii beyond the core's
/// reach are cut to its `(2·ceil(r_hat + 0.5) + 1)²` window and the color
/// weight outside that window is lost, the way a fixed receptive field
/// would lose it.
pub fn render_core_unchecked(
    img: &ImageBuffer,
    s: &SignedDefocusMap,
    gamma: f64,
    spec: &ApertureSpec,
    r_hat: f64,
) -> Result<ImageBuffer> {
    render_core_cached(img, s, gamma, &KernelCache::new(*spec), r_hat, true)
}

pub(crate) fn render_core_cached(
    img: &ImageBuffer,
    s: &SignedDefocusMap,
    gamma: f64,
    cache: &KernelCache,
    r_hat: f64,
    unchecked: bool,
) -> Result<ImageBuffer> {
    Error::check_dims(img.dims(), s.dims())?;
    let max = s.max_abs();
    if !unchecked && max > r_hat + 0.5 {
        return Err(Error::DefocusOutOfRange {
            value: max,
            limit: r_hat + 0.5,
        });
    }
    let (w, h) = img.dims();
    let n = w * h;
    let mut linear = gamma_decode(img, gamma).into_data();
    let top = r_hat.ceil() as i64;
    let layer_of: Vec<i64> = s.data().iter().map(|v| (v.round() as i64).clamp(-top, top)).collect();
    let mut radius: Vec<f64> = s.data().iter().map(|v| v.abs()).collect();
    let max_half = unchecked.then(|| (r_hat + 0.5).ceil() as usize);
    if let Some(half) = max_half {
        drop_truncated_energy(&mut linear, &radius, cache, half);
    }

    let mut present = vec![false; 2 * top as usize + 1];
    for &l in &layer_of {
        present[(l + top) as usize] = true;
    }
    // Largest radius among pixels at or in front of each layer.
    let mut reach_front = vec![0.0f64; present.len()];
    for (i, &l) in layer_of.iter().enumerate() {
        let k = (l + top) as usize;
        reach_front[k] = reach_front[k].max(radius[i]);
    }
    for k in (0..reach_front.len().saturating_sub(1)).rev() {
        reach_front[k] = reach_front[k].max(reach_front[k + 1]);
    }

    let mut acc_c = vec![0.0; n * 3];
    let mut acc_a = vec![0.0; n];
    let mut include = vec![false; n];
    let mut ext = Extension::new(w, h, &layer_of);
    for layer in -top..=top {
        let k = (layer + top) as usize;
        if !present[k] {
            continue;
        }
        for (inc, &l) in include.iter_mut().zip(&layer_of) {
            *inc = l == layer;
        }
        // Rays that miss a nearer layer see this one behind it, up to the
        // nearer blur plus this layer's own blur away from the edge.
        let nearer = reach_front.get(k + 1).copied().unwrap_or(0.0);
        let band = if present[k + 1..].iter().any(|&p| p) {
            ((nearer + layer.unsigned_abs() as f64).ceil() as usize + 2).min(2 * top as usize + 2)
        } else {
            0
        };
        ext.grow(w, h, &layer_of, layer, band, &mut linear, &mut radius, &mut include);
        let sums = splat(
            &SplatInput {
                width: w,
                height: h,
                color: &linear,
                radius: &radius,
                include: Some(&include),
                max_half,
            },
            cache,
        );
        ext.restore(&mut linear, &mut radius);
        for i in 0..n {
            let mut a = sums.weight[i];
            if a <= 0.0 {
                continue;
            }
            let mut c = [sums.color[3 * i], sums.color[3 * i + 1], sums.color[3 * i + 2]];
            if a > 1.0 {
                c.iter_mut().for_each(|v| *v /= a);
                a = 1.0;
            }
            let keep = 1.0 - a;
            for k in 0..3 {
                acc_c[3 * i + k] = acc_c[3 * i + k] * keep + c[k];
            }
            acc_a[i] = acc_a[i] * keep + a;
        }
    }
    for (px, &a) in acc_c.chunks_exact_mut(3).zip(&acc_a) {
        // Each pixel's own kernel has a positive center tap, so a > 0.
        px.iter_mut().for_each(|v| *v /= a);
    }
    Ok(gamma_encode(&ImageBuffer::from_raw(w, h, acc_c), gamma))
}

/// Scales each pixel's color by the share of its kernel inside the
/// truncation window, so the cut-off part is lost rather than renormalized.
fn drop_truncated_energy(linear: &mut [f64], radius: &[f64], cache: &KernelCache, half: usize) {
    let mut kept: HashMap<u32, f64> = HashMap::new();
    for (px, &r) in linear.chunks_exact_mut(3).zip(radius) {
        let key = quantize_radius(r);
        let g = *kept.entry(key).or_insert_with(|| {
            let k = cache.get_quantized(key);
            if k.half() <= half {
                return 1.0;
            }
            let h = half as isize;
            let mut sum = 0.0;
            for dy in -h..=h {
                for dx in -h..=h {
                    sum += k.weight(dx, dy);
                }
            }
            sum
        });
        if g < 1.0 {
            px.iter_mut().for_each(|v| *v *= g);
        }
    }
}

/// Extrapolates a layer into the pixels hidden behind nearer layers, ring by
/// ring, each new pixel taking the mean color and radius of its already
/// filled 8-neighbors. Only the far side of an edge grows: seeds are layer
/// pixels with no farther neighbor, so thin transition bands between two
/// depths never turn into sheets. Overwritten values are restored after use.
struct Extension {
    seed: Vec<bool>,
    queued: Vec<u32>,
    filled: Vec<u32>,
    generation: u32,
    saved: Vec<(usize, [f64; 3], f64)>,
}

fn neighbors(w: usize, h: usize, i: usize) -> impl Iterator<Item = usize> {
    let (x, y) = ((i % w) as isize, (i / w) as isize);
    (-1..=1isize)
        .flat_map(move |dy| (-1..=1isize).map(move |dx| (x + dx, y + dy)))
        .filter(move |&(xx, yy)| (xx, yy) != (x, y) && xx >= 0 && yy >= 0 && xx < w as isize && yy < h as isize)
        .map(move |(xx, yy)| yy as usize * w + xx as usize)
}

impl Extension {
    fn new(w: usize, h: usize, layer_of: &[i64]) -> Self {
        let n = w * h;
        let seed = (0..n)
            .map(|i| neighbors(w, h, i).all(|j| layer_of[j] >= layer_of[i]))
            .collect();
        Extension {
            seed,
            queued: vec![0; n],
            filled: vec![0; n],
            generation: 0,
            saved: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        w: usize,
        h: usize,
        layer_of: &[i64],
        layer: i64,
        band: usize,
        color: &mut [f64],
        radius: &mut [f64],
        include: &mut [bool],
    ) {
        self.saved.clear();
        if band == 0 {
            return;
        }
        self.generation += 1;
        let gen = self.generation;
        let hidden = |j: usize| layer_of[j] > layer;

        let mut frontier: Vec<usize> = Vec::new();
        for i in 0..w * h {
            if hidden(i) && neighbors(w, h, i).any(|j| layer_of[j] == layer && self.seed[j]) {
                self.queued[i] = gen;
                frontier.push(i);
            }
        }
        let mut next = Vec::new();
        let mut values = Vec::new();
        for _ in 0..band {
            if frontier.is_empty() {
                break;
            }
            values.clear();
            for &i in &frontier {
                let mut c = [0.0; 3];
                let mut r = 0.0;
                let mut count = 0.0;
                for j in neighbors(w, h, i) {
                    if self.filled[j] == gen || (layer_of[j] == layer && self.seed[j]) {
                        c[0] += color[3 * j];
                        c[1] += color[3 * j + 1];
                        c[2] += color[3 * j + 2];
                        r += radius[j];
                        count += 1.0;
                    }
                }
                values.push(([c[0] / count, c[1] / count, c[2] / count], r / count));
            }
            next.clear();
            for (&i, &(c, r)) in frontier.iter().zip(&values) {
                self.saved.push((i, [color[3 * i], color[3 * i + 1], color[3 * i + 2]], radius[i]));
                color[3 * i..3 * i + 3].copy_from_slice(&c);
                radius[i] = r;
                include[i] = true;
                self.filled[i] = gen;
            }
            for &i in &frontier {
                for j in neighbors(w, h, i) {
                    if hidden(j) && self.queued[j] != gen {
                        self.queued[j] = gen;
                        next.push(j);
                    }
                }
            }
            std::mem::swap(&mut frontier, &mut next);
        }
    }

    fn restore(&mut self, color: &mut [f64], radius: &mut [f64]) {
        for &(i, c, r) in &self.saved {
            color[3 * i..3 * i + 3].copy_from_slice(&c);
            radius[i] = r;
        }
        self.saved.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{render_gather_uniform, render_scatter};
    use crate::errormap::{analyze_disparity, color_difference_map, ErrorMapConfig};
    use crate::imgcore::{signed_defocus, Plane, RenderParams};
    use crate::oracle::{generate_scene, render_oracle};

    fn noise_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        ImageBuffer::from_fn(w, h, |_, _| {
            std::array::from_fn(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
        })
    }

    fn constant_s(w: usize, h: usize, v: f64) -> SignedDefocusMap {
        SignedDefocusMap::new(Plane::filled(w, h, v))
    }

    #[test]
    fn zero_defocus_is_identity() {
        let img = noise_image(20, 17, 1);
        let out = render_core_layered(&img, &constant_s(20, 17, 0.0), 2.2, &ApertureSpec::CIRCLE, 10.0).unwrap();
        assert!(out.max_abs_diff(&img).unwrap() < 1e-9);
    }

    #[test]
    fn constant_defocus_matches_gather() {
        let img = noise_image(40, 36, 2);
        for r in [-7.0, 1.5, 3.25, 10.0] {
            for spec in [ApertureSpec::CIRCLE, ApertureSpec::polygon(6, 0.2)] {
                let out = render_core_layered(&img, &constant_s(40, 36, r), 2.2, &spec, 10.0).unwrap();
                let want = render_gather_uniform(&img, f64::abs(r), 2.2, &spec);
                assert!(out.max_abs_diff(&want).unwrap() < 1e-3, "r = {r}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range() {
        let img = noise_image(8, 8, 3);
        let err = render_core_layered(&img, &constant_s(8, 8, 10.6), 1.0, &ApertureSpec::CIRCLE, 10.0);
        assert!(matches!(err, Err(Error::DefocusOutOfRange { .. })));
        assert!(render_core_layered(&img, &constant_s(8, 8, -10.5), 1.0, &ApertureSpec::CIRCLE, 10.0).is_ok());
        assert!(render_core_unchecked(&img, &constant_s(8, 8, 30.0), 1.0, &ApertureSpec::CIRCLE, 10.0).is_ok());
    }

    #[test]
    fn sharp_foreground_hides_blurred_background() {
        // Left half far and blurred, right half in focus: the in-focus half
        // must not pick up background color.
        let img = ImageBuffer::from_fn(40, 10, |x, _| if x < 20 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] });
        let s = SignedDefocusMap::new(Plane::from_fn(40, 10, |x, _| if x < 20 { -6.0 } else { 0.0 }));
        let out = render_core_layered(&img, &s, 2.2, &ApertureSpec::CIRCLE, 10.0).unwrap();
        for y in 0..10 {
            for x in 20..40 {
                assert!(out.pixel(x, y)[2].abs() < 1e-9);
            }
        }
        let scat = render_scatter(&img, &s, 2.2, &ApertureSpec::CIRCLE).unwrap();
        assert!(scat.pixel(20, 5)[2] > 0.1);
    }

    #[test]
    fn closer_to_oracle_than_scatter_near_edges() {
        let mut core_err = 0.0;
        let mut scat_err = 0.0;
        for seed in 0..4 {
            let scene = generate_scene(seed, 64, 64);
            let params = RenderParams::new(16.0, scene.d_bg(), 2.2);
            let d = scene.disparity();
            let s = signed_defocus(&d, &params);
            let img = scene.composite();
            let truth = render_oracle(&scene, &params, 256);
            let core = render_core_layered(&img, &s, 2.2, &params.aperture, 16.0).unwrap();
            let scat = render_scatter(&img, &s, 2.2, &params.aperture).unwrap();
            let e = analyze_disparity(&d, &params, &ErrorMapConfig::default()).unwrap().improved;
            let dc = color_difference_map(&core, &truth).unwrap();
            let ds = color_difference_map(&scat, &truth).unwrap();
            for i in 0..64 * 64 {
                if e.data()[i] > 0.01 {
                    core_err += dc.data()[i];
                    scat_err += ds.data()[i];
                }
            }
        }
        assert!(core_err < scat_err, "core {core_err} vs scatter {scat_err}");
    }
}

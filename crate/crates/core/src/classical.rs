//! The scattering renderer and a brute-force gather oracle.
//!
//! Scattering spreads every source pixel over its own aperture footprint and
//! normalizes each destination by the total weight it received. It has no
//! notion of occlusion, so colors bleed across depth edges; the error map
//! decides where that matters.

use crate::aperture::{build_kernel, KernelCache};
use crate::error::{Error, Result};
use crate::imgcore::{gamma_decode, gamma_encode, ApertureSpec, ImageBuffer, RenderParams, SignedDefocusMap};
use crate::par;
use crate::splat::{splat, SplatInput};

/// Blur radius for disparity `d`: `K * |d - d_f|`.
pub fn blur_radius(d: f64, params: &RenderParams) -> f64 {
    params.blur_radius(d)
}

/// Scatter-based rendering with gamma correction around the scatter pass.
///
/// Weight that would land outside the frame is dropped; the per-pixel
/// normalization divides it out.
pub fn render_scatter(
    img: &ImageBuffer,
    defocus: &SignedDefocusMap,
    gamma: f64,
    spec: &ApertureSpec,
) -> Result<ImageBuffer> {
    let cache = KernelCache::new(*spec);
    render_scatter_cached(img, defocus, gamma, &cache)
}

/// [`render_scatter`] with a caller-owned kernel cache.
pub fn render_scatter_cached(
    img: &ImageBuffer,
    defocus: &SignedDefocusMap,
    gamma: f64,
    cache: &KernelCache,
) -> Result<ImageBuffer> {
    Error::check_dims(img.dims(), defocus.dims())?;
    let linear = gamma_decode(img, gamma);
    let radius: Vec<f64> = defocus.data().iter().map(|s| s.abs()).collect();
    let sums = splat(
        &SplatInput {
            width: img.width(),
            height: img.height(),
            color: linear.data(),
            radius: &radius,
            include: None,
            max_half: None,
        },
        cache,
    );
    let mut out = sums.color;
    for (px, &wsum) in out.chunks_exact_mut(3).zip(&sums.weight) {
        // Every pixel scatters onto itself, so wsum > 0.
        for v in px.iter_mut() {
            *v /= wsum;
        }
    }
    Ok(gamma_encode(
        &ImageBuffer::from_raw(img.width(), img.height(), out),
        gamma,
    ))
}

/// Convolution of the linearized image with a single kernel, normalized by the
/// in-frame weight. Equal to [`render_scatter`] when every radius is `radius`.
pub fn render_gather_uniform(
    img: &ImageBuffer,
    radius: f64,
    gamma: f64,
    spec: &ApertureSpec,
) -> ImageBuffer {
    let kernel = build_kernel(radius, spec);
    let linear = gamma_decode(img, gamma);
    let (w, h) = img.dims();
    let half = kernel.half() as isize;
    let src = linear.data();
    let mut out = vec![0.0; w * h * 3];
    par::for_each_chunk_mut(&mut out, w * 3, |y, row| {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            let mut wsum = 0.0;
            for dy in -half..=half {
                let sy = y as isize - dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for dx in -half..=half {
                    let sx = x as isize - dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let k = kernel.weight(dx, dy);
                    if k == 0.0 {
                        continue;
                    }
                    let i = (sy as usize * w + sx as usize) * 3;
                    acc[0] += k * src[i];
                    acc[1] += k * src[i + 1];
                    acc[2] += k * src[i + 2];
                    wsum += k;
                }
            }
            for c in 0..3 {
                row[x * 3 + c] = acc[c] / wsum;
            }
        }
    });
    gamma_encode(&ImageBuffer::from_raw(w, h, out), gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Plane;
    use rand::{Rng, SeedableRng};

    fn random_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()])
    }

    fn constant_defocus(w: usize, h: usize, s: f64) -> SignedDefocusMap {
        SignedDefocusMap::new(Plane::filled(w, h, s))
    }

    #[test]
    fn zero_defocus_is_identity() {
        let img = random_image(12, 9, 1);
        let out = render_scatter(&img, &constant_defocus(12, 9, 0.0), 2.2, &ApertureSpec::CIRCLE).unwrap();
        assert!(out.max_abs_diff(&img).unwrap() < 1e-12);
    }

    #[test]
    fn constant_color_is_preserved() {
        let img = ImageBuffer::filled(20, 14, [0.2, 0.6, 0.9]);
        let s = SignedDefocusMap::new(Plane::from_fn(20, 14, |x, y| (x as f64 - 7.0) * 0.4 + y as f64 * 0.1));
        let out = render_scatter(&img, &s, 2.2, &ApertureSpec::polygon(6, 0.2)).unwrap();
        assert!(out.max_abs_diff(&img).unwrap() < 1e-5);
    }

    #[test]
    fn impulse_stamps_kernel() {
        let (w, h) = (21, 21);
        let mut img = ImageBuffer::filled(w, h, [0.0; 3]);
        img.set_pixel(10, 10, [1.0; 3]);
        let r = 4.0;
        let spec = ApertureSpec::polygon(5, 0.3);
        let out = render_scatter(&img, &constant_defocus(w, h, r), 1.0, &spec).unwrap();
        let k = build_kernel(r, &spec);
        for y in 0..h {
            for x in 0..w {
                let expected = k.weight(x as isize - 10, y as isize - 10);
                assert!((out.pixel(x, y)[0] - expected).abs() < 1e-12);
            }
        }
        let g = render_gather_uniform(&img, r, 1.0, &spec);
        assert!(g.max_abs_diff(&out).unwrap() < 1e-12);
    }

    #[test]
    fn gather_zero_radius_is_identity() {
        let img = random_image(8, 8, 4);
        assert!(render_gather_uniform(&img, 0.0, 2.2, &ApertureSpec::CIRCLE)
            .max_abs_diff(&img)
            .unwrap()
            < 1e-12);
    }

    #[test]
    fn scatter_matches_gather_on_constant_defocus() {
        for (seed, r, gamma) in [(1, 1.5, 1.0), (2, 4.0, 2.2), (3, 10.0, 2.2), (4, 0.3, 1.0)] {
            let img = random_image(33, 27, seed);
            let s = render_scatter(&img, &constant_defocus(33, 27, -r), gamma, &ApertureSpec::CIRCLE).unwrap();
            let g = render_gather_uniform(&img, r, gamma, &ApertureSpec::CIRCLE);
            assert!(s.max_abs_diff(&g).unwrap() < 1e-5, "r={r}");
        }
    }

    #[test]
    fn energy_conserved_at_unit_gamma() {
        let img = random_image(64, 64, 9);
        let out = render_scatter(&img, &constant_defocus(64, 64, 5.0), 1.0, &ApertureSpec::CIRCLE).unwrap();
        assert!((out.mean() - img.mean()).abs() / img.mean() < 0.02);
    }

    #[test]
    fn output_bounded_by_input_max() {
        let img = random_image(30, 30, 5);
        let s = SignedDefocusMap::new(Plane::from_fn(30, 30, |x, _| x as f64 / 3.0 - 5.0));
        let out = render_scatter(&img, &s, 2.2, &ApertureSpec::CIRCLE).unwrap();
        let max = img.max_value();
        assert!(out.data().iter().all(|&v| (0.0..=max + 1e-9).contains(&v)));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let img = random_image(4, 4, 0);
        let err = render_scatter(&img, &constant_defocus(4, 5, 1.0), 1.0, &ApertureSpec::CIRCLE).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn blur_radius_formula() {
        let p = RenderParams::new(10.0, 0.2, 1.0);
        assert!((blur_radius(0.5, &p) - 3.0).abs() < 1e-12);
    }
}

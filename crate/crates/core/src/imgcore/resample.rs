use super::types::{ImageBuffer, Plane};
use crate::par;

/// Source coordinate and blend weight for destination index `i`.
///
/// Pixel centers sit at half-integers, so an identical-size resize maps every
/// destination pixel exactly onto its source.
#[inline]
fn source_tap(i: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

fn resize_interleaved(
    data: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    new_width: usize,
    new_height: usize,
) -> Vec<f64> {
    let xtaps: Vec<_> = (0..new_width).map(|x| source_tap(x, width, new_width)).collect();
    let ytaps: Vec<_> = (0..new_height).map(|y| source_tap(y, height, new_height)).collect();

    let row_len = new_width * channels;
    let mut horiz = vec![0.0; row_len * height];
    par::for_each_chunk_mut(&mut horiz, row_len, |y, row| {
        let src = &data[y * width * channels..(y + 1) * width * channels];
        for (x, &(x0, x1, t)) in xtaps.iter().enumerate() {
            for c in 0..channels {
                let a = src[x0 * channels + c];
                let b = src[x1 * channels + c];
                row[x * channels + c] = a + t * (b - a);
            }
        }
    });

    let mut out = vec![0.0; row_len * new_height];
    par::for_each_chunk_mut(&mut out, row_len, |y, row| {
        let (y0, y1, t) = ytaps[y];
        let r0 = &horiz[y0 * row_len..(y0 + 1) * row_len];
        let r1 = &horiz[y1 * row_len..(y1 + 1) * row_len];
        for ((o, &a), &b) in row.iter_mut().zip(r0).zip(r1) {
            *o = a + t * (b - a);
        }
    });
    out
}

/// Edge-clamped bilinear resize of a scalar raster.
pub fn resize_bilinear(plane: &Plane, new_width: usize, new_height: usize) -> Plane {
    assert!(new_width > 0 && new_height > 0, "target dimensions must be positive");
    if plane.dims() == (new_width, new_height) {
        return plane.clone();
    }
    let data = resize_interleaved(
        plane.data(),
        plane.width(),
        plane.height(),
        1,
        new_width,
        new_height,
    );
    Plane::from_raw(new_width, new_height, data)
}

/// Edge-clamped bilinear resize of a color image.
pub fn resize_image_bilinear(img: &ImageBuffer, new_width: usize, new_height: usize) -> ImageBuffer {
    assert!(new_width > 0 && new_height > 0, "target dimensions must be positive");
    if img.dims() == (new_width, new_height) {
        return img.clone();
    }
    let data = resize_interleaved(img.data(), img.width(), img.height(), 3, new_width, new_height);
    ImageBuffer::from_raw(new_width, new_height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct evaluation of one bilinear sample, written independently of the
    /// separable implementation.
    fn brute_sample(p: &Plane, nw: usize, nh: usize, x: usize, y: usize) -> f64 {
        let sx = ((x as f64 + 0.5) * p.width() as f64 / nw as f64 - 0.5)
            .max(0.0)
            .min(p.width() as f64 - 1.0);
        let sy = ((y as f64 + 0.5) * p.height() as f64 / nh as f64 - 0.5)
            .max(0.0)
            .min(p.height() as f64 - 1.0);
        let mut acc = 0.0;
        for yy in 0..p.height() {
            for xx in 0..p.width() {
                let wx = (1.0 - (sx - xx as f64).abs()).max(0.0);
                let wy = (1.0 - (sy - yy as f64).abs()).max(0.0);
                acc += wx * wy * p.get(xx, yy);
            }
        }
        acc
    }

    #[test]
    fn upsample_two_pixels_matches_direct_formula() {
        let p = Plane::new(2, 1, vec![0.0, 1.0]).unwrap();
        let r = resize_bilinear(&p, 4, 1);
        // Half-pixel centers: source x = -0.25, 0.25, 0.75, 1.25 → clamp.
        let expected = [0.0, 0.25, 0.75, 1.0];
        for x in 0..4 {
            assert!((r.get(x, 0) - expected[x]).abs() < 1e-12);
            assert!((r.get(x, 0) - brute_sample(&p, 4, 1, x, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_and_constant() {
        let p = Plane::from_fn(5, 3, |x, y| (x * 7 + y) as f64 * 0.1);
        assert_eq!(resize_bilinear(&p, 5, 3), p);
        let c = Plane::filled(7, 5, 0.3);
        for (w, h) in [(1, 1), (3, 11), (14, 10)] {
            assert!(resize_bilinear(&c, w, h).data().iter().all(|&v| v == 0.3));
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in 1usize..6, h in 1usize..6, nw in 1usize..9, nh in 1usize..9, seed in 0u64..1000) {
            let p = Plane::from_fn(w, h, |x, y| ((x * 31 + y * 17) as u64 ^ seed) as f64 % 13.0 / 13.0);
            let r = resize_bilinear(&p, nw, nh);
            for y in 0..nh {
                for x in 0..nw {
                    prop_assert!((r.get(x, y) - brute_sample(&p, nw, nh, x, y)).abs() < 1e-12);
                }
            }
        }
    }
}

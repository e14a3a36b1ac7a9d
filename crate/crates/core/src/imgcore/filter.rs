use std::collections::VecDeque;

use super::types::{ImageBuffer, Plane};
use crate::par;

/// Separable Gaussian blur, kernel truncated at `3σ`, edge-clamped.
pub fn gaussian_blur(plane: &Plane, sigma: f64) -> Plane {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    let radius = (3.0 * sigma).ceil() as isize;
    if sigma == 0.0 || radius == 0 {
        return plane.clone();
    }
    let mut weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let (w, h) = plane.dims();
    let src = plane.data();
    let mut horiz = vec![0.0; w * h];
    par::for_each_chunk_mut(&mut horiz, w, |y, row| {
        let line = &src[y * w..(y + 1) * w];
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, wt) in weights.iter().enumerate() {
                let sx = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                acc += wt * line[sx];
            }
            *o = acc;
        }
    });
    let mut out = vec![0.0; w * h];
    par::for_each_chunk_mut(&mut out, w, |y, row| {
        for (k, wt) in weights.iter().enumerate() {
            let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
            let line = &horiz[sy * w..(sy + 1) * w];
            for (o, v) in row.iter_mut().zip(line) {
                *o += wt * v;
            }
        }
    });
    Plane::from_raw(w, h, out)
}

/// Running max (or min) over windows `[i - half, i + half]` clipped to the line.
fn sliding_extreme(line: &[f64], half: usize, take_max: bool, out: &mut [f64]) {
    let n = line.len();
    let better = |a: f64, b: f64| if take_max { a >= b } else { a <= b };
    let mut dq: VecDeque<usize> = VecDeque::with_capacity(2 * half + 1);
    let mut next = 0;
    for i in 0..n {
        let hi = (i + half).min(n - 1);
        while next <= hi {
            while let Some(&back) = dq.back() {
                if better(line[next], line[back]) {
                    dq.pop_back();
                } else {
                    break;
                }
            }
            dq.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(half);
        while let Some(&front) = dq.front() {
            if front < lo {
                dq.pop_front();
            } else {
                break;
            }
        }
        out[i] = line[*dq.front().expect("window is never empty")];
    }
}

fn square_extreme(plane: &Plane, k: usize, take_max: bool) -> Plane {
    assert!(k >= 1 && k % 2 == 1, "structuring element size must be odd and >= 1");
    if k == 1 {
        return plane.clone();
    }
    let half = k / 2;
    let (w, h) = plane.dims();
    let src = plane.data();
    let mut horiz = vec![0.0; w * h];
    par::for_each_chunk_mut(&mut horiz, w, |y, row| {
        sliding_extreme(&src[y * w..(y + 1) * w], half, take_max, row);
    });
    // Columns go through a transposed buffer so every pass walks contiguous memory.
    let mut transposed = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            transposed[x * h + y] = horiz[y * w + x];
        }
    }
    let mut vert = vec![0.0; w * h];
    par::for_each_chunk_mut(&mut vert, h, |x, col| {
        sliding_extreme(&transposed[x * h..(x + 1) * h], half, take_max, col);
    });
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        for y in 0..h {
            out[y * w + x] = vert[x * h + y];
        }
    }
    Plane::from_raw(w, h, out)
}

/// Max filter with a `k × k` square window.
pub fn dilate(plane: &Plane, k: usize) -> Plane {
    square_extreme(plane, k, true)
}

/// Min filter with a `k × k` square window.
pub fn erode(plane: &Plane, k: usize) -> Plane {
    square_extreme(plane, k, false)
}

/// Intensity to pseudo-irradiance: `x^γ`.
pub fn gamma_decode(img: &ImageBuffer, gamma: f64) -> ImageBuffer {
    if gamma == 1.0 {
        return img.map(|v| v.max(0.0));
    }
    img.map(|v| v.max(0.0).powf(gamma))
}

/// Pseudo-irradiance back to intensity: `x^(1/γ)`.
pub fn gamma_encode(img: &ImageBuffer, gamma: f64) -> ImageBuffer {
    if gamma == 1.0 {
        return img.map(|v| v.max(0.0));
    }
    let inv = 1.0 / gamma;
    img.map(|v| v.max(0.0).powf(inv))
}

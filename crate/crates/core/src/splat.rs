//! Banded scatter of per-pixel aperture kernels.
//!
//! Every source pixel stamps its kernel, pre-multiplied by its color, into
//! running accumulators. Kernel rows are stored as runs of equal weight, so a
//! stamp costs one difference-buffer update per run instead of one add per
//! texel; a prefix sum per output row recovers the totals.
//!
//! The frame is cut into fixed bands of destination rows. Each band owns a
//! private accumulator and visits sources in scanline order, which keeps the
//! result bit-identical for any thread count.

use std::collections::HashMap;
use std::sync::Arc;

use crate::aperture::{quantize_radius, ApertureKernel, KernelCache};
use crate::par;

const BAND_ROWS: usize = 16;
const EXCLUDED: u32 = u32::MAX;

/// Unnormalized scatter totals.
pub(crate) struct SplatSums {
    /// Interleaved RGB.
    pub color: Vec<f64>,
    pub weight: Vec<f64>,
}

pub(crate) struct SplatInput<'a> {
    pub width: usize,
    pub height: usize,
    /// Interleaved linear RGB.
    pub color: &'a [f64],
    /// Blur radius per pixel, in pixels.
    pub radius: &'a [f64],
    /// Only pixels with `include[i]` scatter; `None` means all.
    pub include: Option<&'a [bool]>,
    /// Truncates every kernel to a `(2n+1)²` window without renormalizing.
    pub max_half: Option<usize>,
}

pub(crate) fn splat(input: &SplatInput<'_>, cache: &KernelCache) -> SplatSums {
    let (w, h) = (input.width, input.height);
    let n = w * h;
    debug_assert_eq!(input.color.len(), n * 3);
    debug_assert_eq!(input.radius.len(), n);

    let included = |i: usize| input.include.is_none_or(|m| m[i]);

    // Per-pixel index into a compact kernel table.
    let keys: Vec<u32> = (0..n)
        .map(|i| {
            if included(i) {
                quantize_radius(input.radius[i])
            } else {
                EXCLUDED
            }
        })
        .collect();
    let mut unique: Vec<u32> = keys.iter().copied().filter(|&k| k != EXCLUDED).collect();
    unique.sort_unstable();
    unique.dedup();
    cache.prefetch(unique.iter().copied());
    let table: Vec<Arc<ApertureKernel>> = unique.iter().map(|&k| cache.get_quantized(k)).collect();
    let slot: HashMap<u32, u32> = unique
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, i as u32))
        .collect();
    let kidx: Vec<u32> = keys
        .iter()
        .map(|k| if *k == EXCLUDED { EXCLUDED } else { slot[k] })
        .collect();

    let cap = input.max_half.unwrap_or(usize::MAX);
    let row_reach: Vec<usize> = (0..h)
        .map(|y| {
            kidx[y * w..(y + 1) * w]
                .iter()
                .filter(|&&k| k != EXCLUDED)
                .map(|&k| table[k as usize].half().min(cap))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let any_source: Vec<bool> = (0..h)
        .map(|y| kidx[y * w..(y + 1) * w].iter().any(|&k| k != EXCLUDED))
        .collect();
    let reach = row_reach.iter().copied().max().unwrap_or(0);

    let mut packed = vec![0.0; n * 4];
    par::for_each_chunk_mut(&mut packed, BAND_ROWS * w * 4, |band, out| {
        let y0 = band * BAND_ROWS;
        let rows = out.len() / (w * 4);
        let y1 = y0 + rows;
        let stride = (w + 1) * 4;
        let mut diff = vec![0.0; rows * stride];

        let ys_lo = y0.saturating_sub(reach);
        let ys_hi = (y1 - 1 + reach).min(h - 1);
        for ys in ys_lo..=ys_hi {
            if !any_source[ys] {
                continue;
            }
            let r = row_reach[ys];
            if ys + r < y0 || ys > y1 - 1 + r {
                continue;
            }
            for x in 0..w {
                let i = ys * w + x;
                let k = kidx[i];
                if k == EXCLUDED {
                    continue;
                }
                let kernel = &table[k as usize];
                let kh = kernel.half().min(cap) as isize;
                let c = &input.color[i * 3..i * 3 + 3];
                let yd_lo = (ys as isize - kh).max(y0 as isize);
                let yd_hi = (ys as isize + kh).min(y1 as isize - 1);
                for yd in yd_lo..=yd_hi {
                    let dy = yd - ys as isize;
                    let base = (yd as usize - y0) * stride;
                    for run in kernel.row_runs(dy) {
                        let mut xa = x as isize + (run.x0 as isize).max(-kh);
                        let mut xb = x as isize + (run.x1 as isize).min(kh);
                        xa = xa.max(0);
                        xb = xb.min(w as isize - 1);
                        if xa > xb {
                            continue;
                        }
                        let a = base + xa as usize * 4;
                        diff[a] += run.w * c[0];
                        diff[a + 1] += run.w * c[1];
                        diff[a + 2] += run.w * c[2];
                        diff[a + 3] += run.w;
                        let b = base + (xb as usize + 1) * 4;
                        diff[b] -= run.w * c[0];
                        diff[b + 1] -= run.w * c[1];
                        diff[b + 2] -= run.w * c[2];
                        diff[b + 3] -= run.w;
                    }
                }
            }
        }

        for r in 0..rows {
            let src = &diff[r * stride..(r + 1) * stride];
            let dst = &mut out[r * w * 4..(r + 1) * w * 4];
            let mut acc = [0.0f64; 4];
            for x in 0..w {
                for ch in 0..4 {
                    acc[ch] += src[x * 4 + ch];
                    dst[x * 4 + ch] = acc[ch];
                }
            }
        }
    });

    let mut color = Vec::with_capacity(n * 3);
    let mut weight = Vec::with_capacity(n);
    for px in packed.chunks_exact(4) {
        color.extend_from_slice(&px[..3]);
        weight.push(px[3]);
    }
    SplatSums { color, weight }
}

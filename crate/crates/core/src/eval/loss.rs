use crate::error::{Error, Result};
use crate::errormap::ErrorMap;
use crate::imgcore::ImageBuffer;

pub const LAMBDA_BCE: f64 = 0.1;
/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logarithm.
pub const BCE_EPS: f64 = 1e-6;

/// Mean absolute difference.
pub fn l1(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Error::check_dims(a.dims(), b.dims())?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64)
}

/// L1 distance of forward-difference gradients: mean over horizontal
/// differences plus mean over vertical ones.
pub fn gradient_l1(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Error::check_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    let (pa, pb) = (a.data(), b.data());
    let at = |x: usize, y: usize, c: usize| (y * w + x) * 3 + c;
    let mut gx = 0.0;
    let mut gy = 0.0;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                if x + 1 < w {
                    let da = pa[at(x + 1, y, c)] - pa[at(x, y, c)];
                    let db = pb[at(x + 1, y, c)] - pb[at(x, y, c)];
                    gx += (da - db).abs();
                }
                if y + 1 < h {
                    let da = pa[at(x, y + 1, c)] - pa[at(x, y, c)];
                    let db = pb[at(x, y + 1, c)] - pb[at(x, y, c)];
                    gy += (da - db).abs();
                }
            }
        }
    }
    let nx = ((w - 1) * h * 3) as f64;
    let ny = (w * (h - 1) * 3) as f64;
    Ok(if nx > 0.0 { gx / nx } else { 0.0 } + if ny > 0.0 { gy / ny } else { 0.0 })
}

/// Mean binary cross-entropy of prediction `e` against target `e_star`.
pub fn bce(e: &ErrorMap, e_star: &ErrorMap) -> Result<f64> {
    Error::check_dims(e.dims(), e_star.dims())?;
    let n = e.data().len() as f64;
    Ok(e.data()
        .iter()
        .zip(e_star.data())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n)
}

fn image_terms(b: &ImageBuffer, b_star: &ImageBuffer) -> Result<f64> {
    Ok(l1(b, b_star)? + gradient_l1(b, b_star)?)
}

/// Low-resolution stage loss: image and gradient L1 for the final and the
/// intermediate result, plus `0.1 ·` BCE on the error map.
pub fn loss_arnet(
    b: &ImageBuffer,
    b_lr_nr: &ImageBuffer,
    e: &ErrorMap,
    b_star: &ImageBuffer,
    e_star: &ErrorMap,
) -> Result<f64> {
    Ok(image_terms(b, b_star)? + image_terms(b_lr_nr, b_star)? + LAMBDA_BCE * bce(e, e_star)?)
}

/// Upsampling stage loss: image and gradient L1 for the final and the
/// intermediate result.
pub fn loss_iunet(b: &ImageBuffer, b_nr: &ImageBuffer, b_star: &ImageBuffer) -> Result<f64> {
    Ok(image_terms(b, b_star)? + image_terms(b_nr, b_star)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Plane;

    #[test]
    fn constant_offset_costs_its_size() {
        let a = ImageBuffer::from_fn(6, 5, |x, y| [x as f64 * 0.1, y as f64 * 0.1, 0.3]);
        let b = a.map(|v| v + 0.1);
        assert!((l1(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        assert!(gradient_l1(&a, &b).unwrap() < 1e-12);
        assert!((loss_iunet(&b, &a, &a).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn equal_arguments_leave_entropy_floor() {
        let a = ImageBuffer::from_fn(4, 4, |x, y| [x as f64 / 4.0, y as f64 / 4.0, 0.5]);
        let eps = 1e-3;
        let e = ErrorMap::new(Plane::from_fn(4, 4, |x, _| if x % 2 == 0 { eps } else { 1.0 - eps })).unwrap();
        let floor = -(eps * eps.ln() + (1.0 - eps) * (1.0 - eps).ln());
        let loss = loss_arnet(&a, &a, &e, &a, &e).unwrap();
        assert!((loss - 0.1 * floor).abs() < 1e-12);
        assert_eq!(loss_iunet(&a, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn exact_targets_clamp() {
        let one = ErrorMap::constant(3, 3, 1.0);
        let zero = ErrorMap::constant(3, 3, 0.0);
        let v = bce(&zero, &one).unwrap();
        assert!((v + BCE_EPS.ln()).abs() < 1e-9);
        assert!(v.is_finite());
    }

    #[test]
    fn dims_checked() {
        let a = ImageBuffer::filled(3, 3, [0.0; 3]);
        let b = ImageBuffer::filled(3, 4, [0.0; 3]);
        assert!(loss_iunet(&a, &a, &b).is_err());
        assert!(bce(&ErrorMap::constant(2, 2, 0.5), &ErrorMap::constant(3, 2, 0.5)).is_err());
    }
}

use super::types::{DisparityMap, Plane, RenderParams, SignedDefocusMap};

/// Affinely maps the disparity range onto `[0, 1]`.
///
/// A constant map becomes all zeros: any constant disparity is equivalent to
/// zero once the focus disparity is shifted by the same amount.
pub fn normalize_disparity(d: &DisparityMap) -> DisparityMap {
    let (lo, hi) = d.min_max();
    let span = hi - lo;
    if span <= 0.0 {
        return DisparityMap::new(Plane::filled(d.width(), d.height(), 0.0));
    }
    DisparityMap::new(d.map(|v| ((v - lo) / span).clamp(0.0, 1.0)))
}

/// `S = K * (D - d_f)`, the blur radius with the occlusion order in its sign.
pub fn signed_defocus(d: &DisparityMap, params: &RenderParams) -> SignedDefocusMap {
    let k = params.blur;
    let df = params.focus;
    SignedDefocusMap::new(d.map(|v| k * (v - df)))
}

use serde::{Deserialize, Serialize};

use crate::imgcore::SignedDefocusMap;

/// Range-reduction factor: the smallest `w0 ≥ 1` with `max|S| / w0 ≤ r_hat`.
pub fn adaptive_factor(s: &SignedDefocusMap, r_hat: f64) -> f64 {
    assert!(r_hat > 0.0, "r_hat must be positive");
    let m = s.max_abs();
    let mut w0 = (m / r_hat).max(1.0);
    // Division can round the quotient just past r_hat.
    while m / w0 > r_hat {
        w0 = w0.next_up();
    }
    w0
}

/// Halving factors from `w0` down to full resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PyramidSchedule {
    w0: f64,
    factors: Vec<f64>,
}

impl PyramidSchedule {
    pub fn w0(&self) -> f64 {
        self.w0
    }

    /// Number of upsampling iterations `T`.
    pub fn iterations(&self) -> usize {
        self.factors.len()
    }

    /// `w(t)` for `t` in `0..=T`; `w(0) = w0`.
    pub fn factor(&self, t: usize) -> f64 {
        if t == 0 {
            self.w0
        } else {
            self.factors[t - 1]
        }
    }

    /// `w(1)..=w(T)`.
    pub fn factors(&self) -> &[f64] {
        &self.factors
    }
}

/// `T` is the least count with `w0 / 2^T ≤ 1`; the last factor is clamped to
/// exactly one.
pub fn build_schedule(w0: f64) -> PyramidSchedule {
    assert!(w0 >= 1.0 && w0.is_finite(), "w0 must be finite and >= 1");
    let mut factors = Vec::new();
    let mut w = w0;
    while w > 1.0 {
        w /= 2.0;
        factors.push(w.max(1.0));
    }
    PyramidSchedule { w0, factors }
}

/// Raster size at factor `w`: `ceil(full / w)`, exact at `w = 1`.
pub fn stage_dims(full: (usize, usize), w: f64) -> (usize, usize) {
    if w <= 1.0 {
        return full;
    }
    let shrink = |n: usize| ((n as f64 / w).ceil() as usize).clamp(1, n);
    (shrink(full.0), shrink(full.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Plane;
    use proptest::prelude::*;

    fn smap(values: Vec<f64>) -> SignedDefocusMap {
        let n = values.len();
        SignedDefocusMap::new(Plane::new(n, 1, values).unwrap())
    }

    #[test]
    fn factor_examples() {
        assert_eq!(adaptive_factor(&smap(vec![-40.0, 3.0]), 10.0), 4.0);
        assert_eq!(adaptive_factor(&smap(vec![5.0, -2.0]), 10.0), 1.0);
        assert_eq!(adaptive_factor(&smap(vec![10.0]), 10.0), 1.0);
        assert_eq!(adaptive_factor(&smap(vec![0.0]), 10.0), 1.0);
    }

    #[test]
    fn schedule_examples() {
        let s = build_schedule(4.0);
        assert_eq!(s.iterations(), 2);
        assert_eq!(s.factors(), &[2.0, 1.0]);
        assert_eq!(build_schedule(1.0).iterations(), 0);
        assert_eq!(build_schedule(5.0).factors(), &[2.5, 1.25, 1.0]);
        assert_eq!(build_schedule(8.3).iterations(), 4);
    }

    #[test]
    fn dims() {
        assert_eq!(stage_dims((512, 512), 2.0), (256, 256));
        assert_eq!(stage_dims((101, 33), 4.0), (26, 9));
        assert_eq!(stage_dims((101, 33), 1.0), (101, 33));
    }

    proptest! {
        #[test]
        fn schedule_invariants(w0 in 1.0f64..300.0) {
            let s = build_schedule(w0);
            let t = s.iterations();
            prop_assert_eq!(t, w0.log2().ceil() as usize);
            for i in 1..t {
                prop_assert_eq!(s.factor(i), s.factor(i - 1) / 2.0);
            }
            if t > 0 {
                prop_assert_eq!(s.factor(t), 1.0);
                prop_assert!(s.factor(t - 1) > 1.0);
            }
        }

        #[test]
        fn scaled_defocus_in_range(values in proptest::collection::vec(-200.0f64..200.0, 1..64), r_hat in 0.5f64..20.0) {
            let s = smap(values);
            let w0 = adaptive_factor(&s, r_hat);
            prop_assert!(w0 >= 1.0);
            prop_assert!(s.data().iter().all(|v| (v / w0).abs() <= r_hat));
        }
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{dilate, erode, gaussian_blur, DisparityMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Blur,
    Dilate,
    Erode,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 3] = [CorruptionKind::Blur, CorruptionKind::Dilate, CorruptionKind::Erode];

    pub fn as_str(self) -> &'static str {
        match self {
            CorruptionKind::Blur => "blur",
            CorruptionKind::Dilate => "dilate",
            CorruptionKind::Erode => "erode",
        }
    }

    /// Structuring-element size for morphology at `level`.
    pub fn kernel_size(level: u32) -> usize {
        2 * level as usize + 1
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown corruption {s:?}")))
    }
}

/// Degrades a disparity map: Gaussian blur with `σ = level`, or a square
/// max/min filter of size `2·level + 1`. Levels run from 1 to 5.
pub fn corrupt_disparity(d: &DisparityMap, kind: CorruptionKind, level: u32) -> Result<DisparityMap> {
    if !(1..=5).contains(&level) {
        return Err(Error::Validation(format!("corruption level must be 1..=5, got {level}")));
    }
    let k = CorruptionKind::kernel_size(level);
    Ok(DisparityMap::new(match kind {
        CorruptionKind::Blur => gaussian_blur(d, level as f64),
        CorruptionKind::Dilate => dilate(d, k),
        CorruptionKind::Erode => erode(d, k),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Plane;

    fn spot(w: usize, h: usize) -> DisparityMap {
        DisparityMap::new(Plane::from_fn(w, h, |x, y| if x == w / 2 && y == h / 2 { 1.0 } else { 0.0 }))
    }

    #[test]
    fn level_three_dilation_is_seven_wide() {
        let out = corrupt_disparity(&spot(21, 21), CorruptionKind::Dilate, 3).unwrap();
        let lit = out.data().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(lit, 49);
        assert_eq!(out.get(7, 7), 1.0);
        assert_eq!(out.get(6, 10), 0.0);
    }

    #[test]
    fn level_range() {
        let d = spot(9, 9);
        assert!(corrupt_disparity(&d, CorruptionKind::Blur, 0).is_err());
        assert!(corrupt_disparity(&d, CorruptionKind::Erode, 6).is_err());
        let one = corrupt_disparity(&d, CorruptionKind::Blur, 1).unwrap();
        assert_eq!(one.as_plane(), &gaussian_blur(&d, 1.0));
    }

    #[test]
    fn open_close_restores_interior() {
        let d = DisparityMap::new(Plane::from_fn(40, 40, |x, y| if (10..30).contains(&x) && (10..30).contains(&y) { 0.8 } else { 0.2 }));
        for level in 1..=5 {
            let k = CorruptionKind::kernel_size(level);
            let grown = corrupt_disparity(&d, CorruptionKind::Dilate, level).unwrap();
            let back = corrupt_disparity(&grown, CorruptionKind::Erode, level).unwrap();
            let shrunk = corrupt_disparity(&d, CorruptionKind::Erode, level).unwrap();
            for y in 0..40usize {
                for x in 0..40usize {
                    // Away from the edge band the round trip is exact.
                    let band = [x.abs_diff(10), x.abs_diff(29), y.abs_diff(10), y.abs_diff(29)]
                        .into_iter()
                        .min()
                        .unwrap();
                    if band > k {
                        assert_eq!(back.get(x, y), d.get(x, y));
                    }
                }
            }
            // Erosion removes the square's rim.
            assert_eq!(shrunk.get(10, 20), 0.2);
        }
    }

    #[test]
    fn names() {
        for k in CorruptionKind::ALL {
            assert_eq!(k.as_str().parse::<CorruptionKind>().unwrap(), k);
        }
    }
}

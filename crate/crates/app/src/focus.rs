//! Focus selection shared by the CLI and the service.

use std::fmt;
use std::str::FromStr;

use bokeh_core::fusion::{focus_from_point, DEFAULT_FOCUS_WINDOW};
use bokeh_core::{DisparityMap, Error, Result};

/// Either a focus disparity or an image point whose local median is used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Focus {
    Disparity(f64),
    Point { x: usize, y: usize },
}

impl Focus {
    /// The focus disparity on `d`, which must be at the coordinates of the point.
    pub fn resolve(self, d: &DisparityMap) -> Result<f64> {
        match self {
            Focus::Disparity(v) => Ok(v),
            Focus::Point { x, y } => focus_from_point(d, x, y, DEFAULT_FOCUS_WINDOW),
        }
    }
}

impl FromStr for Focus {
    type Err = Error;

    /// `"0.35"` or `"120,80"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("focus must be a disparity or \"x,y\", got {s:?}"));
        match s.split_once(',') {
            Some((x, y)) => {
                let x = x.trim().parse().map_err(|_| bad())?;
                let y = y.trim().parse().map_err(|_| bad())?;
                Ok(Focus::Point { x, y })
            }
            None => s.trim().parse().map(Focus::Disparity).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for Focus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Focus::Disparity(v) => write!(f, "{v}"),
            Focus::Point { x, y } => write!(f, "{x},{y}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bokeh_core::Plane;

    #[test]
    fn parses_both_forms() {
        assert_eq!("0.25".parse::<Focus>().unwrap(), Focus::Disparity(0.25));
        assert_eq!("120, 80".parse::<Focus>().unwrap(), Focus::Point { x: 120, y: 80 });
        assert!("a,b".parse::<Focus>().is_err());
        assert!("-3,4".parse::<Focus>().is_err());
        assert!("".parse::<Focus>().is_err());
    }

    #[test]
    fn point_takes_local_median() {
        let d = DisparityMap::new(Plane::from_fn(30, 30, |x, _| if x < 15 { 0.2 } else { 0.9 }));
        assert_eq!(Focus::Point { x: 3, y: 10 }.resolve(&d).unwrap(), 0.2);
        assert_eq!(Focus::Point { x: 27, y: 10 }.resolve(&d).unwrap(), 0.9);
        assert!(Focus::Point { x: 30, y: 0 }.resolve(&d).is_err());
    }
}

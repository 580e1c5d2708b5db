use serde::{Deserialize, Serialize};

use crate::data::ZERO_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    /// The singleton `{0}` issued when the classifier predicts no change.
    pub degenerate_zero: bool,
}

impl PredictionInterval {
    /// Builds `[lower, upper]`; crossed bounds collapse to their midpoint.
    pub fn new(lower: f64, upper: f64) -> Self {
        if lower <= upper {
            Self {
                lower,
                upper,
                degenerate_zero: false,
            }
        } else {
            let mid = 0.5 * (lower + upper);
            Self {
                lower: mid,
                upper: mid,
                degenerate_zero: false,
            }
        }
    }

    pub fn centered(center: f64, half_width: f64) -> Self {
        Self::new(center - half_width, center + half_width)
    }

    pub fn zero() -> Self {
        Self {
            lower: 0.0,
            upper: 0.0,
            degenerate_zero: true,
        }
    }

    pub fn everything() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn length(&self) -> f64 {
        if self.degenerate_zero {
            0.0
        } else {
            self.upper - self.lower
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        if self.degenerate_zero {
            y.abs() < ZERO_TOL
        } else {
            self.lower <= y && y <= self.upper
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        if self.degenerate_zero {
            *self
        } else {
            Self::new(self.lower + c, self.upper + c)
        }
    }

    pub fn contains_interval(&self, other: &PredictionInterval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_singleton_semantics() {
        let z = PredictionInterval::zero();
        assert!(z.contains(0.0));
        assert!(z.contains(1e-13));
        assert!(!z.contains(1e-6));
        assert_eq!(z.length(), 0.0);
    }

    #[test]
    fn crossed_bounds_collapse() {
        let p = PredictionInterval::new(1.0, 0.0);
        assert_eq!((p.lower, p.upper), (0.5, 0.5));
        let c = PredictionInterval::centered(0.15, 0.05);
        assert!((c.lower - 0.10).abs() < 1e-15 && (c.upper - 0.20).abs() < 1e-15);
    }
}

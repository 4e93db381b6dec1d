//! Monotone, 1-Lipschitz piecewise-linear link functions.
//!
//! A [`LinkFunction`] is stored as knots `x_1 < ... < x_k` with values
//! `g_1 <= ... <= g_k` and `0 <= g_{j+1} - g_j <= x_{j+1} - x_j`. Outside the
//! knot range it extends linearly with slopes in `[0, 1]`, so the whole
//! function stays in the class of non-decreasing 1-Lipschitz functions.
//!
//! [`lmr`] fits such a function to scattered samples by Lipschitz monotonic
//! regression.

mod lmr;

pub use lmr::{lmr, lmr_pairs, lmr_with_diagnostics, LmrDiagnostics};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SilvarError};

/// Relative slack allowed on the Lipschitz chain when validating a link that
/// was produced by floating-point arithmetic or read from disk.
const LIPSCHITZ_SLACK: f64 = 1e-9;

/// One `(abscissa, ordinate)` pair for the link regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionSample {
    pub abscissa: f64,
    pub ordinate: f64,
}

impl RegressionSample {
    pub fn new(abscissa: f64, ordinate: f64) -> Self {
        Self { abscissa, ordinate }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkRepr {
    knots: Vec<f64>,
    values: Vec<f64>,
    slope_left: f64,
    slope_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinkRepr", into = "LinkRepr")]
pub struct LinkFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    slope_left: f64,
    slope_right: f64,
    /// `cumulative[j]` is the integral of the link from `knots[0]` to `knots[j]`.
    cumulative: Vec<f64>,
    /// Primitive evaluated at zero, so that `antiderivative(0) == 0` exactly.
    primitive_at_zero: f64,
}

impl TryFrom<LinkRepr> for LinkFunction {
    type Error = SilvarError;

    fn try_from(r: LinkRepr) -> Result<Self> {
        LinkFunction::new(r.knots, r.values, r.slope_left, r.slope_right)
            .map_err(|e| match e {
                SilvarError::InvalidInput(msg) => SilvarError::Schema(msg),
                other => other,
            })
    }
}

impl From<LinkFunction> for LinkRepr {
    fn from(l: LinkFunction) -> Self {
        LinkRepr {
            knots: l.knots,
            values: l.values,
            slope_left: l.slope_left,
            slope_right: l.slope_right,
        }
    }
}

impl LinkFunction {
    /// Validates every invariant of the class and builds the integration tables.
    pub fn new(knots: Vec<f64>, values: Vec<f64>, slope_left: f64, slope_right: f64) -> Result<Self> {
        if knots.is_empty() {
            return Err(SilvarError::invalid("link needs at least one knot"));
        }
        if knots.len() != values.len() {
            return Err(SilvarError::invalid(format!(
                "link has {} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(SilvarError::invalid("link knots and values must be finite"));
        }
        for (name, s) in [("slope_left", slope_left), ("slope_right", slope_right)] {
            if !(0.0..=1.0).contains(&s) {
                return Err(SilvarError::invalid(format!("link {name} = {s} outside [0, 1]")));
            }
        }
        for j in 1..knots.len() {
            let dx = knots[j] - knots[j - 1];
            let dg = values[j] - values[j - 1];
            if dx <= 0.0 {
                return Err(SilvarError::invalid(format!(
                    "link knots not strictly increasing at index {j}"
                )));
            }
            if dg < 0.0 {
                return Err(SilvarError::invalid(format!("link not monotone at index {j}")));
            }
            let scale = 1.0f64.max(knots[j].abs()).max(knots[j - 1].abs());
            if dg > dx + LIPSCHITZ_SLACK * scale {
                return Err(SilvarError::invalid(format!(
                    "link not 1-Lipschitz at index {j}: rise {dg} over run {dx}"
                )));
            }
        }

        let mut cumulative = Vec::with_capacity(knots.len());
        cumulative.push(0.0);
        for j in 1..knots.len() {
            let seg = 0.5 * (knots[j] - knots[j - 1]) * (values[j] + values[j - 1]);
            cumulative.push(cumulative[j - 1] + seg);
        }
        let mut link = LinkFunction {
            knots,
            values,
            slope_left,
            slope_right,
            cumulative,
            primitive_at_zero: 0.0,
        };
        link.primitive_at_zero = link.primitive(0.0);
        Ok(link)
    }

    /// The constant function `g = c`.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![c], 0.0, 0.0)
    }

    /// Knots and values with boundary-segment extension slopes (zero for a single knot).
    pub fn with_boundary_extension(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let k = knots.len();
        let (left, right) = if k >= 2 {
            let sl = (values[1] - values[0]) / (knots[1] - knots[0]);
            let sr = (values[k - 1] - values[k - 2]) / (knots[k - 1] - knots[k - 2]);
            (sl.clamp(0.0, 1.0), sr.clamp(0.0, 1.0))
        } else {
            (0.0, 0.0)
        };
        Self::new(knots, values, left, right)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slope_left(&self) -> f64 {
        self.slope_left
    }

    pub fn slope_right(&self) -> f64 {
        self.slope_right
    }

    /// Piecewise-linear interpolation with linear extension outside the knots.
    pub fn evaluate(&self, theta: f64) -> f64 {
        let k = self.knots.len();
        let first = self.knots[0];
        let last = self.knots[k - 1];
        if theta <= first {
            return self.values[0] + self.slope_left * (theta - first);
        }
        if theta >= last {
            return self.values[k - 1] + self.slope_right * (theta - last);
        }
        // first < theta < last, so 1 <= j <= k-1
        let j = self.knots.partition_point(|&x| x <= theta);
        let (x0, x1) = (self.knots[j - 1], self.knots[j]);
        let (g0, g1) = (self.values[j - 1], self.values[j]);
        g0 + (g1 - g0) * (theta - x0) / (x1 - x0)
    }

    /// `G(theta) = integral of g from 0 to theta`, exact for the piecewise-linear link.
    pub fn antiderivative(&self, theta: f64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        self.primitive(theta) - self.primitive_at_zero
    }

    /// Integral of the link from the first knot to `theta` (negative to the left).
    fn primitive(&self, theta: f64) -> f64 {
        let k = self.knots.len();
        let first = self.knots[0];
        let g = self.evaluate(theta);
        if theta <= first {
            return -0.5 * (first - theta) * (self.values[0] + g);
        }
        let j = self.knots.partition_point(|&x| x <= theta) - 1;
        let j = j.min(k - 1);
        self.cumulative[j] + 0.5 * (theta - self.knots[j]) * (self.values[j] + g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_unit() -> LinkFunction {
        LinkFunction::with_boundary_extension(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn evaluate_interpolates() {
        assert_eq!(identity_unit().evaluate(0.5), 0.5);
    }

    #[test]
    fn evaluate_extends_with_boundary_slope() {
        assert_eq!(identity_unit().evaluate(2.0), 2.0);
        assert_eq!(identity_unit().evaluate(-3.0), -3.0);
    }

    #[test]
    fn single_knot_is_constant() {
        let l = LinkFunction::new(vec![0.0], vec![3.0], 0.0, 0.0).unwrap();
        assert_eq!(l.evaluate(-7.0), 3.0);
        assert_eq!(l.evaluate(11.0), 3.0);
    }

    #[test]
    fn antiderivative_examples() {
        assert!((identity_unit().antiderivative(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(identity_unit().antiderivative(0.0), 0.0);
        let c = LinkFunction::constant(1.75).unwrap();
        assert!((c.antiderivative(2.0) - 3.5).abs() < 1e-15);
        assert!((c.antiderivative(-2.0) + 3.5).abs() < 1e-15);
    }

    #[test]
    fn antiderivative_of_offset_knots() {
        // g(t) = t - 1 on [1, 3], slope 1 outside: G(theta) = theta^2/2 - theta.
        let l = LinkFunction::new(vec![1.0, 3.0], vec![0.0, 2.0], 1.0, 1.0).unwrap();
        for &t in &[-2.0, 0.3, 1.0, 2.2, 5.0] {
            let want = 0.5 * t * t - t;
            assert!((l.antiderivative(t) - want).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn rejects_invariant_violations() {
        assert!(LinkFunction::new(vec![], vec![], 0.0, 0.0).is_err());
        assert!(LinkFunction::new(vec![0.0, 1.0], vec![1.0, 0.0], 0.0, 0.0).is_err());
        assert!(LinkFunction::new(vec![0.0, 1.0], vec![0.0, 2.0], 0.0, 0.0).is_err());
        assert!(LinkFunction::new(vec![1.0, 1.0], vec![0.0, 0.0], 0.0, 0.0).is_err());
        assert!(LinkFunction::new(vec![0.0], vec![0.0], 1.5, 0.0).is_err());
        assert!(LinkFunction::new(vec![0.0], vec![f64::NAN], 0.0, 0.0).is_err());
    }

    #[test]
    fn json_shape() {
        let v = serde_json::to_value(identity_unit()).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"knots": [0.0, 1.0], "values": [0.0, 1.0], "slope_left": 1.0, "slope_right": 1.0})
        );
        let bad = serde_json::json!({"knots": [0.0, 1.0], "values": [1.0, 0.5], "slope_left": 0.0, "slope_right": 0.0});
        let err = serde_json::from_value::<LinkFunction>(bad).unwrap_err();
        assert!(err.to_string().contains("link not monotone"), "{err}");
    }
}

//! Central finite differences with one Richardson step.

use crate::error::{Error, Result};
use crate::model::ForceModel;
use crate::units::{Distance, ForceCurvature, ForceGradient};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepPolicy {
    /// h = max(10⁻³·d, 1 nm).
    #[default]
    Default,
    Fixed(Distance),
    /// h = fraction·d.
    Relative(f64),
}

impl StepPolicy {
    pub fn step(self, d: Distance) -> Distance {
        match self {
            StepPolicy::Default => Distance::from_si((1e-3 * d.si()).max(1e-9)),
            StepPolicy::Fixed(h) => h,
            StepPolicy::Relative(f) => d * f,
        }
    }
}

/// Derivative in SI units with a truncation-error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeEstimate {
    pub value: f64,
    pub error: f64,
    pub step: Distance,
    /// The error estimate exceeds 1% of the value.
    pub flagged: bool,
}

/// Central difference at steps h and 2h combined by Richardson
/// extrapolation. The model is evaluated on `[d − 2h, d + 2h]`.
pub fn derivative<M: ForceModel + ?Sized>(
    model: &M,
    d: Distance,
    order: Order,
    policy: StepPolicy,
) -> Result<DerivativeEstimate> {
    let h = policy.step(d);
    if !(h.si() > 0.0) || !h.is_finite() {
        return Err(Error::domain(format!("finite-difference step must be positive, got {} m", h.si())));
    }
    let eval = |x: Distance| model.force(x).map(|f| f.si()).map_err(|e| Error::at_point(x.um(), e));
    let (x, hs) = (d.si(), h.si());
    let f = |k: f64| eval(Distance::from_si(x + k * hs));
    let (m2, m1, p1, p2) = (f(-2.0)?, f(-1.0)?, f(1.0)?, f(2.0)?);
    let (fine, coarse) = match order {
        Order::First => ((p1 - m1) / (2.0 * hs), (p2 - m2) / (4.0 * hs)),
        Order::Second => {
            let c = f(0.0)?;
            ((p1 - 2.0 * c + m1) / (hs * hs), (p2 - 2.0 * c + m2) / (4.0 * hs * hs))
        }
    };
    let value = (4.0 * fine - coarse) / 3.0;
    let error = (value - fine).abs();
    Ok(DerivativeEstimate {
        value,
        error,
        step: h,
        flagged: error > 0.01 * value.abs(),
    })
}

/// F′(d), analytic when the model advertises it.
pub fn gradient_of<M: ForceModel + ?Sized>(model: &M, d: Distance, policy: StepPolicy) -> Result<ForceGradient> {
    match model.gradient(d) {
        Some(g) => g,
        None => derivative(model, d, Order::First, policy).map(|e| ForceGradient::from_si(e.value)),
    }
}

/// F″(d), analytic when the model advertises it.
pub fn curvature_of<M: ForceModel + ?Sized>(model: &M, d: Distance, policy: StepPolicy) -> Result<ForceCurvature> {
    match model.curvature(d) {
        Some(c) => c,
        None => derivative(model, d, Order::Second, policy).map(|e| ForceCurvature::from_si(e.value)),
    }
}

/// Plain five-point estimates of F‴ and F⁗ (SI units) at step `h`.
pub fn third_and_fourth<M: ForceModel + ?Sized>(model: &M, d: Distance, h: Distance) -> Result<(f64, f64)> {
    let (x, hs) = (d.si(), h.si());
    let f = |k: f64| {
        let at = Distance::from_si(x + k * hs);
        model.force(at).map(|v| v.si()).map_err(|e| Error::at_point(at.um(), e))
    };
    let (m2, m1, c, p1, p2) = (f(-2.0)?, f(-1.0)?, f(0.0)?, f(1.0)?, f(2.0)?);
    let third = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * hs.powi(3));
    let fourth = (p2 - 4.0 * p1 + 6.0 * c - 4.0 * m1 + m2) / hs.powi(4);
    Ok((third, fourth))
}

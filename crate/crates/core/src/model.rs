//! Force evaluators: anything that maps a separation to a force.
//!
//! A model may also advertise exact first and second derivatives; callers
//! that need a curvature use them when present and fall back to
//! [`crate::derivative`] otherwise.

use crate::error::{Error, Result};
use crate::numerics::spline::CubicSpline;
use crate::units::{Distance, Force, ForceCurvature, ForceGradient};

pub trait ForceModel: Send + Sync {
    fn force(&self, d: Distance) -> Result<Force>;

    fn gradient(&self, _d: Distance) -> Option<Result<ForceGradient>> {
        None
    }

    fn curvature(&self, _d: Distance) -> Option<Result<ForceCurvature>> {
        None
    }
}

impl<M: ForceModel + ?Sized> ForceModel for &M {
    fn force(&self, d: Distance) -> Result<Force> {
        (**self).force(d)
    }
    fn gradient(&self, d: Distance) -> Option<Result<ForceGradient>> {
        (**self).gradient(d)
    }
    fn curvature(&self, d: Distance) -> Option<Result<ForceCurvature>> {
        (**self).curvature(d)
    }
}

impl<M: ForceModel + ?Sized> ForceModel for Box<M> {
    fn force(&self, d: Distance) -> Result<Force> {
        (**self).force(d)
    }
    fn gradient(&self, d: Distance) -> Option<Result<ForceGradient>> {
        (**self).gradient(d)
    }
    fn curvature(&self, d: Distance) -> Option<Result<ForceCurvature>> {
        (**self).curvature(d)
    }
}

/// Wraps a closure; no analytic derivatives.
pub struct FnModel<F>(pub F);

impl<F> ForceModel for FnModel<F>
where
    F: Fn(Distance) -> Result<Force> + Send + Sync,
{
    fn force(&self, d: Distance) -> Result<Force> {
        (self.0)(d)
    }
}

/// F ≡ 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForce;

impl ForceModel for ZeroForce {
    fn force(&self, _d: Distance) -> Result<Force> {
        Ok(Force::ZERO)
    }
    fn gradient(&self, _d: Distance) -> Option<Result<ForceGradient>> {
        Some(Ok(ForceGradient::ZERO))
    }
    fn curvature(&self, _d: Distance) -> Option<Result<ForceCurvature>> {
        Some(Ok(ForceCurvature::ZERO))
    }
}

/// Pointwise sum of two models. Derivatives are analytic only when both
/// parts provide them.
#[derive(Debug, Clone)]
pub struct SumModel<A, B> {
    pub first: A,
    pub second: B,
}

impl<A: ForceModel, B: ForceModel> ForceModel for SumModel<A, B> {
    fn force(&self, d: Distance) -> Result<Force> {
        Ok(self.first.force(d)? + self.second.force(d)?)
    }

    fn gradient(&self, d: Distance) -> Option<Result<ForceGradient>> {
        let a = self.first.gradient(d)?;
        let b = self.second.gradient(d)?;
        Some(a.and_then(|a| b.map(|b| a + b)))
    }

    fn curvature(&self, d: Distance) -> Option<Result<ForceCurvature>> {
        let a = self.first.curvature(d)?;
        let b = self.second.curvature(d)?;
        Some(a.and_then(|a| b.map(|b| a + b)))
    }
}

/// Sampled force curve, d ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceCurve {
    pub samples: Vec<(Distance, Force)>,
}

impl ForceCurve {
    /// Evaluate `model` at each distance; parallel, order preserved.
    pub fn evaluate<M: ForceModel>(model: &M, distances: &[Distance]) -> Result<Self> {
        use rayon::prelude::*;
        let samples = distances
            .par_iter()
            .map(|&d| model.force(d).map(|f| (d, f)).map_err(|e| Error::at_point(d.um(), e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }

    /// Log-log natural cubic spline through the samples. All forces must be
    /// strictly positive.
    pub fn interpolant(&self) -> Result<CurveInterpolant> {
        if self.samples.iter().any(|(_, f)| !(f.si() > 0.0)) {
            return Err(Error::domain("log-log interpolation needs strictly positive forces"));
        }
        let x = self.samples.iter().map(|(d, _)| d.si().ln()).collect();
        let y = self.samples.iter().map(|(_, f)| f.si().ln()).collect();
        let spline = CubicSpline::natural(x, y)
            .ok_or_else(|| Error::domain("need at least three strictly increasing distances"))?;
        Ok(CurveInterpolant { spline })
    }
}

/// Log-spaced grid of `n` distances on `[lo, hi]`.
pub fn log_grid(lo: Distance, hi: Distance, n: usize) -> Vec<Distance> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.si().ln(), hi.si().ln());
    (0..n)
        .map(|i| Distance::from_si((a + (b - a) * i as f64 / (n - 1) as f64).exp()))
        .collect()
}

/// Linearly spaced grid of `n` distances on `[lo, hi]`.
pub fn linear_grid(lo: Distance, hi: Distance, n: usize) -> Vec<Distance> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 / (n - 1) as f64))
        .collect()
}

/// Spline through a sampled curve; used where a model must be evaluated far
/// more often than a Lifshitz sum can afford.
#[derive(Debug, Clone)]
pub struct CurveInterpolant {
    spline: CubicSpline,
}

impl CurveInterpolant {
    pub fn domain(&self) -> (Distance, Distance) {
        let (a, b) = self.spline.domain();
        (Distance::from_si(a.exp()), Distance::from_si(b.exp()))
    }

    fn eval(&self, d: Distance) -> Result<(f64, f64, f64)> {
        let t = d.si().ln();
        self.spline.eval_with_derivatives(t).ok_or_else(|| {
            let (lo, hi) = self.domain();
            Error::domain(format!(
                "d = {} um outside interpolation range [{}, {}] um",
                d.um(),
                lo.um(),
                hi.um()
            ))
        })
    }
}

impl ForceModel for CurveInterpolant {
    fn force(&self, d: Distance) -> Result<Force> {
        self.eval(d).map(|(v, _, _)| Force::from_si(v.exp()))
    }

    fn gradient(&self, d: Distance) -> Option<Result<ForceGradient>> {
        // F = e^v(t), t = ln d: dF/dd = F v' / d
        Some(self.eval(d).map(|(v, s, _)| ForceGradient::from_si(v.exp() * s / d.si())))
    }

    fn curvature(&self, d: Distance) -> Option<Result<ForceCurvature>> {
        // d²F/dd² = F (v'' + v'² − v') / d²
        Some(self.eval(d).map(|(v, s, c)| {
            ForceCurvature::from_si(v.exp() * (c + s * s - s) / (d.si() * d.si()))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolant_tracks_power_law() {
        let law = FnModel(|d: Distance| Ok(Force::from_udyne(33.76 / d.um().powi(3))));
        let grid = log_grid(Distance::from_um(0.5), Distance::from_um(2.0), 100);
        let interp = ForceCurve::evaluate(&law, &grid).unwrap().interpolant().unwrap();
        let d = Distance::from_um(1.0);
        let f = interp.force(d).unwrap().udyne();
        assert!((f / 33.76 - 1.0).abs() < 1e-12);
        let g = interp.gradient(d).unwrap().unwrap().udyne_per_um();
        assert!((g / (-3.0 * 33.76) - 1.0).abs() < 1e-9);
        let c = interp.curvature(d).unwrap().unwrap().udyne_per_um2();
        assert!((c / (12.0 * 33.76) - 1.0).abs() < 1e-9);
        assert!(interp.force(Distance::from_um(3.0)).is_err());
    }

    #[test]
    fn sum_is_additive() {
        let a = FnModel(|d: Distance| Ok(Force::from_udyne(1.0 / d.um())));
        let b = FnModel(|d: Distance| Ok(Force::from_udyne(d.um())));
        let s = SumModel { first: &a, second: &b };
        let d = Distance::from_um(0.7);
        let expected = a.force(d).unwrap() + b.force(d).unwrap();
        assert_eq!(s.force(d).unwrap().si().to_bits(), expected.si().to_bits());
        assert!(s.curvature(d).is_none());
    }
}

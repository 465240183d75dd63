//! Systematic corrections from fluctuations δ(t) of the plate separation.
//!
//! Averaging F(d + δ) over a stationary zero-mean δ gives, to second order,
//!
//! ```text
//! F_a(d) = F(d) + ½ F″(d) ⟨δ²⟩
//! ```
//!
//! and fluctuations inside the measurement band add F′δ_rms in quadrature
//! to the scatter of each point.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::derivative::{curvature_of, gradient_of, StepPolicy};
use crate::error::{Error, Result};
use crate::model::ForceModel;
use crate::table;
use crate::units::{Distance, Force, ForceGradient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FluctuationProfile {
    Constant {
        delta_rms: Distance,
    },
    /// amplitude·√(d/scale).
    SqrtLaw {
        scale: Distance,
        amplitude: Distance,
    },
    /// Linear interpolation in (d, δ); held constant beyond the end points.
    Table {
        points: Vec<(Distance, Distance)>,
    },
}

impl Default for FluctuationProfile {
    fn default() -> Self {
        FluctuationProfile::Constant {
            delta_rms: Distance::ZERO,
        }
    }
}

impl FluctuationProfile {
    pub fn constant(delta_rms: Distance) -> Self {
        FluctuationProfile::Constant { delta_rms }
    }

    pub fn sqrt_law() -> Self {
        FluctuationProfile::SqrtLaw {
            scale: Distance::from_um(3.0),
            amplitude: Distance::from_um(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |x: Distance, what: &str| {
            if x.si() >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{what} must be non-negative, got {} um", x.um())))
            }
        };
        match self {
            FluctuationProfile::Constant { delta_rms } => nonneg(*delta_rms, "delta_rms"),
            FluctuationProfile::SqrtLaw { scale, amplitude } => {
                if !(scale.si() > 0.0) || !scale.is_finite() {
                    return Err(Error::domain("sqrt-law scale must be positive"));
                }
                nonneg(*amplitude, "sqrt-law amplitude")
            }
            FluctuationProfile::Table { points } => {
                if points.is_empty() {
                    return Err(Error::Empty("fluctuation table".into()));
                }
                for (i, &(d, delta)) in points.iter().enumerate() {
                    nonneg(delta, "tabulated delta")?;
                    if i > 0 && !(d > points[i - 1].0) {
                        return Err(Error::domain("fluctuation table distances must be strictly increasing"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            FluctuationProfile::Constant { delta_rms } => format!("constant delta_rms={} um", delta_rms.um()),
            FluctuationProfile::SqrtLaw { scale, amplitude } => {
                format!("sqrt law {} um * sqrt(d / {} um)", amplitude.um(), scale.um())
            }
            FluctuationProfile::Table { points } => format!("table ({} points)", points.len()),
        }
    }
}

pub fn delta_profile_eval(profile: &FluctuationProfile, d: Distance) -> Result<Distance> {
    if !(d.si() > 0.0) {
        return Err(Error::domain(format!("d must be positive, got {} um", d.um())));
    }
    profile.validate()?;
    Ok(match profile {
        FluctuationProfile::Constant { delta_rms } => *delta_rms,
        FluctuationProfile::SqrtLaw { scale, amplitude } => *amplitude * (d / *scale).sqrt(),
        FluctuationProfile::Table { points } => {
            let i = points.partition_point(|(x, _)| *x <= d);
            if i == 0 {
                points[0].1
            } else if i == points.len() {
                points[i - 1].1
            } else {
                let ((x0, y0), (x1, y1)) = (points[i - 1], points[i]);
                y0 + (y1 - y0) * ((d - x0) / (x1 - x0))
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    /// Inside the measurement bandwidth: shifts the mean and adds scatter.
    InBand,
    /// Faster than the measurement: shifts the mean only.
    OutOfBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSource {
    pub label: String,
    pub delta_rms: Distance,
    pub band: Band,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FluctuationBudget {
    pub sources: Vec<FluctuationSource>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedDelta {
    pub in_band: Distance,
    pub out_of_band: Distance,
}

impl CombinedDelta {
    /// Both bands together; this is what shifts the mean.
    pub fn total(&self) -> Distance {
        Distance::from_si(self.in_band.si().hypot(self.out_of_band.si()))
    }
}

/// Quadrature sum per band, for uncorrelated sources.
pub fn combine_delta_sources(budget: &FluctuationBudget) -> Result<CombinedDelta> {
    let (mut inb, mut outb) = (0.0f64, 0.0f64);
    for s in &budget.sources {
        if !(s.delta_rms.si() >= 0.0) || !s.delta_rms.is_finite() {
            return Err(Error::domain(format!(
                "source '{}': delta_rms must be non-negative",
                s.label
            )));
        }
        let acc = match s.band {
            Band::InBand => &mut inb,
            Band::OutOfBand => &mut outb,
        };
        *acc = acc.hypot(s.delta_rms.si());
    }
    Ok(CombinedDelta {
        in_band: Distance::from_si(inb),
        out_of_band: Distance::from_si(outb),
    })
}

/// F(d) + ½F″(d)δ². Uses the model's analytic curvature when it has one.
pub fn apparent_force<M: ForceModel + ?Sized>(
    model: &M,
    d: Distance,
    delta_rms: Distance,
    policy: StepPolicy,
) -> Result<Force> {
    if !(delta_rms.si() >= 0.0) || !delta_rms.is_finite() {
        return Err(Error::domain(format!("delta_rms must be non-negative, got {} um", delta_rms.um())));
    }
    if !(d.si() > 0.0) {
        return Err(Error::domain(format!("d must be positive, got {} um", d.um())));
    }
    let f = model.force(d)?;
    if delta_rms.si() == 0.0 {
        return Ok(f);
    }
    let c = curvature_of(model, d, policy)?;
    Ok(f + Force::from_si(0.5 * c.si() * delta_rms.si() * delta_rms.si()))
}

/// √(σ_F² + (F′δ)²).
pub fn inflated_sigma(sigma_f: Force, f_prime: ForceGradient, delta_rms: Distance) -> Result<Force> {
    if !(sigma_f.si() >= 0.0) {
        return Err(Error::domain(format!("sigma must be non-negative, got {} udyne", sigma_f.udyne())));
    }
    if !(delta_rms.si() >= 0.0) {
        return Err(Error::domain(format!("delta_rms must be non-negative, got {} um", delta_rms.um())));
    }
    let excess = (f_prime * delta_rms).si();
    Ok(Force::from_si(sigma_f.si().hypot(excess)))
}

/// Noise at a longer lever arm, scaled linearly with length and then
/// attenuated by 1/√(mode frequency ratio). Without an explicit ratio the
/// pendulum law f ∝ 1/√L gives ratio = √(length/ref_length).
pub fn tilt_noise_estimate(
    ref_noise: Distance,
    ref_length: Distance,
    length: Distance,
    mode_freq_ratio: Option<f64>,
) -> Result<Distance> {
    if !(ref_noise.si() >= 0.0) || !ref_noise.is_finite() {
        return Err(Error::domain("reference noise must be non-negative"));
    }
    if !(ref_length.si() > 0.0) || !(length.si() > 0.0) {
        return Err(Error::domain("lengths must be positive"));
    }
    let scale = length / ref_length;
    let ratio = mode_freq_ratio.unwrap_or_else(|| scale.sqrt());
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::domain(format!("mode frequency ratio must be positive, got {ratio}")));
    }
    Ok(ref_noise * scale / ratio.sqrt())
}

/// A force model seen through distance fluctuations.
pub struct ApparentForce<M> {
    pub model: M,
    pub profile: FluctuationProfile,
    pub policy: StepPolicy,
}

impl<M: ForceModel> ApparentForce<M> {
    pub fn new(model: M, profile: FluctuationProfile) -> Result<Self> {
        profile.validate()?;
        Ok(Self {
            model,
            profile,
            policy: StepPolicy::Default,
        })
    }
}

impl<M: ForceModel> ForceModel for ApparentForce<M> {
    fn force(&self, d: Distance) -> Result<Force> {
        let delta = delta_profile_eval(&self.profile, d)?;
        apparent_force(&self.model, d, delta, self.policy)
    }
}

pub const CORRECTED_COLUMNS: [&str; 5] = [
    "d_um",
    "F_udyne",
    "F_apparent_udyne",
    "delta_rms_um",
    "sigma_inflation_udyne",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedPoint {
    pub d: Distance,
    pub force: Force,
    pub apparent: Force,
    pub delta_rms: Distance,
    /// |F′|·δ_in-band, the scatter added to a point with σ_F = 0.
    pub sigma_inflation: Force,
}

/// Corrected curve on `distances`. `total` sets the mean shift; `in_band`
/// sets the scatter inflation.
pub fn corrected_curve<M: ForceModel>(
    model: &M,
    distances: &[Distance],
    total: &FluctuationProfile,
    in_band: &FluctuationProfile,
) -> Result<Vec<CorrectedPoint>> {
    use rayon::prelude::*;
    total.validate()?;
    in_band.validate()?;
    distances
        .par_iter()
        .map(|&d| {
            let go = || -> Result<CorrectedPoint> {
                let delta = delta_profile_eval(total, d)?;
                let delta_in = delta_profile_eval(in_band, d)?;
                let force = model.force(d)?;
                let apparent = apparent_force(model, d, delta, StepPolicy::Default)?;
                let g = gradient_of(model, d, StepPolicy::Default)?;
                Ok(CorrectedPoint {
                    d,
                    force,
                    apparent,
                    delta_rms: delta,
                    sigma_inflation: inflated_sigma(Force::ZERO, g, delta_in)?,
                })
            };
            go().map_err(|e| Error::at_point(d.um(), e))
        })
        .collect()
}

pub fn write_corrected_curve<W: Write>(w: &mut W, points: &[CorrectedPoint], comments: &[String]) -> Result<()> {
    table::write_header(w, comments, &CORRECTED_COLUMNS)?;
    for p in points {
        table::write_row(
            w,
            &[
                p.d.um(),
                p.force.udyne(),
                p.apparent.udyne(),
                p.delta_rms.um(),
                p.sigma_inflation.udyne(),
            ],
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::ElectrostaticBackground;
    use crate::units::ForceCurvature;
    use proptest::prelude::*;

    fn um(x: f64) -> Distance {
        Distance::from_um(x)
    }

    /// F = x² μdyne with x in μm, F″ = 2 μdyne/μm².
    struct Square;

    impl ForceModel for Square {
        fn force(&self, d: Distance) -> Result<Force> {
            Ok(Force::from_udyne(d.um() * d.um()))
        }
        fn curvature(&self, _d: Distance) -> Option<Result<ForceCurvature>> {
            Some(Ok(ForceCurvature::from_udyne_per_um2(2.0)))
        }
    }

    #[test]
    fn apparent_force_examples() {
        let bg = ElectrostaticBackground::from_udyne_um(215.0, Distance::ZERO).unwrap();
        let d = um(1.0);
        assert_eq!(
            apparent_force(&bg, d, Distance::ZERO, StepPolicy::Default).unwrap(),
            bg.force(d).unwrap()
        );
        let shift = apparent_force(&bg, d, um(0.1), StepPolicy::Default).unwrap() - bg.force(d).unwrap();
        assert!((shift.udyne() - 2.15).abs() < 1e-12);
        let sq = apparent_force(&Square, um(2.5), um(0.3), StepPolicy::Default).unwrap() - Square.force(um(2.5)).unwrap();
        assert!((sq.udyne() - 0.09).abs() < 1e-14);
        assert!(apparent_force(&bg, d, um(-0.1), StepPolicy::Default).is_err());
    }

    #[test]
    fn finite_difference_path_matches_analytic() {
        let bg = ElectrostaticBackground::from_udyne_um(215.0, Distance::ZERO).unwrap();
        let plain = crate::model::FnModel(|d: Distance| bg.force(d));
        let a = apparent_force(&plain, um(1.0), um(0.1), StepPolicy::Default).unwrap();
        assert!((a.udyne() - 217.15).abs() < 1e-6);
    }

    #[test]
    fn inflated_sigma_examples() {
        let g = ForceGradient::from_udyne_per_um(1000.0);
        assert!((inflated_sigma(Force::ZERO, g, um(0.004)).unwrap().udyne() - 4.0).abs() < 1e-12);
        let s = Force::from_udyne(3.0);
        assert_eq!(inflated_sigma(s, g, Distance::ZERO).unwrap(), s);
        let r = inflated_sigma(s, ForceGradient::from_udyne_per_um(4.0), um(1.0)).unwrap();
        assert!((r.udyne() - 5.0).abs() < 1e-12);
    }

    fn budget(items: &[(f64, Band)]) -> FluctuationBudget {
        FluctuationBudget {
            sources: items
                .iter()
                .enumerate()
                .map(|(i, &(d, band))| FluctuationSource {
                    label: format!("s{i}"),
                    delta_rms: um(d),
                    band,
                })
                .collect(),
        }
    }

    #[test]
    fn combine_examples() {
        use Band::*;
        let c = combine_delta_sources(&budget(&[(2.0, InBand), (0.0, InBand)])).unwrap();
        assert!((c.in_band.um() - 2.0).abs() < 1e-12);
        let c = combine_delta_sources(&budget(&[(3.0, InBand), (4.0, InBand)])).unwrap();
        assert!((c.in_band.um() - 5.0).abs() < 1e-12);
        let c = combine_delta_sources(&budget(&[(1.0, OutOfBand), (2.0, OutOfBand), (2.0, OutOfBand)])).unwrap();
        assert!((c.out_of_band.um() - 3.0).abs() < 1e-12);
        assert_eq!(c.in_band, Distance::ZERO);
        let c = combine_delta_sources(&budget(&[(3.0, InBand), (4.0, OutOfBand)])).unwrap();
        assert!((c.total().um() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn profile_examples() {
        let p = FluctuationProfile::sqrt_law();
        assert!((delta_profile_eval(&p, um(3.0)).unwrap().um() - 1.0).abs() < 1e-12);
        assert!((delta_profile_eval(&p, um(0.75)).unwrap().um() - 0.5).abs() < 1e-12);
        let c = FluctuationProfile::constant(Distance::from_nm(100.0));
        assert!((delta_profile_eval(&c, um(4.2)).unwrap().um() - 0.1).abs() < 1e-15);
        assert!(delta_profile_eval(&c, Distance::ZERO).is_err());
        let t = FluctuationProfile::Table {
            points: vec![(um(1.0), um(0.1)), (um(3.0), um(0.3))],
        };
        assert!((delta_profile_eval(&t, um(2.0)).unwrap().um() - 0.2).abs() < 1e-12);
        assert_eq!(delta_profile_eval(&t, um(0.5)).unwrap(), um(0.1));
        assert_eq!(delta_profile_eval(&t, um(9.0)).unwrap(), um(0.3));
    }

    #[test]
    fn tilt_examples() {
        let r = tilt_noise_estimate(Distance::from_nm(20.0), Distance::from_cm(4.0), Distance::from_cm(80.0), Some(6.3)).unwrap();
        assert!((r.nm() - 400.0 / 6.3f64.sqrt()).abs() < 1e-9);
        assert!((r.nm() - 160.0).abs() < 1.0);
        let r = tilt_noise_estimate(Distance::from_nm(20.0), Distance::from_cm(4.0), Distance::from_cm(80.0), None).unwrap();
        assert!((r.nm() - 400.0 * 20f64.powf(-0.25)).abs() < 1e-9);
        let same = tilt_noise_estimate(Distance::from_nm(20.0), Distance::from_cm(4.0), Distance::from_cm(4.0), Some(3.0)).unwrap();
        assert!((same.nm() - 20.0 / 3f64.sqrt()).abs() < 1e-9);
        let same = tilt_noise_estimate(Distance::from_nm(20.0), Distance::from_cm(4.0), Distance::from_cm(4.0), None).unwrap();
        assert!((same.nm() - 20.0).abs() < 1e-12);
        assert!(tilt_noise_estimate(Distance::from_nm(20.0), Distance::ZERO, Distance::from_cm(4.0), None).is_err());
    }

    proptest! {
        #[test]
        fn quadratic_is_exact(d in 0.1f64..10.0, delta in 0.0f64..5.0) {
            let shift = apparent_force(&Square, um(d), um(delta), StepPolicy::Default).unwrap() - Square.force(um(d)).unwrap();
            prop_assert!((shift.udyne() - delta * delta).abs() <= 1e-12 * (d * d + delta * delta));
        }

        #[test]
        fn inverse_law_offset_is_constant(d in 0.6f64..6.0) {
            let bg = ElectrostaticBackground::from_udyne_um(215.0, Distance::ZERO).unwrap();
            let a = apparent_force(&bg, um(d), um(0.1), StepPolicy::Default).unwrap();
            let offset = (a - bg.force(um(d)).unwrap()).udyne() * d.powi(3);
            prop_assert!((offset / 2.15 - 1.0).abs() < 1e-6);
        }

        #[test]
        fn inflated_sigma_monotone(s in 0.0f64..10.0, g in 0.0f64..1e3, delta in 0.0f64..1.0, ds in 0.0f64..1.0, dg in 0.0f64..10.0, dd in 0.0f64..0.1) {
            let base = inflated_sigma(Force::from_udyne(s), ForceGradient::from_udyne_per_um(g), um(delta)).unwrap();
            prop_assert!(base >= Force::from_udyne(s));
            for (s2, g2, d2) in [(s + ds, g, delta), (s, g + dg, delta), (s, g, delta + dd)] {
                let more = inflated_sigma(Force::from_udyne(s2), ForceGradient::from_udyne_per_um(g2), um(d2)).unwrap();
                prop_assert!(more >= base);
            }
        }

        #[test]
        fn combine_is_symmetric_and_bounded(mut xs in prop::collection::vec(0.0f64..5.0, 1..8), seed in any::<u64>()) {
            let b = budget(&xs.iter().map(|&x| (x, Band::InBand)).collect::<Vec<_>>());
            let r = combine_delta_sources(&b).unwrap().in_band.um();
            let max = xs.iter().cloned().fold(0.0, f64::max);
            let sum: f64 = xs.iter().sum();
            prop_assert!(r >= max * (1.0 - 1e-12) && r <= sum * (1.0 + 1e-12));
            let k = (seed as usize) % xs.len();
            xs.rotate_left(k);
            xs.reverse();
            let b2 = budget(&xs.iter().map(|&x| (x, Band::InBand)).collect::<Vec<_>>());
            let r2 = combine_delta_sources(&b2).unwrap().in_band.um();
            prop_assert!((r - r2).abs() <= 1e-12 * r.max(1e-300));
        }
    }
}

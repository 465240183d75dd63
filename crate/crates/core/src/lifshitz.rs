//! Finite-temperature Lifshitz interaction between two identical metallic
//! half-spaces, and its sphere–plate form in the proximity force
//! approximation (PFA).
//!
//! The free energy per unit area is
//!
//! ```text
//! 𝓕(d) = (k_B T / 2π) Σ′ₙ ∫₀^∞ k dk Σ_{TM,TE} ln(1 − r² e^{−2κₙ d})
//! ```
//!
//! with κₙ = √(k² + ξₙ²/c²), ξₙ = 2πn k_B T/ħ and the n = 0 term weighted ½.
//! Derivatives with respect to d are taken under the integral at fixed k,
//! then every integral is rewritten in y = 2κd:
//!
//! ```text
//! ∂ᵐ𝓕/∂dᵐ = (1/2π) (1 / 4d^{2+m}) · k_B T Σ′ₙ ∫_{yₙ}^∞ y^{1+m} Σ_p Kₘ(r_p² e^{−y}) dy
//! ```
//!
//! with K₀ = ln(1−u), K₁ = u/(1−u), K₂ = −u/(1−u)², K₃ = u(1+u)/(1−u)³.
//! The pressure is ∂𝓕/∂d and the PFA force is −2πR·𝓕, so force, gradient
//! and curvature all come out of the same sum without finite differences.
//!
//! At ξ = 0 the TM coefficient is 1 for every metal; the TE coefficient is
//! 0 for Drude (and tabulated data with a Drude tail), the finite plasma
//! value for Plasma, and 1 for the perfect conductor.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ForceCurve, ForceModel};
use crate::numerics::quad::{self, GaussLaguerre};
use crate::permittivity::{eps_imag_axis, MaterialModel};
use crate::table;
use crate::units::{
    Distance, Energy, ExperimentGeometry, Force, ForceCurvature, ForceGradient, Pressure, Temperature, CONSTANTS,
};

pub const ZETA_3: f64 = 1.202_056_903_159_594_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifshitzSettings {
    pub matsubara_rel_tol: f64,
    pub matsubara_max_terms: usize,
    pub quad_rel_tol: f64,
    /// Replace the Matsubara sum by the continuous T = 0 frequency integral.
    pub zero_temperature_mode: bool,
}

impl Default for LifshitzSettings {
    fn default() -> Self {
        Self {
            matsubara_rel_tol: 1e-9,
            matsubara_max_terms: 5000,
            quad_rel_tol: 1e-8,
            zero_temperature_mode: false,
        }
    }
}

impl LifshitzSettings {
    pub fn zero_temperature() -> Self {
        Self {
            zero_temperature_mode: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tol) in [
            ("matsubara_rel_tol", self.matsubara_rel_tol),
            ("quad_rel_tol", self.quad_rel_tol),
        ] {
            if !(tol > 0.0 && tol <= 1e-2) {
                return Err(Error::domain(format!("{name} must lie in (0, 1e-2], got {tol}")));
            }
        }
        if self.matsubara_max_terms < 1 {
            return Err(Error::domain("matsubara_max_terms must be at least 1"));
        }
        Ok(())
    }

    /// Short stable hash of the settings, for file headers.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("settings serialize");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_owned()
    }
}

/// Reflection coefficient at one imaginary frequency, as a function of y.
#[derive(Debug, Clone, Copy)]
enum Reflection {
    Unit,
    Zero,
    /// TE: r = (y − Y)/(y + Y) = −a/(y + Y)², Y = √(y² + a).
    Te { a: f64 },
    /// TM: r = (εy − Y)/(εy + Y).
    Tm { eps: f64, a: f64 },
}

impl Reflection {
    /// (r², 1 − r²), the second computed without cancellation.
    #[inline]
    fn eval(self, y: f64) -> (f64, f64) {
        match self {
            Reflection::Unit => (1.0, 0.0),
            Reflection::Zero => (0.0, 1.0),
            Reflection::Te { a } => {
                let big = (y * y + a).sqrt();
                let s = y + big;
                let r = a / (s * s);
                (r * r, 4.0 * y * big / (s * s))
            }
            Reflection::Tm { eps, a } => {
                let big = (y * y + a).sqrt();
                let s = eps * y + big;
                let r = (eps * y - big) / s;
                (r * r, 4.0 * eps * y * big / (s * s))
            }
        }
    }
}

#[inline]
fn kernel(order: usize, y: f64, (r2, one_minus_r2): (f64, f64)) -> f64 {
    if r2 == 0.0 {
        return 0.0;
    }
    let u = r2 * (-y).exp();
    // 1 − r² e^{−y} = (1 − r²) − r² (e^{−y} − 1), both terms non-negative.
    let omu = one_minus_r2 - r2 * (-y).exp_m1();
    match order {
        0 => {
            if u < 0.5 {
                (-u).ln_1p()
            } else {
                omu.ln()
            }
        }
        1 => u / omu,
        2 => -u / (omu * omu),
        3 => u * (1.0 + u) / (omu * omu * omu),
        _ => unreachable!("derivative order above 3"),
    }
}

/// Reflection pair (TM, TE) at the frequency whose scaled lower limit is
/// `y_n = 2 d ξ / c`. `xi = 0` selects the static limit.
fn reflections(model: &MaterialModel, xi: f64, y_n: f64, d: Distance) -> Result<(Reflection, Reflection)> {
    if matches!(model, MaterialModel::PerfectConductor) {
        return Ok((Reflection::Unit, Reflection::Unit));
    }
    if xi == 0.0 {
        let te = match model {
            MaterialModel::Plasma { omega_p } => {
                let wp = omega_p.si() / CONSTANTS.hbar; // rad/s
                let scaled = 2.0 * d.si() * wp / CONSTANTS.c;
                Reflection::Te { a: scaled * scaled }
            }
            _ => Reflection::Zero,
        };
        return Ok((Reflection::Unit, te));
    }
    let eps = eps_imag_axis(model, Energy::from_si(CONSTANTS.hbar * xi))?;
    let a = (eps - 1.0) * y_n * y_n;
    Ok((Reflection::Tm { eps, a }, Reflection::Te { a }))
}

/// ∫_{y_n}^∞ y^{1+m} Σ_p K_m dy at one frequency.
fn frequency_integral(
    model: &MaterialModel,
    xi: f64,
    d: Distance,
    order: usize,
    settings: &LifshitzSettings,
) -> Result<f64> {
    let y_n = 2.0 * d.si() * xi / CONSTANTS.c;
    let (tm, te) = reflections(model, xi, y_n, d)?;
    let power = (1 + order) as i32;
    let integrand = |y: f64| y.powi(power) * (kernel(order, y, tm.eval(y)) + kernel(order, y, te.eval(y)));
    let r = quad::integrate_exp_tail(integrand, y_n, settings.quad_rel_tol);
    if !r.converged {
        log::warn!(
            "k-integral not converged at xi={xi:e} rad/s, d={} um (error {:e})",
            d.um(),
            r.error
        );
    }
    Ok(r.value)
}

/// k_B T Σ′ₙ ∫ y^{1+m} Σ_p Kₘ dy in joules, or its T = 0 counterpart
/// (ħc/4πd) ∫₀^∞ dy₀ ∫_{y₀}^∞ ….
fn frequency_sum(
    model: &MaterialModel,
    d: Distance,
    temperature: Temperature,
    order: usize,
    settings: &LifshitzSettings,
) -> Result<f64> {
    settings.validate()?;
    if !(d.si() > 0.0) || !d.is_finite() {
        return Err(Error::domain(format!("separation must be positive, got {} um", d.um())));
    }
    let t = temperature.si();
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("temperature must be non-negative, got {t} K")));
    }
    if settings.zero_temperature_mode || t == 0.0 {
        let rule = GaussLaguerre::standard();
        let mut acc = 0.0;
        for (&y0, &w) in rule.nodes.iter().zip(&rule.weights) {
            let xi = CONSTANTS.c * y0 / (2.0 * d.si());
            acc += w * y0.exp() * frequency_integral(model, xi, d, order, settings)?;
        }
        return Ok(CONSTANTS.hbar_c() / (4.0 * PI * d.si()) * acc);
    }
    let kt = CONSTANTS.k_b * t;
    let xi_1 = 2.0 * PI * kt / CONSTANTS.hbar;
    let mut sum = 0.5 * frequency_integral(model, 0.0, d, order, settings)?;
    for n in 1..settings.matsubara_max_terms {
        let term = frequency_integral(model, n as f64 * xi_1, d, order, settings)?;
        sum += term;
        if term.abs() <= settings.matsubara_rel_tol * sum.abs() {
            return Ok(kt * sum);
        }
    }
    Err(Error::MatsubaraNotConverged {
        partial_sum: kt * sum,
        terms: settings.matsubara_max_terms,
    })
}

/// Attractive parallel-plate pressure (positive).
pub fn plate_pressure(
    model: &MaterialModel,
    d: Distance,
    temperature: Temperature,
    settings: &LifshitzSettings,
) -> Result<Pressure> {
    let s1 = frequency_sum(model, d, temperature, 1, settings)?;
    Ok(Pressure::from_si(s1 / (8.0 * PI * d.si().powi(3))))
}

/// Magnitude of the parallel-plate interaction free energy per unit area (J/m²).
pub fn plate_energy(
    model: &MaterialModel,
    d: Distance,
    temperature: Temperature,
    settings: &LifshitzSettings,
) -> Result<f64> {
    let s0 = frequency_sum(model, d, temperature, 0, settings)?;
    Ok(-s0 / (8.0 * PI * d.si().powi(2)))
}

fn check_pfa(d: Distance, geometry: &ExperimentGeometry) -> Result<()> {
    let ratio = d / geometry.sphere_radius;
    if ratio >= 0.1 {
        return Err(Error::PfaInvalid { ratio });
    }
    if ratio > 1e-3 {
        log::warn!("d/R = {ratio:e} exceeds 1e-3; PFA corrections may matter");
    }
    Ok(())
}

/// m-th separation derivative of the PFA sphere–plate force, SI units.
fn sphere_plate_derivative(
    model: &MaterialModel,
    d: Distance,
    geometry: &ExperimentGeometry,
    settings: &LifshitzSettings,
    order: usize,
) -> Result<f64> {
    check_pfa(d, geometry)?;
    let s = frequency_sum(model, d, geometry.temperature, order, settings)?;
    Ok(-geometry.sphere_radius.si() * s / (4.0 * d.si().powi(2 + order as i32)))
}

/// PFA force F = 2πR·E(d), attractive positive.
pub fn sphere_plate_force(
    model: &MaterialModel,
    d: Distance,
    geometry: &ExperimentGeometry,
    settings: &LifshitzSettings,
) -> Result<Force> {
    sphere_plate_derivative(model, d, geometry, settings, 0).map(Force::from_si)
}

/// Sphere–plate Casimir force as a [`ForceModel`] with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePlate {
    pub model: MaterialModel,
    pub geometry: ExperimentGeometry,
    pub settings: LifshitzSettings,
}

impl SpherePlate {
    pub fn new(model: MaterialModel, geometry: ExperimentGeometry, settings: LifshitzSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            model,
            geometry,
            settings,
        })
    }

    /// Third derivative F‴ in N/m³.
    pub fn third_derivative(&self, d: Distance) -> Result<f64> {
        sphere_plate_derivative(&self.model, d, &self.geometry, &self.settings, 3)
    }

    /// Provenance lines for exported curves.
    pub fn header_lines(&self) -> Vec<String> {
        vec![
            format!("model: {}", self.model.describe()),
            format!("T: {} K", self.geometry.temperature.si()),
            format!("R: {} cm", self.geometry.sphere_radius.cm()),
            format!(
                "lifshitz: matsubara_rel_tol={} max_terms={} quad_rel_tol={} zero_temperature_mode={} settings_hash={}",
                self.settings.matsubara_rel_tol,
                self.settings.matsubara_max_terms,
                self.settings.quad_rel_tol,
                self.settings.zero_temperature_mode,
                self.settings.fingerprint()
            ),
        ]
    }
}

impl ForceModel for SpherePlate {
    fn force(&self, d: Distance) -> Result<Force> {
        sphere_plate_force(&self.model, d, &self.geometry, &self.settings)
    }

    fn gradient(&self, d: Distance) -> Option<Result<ForceGradient>> {
        Some(sphere_plate_derivative(&self.model, d, &self.geometry, &self.settings, 1).map(ForceGradient::from_si))
    }

    fn curvature(&self, d: Distance) -> Option<Result<ForceCurvature>> {
        Some(sphere_plate_derivative(&self.model, d, &self.geometry, &self.settings, 2).map(ForceCurvature::from_si))
    }
}

/// Ideal-metal pressure at T = 0: π²ħc / (240 d⁴).
pub fn ideal_pressure_t0(d: Distance) -> Pressure {
    Pressure::from_si(PI * PI * CONSTANTS.hbar_c() / (240.0 * d.si().powi(4)))
}

/// Ideal-metal PFA sphere–plate force at T = 0: π³ħcR / (360 d³).
pub fn ideal_sphere_force_t0(d: Distance, radius: Distance) -> Force {
    Force::from_si(PI.powi(3) * CONSTANTS.hbar_c() * radius.si() / (360.0 * d.si().powi(3)))
}

/// Ideal-metal pressure in the classical (d ≫ ħc/k_BT) limit, both
/// polarizations at n = 0: ζ(3) k_B T / (4π d³).
pub fn ideal_pressure_classical(d: Distance, temperature: Temperature) -> Pressure {
    Pressure::from_si(ZETA_3 * CONSTANTS.k_b * temperature.si() / (4.0 * PI * d.si().powi(3)))
}

pub const FORCE_CURVE_COLUMNS: [&str; 2] = ["d_um", "F_udyne"];

pub fn write_force_curve<W: Write>(w: &mut W, curve: &ForceCurve, comments: &[String]) -> Result<()> {
    table::write_header(w, comments, &FORCE_CURVE_COLUMNS)?;
    for (d, f) in &curve.samples {
        table::write_row(w, &[d.um(), f.udyne()])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn um(x: f64) -> Distance {
        Distance::from_um(x)
    }

    #[test]
    fn reflection_identities() {
        for (y, a, eps) in [(0.3, 2.0, 5.0), (4.0, 1e-3, 1.01), (1e-3, 50.0, 1e4)] {
            for refl in [Reflection::Te { a }, Reflection::Tm { eps, a }] {
                let (r2, omr2) = refl.eval(y);
                assert!((r2 + omr2 - 1.0).abs() < 1e-14, "{refl:?} y={y}");
                assert!((0.0..=1.0).contains(&r2));
            }
        }
    }

    #[test]
    fn ideal_pressure_zero_temperature() {
        let p = plate_pressure(
            &MaterialModel::PerfectConductor,
            um(1.0),
            Temperature::kelvin(300.0),
            &LifshitzSettings::zero_temperature(),
        )
        .unwrap();
        assert!((p.si() / 1.300e-3 - 1.0).abs() < 1e-3, "{}", p.si());
        assert!((p / ideal_pressure_t0(um(1.0)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ideal_sphere_force_zero_temperature() {
        let g = ExperimentGeometry::default();
        let s = LifshitzSettings::zero_temperature();
        let f = sphere_plate_force(&MaterialModel::PerfectConductor, um(1.0), &g, &s).unwrap();
        assert!((f.udyne() - 33.76).abs() < 0.01, "{}", f.udyne());
        assert!((f / ideal_sphere_force_t0(um(1.0), g.sphere_radius) - 1.0).abs() < 1e-6);
        // PFA is linear in R.
        let g2 = ExperimentGeometry {
            sphere_radius: g.sphere_radius * 2.0,
            ..g
        };
        let f2 = sphere_plate_force(&MaterialModel::PerfectConductor, um(1.0), &g2, &s).unwrap();
        assert!((f2 / f - 2.0).abs() < 1e-12);
        // F d³ constant.
        for d in [0.5, 0.8, 2.0, 3.0] {
            let fd = sphere_plate_force(&MaterialModel::PerfectConductor, um(d), &g, &s).unwrap();
            assert!((fd.udyne() * d.powi(3) / f.udyne() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn classical_limits() {
        let t = Temperature::kelvin(300.0);
        let s = LifshitzSettings::default();
        let d = um(50.0);
        let classical = ideal_pressure_classical(d, t);
        let perfect = plate_pressure(&MaterialModel::PerfectConductor, d, t, &s).unwrap();
        let plasma = plate_pressure(&MaterialModel::gold_plasma(), d, t, &s).unwrap();
        let drude = plate_pressure(&MaterialModel::gold_drude(), d, t, &s).unwrap();
        assert!((perfect / classical - 1.0).abs() < 1e-6, "{}", perfect / classical);
        assert!((plasma / classical - 1.0).abs() < 1e-2, "{}", plasma / classical);
        assert!((drude / plasma - 0.5).abs() < 1e-2, "{}", drude / plasma);
        // Drude keeps only the TM half: ζ(3) k_B T / (8π d³).
        let half = ZETA_3 * CONSTANTS.k_b * 300.0 / (8.0 * PI * d.si().powi(3));
        assert!((drude.si() / half - 1.0).abs() < 1e-2);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        use crate::derivative::{derivative, Order, StepPolicy};
        let sp = SpherePlate::new(MaterialModel::gold_drude(), ExperimentGeometry::default(), LifshitzSettings::default())
            .unwrap();
        for d in [0.6, 1.0, 3.0] {
            let d = um(d);
            let g = sp.gradient(d).unwrap().unwrap().si();
            let c = sp.curvature(d).unwrap().unwrap().si();
            let fd1 = derivative(&sp, d, Order::First, StepPolicy::Relative(0.01)).unwrap();
            let fd2 = derivative(&sp, d, Order::Second, StepPolicy::Relative(0.01)).unwrap();
            assert!((fd1.value / g - 1.0).abs() < 1e-5, "{} vs {g}", fd1.value);
            assert!((fd2.value / c - 1.0).abs() < 1e-4, "{} vs {c}", fd2.value);
            let third = sp.third_derivative(d).unwrap();
            let (fd3, _) = crate::derivative::third_and_fourth(&sp, d, d * 0.01).unwrap();
            assert!((fd3 / third - 1.0).abs() < 3e-3, "{fd3} vs {third}");
        }
    }

    #[test]
    fn ordering_and_monotonicity() {
        let g = ExperimentGeometry::default();
        let s = LifshitzSettings::default();
        let models = [
            MaterialModel::gold_drude(),
            MaterialModel::gold_plasma(),
            MaterialModel::PerfectConductor,
        ];
        let grid = crate::model::log_grid(um(0.3), um(10.0), 25);
        let mut prev = [f64::INFINITY; 3];
        for d in grid {
            let f: Vec<f64> = models
                .iter()
                .map(|m| sphere_plate_force(m, d, &g, &s).unwrap().si())
                .collect();
            for i in 0..3 {
                assert!(f[i] < prev[i], "not decreasing at {} um", d.um());
                prev[i] = f[i];
            }
            if d.um() >= 0.5 {
                assert!(f[0] <= f[1] && f[1] <= f[2], "ordering at {} um: {f:?}", d.um());
            }
        }
    }

    #[test]
    fn errors() {
        let g = ExperimentGeometry::default();
        let s = LifshitzSettings::default();
        let m = MaterialModel::gold_drude();
        assert!(matches!(
            sphere_plate_force(&m, Distance::from_cm(2.0), &g, &s),
            Err(Error::PfaInvalid { .. })
        ));
        assert!(sphere_plate_force(&m, Distance::ZERO, &g, &s).is_err());
        let tight = LifshitzSettings {
            matsubara_max_terms: 2,
            ..s
        };
        let err = plate_pressure(&m, um(0.5), Temperature::kelvin(300.0), &tight).unwrap_err();
        match err {
            Error::MatsubaraNotConverged { partial_sum, terms } => {
                assert_eq!(terms, 2);
                assert!(partial_sum > 0.0);
            }
            other => panic!("{other:?}"),
        }
        let bad = LifshitzSettings {
            quad_rel_tol: 0.5,
            ..s
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fingerprint_is_stable() {
        let a = LifshitzSettings::default().fingerprint();
        assert_eq!(a, LifshitzSettings::default().fingerprint());
        assert_ne!(a, LifshitzSettings::zero_temperature().fingerprint());
    }
}

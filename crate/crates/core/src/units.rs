//! Physical quantities, unit conversion, constants and experiment geometry.
//!
//! Every quantity is stored in SI. The micro-CGS units used on the command
//! line and in data files (μm, μdyne, μdyne/μm, ...) are only ever reached
//! through [`convert`] or the `from_*`/`as_*` helpers built on it.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Force,
    ForceGradient,
    /// N/m², shared by force curvature and pressure.
    ForcePerArea,
    ForceLength,
    ForceVolume,
    Energy,
    Temperature,
    Angle,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Length => "length",
            Dimension::Force => "force",
            Dimension::ForceGradient => "force/length",
            Dimension::ForcePerArea => "force/area",
            Dimension::ForceLength => "force*length",
            Dimension::ForceVolume => "force*volume",
            Dimension::Energy => "energy",
            Dimension::Temperature => "temperature",
            Dimension::Angle => "angle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Meter,
    Centimeter,
    Micrometer,
    Nanometer,
    Newton,
    Dyne,
    Microdyne,
    NewtonPerMeter,
    MicrodynePerMicrometer,
    NewtonPerSquareMeter,
    Pascal,
    MicrodynePerSquareMicrometer,
    NewtonMeter,
    MicrodyneMicrometer,
    NewtonCubicMeter,
    MicrodyneCubicMicrometer,
    Joule,
    ElectronVolt,
    Kelvin,
    Radian,
    Microradian,
}

impl Unit {
    pub const ALL: [Unit; 21] = [
        Unit::Meter,
        Unit::Centimeter,
        Unit::Micrometer,
        Unit::Nanometer,
        Unit::Newton,
        Unit::Dyne,
        Unit::Microdyne,
        Unit::NewtonPerMeter,
        Unit::MicrodynePerMicrometer,
        Unit::NewtonPerSquareMeter,
        Unit::Pascal,
        Unit::MicrodynePerSquareMicrometer,
        Unit::NewtonMeter,
        Unit::MicrodyneMicrometer,
        Unit::NewtonCubicMeter,
        Unit::MicrodyneCubicMicrometer,
        Unit::Joule,
        Unit::ElectronVolt,
        Unit::Kelvin,
        Unit::Radian,
        Unit::Microradian,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Meter => "m",
            Unit::Centimeter => "cm",
            Unit::Micrometer => "um",
            Unit::Nanometer => "nm",
            Unit::Newton => "N",
            Unit::Dyne => "dyn",
            Unit::Microdyne => "udyne",
            Unit::NewtonPerMeter => "N/m",
            Unit::MicrodynePerMicrometer => "udyne/um",
            Unit::NewtonPerSquareMeter => "N/m^2",
            Unit::Pascal => "Pa",
            Unit::MicrodynePerSquareMicrometer => "udyne/um^2",
            Unit::NewtonMeter => "N*m",
            Unit::MicrodyneMicrometer => "udyne*um",
            Unit::NewtonCubicMeter => "N*m^3",
            Unit::MicrodyneCubicMicrometer => "udyne*um^3",
            Unit::Joule => "J",
            Unit::ElectronVolt => "eV",
            Unit::Kelvin => "K",
            Unit::Radian => "rad",
            Unit::Microradian => "urad",
        }
    }

    pub fn dimension(self) -> Dimension {
        use Unit::*;
        match self {
            Meter | Centimeter | Micrometer | Nanometer => Dimension::Length,
            Newton | Dyne | Microdyne => Dimension::Force,
            NewtonPerMeter | MicrodynePerMicrometer => Dimension::ForceGradient,
            NewtonPerSquareMeter | Pascal | MicrodynePerSquareMicrometer => Dimension::ForcePerArea,
            NewtonMeter | MicrodyneMicrometer => Dimension::ForceLength,
            NewtonCubicMeter | MicrodyneCubicMicrometer => Dimension::ForceVolume,
            Joule | ElectronVolt => Dimension::Energy,
            Kelvin => Dimension::Temperature,
            Radian | Microradian => Dimension::Angle,
        }
    }

    /// SI factor as `mantissa * 10^exponent`, keeping decimal prefixes exact.
    fn factor(self) -> (f64, i32) {
        use Unit::*;
        match self {
            Meter | Newton | NewtonPerMeter | NewtonPerSquareMeter | Pascal | NewtonMeter
            | NewtonCubicMeter | Joule | Kelvin | Radian => (1.0, 0),
            Centimeter => (1.0, -2),
            Micrometer | Microradian => (1.0, -6),
            Nanometer => (1.0, -9),
            Dyne => (1.0, -5),
            Microdyne => (1.0, -11),
            // 1e-11 N / 1e-6 m
            MicrodynePerMicrometer => (1.0, -5),
            // 1e-11 N / 1e-12 m^2
            MicrodynePerSquareMicrometer => (1.0, 1),
            MicrodyneMicrometer => (1.0, -17),
            MicrodyneCubicMicrometer => (1.0, -29),
            ElectronVolt => (ELECTRON_VOLT_MANTISSA, -19),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

const ELECTRON_VOLT_MANTISSA: f64 = 1.602176634;

/// Powers of ten up to 1e22 are exactly representable.
fn scale_pow10(x: f64, mut k: i32) -> f64 {
    let mut v = x;
    while k > 22 {
        v *= 1e22;
        k -= 22;
    }
    while k < -22 {
        v /= 1e22;
        k += 22;
    }
    if k >= 0 {
        v * 10f64.powi(k)
    } else {
        v / 10f64.powi(-k)
    }
}

/// Convert a bare value between two units of the same dimension.
pub fn convert_value(value: f64, from: Unit, to: Unit) -> Result<f64> {
    if from.dimension() != to.dimension() {
        return Err(Error::DimensionMismatch {
            from: from.symbol(),
            to: to.symbol(),
            from_dim: from.dimension().name(),
            to_dim: to.dimension().name(),
        });
    }
    let (m_from, e_from) = from.factor();
    let (m_to, e_to) = to.factor();
    let mut v = value;
    if m_from != m_to {
        v = v * m_from / m_to;
    }
    Ok(scale_pow10(v, e_from - e_to))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }

    pub fn convert(self, target: Unit) -> Result<Quantity> {
        Ok(Quantity::new(convert_value(self.value, self.unit, target)?, target))
    }
}

/// Shorthand for [`Quantity::convert`].
pub fn convert(q: Quantity, target: Unit) -> Result<Quantity> {
    q.convert(target)
}

fn si_from(value: f64, unit: Unit) -> f64 {
    convert_value(value, unit, si_unit(unit.dimension())).expect("same dimension")
}

fn si_to(value: f64, unit: Unit) -> f64 {
    convert_value(value, si_unit(unit.dimension()), unit).expect("same dimension")
}

fn si_unit(dim: Dimension) -> Unit {
    match dim {
        Dimension::Length => Unit::Meter,
        Dimension::Force => Unit::Newton,
        Dimension::ForceGradient => Unit::NewtonPerMeter,
        Dimension::ForcePerArea => Unit::NewtonPerSquareMeter,
        Dimension::ForceLength => Unit::NewtonMeter,
        Dimension::ForceVolume => Unit::NewtonCubicMeter,
        Dimension::Energy => Unit::Joule,
        Dimension::Temperature => Unit::Kelvin,
        Dimension::Angle => Unit::Radian,
    }
}

macro_rules! quantity {
    ($(#[$meta:meta])* $name:ident, $dim:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(f64);

        impl $name {
            pub const ZERO: $name = $name(0.0);

            pub const fn from_si(v: f64) -> Self {
                $name(v)
            }

            pub const fn si(self) -> f64 {
                self.0
            }

            /// Build from a value expressed in `unit`.
            ///
            /// Panics if `unit` has the wrong dimension; use [`convert`] for
            /// unchecked input.
            pub fn from_unit(v: f64, unit: Unit) -> Self {
                assert_eq!(unit.dimension(), $dim, "unit {unit} is not a {}", stringify!($name));
                $name(si_from(v, unit))
            }

            pub fn in_unit(self, unit: Unit) -> f64 {
                assert_eq!(unit.dimension(), $dim, "unit {unit} is not a {}", stringify!($name));
                si_to(self.0, unit)
            }

            pub fn abs(self) -> Self {
                $name(self.0.abs())
            }

            pub fn is_finite(self) -> bool {
                self.0.is_finite()
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = $name;
            fn mul(self, rhs: f64) -> $name {
                $name(self.0 * rhs)
            }
        }

        impl Div<f64> for $name {
            type Output = $name;
            fn div(self, rhs: f64) -> $name {
                $name(self.0 / rhs)
            }
        }

        impl Div for $name {
            type Output = f64;
            fn div(self, rhs: $name) -> f64 {
                self.0 / rhs.0
            }
        }
    };
}

quantity!(
    /// Length in meters.
    Distance,
    Dimension::Length
);
quantity!(
    /// Force in newtons. Attractive Casimir forces are positive.
    Force,
    Dimension::Force
);
quantity!(ForceGradient, Dimension::ForceGradient);
quantity!(
    /// Second derivative of a force with respect to separation (N/m²).
    ForceCurvature,
    Dimension::ForcePerArea
);
quantity!(
    /// Parallel-plate pressure in pascals, attractive positive.
    Pressure,
    Dimension::ForcePerArea
);
quantity!(Energy, Dimension::Energy);
quantity!(Temperature, Dimension::Temperature);
quantity!(Angle, Dimension::Angle);

impl Distance {
    pub fn from_um(v: f64) -> Self {
        Self::from_unit(v, Unit::Micrometer)
    }
    pub fn from_nm(v: f64) -> Self {
        Self::from_unit(v, Unit::Nanometer)
    }
    pub fn from_cm(v: f64) -> Self {
        Self::from_unit(v, Unit::Centimeter)
    }
    pub fn um(self) -> f64 {
        self.in_unit(Unit::Micrometer)
    }
    pub fn nm(self) -> f64 {
        self.in_unit(Unit::Nanometer)
    }
    pub fn cm(self) -> f64 {
        self.in_unit(Unit::Centimeter)
    }
}

impl Force {
    pub fn from_udyne(v: f64) -> Self {
        Self::from_unit(v, Unit::Microdyne)
    }
    pub fn udyne(self) -> f64 {
        self.in_unit(Unit::Microdyne)
    }
}

impl ForceGradient {
    pub fn from_udyne_per_um(v: f64) -> Self {
        Self::from_unit(v, Unit::MicrodynePerMicrometer)
    }
    pub fn udyne_per_um(self) -> f64 {
        self.in_unit(Unit::MicrodynePerMicrometer)
    }
}

impl ForceCurvature {
    pub fn from_udyne_per_um2(v: f64) -> Self {
        Self::from_unit(v, Unit::MicrodynePerSquareMicrometer)
    }
    pub fn udyne_per_um2(self) -> f64 {
        self.in_unit(Unit::MicrodynePerSquareMicrometer)
    }
}

impl Energy {
    pub fn from_ev(v: f64) -> Self {
        Self::from_unit(v, Unit::ElectronVolt)
    }
    pub fn ev(self) -> f64 {
        self.in_unit(Unit::ElectronVolt)
    }
}

impl Temperature {
    pub const fn kelvin(v: f64) -> Self {
        Temperature(v)
    }
}

impl Mul<Distance> for ForceGradient {
    type Output = Force;
    fn mul(self, rhs: Distance) -> Force {
        Force(self.0 * rhs.0)
    }
}

impl Mul<Distance> for ForceCurvature {
    type Output = ForceGradient;
    fn mul(self, rhs: Distance) -> ForceGradient {
        ForceGradient(self.0 * rhs.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    /// J·s
    pub hbar: f64,
    /// m/s
    pub c: f64,
    /// J/K
    pub k_b: f64,
    /// J
    pub electron_volt: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        hbar: 1.054571817e-34,
        c: 299_792_458.0,
        k_b: 1.380649e-23,
        electron_volt: 1.602176634e-19,
    };

    pub fn hbar_c(&self) -> f64 {
        self.hbar * self.c
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}

/// The constants used by every calculation in this crate.
pub const CONSTANTS: PhysicalConstants = PhysicalConstants::CODATA_2018;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGeometry {
    pub sphere_radius: Distance,
    pub temperature: Temperature,
}

impl ExperimentGeometry {
    pub fn new(sphere_radius: Distance, temperature: Temperature) -> Result<Self> {
        if !(sphere_radius.si() > 0.0) || !sphere_radius.is_finite() {
            return Err(Error::domain(format!(
                "sphere radius must be positive, got {} m",
                sphere_radius.si()
            )));
        }
        if !(temperature.si() >= 0.0) || !temperature.is_finite() {
            return Err(Error::domain(format!(
                "temperature must be non-negative, got {} K",
                temperature.si()
            )));
        }
        Ok(Self {
            sphere_radius,
            temperature,
        })
    }
}

impl Default for ExperimentGeometry {
    /// R = 12.4 cm, T = 300 K.
    fn default() -> Self {
        Self {
            sphere_radius: Distance::from_cm(12.4),
            temperature: Temperature::kelvin(300.0),
        }
    }
}

//! Finite-temperature Casimir forces between gold plates, the apparent-force
//! shift and scatter inflation caused by fluctuations of the plate
//! separation, and χ² comparison of Drude and Plasma predictions against
//! binned force data.
//!
//! Internally every quantity is SI; see [`units`] for the micro-CGS units
//! used at the file and command-line boundary.

pub mod analysis;
pub mod background;
pub mod corrections;
pub mod dataset;
pub mod derivative;
pub mod error;
pub mod lifshitz;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod permittivity;
pub mod table;
pub mod units;

pub use error::{Error, Result};
pub use model::ForceModel;
pub use units::{Distance, Energy, ExperimentGeometry, Force, ForceCurvature, ForceGradient, Pressure, Temperature};

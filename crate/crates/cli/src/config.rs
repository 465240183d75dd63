//! JSON run configuration and the flags that override it.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use casimir_core::corrections::{Band, FluctuationBudget, FluctuationProfile, FluctuationSource};
use casimir_core::lifshitz::{LifshitzSettings, SpherePlate};
use casimir_core::oracle::ProcessKind;
use casimir_core::permittivity::{DrudeParams, MaterialModel, TabulatedPermittivity, GOLD_GAMMA_EV, GOLD_OMEGA_P_EV};
use casimir_core::{Distance, Energy, ExperimentGeometry, Temperature};

use crate::output::Provenance;

/// Everything a config file may set. Every field is optional; flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelKind>,
    pub omega_p_ev: Option<f64>,
    pub gamma_ev: Option<f64>,
    pub eps_table: Option<PathBuf>,
    pub sphere_radius_cm: Option<f64>,
    pub temperature_k: Option<f64>,
    pub lifshitz: Option<LifshitzSettings>,
    pub beta_udyne_um: Option<f64>,
    pub d0_um: Option<f64>,
    pub delta_rms_um: Option<f64>,
    pub in_band_delta_um: Option<f64>,
    pub profile: Option<ProfileConfig>,
    pub budget: Option<Vec<SourceConfig>>,
    pub process: Option<ProcessConfig>,
    pub d_min_um: Option<f64>,
    pub d_max_um: Option<f64>,
    pub points: Option<usize>,
    pub data: Option<PathBuf>,
    pub theory: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, prov: &mut Provenance) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let bytes = prov.read_input(path)?;
        serde_json::from_slice(&bytes).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Drude,
    Plasma,
    Perfect,
    Tabulated,
}

/// δ profile in micrometres.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Constant { delta_rms_um: f64 },
    SqrtLaw { scale_um: f64, amplitude_um: f64 },
    Table { points_um: Vec<(f64, f64)> },
}

impl ProfileConfig {
    pub fn from_profile(p: &FluctuationProfile) -> Self {
        match p {
            FluctuationProfile::Constant { delta_rms } => ProfileConfig::Constant { delta_rms_um: delta_rms.um() },
            FluctuationProfile::SqrtLaw { scale, amplitude } => ProfileConfig::SqrtLaw {
                scale_um: scale.um(),
                amplitude_um: amplitude.um(),
            },
            FluctuationProfile::Table { points } => ProfileConfig::Table {
                points_um: points.iter().map(|(d, s)| (d.um(), s.um())).collect(),
            },
        }
    }

    pub fn to_profile(&self) -> Result<FluctuationProfile> {
        let um = Distance::from_um;
        let p = match self {
            ProfileConfig::Constant { delta_rms_um } => FluctuationProfile::constant(um(*delta_rms_um)),
            ProfileConfig::SqrtLaw { scale_um, amplitude_um } => FluctuationProfile::SqrtLaw {
                scale: um(*scale_um),
                amplitude: um(*amplitude_um),
            },
            ProfileConfig::Table { points_um } => FluctuationProfile::Table {
                points: points_um.iter().map(|&(d, s)| (um(d), um(s))).collect(),
            },
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub label: String,
    pub delta_rms_um: f64,
    pub band: Band,
}

pub fn budget_of(sources: &[SourceConfig]) -> FluctuationBudget {
    FluctuationBudget {
        sources: sources
            .iter()
            .map(|s| FluctuationSource {
                label: s.label.clone(),
                delta_rms: Distance::from_um(s.delta_rms_um),
                band: s.band,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub target_rms_um: Option<f64>,
    pub f_lo_hz: Option<f64>,
    pub f_hi_hz: Option<f64>,
    pub kind: Option<ProcessKind>,
    pub seed: Option<u64>,
    pub dt_s: Option<f64>,
    pub duration_s: Option<f64>,
}

/// Material, geometry and Lifshitz settings shared by every command that
/// evaluates a Casimir force.
#[derive(Debug, Clone, Default, Args)]
pub struct PhysicsArgs {
    /// Plate permittivity model [default: drude]
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Plasma frequency in eV [default: 9]
    #[arg(long)]
    pub omega_p: Option<f64>,
    /// Drude relaxation in eV [default: 0.035]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// ε(iξ) table with columns xi_ev,eps; required by --model tabulated.
    /// Below its first row the Drude model with --omega-p/--gamma is used
    #[arg(long)]
    pub eps_table: Option<PathBuf>,
    /// Sphere radius in cm [default: 12.4]
    #[arg(long)]
    pub radius_cm: Option<f64>,
    /// Temperature in K [default: 300]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Replace the Matsubara sum by the T = 0 frequency integral
    #[arg(long)]
    pub zero_temperature: bool,
    /// Relative tolerance on the Matsubara tail [default: 1e-9]
    #[arg(long)]
    pub matsubara_rel_tol: Option<f64>,
    /// Maximum Matsubara terms before giving up [default: 5000]
    #[arg(long)]
    pub matsubara_max_terms: Option<usize>,
    /// Relative tolerance of the wavenumber quadrature [default: 1e-8]
    #[arg(long)]
    pub quad_rel_tol: Option<f64>,
}

/// Resolved physics, recorded verbatim in output headers.
#[derive(Debug, Clone, Serialize)]
pub struct Physics {
    pub model: ModelKind,
    pub omega_p_ev: f64,
    pub gamma_ev: f64,
    pub eps_table: Option<PathBuf>,
    pub sphere_radius_cm: f64,
    pub temperature_k: f64,
    pub lifshitz: LifshitzSettings,
}

impl Physics {
    pub fn resolve(args: &PhysicsArgs, cfg: &RunConfig) -> Result<Self> {
        let mut lifshitz = cfg.lifshitz.unwrap_or_default();
        if let Some(v) = args.matsubara_rel_tol {
            lifshitz.matsubara_rel_tol = v;
        }
        if let Some(v) = args.matsubara_max_terms {
            lifshitz.matsubara_max_terms = v;
        }
        if let Some(v) = args.quad_rel_tol {
            lifshitz.quad_rel_tol = v;
        }
        if args.zero_temperature {
            lifshitz.zero_temperature_mode = true;
        }
        lifshitz.validate()?;
        let p = Self {
            model: args.model.or(cfg.model).unwrap_or(ModelKind::Drude),
            omega_p_ev: args.omega_p.or(cfg.omega_p_ev).unwrap_or(GOLD_OMEGA_P_EV),
            gamma_ev: args.gamma.or(cfg.gamma_ev).unwrap_or(GOLD_GAMMA_EV),
            eps_table: args.eps_table.clone().or_else(|| cfg.eps_table.clone()),
            sphere_radius_cm: args.radius_cm.or(cfg.sphere_radius_cm).unwrap_or(12.4),
            temperature_k: args.temperature.or(cfg.temperature_k).unwrap_or(300.0),
            lifshitz,
        };
        if p.model == ModelKind::Tabulated && p.eps_table.is_none() {
            bail!("--model tabulated needs --eps-table");
        }
        p.geometry()?;
        p.drude_params()?;
        Ok(p)
    }

    pub fn geometry(&self) -> Result<ExperimentGeometry> {
        Ok(ExperimentGeometry::new(
            Distance::from_cm(self.sphere_radius_cm),
            Temperature::kelvin(self.temperature_k),
        )?)
    }

    fn drude_params(&self) -> Result<DrudeParams> {
        Ok(DrudeParams::new(Energy::from_ev(self.omega_p_ev), Energy::from_ev(self.gamma_ev))?)
    }

    /// The configured material; reads the permittivity table if one is used.
    pub fn material(&self, prov: &mut Provenance) -> Result<MaterialModel> {
        self.material_of(self.model, prov)
    }

    pub fn material_of(&self, kind: ModelKind, prov: &mut Provenance) -> Result<MaterialModel> {
        let wp = Energy::from_ev(self.omega_p_ev);
        Ok(match kind {
            ModelKind::Drude => MaterialModel::drude(wp, Energy::from_ev(self.gamma_ev))?,
            ModelKind::Plasma => MaterialModel::plasma(wp)?,
            ModelKind::Perfect => MaterialModel::PerfectConductor,
            ModelKind::Tabulated => {
                let path = self.eps_table.as_deref().ok_or_else(|| anyhow!("no --eps-table given"))?;
                let bytes = prov.read_input(path)?;
                let table = TabulatedPermittivity::from_reader(bytes.as_slice(), self.drude_params()?)
                    .with_context(|| format!("in {}", path.display()))?;
                MaterialModel::Tabulated(table)
            }
        })
    }

    pub fn sphere_plate(&self, material: MaterialModel) -> Result<SpherePlate> {
        Ok(SpherePlate::new(material, self.geometry()?, self.lifshitz)?)
    }
}

/// Flags selecting a δ profile; combined with the config's `profile`,
/// `delta_rms_um` and `budget` keys.
#[derive(Debug, Clone, Default, Args)]
pub struct ProfileArgs {
    /// Constant rms distance fluctuation in μm [default: 0.1]
    #[arg(long)]
    pub delta_rms: Option<f64>,
    /// Use δ = A·√(d / 3 μm) with amplitude A = 1 μm
    #[arg(long, conflicts_with_all = ["delta_rms", "profile_table"])]
    pub sqrt_law: bool,
    /// Tabulated δ profile, CSV with columns d_um,delta_um
    #[arg(long, conflicts_with = "delta_rms")]
    pub profile_table: Option<PathBuf>,
    /// Constant in-band part of δ in μm, which sets the scatter inflation
    /// [default: the whole profile]
    #[arg(long)]
    pub in_band_delta: Option<f64>,
}

/// The δ profile shifting the mean and the one inflating the scatter.
#[derive(Debug, Clone)]
pub struct Profiles {
    pub total: FluctuationProfile,
    pub in_band: FluctuationProfile,
}

impl Profiles {
    pub fn resolve(args: &ProfileArgs, cfg: &RunConfig, prov: &mut Provenance) -> Result<Self> {
        let um = Distance::from_um;
        let mut in_band = args.in_band_delta.or(cfg.in_band_delta_um).map(|x| FluctuationProfile::constant(um(x)));
        let total = if let Some(x) = args.delta_rms {
            FluctuationProfile::constant(um(x))
        } else if args.sqrt_law {
            FluctuationProfile::sqrt_law()
        } else if let Some(path) = &args.profile_table {
            read_profile_table(path, prov)?
        } else if let Some(p) = &cfg.profile {
            p.to_profile()?
        } else if let Some(x) = cfg.delta_rms_um {
            FluctuationProfile::constant(um(x))
        } else if let Some(sources) = &cfg.budget {
            let combined = casimir_core::corrections::combine_delta_sources(&budget_of(sources))?;
            in_band.get_or_insert(FluctuationProfile::constant(combined.in_band));
            FluctuationProfile::constant(combined.total())
        } else {
            FluctuationProfile::constant(um(0.1))
        };
        total.validate()?;
        let in_band = in_band.unwrap_or_else(|| total.clone());
        in_band.validate()?;
        Ok(Self { total, in_band })
    }

    /// Micrometre form for headers.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "total": ProfileConfig::from_profile(&self.total),
            "in_band": ProfileConfig::from_profile(&self.in_band),
        })
    }
}

fn read_profile_table(path: &Path, prov: &mut Provenance) -> Result<FluctuationProfile> {
    let bytes = prov.read_input(path)?;
    let rows = casimir_core::table::read_rows(bytes.as_slice(), &["d_um", "delta_um"], "profile table")
        .with_context(|| format!("in {}", path.display()))?;
    let mut points = Vec::with_capacity(rows.len());
    for row in &rows {
        let d = row.float(0, "d_um").map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let s = row.float(1, "delta_um").map_err(|e| anyhow!("{}: {e}", path.display()))?;
        points.push((Distance::from_um(d), Distance::from_um(s)));
    }
    let p = FluctuationProfile::Table { points };
    p.validate()?;
    Ok(p)
}

/// Distance grid flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Serialize)]
pub struct Grid {
    pub d_min_um: f64,
    pub d_max_um: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl Grid {
    pub fn resolve(
        d_min: Option<f64>,
        d_max: Option<f64>,
        points: Option<usize>,
        spacing: Spacing,
        cfg: &RunConfig,
        defaults: (f64, f64, usize),
    ) -> Result<Self> {
        let g = Self {
            d_min_um: d_min.or(cfg.d_min_um).unwrap_or(defaults.0),
            d_max_um: d_max.or(cfg.d_max_um).unwrap_or(defaults.1),
            points: points.or(cfg.points).unwrap_or(defaults.2),
            spacing,
        };
        if !(g.d_min_um > 0.0 && g.d_min_um.is_finite()) {
            bail!("d-min must be positive, got {} um", g.d_min_um);
        }
        if !(g.d_max_um.is_finite()) || (g.points > 1 && !(g.d_max_um > g.d_min_um)) {
            bail!("d-max ({}) must exceed d-min ({})", g.d_max_um, g.d_min_um);
        }
        if g.points == 0 {
            bail!("points must be at least 1");
        }
        Ok(g)
    }

    pub fn distances(&self) -> Vec<Distance> {
        let (lo, hi) = (Distance::from_um(self.d_min_um), Distance::from_um(self.d_max_um));
        match self.spacing {
            Spacing::Linear => casimir_core::model::linear_grid(lo, hi, self.points),
            Spacing::Log => casimir_core::model::log_grid(lo, hi, self.points),
        }
    }
}

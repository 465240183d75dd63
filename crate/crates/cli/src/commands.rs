use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use casimir_core::analysis::{chi_squared, scan_delta, write_scan_csv, TheoryCurve};
use casimir_core::background::{electrostatic_force, fit_background, total_model, ElectrostaticBackground, FitOptions};
use casimir_core::corrections::{corrected_curve, delta_profile_eval, tilt_noise_estimate, write_corrected_curve, FluctuationProfile};
use casimir_core::dataset::ForceDataset;
use casimir_core::derivative::{curvature_of, StepPolicy};
use casimir_core::lifshitz::{ideal_sphere_force_t0, write_force_curve};
use casimir_core::model::{log_grid, ForceCurve};
use casimir_core::oracle::{verify_second_order, ProcessKind, ProcessSpec};
use casimir_core::permittivity::{kk_transform, KkOptions, OpticalAbsorptionTable};
use casimir_core::table;
use casimir_core::{Distance, Energy, Force, ForceModel};

use crate::config::{Grid, ModelKind, Physics, Profiles, RunConfig};
use crate::output::{Provenance, Sink};
use crate::{Chi2Args, Cli, Command, CorrectArgs, Emit, Family, FitBetaArgs, ForceArgs, Kind, KkArgs, Law, ScanDeltaArgs, SimulateArgs, TiltArgs};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Force(a) => force(cli, a),
        Command::Correct(a) => correct(cli, a),
        Command::FitBeta(a) => fit_beta(cli, a),
        Command::Chi2(a) => chi2(cli, a),
        Command::ScanDelta(a) => scan(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::TiltEstimate(a) => tilt(cli, a),
        Command::Kk(a) => kk(cli, a),
    }
}

fn start(cli: &Cli, command: &'static str) -> Result<(Provenance, RunConfig)> {
    let mut prov = Provenance::new(command);
    let cfg = RunConfig::load(cli.config.as_deref(), &mut prov)?;
    Ok((prov, cfg))
}

fn sink(cli: &Cli, cfg: &RunConfig) -> Sink {
    Sink(cli.out.clone().or_else(|| cfg.out.clone()))
}

fn load_data(path: Option<&std::path::Path>, prov: &mut Provenance) -> Result<ForceDataset> {
    let path = path.ok_or_else(|| anyhow!("no data file given (--data)"))?;
    let bytes = prov.read_input(path)?;
    ForceDataset::from_reader(bytes.as_slice(), path.display().to_string())
        .with_context(|| format!("in {}", path.display()))
}

fn background(beta: Option<f64>, d0: Option<f64>, cfg: &RunConfig) -> Result<ElectrostaticBackground> {
    let beta = beta.or(cfg.beta_udyne_um).unwrap_or(0.0);
    let d0 = d0.or(cfg.d0_um).unwrap_or(0.0);
    Ok(ElectrostaticBackground::from_udyne_um(beta, Distance::from_um(d0))?)
}

fn background_line(bg: &ElectrostaticBackground) -> String {
    format!("background: beta={} udyne*um d0={} um", bg.beta_udyne_um(), bg.d0.um())
}

fn with_provenance(value: Value, prov: &Provenance) -> Value {
    let mut v = json!({ "provenance": prov.to_json() });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, value) {
        dst.extend(src);
    }
    v
}

fn force(cli: &Cli, a: &ForceArgs) -> Result<()> {
    let (mut prov, cfg) = start(cli, "force")?;
    let physics = Physics::resolve(&a.physics, &cfg)?;
    let grid = Grid::resolve(a.d_min, a.d_max, a.points, a.spacing, &cfg, (0.5, 6.0, 50))?;
    prov.config = json!({ "physics": physics, "grid": grid });
    let sp = physics.sphere_plate(physics.material(&mut prov)?)?;
    let curve = ForceCurve::evaluate(&sp, &grid.distances())?;
    let mut comments = prov.header_lines();
    comments.extend(sp.header_lines());
    let mut buf = Vec::new();
    write_force_curve(&mut buf, &curve, &comments)?;
    sink(cli, &cfg).write(&buf)
}

const FIG1_COLUMNS: [&str; 8] = [
    "d_um",
    "drude_Fc_d3_udyne_um3",
    "drude_Fa_d3_udyne_um3",
    "plasma_Fc_d3_udyne_um3",
    "plasma_Fa_d3_udyne_um3",
    "perfect_t0_d3_udyne_um3",
    "drude_shift_d3_udyne_um3",
    "plasma_shift_d3_udyne_um3",
];

fn correct(cli: &Cli, a: &CorrectArgs) -> Result<()> {
    let (mut prov, cfg) = start(cli, "correct")?;
    let physics = Physics::resolve(&a.physics, &cfg)?;
    let grid = Grid::resolve(a.d_min, a.d_max, a.points, a.spacing, &cfg, (0.6, 6.0, 55))?;
    let profiles = Profiles::resolve(&a.profile, &cfg, &mut prov)?;
    let bg = background(a.beta, a.d0, &cfg)?;
    let emit = match a.emit {
        Emit::Curve => "curve",
        Emit::Fig1 => "fig1",
    };
    prov.config = json!({
        "physics": physics,
        "grid": grid,
        "profiles": profiles.echo(),
        "beta_udyne_um": bg.beta_udyne_um(),
        "d0_um": bg.d0.um(),
        "subtract_background": a.subtract_background,
        "emit": emit,
    });
    let distances = grid.distances();
    let mut notes = vec![
        background_line(&bg),
        format!("delta profile: {}", profiles.total.describe()),
        format!("in-band delta profile: {}", profiles.in_band.describe()),
    ];

    let mut buf = Vec::new();
    match a.emit {
        Emit::Curve => {
            let sp = physics.sphere_plate(physics.material(&mut prov)?)?;
            notes.extend(sp.header_lines());
            let total = total_model(bg.clone(), sp);
            let mut points = corrected_curve(&total, &distances, &profiles.total, &profiles.in_band)?;
            if a.subtract_background {
                notes.push("forces exclude the electrostatic background".into());
                for p in &mut points {
                    let fe = electrostatic_force(&bg, p.d)?;
                    p.force = p.force - fe;
                    p.apparent = p.apparent - fe;
                }
            }
            let comments: Vec<String> = prov.header_lines().into_iter().chain(notes).collect();
            write_corrected_curve(&mut buf, &points, &comments)?;
        }
        Emit::Fig1 => {
            if physics.model != ModelKind::Drude {
                log::info!("fig1 always tabulates the Drude and Plasma models");
            }
            let mut curves = Vec::new();
            for kind in [ModelKind::Drude, ModelKind::Plasma] {
                let sp = physics.sphere_plate(physics.material_of(kind, &mut prov)?)?;
                notes.extend(sp.header_lines());
                let total = total_model(bg.clone(), sp);
                curves.push(corrected_curve(&total, &distances, &profiles.total, &profiles.in_band)?);
            }
            notes.push("Fc: Casimir force; Fa: apparent force with the electrostatic background removed".into());
            notes.push("all columns after d_um are F*d^3 in udyne*um^3".into());
            let radius = physics.geometry()?.sphere_radius;
            let comments: Vec<String> = prov.header_lines().into_iter().chain(notes).collect();
            table::write_header(&mut buf, &comments, &FIG1_COLUMNS)?;
            for (i, &d) in distances.iter().enumerate() {
                let fe = electrostatic_force(&bg, d)?;
                let d3 = d.um().powi(3);
                let (dr, pl) = (&curves[0][i], &curves[1][i]);
                let (dc, da) = ((dr.force - fe).udyne() * d3, (dr.apparent - fe).udyne() * d3);
                let (pc, pa) = ((pl.force - fe).udyne() * d3, (pl.apparent - fe).udyne() * d3);
                let perfect = ideal_sphere_force_t0(d, radius).udyne() * d3;
                table::write_row(&mut buf, &[d.um(), dc, da, pc, pa, perfect, da - dc, pa - pc])?;
            }
        }
    }
    sink(cli, &cfg).write(&buf)
}

fn fit_beta(cli: &Cli, a: &FitBetaArgs) -> Result<()> {
    let (mut prov, cfg) = start(cli, "fit-beta")?;
    let d_min = a.d_min.unwrap_or(2.0);
    let physics = if a.subtract_casimir {
        Some(Physics::resolve(&a.physics, &cfg)?)
    } else {
        None
    };
    prov.config = json!({
        "d_min_um": d_min,
        "fit_d0": !a.fix_d0,
        "d0_bounds_um": [a.d0_lo, a.d0_hi],
        "subtract_casimir": physics,
    });
    let data = load_data(a.data.as_deref().or(cfg.data.as_deref()), &mut prov)?;
    let sp = match &physics {
        Some(p) => Some(p.sphere_plate(p.material(&mut prov)?)?),
        None => None,
    };
    let opts = FitOptions {
        d_min: Distance::from_um(d_min),
        d0_bounds: (Distance::from_um(a.d0_lo), Distance::from_um(a.d0_hi)),
        fit_d0: !a.fix_d0,
        casimir_subtractor: sp.as_ref().map(|s| s as &dyn ForceModel),
    };
    let report = fit_background(&data, &opts)?;
    if report.d0_at_bound {
        log::warn!("d0 = {} um sits at the edge of its search interval", report.d0_um);
    }
    sink(cli, &cfg).write_json(&with_provenance(serde_json::to_value(&report)?, &prov))
}

fn chi2(cli: &Cli, a: &Chi2Args) -> Result<()> {
    let (mut prov, cfg) = start(cli, "chi2")?;
    prov.config = json!({
        "column": a.column,
        "dof": a.dof,
        "fitted_params": a.fitted_params,
    });
    let data = load_data(a.data.as_deref().or(cfg.data.as_deref()), &mut prov)?;
    let theory_path = a
        .theory
        .as_deref()
        .or(cfg.theory.as_deref())
        .ok_or_else(|| anyhow!("no theory file given (--theory)"))?;
    let bytes = prov.read_input(theory_path)?;
    let theory = TheoryCurve::from_reader(bytes.as_slice(), a.column.as_deref())
        .with_context(|| format!("in {}", theory_path.display()))?;
    let n = data.len() as u32;
    let fitted = match a.dof {
        Some(dof) if dof > n => bail!("--dof {dof} exceeds the {n} data points"),
        Some(dof) => n - dof,
        None => a.fitted_params.unwrap_or(1),
    };
    let report = chi_squared(&data, &theory, fitted)?;
    let mut v = serde_json::to_value(&report)?;
    v["theory_column"] = json!(theory.column);
    sink(cli, &cfg).write_json(&with_provenance(v, &prov))
}

/// F + ½F″δ(d)² at a fixed set of distances, from precomputed F and F″.
struct Precomputed {
    d: Vec<f64>,
    force: Vec<f64>,
    curvature: Vec<f64>,
    profile: FluctuationProfile,
}

impl ForceModel for Precomputed {
    fn force(&self, d: Distance) -> casimir_core::Result<Force> {
        let i = self
            .d
            .iter()
            .position(|&x| x == d.si())
            .ok_or_else(|| casimir_core::Error::domain(format!("no precomputed force at d = {} um", d.um())))?;
        let delta = delta_profile_eval(&self.profile, d)?.si();
        Ok(Force::from_si(self.force[i] + 0.5 * self.curvature[i] * delta * delta))
    }
}

fn scan(cli: &Cli, a: &ScanDeltaArgs) -> Result<()> {
    let (mut prov, cfg) = start(cli, "scan-delta")?;
    let physics = Physics::resolve(&a.physics, &cfg)?;
    let bg = background(a.beta, a.d0, &cfg)?;
    let grid: Vec<f64> = match &a.grid {
        Some(g) => g.clone(),
        None if a.delta_steps == 0 => bail!("--delta-steps must be at least 1"),
        None if a.delta_steps == 1 => vec![a.delta_min],
        None => (0..a.delta_steps)
            .map(|i| a.delta_min + (a.delta_max - a.delta_min) * i as f64 / (a.delta_steps - 1) as f64)
            .collect(),
    };
    let family = match a.family {
        Family::Constant => "constant",
        Family::SqrtLaw => "sqrt_law",
    };
    prov.config = json!({
        "physics": physics,
        "beta_udyne_um": bg.beta_udyne_um(),
        "d0_um": bg.d0.um(),
        "subtract_background": a.subtract_background,
        "family": family,
        "grid_um": grid,
    });
    let data = load_data(a.data.as_deref().or(cfg.data.as_deref()), &mut prov)?;
    let sp = physics.sphere_plate(physics.material(&mut prov)?)?;
    let mut comments = prov.header_lines();
    comments.extend(sp.header_lines());
    comments.push(background_line(&bg));
    let total = total_model(bg.clone(), sp);
    let at_points = data
        .points()
        .par_iter()
        .map(|p| {
            let d = p.d_mid;
            let mut f = total.force(d)?;
            if a.subtract_background {
                f = f - electrostatic_force(&bg, d)?;
            }
            let c = curvature_of(&total, d, StepPolicy::Default)?;
            Ok((d.si(), f.si(), c.si()))
        })
        .collect::<casimir_core::Result<Vec<_>>>()?;
    let deltas: Vec<Distance> = grid.iter().map(|&x| Distance::from_um(x)).collect();
    let result = scan_delta(
        &data,
        |delta| {
            let profile = match a.family {
                Family::Constant => FluctuationProfile::constant(delta),
                Family::SqrtLaw => FluctuationProfile::SqrtLaw {
                    scale: Distance::from_um(3.0),
                    amplitude: delta,
                },
            };
            Ok(Precomputed {
                d: at_points.iter().map(|p| p.0).collect(),
                force: at_points.iter().map(|p| p.1).collect(),
                curvature: at_points.iter().map(|p| p.2).collect(),
                profile,
            })
        },
        &deltas,
    )?;
    let best = result.best();
    comments.push(format!("family: {family}"));
    comments.push(format!(
        "best: delta_um={} chi2={} reduced={} p={}",
        best.delta_um, best.report.chi2, best.report.reduced, best.report.p_value
    ));
    let mut buf = Vec::new();
    write_scan_csv(&mut buf, &result, &comments)?;
    sink(cli, &cfg).write(&buf)
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let (mut prov, cfg) = start(cli, "simulate")?;
    let pc = cfg.process.clone().unwrap_or_default();
    let def = ProcessSpec::default();
    let kind = match a.kind {
        Some(Kind::White) => ProcessKind::WhiteInBand,
        Some(Kind::OneOverF) => ProcessKind::OneOverFInBand,
        None => pc.kind.unwrap_or(def.kind),
    };
    let spec = ProcessSpec {
        target_rms: a.delta_rms.or(pc.target_rms_um).map_or(def.target_rms, Distance::from_um),
        f_lo: a.f_lo.or(pc.f_lo_hz).unwrap_or(def.f_lo),
        f_hi: a.f_hi.or(pc.f_hi_hz).unwrap_or(def.f_hi),
        kind,
        seed: a.seed.or(pc.seed).unwrap_or(def.seed),
        dt: a.dt.or(pc.dt_s).unwrap_or(def.dt),
        duration: a.duration.or(pc.duration_s).unwrap_or(def.duration),
    };
    spec.validate()?;
    let d = Distance::from_um(a.d);
    if !(d.si() > 0.0) {
        bail!("--d must be positive, got {} um", a.d);
    }
    let law = match a.law {
        Law::Inverse => "inverse",
        Law::Lifshitz => "lifshitz",
    };
    let record = match a.law {
        Law::Inverse => {
            prov.config = json!({ "law": law, "beta_udyne_um": a.beta, "d_um": a.d, "process": spec, "trials": a.trials });
            let model = ElectrostaticBackground::from_udyne_um(a.beta, Distance::ZERO)?;
            verify_second_order(&model, d, &spec, a.trials)?
        }
        Law::Lifshitz => {
            let physics = Physics::resolve(&a.physics, &cfg)?;
            prov.config = json!({ "law": law, "physics": physics, "d_um": a.d, "process": spec, "trials": a.trials });
            let sp = physics.sphere_plate(physics.material(&mut prov)?)?;
            // Samples rarely stray beyond a few δ; a spline keeps 10⁶ evaluations cheap.
            let span = 12.0 * spec.target_rms.si();
            let lo = Distance::from_si((d.si() - span).max(0.25 * d.si()));
            let hi = Distance::from_si(d.si() + span.max(0.05 * d.si()));
            let interp = ForceCurve::evaluate(&sp, &log_grid(lo, hi, 121))?.interpolant()?;
            verify_second_order(&interp, d, &spec, a.trials)?
        }
    };
    let n = record.trials.len();
    let v = json!({
        "law": law,
        "d_um": a.d,
        "delta_rms_um": spec.target_rms.um(),
        "n_trials": n,
        "mean_passes": record.mean_passes,
        "scatter_passes": record.scatter_passes,
        "passes": record.passes,
        "trials": record.trials,
    });
    sink(cli, &cfg).write_json(&with_provenance(v, &prov))
}

fn tilt(cli: &Cli, a: &TiltArgs) -> Result<()> {
    let (mut prov, cfg) = start(cli, "tilt-estimate")?;
    let ratio = a.mode_freq_ratio.unwrap_or_else(|| (a.length_cm / a.ref_length_cm).sqrt());
    prov.config = json!({
        "ref_noise_nm": a.ref_noise_nm,
        "ref_length_cm": a.ref_length_cm,
        "length_cm": a.length_cm,
        "mode_freq_ratio": a.mode_freq_ratio,
    });
    let delta = tilt_noise_estimate(
        Distance::from_nm(a.ref_noise_nm),
        Distance::from_cm(a.ref_length_cm),
        Distance::from_cm(a.length_cm),
        a.mode_freq_ratio,
    )?;
    let v = json!({
        "ref_noise_nm": a.ref_noise_nm,
        "ref_length_cm": a.ref_length_cm,
        "length_cm": a.length_cm,
        "mode_freq_ratio": ratio,
        "unattenuated_nm": a.ref_noise_nm * a.length_cm / a.ref_length_cm,
        "delta_rms_nm": delta.nm(),
        "delta_rms_um": delta.um(),
    });
    sink(cli, &cfg).write_json(&with_provenance(v, &prov))
}

fn kk(cli: &Cli, a: &KkArgs) -> Result<()> {
    let (mut prov, cfg) = start(cli, "kk")?;
    if !(a.xi_min > 0.0 && a.xi_max >= a.xi_min) || a.points == 0 {
        bail!("need 0 < xi-min <= xi-max and at least one point");
    }
    let opts = KkOptions {
        extension_gamma: Energy::from_ev(a.extension_gamma),
        rel_tol: a.rel_tol,
    };
    if !(a.extension_gamma > 0.0) || !(a.rel_tol > 0.0 && a.rel_tol < 1.0) {
        bail!("extension-gamma must be positive and rel-tol in (0, 1)");
    }
    prov.config = json!({
        "xi_min_ev": a.xi_min,
        "xi_max_ev": a.xi_max,
        "points": a.points,
        "extension_gamma_ev": a.extension_gamma,
        "rel_tol": a.rel_tol,
    });
    let bytes = prov.read_input(&a.absorption)?;
    let table = OpticalAbsorptionTable::from_reader(bytes.as_slice())
        .with_context(|| format!("in {}", a.absorption.display()))?;
    let xis: Vec<f64> = if a.points == 1 {
        vec![a.xi_min]
    } else {
        let (l, h) = (a.xi_min.ln(), a.xi_max.ln());
        (0..a.points).map(|i| (l + (h - l) * i as f64 / (a.points - 1) as f64).exp()).collect()
    };
    let values = xis
        .par_iter()
        .map(|&x| kk_transform(&table, Energy::from_ev(x), &opts))
        .collect::<casimir_core::Result<Vec<_>>>()?;
    let worst = values.iter().map(|v| v.truncation_estimate).fold(0.0, f64::max);
    let mut comments = prov.header_lines();
    comments.push(format!("absorption rows: {}", table.len()));
    comments.push(format!("max truncation estimate: {worst}"));
    let mut buf = Vec::new();
    table::write_header(&mut buf, &comments, &["xi_ev", "eps"])?;
    for (x, v) in xis.iter().zip(&values) {
        table::write_row(&mut buf, &[*x, v.eps])?;
    }
    sink(cli, &cfg).write(&buf)
}

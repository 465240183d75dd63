//! Dielectric permittivity on the imaginary frequency axis, ε(iξ).
//!
//! Frequencies are carried as photon energies (`Energy`, usually quoted in
//! eV). The Drude and Plasma forms are closed expressions; tabulated data
//! enters either directly as ε(iξ) samples or as an absorption spectrum
//! ε″(ω) pushed through the Kramers–Kronig relation
//!
//! ```text
//! ε(iξ) = 1 + (2/π) ∫₀^∞ ω ε″(ω) / (ω² + ξ²) dω
//! ```

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};
use crate::numerics::quad;
use crate::table;
use crate::units::Energy;

/// Community-standard Drude parameters for gold.
pub const GOLD_OMEGA_P_EV: f64 = 9.0;
pub const GOLD_GAMMA_EV: f64 = 0.035;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrudeParams {
    pub omega_p: Energy,
    pub gamma: Energy,
}

impl DrudeParams {
    pub fn new(omega_p: Energy, gamma: Energy) -> Result<Self> {
        check_positive(omega_p, "omega_p")?;
        check_positive(gamma, "gamma")?;
        Ok(Self { omega_p, gamma })
    }

    pub fn gold() -> Self {
        Self {
            omega_p: Energy::from_ev(GOLD_OMEGA_P_EV),
            gamma: Energy::from_ev(GOLD_GAMMA_EV),
        }
    }

    fn eps(&self, xi_ev: f64) -> f64 {
        let (wp, g) = (self.omega_p.ev(), self.gamma.ev());
        1.0 + wp * wp / (xi_ev * (xi_ev + g))
    }
}

fn check_positive(e: Energy, name: &str) -> Result<()> {
    if e.si() > 0.0 && e.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {} eV", e.ev())))
    }
}

/// ε(iξ) samples with a Drude extension below the first sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPermittivity {
    /// (ξ in eV, ε), ξ strictly increasing, ε ≥ 1 and non-increasing.
    samples: Vec<(f64, f64)>,
    pub low_freq_extension: DrudeParams,
}

impl TabulatedPermittivity {
    pub fn new(samples: Vec<(Energy, f64)>, low_freq_extension: DrudeParams) -> Result<Self> {
        let samples: Vec<(f64, f64)> = samples.into_iter().map(|(x, e)| (x.ev(), e)).collect();
        let mut bad = Vec::new();
        for (i, &(xi, eps)) in samples.iter().enumerate() {
            let line = i as u64 + 1;
            if !(xi > 0.0) || !xi.is_finite() {
                bad.push(RowError { line, message: format!("xi must be positive, got {xi}") });
            }
            if !(eps >= 1.0) || !eps.is_finite() {
                bad.push(RowError { line, message: format!("eps must be >= 1, got {eps}") });
            }
            if i > 0 {
                let (px, pe) = samples[i - 1];
                if !(xi > px) {
                    bad.push(RowError { line, message: "xi must be strictly increasing".into() });
                }
                if eps > pe {
                    bad.push(RowError { line, message: "eps must be non-increasing in xi".into() });
                }
            }
        }
        if samples.is_empty() {
            return Err(Error::Empty("permittivity table".into()));
        }
        if !bad.is_empty() {
            return Err(Error::InvalidRows(bad));
        }
        Ok(Self {
            samples,
            low_freq_extension,
        })
    }

    /// Reads the `xi_ev, eps` format.
    pub fn from_reader<R: Read>(reader: R, low_freq_extension: DrudeParams) -> Result<Self> {
        let rows = table::read_rows(reader, &["xi_ev", "eps"], "permittivity table")?;
        let mut samples = Vec::with_capacity(rows.len());
        let mut bad = Vec::new();
        for row in &rows {
            match (row.float(0, "xi_ev"), row.float(1, "eps")) {
                (Ok(x), Ok(e)) => samples.push((Energy::from_ev(x), e)),
                (Err(e), _) | (_, Err(e)) => bad.push(e),
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidRows(bad));
        }
        Self::new(samples, low_freq_extension).map_err(|e| relabel_rows(e, &rows))
    }

    pub fn load(path: impl AsRef<Path>, low_freq_extension: DrudeParams) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, low_freq_extension)
    }

    pub fn samples(&self) -> impl Iterator<Item = (Energy, f64)> + '_ {
        self.samples.iter().map(|&(x, e)| (Energy::from_ev(x), e))
    }

    fn eval(&self, xi_ev: f64) -> f64 {
        let first = self.samples[0];
        let last = self.samples[self.samples.len() - 1];
        if xi_ev < first.0 {
            return self.low_freq_extension.eps(xi_ev);
        }
        if xi_ev > last.0 {
            let wp = self.low_freq_extension.omega_p.ev();
            return 1.0 + wp * wp / (xi_ev * xi_ev);
        }
        let i = self
            .samples
            .partition_point(|&(x, _)| x <= xi_ev)
            .saturating_sub(1)
            .min(self.samples.len().saturating_sub(2));
        if self.samples.len() == 1 {
            return first.1;
        }
        let (x0, e0) = self.samples[i];
        let (x1, e1) = self.samples[i + 1];
        let t = (xi_ev.ln() - x0.ln()) / (x1.ln() - x0.ln());
        (e0.ln() + t * (e1.ln() - e0.ln())).exp()
    }
}

/// Maps validation errors indexed by sample position back to file lines.
fn relabel_rows(err: Error, rows: &[table::Row]) -> Error {
    match err {
        Error::InvalidRows(bad) => Error::InvalidRows(
            bad.into_iter()
                .map(|r| RowError {
                    line: rows.get(r.line as usize - 1).map_or(r.line, |row| row.line),
                    message: r.message,
                })
                .collect(),
        ),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaterialModel {
    PerfectConductor,
    Plasma { omega_p: Energy },
    Drude { omega_p: Energy, gamma: Energy },
    Tabulated(TabulatedPermittivity),
}

impl MaterialModel {
    pub fn plasma(omega_p: Energy) -> Result<Self> {
        check_positive(omega_p, "omega_p")?;
        Ok(MaterialModel::Plasma { omega_p })
    }

    pub fn drude(omega_p: Energy, gamma: Energy) -> Result<Self> {
        let p = DrudeParams::new(omega_p, gamma)?;
        Ok(MaterialModel::Drude {
            omega_p: p.omega_p,
            gamma: p.gamma,
        })
    }

    pub fn gold_drude() -> Self {
        let p = DrudeParams::gold();
        MaterialModel::Drude {
            omega_p: p.omega_p,
            gamma: p.gamma,
        }
    }

    pub fn gold_plasma() -> Self {
        MaterialModel::Plasma {
            omega_p: Energy::from_ev(GOLD_OMEGA_P_EV),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MaterialModel::PerfectConductor => "perfect",
            MaterialModel::Plasma { .. } => "plasma",
            MaterialModel::Drude { .. } => "drude",
            MaterialModel::Tabulated(_) => "tabulated",
        }
    }

    /// One-line description for file headers.
    pub fn describe(&self) -> String {
        match self {
            MaterialModel::PerfectConductor => "perfect conductor".into(),
            MaterialModel::Plasma { omega_p } => format!("plasma omega_p={} eV", omega_p.ev()),
            MaterialModel::Drude { omega_p, gamma } => {
                format!("drude omega_p={} eV gamma={} eV", omega_p.ev(), gamma.ev())
            }
            MaterialModel::Tabulated(t) => format!(
                "tabulated ({} samples, drude extension omega_p={} eV gamma={} eV)",
                t.samples.len(),
                t.low_freq_extension.omega_p.ev(),
                t.low_freq_extension.gamma.ev()
            ),
        }
    }
}

/// ε(iξ) for a dielectric model. The perfect conductor has no finite
/// permittivity and is handled by the Lifshitz code through unit reflection
/// coefficients.
pub fn eps_imag_axis(model: &MaterialModel, xi: Energy) -> Result<f64> {
    let x = xi.ev();
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("xi must be positive, got {x} eV")));
    }
    Ok(match model {
        MaterialModel::PerfectConductor => {
            return Err(Error::UnsupportedModel(
                "perfect conductor has no finite permittivity; use unit reflection coefficients".into(),
            ))
        }
        MaterialModel::Plasma { omega_p } => {
            let wp = omega_p.ev();
            1.0 + wp * wp / (x * x)
        }
        MaterialModel::Drude { omega_p, gamma } => DrudeParams {
            omega_p: *omega_p,
            gamma: *gamma,
        }
        .eps(x),
        MaterialModel::Tabulated(t) => t.eval(x),
    })
}

/// Absorption spectrum ε″(ω) on the real axis.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalAbsorptionTable {
    /// (ω in eV, ε″), strictly increasing ω, ε″ > 0.
    rows: Vec<(f64, f64)>,
}

impl OpticalAbsorptionTable {
    pub fn new(rows: Vec<(Energy, f64)>) -> Result<Self> {
        let rows: Vec<(f64, f64)> = rows.into_iter().map(|(w, e)| (w.ev(), e)).collect();
        if rows.is_empty() {
            return Err(Error::Empty("optical table".into()));
        }
        let mut bad = Vec::new();
        for (i, &(w, e)) in rows.iter().enumerate() {
            let line = i as u64 + 1;
            if !(w > 0.0) || !w.is_finite() {
                bad.push(RowError { line, message: format!("omega must be positive, got {w}") });
            }
            if !(e > 0.0) || !e.is_finite() {
                bad.push(RowError { line, message: format!("eps_imag must be positive, got {e}") });
            }
            if i > 0 && !(w > rows[i - 1].0) {
                bad.push(RowError { line, message: "omega must be strictly increasing".into() });
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidRows(bad));
        }
        Ok(Self { rows })
    }

    /// Reads the `omega_ev, eps_imag` format.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let rows = table::read_rows(reader, &["omega_ev", "eps_imag"], "optical table")?;
        let mut data = Vec::with_capacity(rows.len());
        let mut bad = Vec::new();
        for row in &rows {
            match (row.float(0, "omega_ev"), row.float(1, "eps_imag")) {
                (Ok(w), Ok(e)) => data.push((Energy::from_ev(w), e)),
                (Err(e), _) | (_, Err(e)) => bad.push(e),
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidRows(bad));
        }
        Self::new(data).map_err(|e| relabel_rows(e, &rows))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Tabulate an analytic ε″(ω) on a log-spaced grid.
    pub fn sample<F: Fn(f64) -> f64>(eps_imag: F, omega_min: Energy, omega_max: Energy, n: usize) -> Result<Self> {
        let (lo, hi) = (omega_min.ev().ln(), omega_max.ev().ln());
        let rows = (0..n)
            .map(|i| {
                let w = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
                (Energy::from_ev(w), eps_imag(w))
            })
            .collect();
        Self::new(rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn eps_imag_at(&self, s: f64) -> f64 {
        // s = ln ω inside the table; log-log linear interpolation.
        let n = self.rows.len();
        let i = self
            .rows
            .partition_point(|&(w, _)| w.ln() <= s)
            .saturating_sub(1)
            .min(n - 2);
        let (w0, e0) = self.rows[i];
        let (w1, e1) = self.rows[i + 1];
        let t = (s - w0.ln()) / (w1.ln() - w0.ln());
        (e0.ln() + t * (e1.ln() - e0.ln())).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KkOptions {
    /// Relaxation rate of the Drude tail attached below the first row. Its
    /// plasma frequency is chosen so ε″ is continuous at the first row.
    pub extension_gamma: Energy,
    pub rel_tol: f64,
}

impl Default for KkOptions {
    fn default() -> Self {
        Self {
            extension_gamma: Energy::from_ev(GOLD_GAMMA_EV),
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KkValue {
    pub eps: f64,
    /// Upper bound on the neglected contribution above the last row,
    /// assuming ε″ falls at least as fast as ω⁻³ there.
    pub truncation_estimate: f64,
}

/// ε(iξ) from an absorption table by Kramers–Kronig quadrature.
pub fn kk_transform(table: &OpticalAbsorptionTable, xi: Energy, opts: &KkOptions) -> Result<KkValue> {
    let x = xi.ev();
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("xi must be positive, got {x} eV")));
    }
    if table.rows.is_empty() {
        return Err(Error::Empty("optical table".into()));
    }
    let (w_first, e_first) = table.rows[0];
    let (w_last, e_last) = table.rows[table.rows.len() - 1];

    // Drude tail below the table, matched to the first row:
    // ε″_D(ω) = ωp² γ / (ω (ω² + γ²)).
    let g = opts.extension_gamma.ev();
    let wp2 = e_first * w_first * (w_first * w_first + g * g) / g;
    let mut breaks = vec![0.0];
    for b in [g, x] {
        if b < w_first {
            breaks.push(b);
        }
    }
    breaks.push(w_first);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let low = quad::integrate_breaks(
        |w| wp2 * g / ((w * w + g * g) * (w * w + x * x)),
        &breaks,
        0.0,
        opts.rel_tol * 1e-2,
    );

    let mid = if table.rows.len() >= 2 {
        let s_breaks: Vec<f64> = table.rows.iter().map(|(w, _)| w.ln()).collect();
        quad::integrate_breaks(
            |s| {
                let w = s.exp();
                w * w * table.eps_imag_at(s) / (w * w + x * x)
            },
            &s_breaks,
            0.0,
            opts.rel_tol * 1e-2,
        )
        .value
    } else {
        0.0
    };

    let truncation_estimate = 2.0 / PI * e_last / 3.0;
    log::debug!(
        "kk_transform: xi={x} eV, neglected tail above {w_last} eV bounded by {truncation_estimate:e}"
    );
    Ok(KkValue {
        eps: 1.0 + 2.0 / PI * (low.value + mid),
        truncation_estimate,
    })
}

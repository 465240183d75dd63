//! χ² comparison of force data against theory curves.

use std::io::Write;

use serde::Serialize;

use crate::dataset::ForceDataset;
use crate::error::{Error, Result};
use crate::model::ForceModel;
use crate::numerics::spline::CubicSpline;
use crate::table;
use crate::units::{Distance, Force};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub d_um: f64,
    /// (F − theory)/σ.
    pub resid_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chi2Report {
    pub chi2: f64,
    pub dof: u32,
    pub reduced: f64,
    pub p_value: f64,
    pub residuals: Vec<Residual>,
}

/// Upper tail P(X ≥ x) of the χ² distribution with `k` degrees of freedom.
pub fn chi2_sf(x: f64, k: u32) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("chi2_sf needs x >= 0, got {x}")));
    }
    if k == 0 {
        return Err(Error::domain("chi2_sf needs k >= 1"));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let h = 0.5 * x;
    if k % 2 == 0 {
        // e^{−h} Σ_{j<k/2} h^j / j!
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..k / 2 {
            term *= h / j as f64;
            sum += term;
        }
        // Keep e^{−h} out of the loop but avoid overflow of the sum at
        // large h by working in logs when needed.
        if sum.is_finite() {
            return Ok(((-h).exp() * sum).clamp(0.0, 1.0));
        }
        let mut log_sum = f64::NEG_INFINITY;
        let mut log_term = 0.0;
        for j in 0..k / 2 {
            if j > 0 {
                log_term += h.ln() - (j as f64).ln();
            }
            log_sum = log_add(log_sum, log_term);
        }
        return Ok((log_sum - h).exp().clamp(0.0, 1.0));
    }
    Ok(gamma_q_half_integer(k, h).clamp(0.0, 1.0))
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln Γ(k/2) for odd k, from Γ(½) = √π and Γ(a + 1) = aΓ(a).
fn ln_gamma_half_odd(k: u32) -> f64 {
    let mut acc = 0.5 * std::f64::consts::PI.ln();
    let mut a = 0.5f64;
    for _ in 0..(k - 1) / 2 {
        acc += a.ln();
        a += 1.0;
    }
    acc
}

/// Regularized upper incomplete gamma Q(k/2, x) for odd k.
fn gamma_q_half_integer(k: u32, x: f64) -> f64 {
    let a = 0.5 * k as f64;
    let log_prefactor = a * x.ln() - x - ln_gamma_half_odd(k);
    if x < a + 1.0 {
        // P(a, x) = e^{−x} x^a / Γ(a) Σ xⁿ / (a (a+1) … (a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        1.0 - (log_prefactor + sum.ln()).exp()
    } else {
        // Continued fraction, modified Lentz.
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (log_prefactor + h.ln()).exp()
    }
}

/// χ² of `data` against `theory`, with dof = n − `fitted_params`.
pub fn chi_squared<M: ForceModel + ?Sized>(data: &ForceDataset, theory: &M, fitted_params: u32) -> Result<Chi2Report> {
    let theory_values = data
        .points()
        .iter()
        .map(|p| theory.force(p.d_mid).map_err(|e| Error::at_point(p.d_mid.um(), e)))
        .collect::<Result<Vec<Force>>>()?;
    report(data, &theory_values, fitted_params)
}

fn report(data: &ForceDataset, theory: &[Force], fitted_params: u32) -> Result<Chi2Report> {
    let n = data.len() as u32;
    if n <= fitted_params {
        return Err(Error::domain(format!(
            "{n} points leave no degrees of freedom after {fitted_params} fitted parameters"
        )));
    }
    let dof = n - fitted_params;
    let residuals: Vec<Residual> = data
        .points()
        .iter()
        .zip(theory)
        .map(|(p, t)| Residual {
            d_um: p.d_mid.um(),
            resid_sigma: (p.force - *t) / p.sigma,
        })
        .collect();
    let chi2: f64 = residuals.iter().map(|r| r.resid_sigma * r.resid_sigma).sum();
    Ok(Chi2Report {
        chi2,
        dof,
        reduced: chi2 / dof as f64,
        p_value: chi2_sf(chi2, dof)?,
        residuals,
    })
}

/// Theory read back from a curve file, interpolated by a natural cubic
/// spline in d. Evaluation outside the tabulated range is an error.
#[derive(Debug, Clone)]
pub struct TheoryCurve {
    spline: CubicSpline,
    pub column: String,
}

impl TheoryCurve {
    pub fn new(points: &[(Distance, Force)], column: impl Into<String>) -> Result<Self> {
        let x = points.iter().map(|(d, _)| d.um()).collect();
        let y = points.iter().map(|(_, f)| f.udyne()).collect();
        let spline = CubicSpline::natural(x, y)
            .ok_or_else(|| Error::domain("theory curve needs at least three strictly increasing distances"))?;
        Ok(Self {
            spline,
            column: column.into(),
        })
    }

    /// Reads `d_um` and the named force column (μdyne). Without a name,
    /// `F_apparent_udyne` is used when present, else `F_udyne`.
    pub fn from_reader<R: std::io::Read>(reader: R, column: Option<&str>) -> Result<Self> {
        let (header, rows) = table::read_table(reader, "theory curve")?;
        let find = |name: &str| header.iter().position(|h| h == name);
        let d_col = find("d_um").ok_or_else(|| Error::domain("theory curve has no d_um column"))?;
        let name = match column {
            Some(c) => c.to_owned(),
            None => ["F_apparent_udyne", "F_udyne"]
                .into_iter()
                .find(|c| find(c).is_some())
                .ok_or_else(|| Error::domain("theory curve has neither F_apparent_udyne nor F_udyne"))?
                .to_owned(),
        };
        let f_col = find(&name).ok_or_else(|| {
            Error::domain(format!("theory curve has no column '{name}' (columns: {})", header.join(", ")))
        })?;
        let mut points = Vec::with_capacity(rows.len());
        let mut bad = Vec::new();
        for row in &rows {
            match (row.float(d_col, "d_um"), row.float(f_col, &name)) {
                (Ok(d), Ok(f)) => points.push((Distance::from_um(d), Force::from_udyne(f))),
                (Err(e), _) | (_, Err(e)) => bad.push(e),
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidRows(bad));
        }
        Self::new(&points, name)
    }
}

impl ForceModel for TheoryCurve {
    fn force(&self, d: Distance) -> Result<Force> {
        let (lo, hi) = self.spline.domain();
        // Absorb the last-bit differences of a μm → m → μm round trip.
        let slack = 1e-12 * hi.abs();
        let t = d.um();
        let t = if t < lo && t >= lo - slack {
            lo
        } else if t > hi && t <= hi + slack {
            hi
        } else {
            t
        };
        self.spline.eval(t).map(Force::from_udyne).ok_or_else(|| {
            Error::domain(format!("d = {} um outside theory range [{lo}, {hi}] um", d.um()))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub delta_um: f64,
    pub report: Chi2Report,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaScan {
    pub points: Vec<ScanPoint>,
    /// Index of the smallest χ²; ties go to the smaller δ.
    pub argmin: usize,
}

impl DeltaScan {
    pub fn best(&self) -> &ScanPoint {
        &self.points[self.argmin]
    }
}

/// χ² for each δ on `grid`, with one degree of freedom taken by δ.
/// `family(δ)` builds the theory for that δ.
pub fn scan_delta<F, M>(data: &ForceDataset, family: F, grid: &[Distance]) -> Result<DeltaScan>
where
    F: Fn(Distance) -> Result<M> + Sync,
    M: ForceModel,
{
    use rayon::prelude::*;
    if grid.is_empty() {
        return Err(Error::Empty("delta grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("delta grid must be strictly ascending"));
    }
    if grid[0].si() < 0.0 {
        return Err(Error::domain("delta grid must be non-negative"));
    }
    let points = grid
        .par_iter()
        .map(|&delta| {
            let theory = family(delta)?;
            Ok(ScanPoint {
                delta_um: delta.um(),
                report: chi_squared(data, &theory, 1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut argmin = 0;
    for (i, p) in points.iter().enumerate() {
        if p.report.chi2 < points[argmin].report.chi2 {
            argmin = i;
        }
    }
    Ok(DeltaScan { points, argmin })
}

pub const SCAN_COLUMNS: [&str; 4] = ["delta_um", "chi2", "reduced", "p"];

pub fn write_scan_csv<W: Write>(w: &mut W, scan: &DeltaScan, comments: &[String]) -> Result<()> {
    table::write_header(w, comments, &SCAN_COLUMNS)?;
    for p in &scan.points {
        table::write_row(w, &[p.delta_um, p.report.chi2, p.report.reduced, p.report.p_value])?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinningCheck {
    pub excess: Force,
    /// Observed scatter was below expectation; excess reported as 0.
    pub inverted: bool,
}

/// √(σ_obs² − σ_exp²), the scatter not explained by binning statistics.
pub fn binning_consistency(sigma_observed: Force, sigma_expected: Force) -> BinningCheck {
    let (o, e) = (sigma_observed.si(), sigma_expected.si());
    if !(o >= e && e >= 0.0) {
        log::warn!(
            "observed scatter {} udyne is below expected {} udyne",
            sigma_observed.udyne(),
            sigma_expected.udyne()
        );
        return BinningCheck {
            excess: Force::ZERO,
            inverted: true,
        };
    }
    BinningCheck {
        excess: Force::from_si(((o - e) * (o + e)).sqrt()),
        inverted: false,
    }
}

//! Electrostatic calibration background F_e = β/(d − d₀) and the total force
//! F_e + F_c.

use serde::{Deserialize, Serialize};

use crate::dataset::ForceDataset;
use crate::error::{Error, Result};
use crate::model::{ForceModel, SumModel};
use crate::numerics::roots::brent;
use crate::units::{Distance, Force, ForceCurvature, ForceGradient};

/// 1 μdyne·μm in N·m.
pub const UDYNE_UM: f64 = 1e-17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrostaticBackground {
    /// β in N·m.
    pub beta: f64,
    pub d0: Distance,
    pub beta_sigma: f64,
}

impl ElectrostaticBackground {
    /// β = 0 is accepted so that a background can be switched off.
    pub fn new(beta: f64, d0: Distance, beta_sigma: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::domain(format!("beta must be non-negative, got {beta} N m")));
        }
        if !d0.is_finite() {
            return Err(Error::domain("d0 must be finite"));
        }
        if !(beta_sigma >= 0.0) || !beta_sigma.is_finite() {
            return Err(Error::domain(format!("beta_sigma must be non-negative, got {beta_sigma}")));
        }
        Ok(Self { beta, d0, beta_sigma })
    }

    pub fn from_udyne_um(beta: f64, d0: Distance) -> Result<Self> {
        Self::new(beta * UDYNE_UM, d0, 0.0)
    }

    pub fn beta_udyne_um(&self) -> f64 {
        self.beta / UDYNE_UM
    }

    fn gap(&self, d: Distance) -> Result<f64> {
        let x = d.si() - self.d0.si();
        if !(x > 0.0) {
            return Err(Error::domain(format!(
                "d = {} um must exceed d0 = {} um",
                d.um(),
                self.d0.um()
            )));
        }
        Ok(x)
    }
}

pub fn electrostatic_force(bg: &ElectrostaticBackground, d: Distance) -> Result<Force> {
    bg.force(d)
}

impl ForceModel for ElectrostaticBackground {
    fn force(&self, d: Distance) -> Result<Force> {
        Ok(Force::from_si(self.beta / self.gap(d)?))
    }

    fn gradient(&self, d: Distance) -> Option<Result<ForceGradient>> {
        Some(self.gap(d).map(|x| ForceGradient::from_si(-self.beta / (x * x))))
    }

    fn curvature(&self, d: Distance) -> Option<Result<ForceCurvature>> {
        Some(self.gap(d).map(|x| ForceCurvature::from_si(2.0 * self.beta / (x * x * x))))
    }
}

/// F_e(d) + F_c(d).
pub fn total_force<C: ForceModel + ?Sized>(bg: &ElectrostaticBackground, casimir: &C, d: Distance) -> Result<Force> {
    Ok(bg.force(d)? + casimir.force(d)?)
}

/// The total force as a model, keeping analytic derivatives when the
/// Casimir part has them.
pub fn total_model<C: ForceModel>(bg: ElectrostaticBackground, casimir: C) -> SumModel<ElectrostaticBackground, C> {
    SumModel {
        first: bg,
        second: casimir,
    }
}

#[derive(Clone, Copy)]
pub struct FitOptions<'a> {
    /// Only points with d strictly above this are used.
    pub d_min: Distance,
    pub d0_bounds: (Distance, Distance),
    pub fit_d0: bool,
    /// Subtracted from the data before fitting; `None` fits the raw forces.
    pub casimir_subtractor: Option<&'a dyn ForceModel>,
}

impl Default for FitOptions<'_> {
    fn default() -> Self {
        Self {
            d_min: Distance::from_um(2.0),
            d0_bounds: (Distance::from_um(-1.0), Distance::from_um(1.0)),
            fit_d0: true,
            casimir_subtractor: None,
        }
    }
}

impl std::fmt::Debug for FitOptions<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FitOptions")
            .field("d_min", &self.d_min)
            .field("d0_bounds", &self.d0_bounds)
            .field("fit_d0", &self.fit_d0)
            .field("casimir_subtractor", &self.casimir_subtractor.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub beta_udyne_um: f64,
    pub beta_sigma: f64,
    pub d0_um: f64,
    pub d0_sigma: f64,
    pub chi2: f64,
    pub dof: i64,
    pub points_used: usize,
    pub d0_at_bound: bool,
}

impl FitReport {
    pub fn background(&self) -> ElectrostaticBackground {
        ElectrostaticBackground {
            beta: self.beta_udyne_um * UDYNE_UM,
            d0: Distance::from_um(self.d0_um),
            beta_sigma: self.beta_sigma * UDYNE_UM,
        }
    }
}

/// Weighted points in μm / μdyne.
struct Design {
    d: Vec<f64>,
    f: Vec<f64>,
    w: Vec<f64>,
}

impl Design {
    /// Closed-form β at fixed d₀ and the resulting χ².
    fn profile(&self, d0: f64) -> (f64, f64) {
        let (mut sfx, mut sxx) = (0.0, 0.0);
        for i in 0..self.d.len() {
            let x = 1.0 / (self.d[i] - d0);
            sfx += self.w[i] * self.f[i] * x;
            sxx += self.w[i] * x * x;
        }
        let beta = sfx / sxx;
        (beta, self.chi2(beta, d0))
    }

    fn chi2(&self, beta: f64, d0: f64) -> f64 {
        (0..self.d.len())
            .map(|i| {
                let r = self.f[i] - beta / (self.d[i] - d0);
                self.w[i] * r * r
            })
            .sum()
    }

    /// dχ²/dd₀ along the profile (β held at its optimum).
    fn slope(&self, d0: f64) -> f64 {
        let (beta, _) = self.profile(d0);
        let mut s = 0.0;
        for i in 0..self.d.len() {
            let x = 1.0 / (self.d[i] - d0);
            s += self.w[i] * (self.f[i] - beta * x) * x * x;
        }
        -2.0 * beta * s
    }
}

/// Weighted least squares for (β, d₀) on points with d > `d_min`.
///
/// β is profiled out in closed form; d₀ is located by a grid scan over its
/// bounds followed by Brent's method on the profile slope. The covariance is
/// the inverse of JᵀWJ at the optimum.
pub fn fit_background(data: &ForceDataset, opts: &FitOptions) -> Result<FitReport> {
    let mut design = Design {
        d: Vec::new(),
        f: Vec::new(),
        w: Vec::new(),
    };
    for p in data.points().iter().filter(|p| p.d_mid > opts.d_min) {
        let mut f = p.force;
        if let Some(sub) = opts.casimir_subtractor {
            f = f - sub.force(p.d_mid).map_err(|e| Error::at_point(p.d_mid.um(), e))?;
        }
        design.d.push(p.d_mid.um());
        design.f.push(f.udyne());
        design.w.push(p.sigma.udyne().powi(-2));
    }
    let n = design.d.len();
    if n < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points beyond {} um, found {n}",
            opts.d_min.um()
        )));
    }
    let d_first = design.d.iter().cloned().fold(f64::INFINITY, f64::min);
    let d_last = design.d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if d_last - d_first <= 1e-12 * d_last {
        return Err(Error::Fit("all distances are equal; d0 and beta are degenerate".into()));
    }

    let (d0, at_bound) = if opts.fit_d0 {
        let lo = opts.d0_bounds.0.um();
        let hi = opts.d0_bounds.1.um().min(d_first - 1e-3 * (d_last - d_first));
        if !(lo < hi) {
            return Err(Error::Fit(format!("empty d0 search interval [{lo}, {hi}] um")));
        }
        locate_d0(&design, lo, hi)
    } else {
        (0.0, false)
    };
    if at_bound {
        log::warn!("d0 search stopped at a bound ({d0} um)");
    }
    let (beta, chi2) = design.profile(d0);

    // JᵀWJ with J = [∂f/∂β, ∂f/∂d₀] = [x, βx²].
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let x = 1.0 / (design.d[i] - d0);
        let (jb, jd) = (x, beta * x * x);
        a += design.w[i] * jb * jb;
        b += design.w[i] * jb * jd;
        c += design.w[i] * jd * jd;
    }
    let (beta_var, d0_var) = if opts.fit_d0 {
        let det = a * c - b * b;
        if !(det > 0.0) {
            return Err(Error::Fit("singular normal matrix".into()));
        }
        (c / det, a / det)
    } else {
        (1.0 / a, 0.0)
    };
    let params = if opts.fit_d0 { 2 } else { 1 };
    Ok(FitReport {
        beta_udyne_um: beta,
        beta_sigma: beta_var.sqrt(),
        d0_um: d0,
        d0_sigma: d0_var.sqrt(),
        chi2,
        dof: n as i64 - params,
        points_used: n,
        d0_at_bound: at_bound,
    })
}

fn locate_d0(design: &Design, lo: f64, hi: f64) -> (f64, bool) {
    const GRID: usize = 400;
    let at = |i: usize| lo + (hi - lo) * i as f64 / GRID as f64;
    let (mut best, mut best_chi2) = (0, f64::INFINITY);
    for i in 0..=GRID {
        let (_, chi2) = design.profile(at(i));
        if chi2 < best_chi2 {
            best = i;
            best_chi2 = chi2;
        }
    }
    let (a, b) = (at(best.saturating_sub(1)), at((best + 1).min(GRID)));
    let (sa, sb) = (design.slope(a), design.slope(b));
    if sa < 0.0 && sb > 0.0 {
        if let Some(root) = brent(|x| design.slope(x), a, b, 1e-15, 200) {
            return (root, false);
        }
    }
    if best == 0 && sa >= 0.0 {
        return (lo, true);
    }
    if best == GRID && sb <= 0.0 {
        return (hi, true);
    }
    (at(best), false)
}

//! Brute-force check of the fluctuation corrections: synthesize a
//! band-limited δ(t), average F(d + δ(t)) directly, and compare with the
//! second-order predictions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corrections::{apparent_force, inflated_sigma};
use crate::derivative::{gradient_of, curvature_of, third_and_fourth, StepPolicy};
use crate::error::{Error, Result};
use crate::model::ForceModel;
use crate::units::{Distance, Force};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    WhiteInBand,
    /// Power spectral density ∝ 1/f inside the band.
    OneOverFInBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessSpec {
    pub target_rms: Distance,
    /// Hz
    pub f_lo: f64,
    /// Hz
    pub f_hi: f64,
    pub kind: ProcessKind,
    pub seed: u64,
    /// s
    pub dt: f64,
    /// s
    pub duration: f64,
}

impl Default for ProcessSpec {
    fn default() -> Self {
        Self {
            target_rms: Distance::from_nm(20.0),
            f_lo: 0.01,
            f_hi: 5.0,
            kind: ProcessKind::WhiteInBand,
            seed: 0,
            dt: 0.05,
            duration: 2000.0,
        }
    }
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= self.dt) || !self.duration.is_finite() {
            return Err(Error::domain(format!("duration {} s is shorter than dt", self.duration)));
        }
        let nyquist = 0.5 / self.dt;
        if !(self.f_lo >= 0.0 && self.f_lo < self.f_hi && self.f_hi <= nyquist) {
            return Err(Error::domain(format!(
                "band must satisfy 0 <= f_lo < f_hi <= {nyquist} Hz, got [{}, {}]",
                self.f_lo, self.f_hi
            )));
        }
        if !(self.target_rms.si() >= 0.0) || !self.target_rms.is_finite() {
            return Err(Error::domain("target_rms must be non-negative"));
        }
        if self.f_lo > 0.0 && self.duration < 100.0 / self.f_lo {
            log::warn!(
                "duration {} s covers fewer than 100 cycles of f_lo = {} Hz",
                self.duration,
                self.f_lo
            );
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// A realization of δ(t) in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub values: Vec<f64>,
    pub dt: f64,
    /// Number of positive-frequency bins that carry power.
    pub in_band_bins: usize,
}

impl Series {
    pub fn rms(&self) -> Distance {
        let n = self.values.len() as f64;
        Distance::from_si((self.values.iter().map(|x| x * x).sum::<f64>() / n).sqrt())
    }

    /// Independent samples the series is worth: two per in-band bin, at
    /// most one per sample.
    pub fn n_effective(&self) -> usize {
        self.values.len().min(2 * self.in_band_bins)
    }
}

/// Gaussian amplitudes on the in-band bins of the discrete spectrum,
/// inverse transform, mean removed, rescaled to the exact target rms.
pub fn sample_process(spec: &ProcessSpec) -> Result<Series> {
    spec.validate()?;
    let n = spec.n_samples();
    let df = 1.0 / (n as f64 * spec.dt);
    // Bins 1..n/2, excluding a Nyquist bin whose amplitude would have to be real.
    let last = if n % 2 == 0 { n / 2 - 1 } else { n / 2 };
    let band: Vec<usize> = (1..=last)
        .filter(|&k| {
            let f = k as f64 * df;
            f >= spec.f_lo && f <= spec.f_hi
        })
        .collect();
    if band.is_empty() {
        return Err(Error::domain(format!(
            "no frequency bins fall in [{}, {}] Hz at resolution {df} Hz",
            spec.f_lo, spec.f_hi
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    for &k in &band {
        let weight = match spec.kind {
            ProcessKind::WhiteInBand => 1.0,
            ProcessKind::OneOverFInBand => 1.0 / (k as f64 * df).sqrt(),
        };
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        spectrum[k] = Complex::new(re * weight, im * weight);
        spectrum[n - k] = spectrum[k].conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);

    let mut values: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    let rms = (values.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    let scale = if rms > 0.0 { spec.target_rms.si() / rms } else { 0.0 };
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(Series {
        values,
        dt: spec.dt,
        in_band_bins: band.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeAverageReport {
    pub force_at_d: Force,
    pub mean_force: Force,
    pub se_mean: Force,
    /// N²
    pub variance_force: f64,
    pub analytic_mean: Force,
    pub analytic_excess_sigma: Force,
    pub realized_rms: Distance,
    pub n_samples: usize,
    pub n_effective: usize,
}

impl TimeAverageReport {
    pub fn mc_sigma(&self) -> Force {
        Force::from_si(self.variance_force.sqrt())
    }
}

/// Mean and variance of F(d + δₜ) over the series, next to the
/// second-order predictions at the realized rms.
pub fn time_averaged_force<M: ForceModel + ?Sized>(model: &M, d: Distance, series: &Series) -> Result<TimeAverageReport> {
    use rayon::prelude::*;
    let n = series.values.len();
    if n == 0 {
        return Err(Error::Empty("fluctuation series".into()));
    }
    let (worst_idx, worst) = series
        .values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let breakdown = |e: Option<Error>| {
        Error::domain(format!(
            "fluctuations leave the force domain: worst sample {worst_idx} at d + delta = {} um{}",
            (d.si() + worst) * 1e6,
            e.map(|e| format!(" ({e})")).unwrap_or_default()
        ))
    };
    if !(d.si() + worst > 0.0) {
        return Err(breakdown(None));
    }
    let f0 = model.force(d)?;
    let shifts = series
        .values
        .par_iter()
        .map(|&x| model.force(Distance::from_si(d.si() + x)).map(|f| (f - f0).si()))
        .collect::<Result<Vec<f64>>>()
        .map_err(|e| breakdown(Some(e)))?;
    let mean_shift = shifts.iter().sum::<f64>() / n as f64;
    let variance = shifts.iter().map(|s| (s - mean_shift).powi(2)).sum::<f64>() / n as f64;
    let n_eff = series.n_effective();
    let rms = series.rms();
    let g = gradient_of(model, d, StepPolicy::Default)?;
    Ok(TimeAverageReport {
        force_at_d: f0,
        mean_force: f0 + Force::from_si(mean_shift),
        se_mean: Force::from_si((variance / n_eff as f64).sqrt()),
        variance_force: variance,
        analytic_mean: apparent_force(model, d, rms, StepPolicy::Default)?,
        analytic_excess_sigma: inflated_sigma(Force::ZERO, g, rms)?,
        realized_rms: rms,
        n_samples: n,
        n_effective: n_eff,
    })
}

/// Largest δ_rms/d for which the scatter comparison is meaningful.
pub const SCATTER_DELTA_LIMIT: f64 = 0.1;
pub const SCATTER_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialVerdict {
    pub seed: u64,
    pub d_um: f64,
    pub delta_rms_um: f64,
    /// μdyne
    pub mc_mean: f64,
    pub analytic_mean: f64,
    pub se_mean: f64,
    /// Fourth-order allowance |F⁗|δ⁴/8.
    pub mean_allowance: f64,
    pub mc_sigma: f64,
    pub analytic_sigma: f64,
    pub scatter_allowance: f64,
    pub verdicts: Verdicts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdicts {
    pub mean: bool,
    pub scatter: bool,
    /// δ/d beyond the expansion's range, or samples outside the domain.
    pub expansion_breakdown: bool,
}

impl Verdicts {
    pub fn pass(&self) -> bool {
        self.mean && self.scatter && !self.expansion_breakdown
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationRecord {
    pub trials: Vec<TrialVerdict>,
    pub mean_passes: usize,
    pub scatter_passes: usize,
    pub passes: usize,
}

/// Local derivative scale used for the truncation allowances.
struct Higher {
    f1: f64,
    f2: f64,
    f3: f64,
    f4: f64,
}

fn higher_derivatives<M: ForceModel + ?Sized>(model: &M, d: Distance, delta: Distance) -> Result<Higher> {
    let h = Distance::from_si((0.05 * d.si()).min(delta.si().max(1e-3 * d.si())));
    let (f3, f4) = third_and_fourth(model, d, h)?;
    Ok(Higher {
        f1: gradient_of(model, d, StepPolicy::Default)?.si(),
        f2: curvature_of(model, d, StepPolicy::Default)?.si(),
        f3,
        f4,
    })
}

fn single_trial<M: ForceModel + ?Sized>(model: &M, d: Distance, spec: &ProcessSpec) -> Result<TrialVerdict> {
    let series = sample_process(spec)?;
    let delta = spec.target_rms;
    let ratio = delta / d;
    let mut verdict = TrialVerdict {
        seed: spec.seed,
        d_um: d.um(),
        delta_rms_um: delta.um(),
        mc_mean: f64::NAN,
        analytic_mean: f64::NAN,
        se_mean: f64::NAN,
        mean_allowance: f64::NAN,
        mc_sigma: f64::NAN,
        analytic_sigma: f64::NAN,
        scatter_allowance: f64::NAN,
        verdicts: Verdicts {
            mean: false,
            scatter: false,
            expansion_breakdown: ratio > SCATTER_DELTA_LIMIT * (1.0 + 1e-9),
        },
    };
    let report = match time_averaged_force(model, d, &series) {
        Ok(r) => r,
        Err(Error::Domain(msg)) => {
            log::info!("seed {}: {msg}", spec.seed);
            verdict.verdicts.expansion_breakdown = true;
            return Ok(verdict);
        }
        Err(e) => return Err(e),
    };
    let dr = report.realized_rms.si();
    let hd = higher_derivatives(model, d, report.realized_rms)?;
    let mean_allowance = hd.f4.abs() * dr.powi(4) / 8.0;
    let mc_shift = (report.mean_force - report.force_at_d).si();
    let an_shift = (report.analytic_mean - report.force_at_d).si();
    let mean_ok = (mc_shift - an_shift).abs() <= 4.0 * report.se_mean.si() + mean_allowance;

    let linear = hd.f1.abs() * dr;
    let next = (hd.f1 * hd.f1 * dr * dr + (0.5 * hd.f2 * hd.f2 + hd.f1 * hd.f3) * dr.powi(4)).max(0.0).sqrt();
    let scatter_allowance = (next - linear).abs();
    let mc_sigma = report.mc_sigma().si();
    let scatter_ok = (mc_sigma - linear).abs() <= SCATTER_REL_TOL * linear + scatter_allowance;

    let u = |x: f64| Force::from_si(x).udyne();
    verdict.mc_mean = report.mean_force.udyne();
    verdict.analytic_mean = report.analytic_mean.udyne();
    verdict.se_mean = report.se_mean.udyne();
    verdict.mean_allowance = u(mean_allowance);
    verdict.mc_sigma = u(mc_sigma);
    verdict.analytic_sigma = report.analytic_excess_sigma.udyne();
    verdict.scatter_allowance = u(scatter_allowance);
    verdict.verdicts.mean = mean_ok;
    verdict.verdicts.scatter = scatter_ok && !verdict.verdicts.expansion_breakdown;
    Ok(verdict)
}

/// Independent trials with seeds `spec.seed`, `spec.seed + 1`, …
///
/// Each trial checks the Monte Carlo mean against F + ½F″δ² within four
/// standard errors plus the fourth-order term, and the Monte Carlo scatter
/// against |F′|δ within 5% plus the next-order term of the scatter.
pub fn verify_second_order<M: ForceModel + ?Sized>(
    model: &M,
    d: Distance,
    spec: &ProcessSpec,
    trials: usize,
) -> Result<VerificationRecord> {
    use rayon::prelude::*;
    if trials < 10 {
        return Err(Error::domain(format!("need at least 10 trials, got {trials}")));
    }
    spec.validate()?;
    let trials = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let s = ProcessSpec {
                seed: spec.seed.wrapping_add(i),
                ..*spec
            };
            single_trial(model, d, &s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationRecord {
        mean_passes: trials.iter().filter(|t| t.verdicts.mean).count(),
        scatter_passes: trials.iter().filter(|t| t.verdicts.scatter).count(),
        passes: trials.iter().filter(|t| t.verdicts.pass()).count(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::ElectrostaticBackground;
    use crate::model::FnModel;
    use crate::units::ForceCurvature;

    fn um(x: f64) -> Distance {
        Distance::from_um(x)
    }

    #[test]
    fn series_properties() {
        for kind in [ProcessKind::WhiteInBand, ProcessKind::OneOverFInBand] {
            let spec = ProcessSpec {
                kind,
                seed: 7,
                ..ProcessSpec::default()
            };
            let s = sample_process(&spec).unwrap();
            assert_eq!(s.values.len(), 40_000);
            let mean = s.values.iter().sum::<f64>() / s.values.len() as f64;
            assert!(mean.abs() <= 1e-12 * spec.target_rms.si());
            assert!((s.rms() / spec.target_rms - 1.0).abs() < 1e-12);
            assert_eq!(s, sample_process(&spec).unwrap());
        }
    }

    #[test]
    fn spectrum_confined_to_band() {
        let spec = ProcessSpec {
            f_lo: 0.5,
            f_hi: 2.0,
            duration: 400.0,
            ..ProcessSpec::default()
        };
        let s = sample_process(&spec).unwrap();
        let n = s.values.len();
        let mut buf: Vec<Complex<f64>> = s.values.iter().map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let df = 1.0 / (n as f64 * spec.dt);
        let (mut inside, mut outside) = (0.0, 0.0);
        for (k, c) in buf.iter().enumerate() {
            let f = k.min(n - k) as f64 * df;
            if f >= spec.f_lo && f <= spec.f_hi {
                inside += c.norm_sqr();
            } else {
                outside += c.norm_sqr();
            }
        }
        assert!(outside / (inside + outside) < 1e-10, "{}", outside / inside);
    }

    #[test]
    fn empty_band_rejected() {
        let spec = ProcessSpec {
            f_lo: 0.001,
            f_hi: 0.002,
            duration: 100.0,
            ..ProcessSpec::default()
        };
        assert!(sample_process(&spec).is_err());
        let bad = ProcessSpec {
            f_hi: 20.0,
            ..ProcessSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    struct Quadratic;

    impl ForceModel for Quadratic {
        fn force(&self, d: Distance) -> Result<Force> {
            Ok(Force::from_udyne(d.um() * d.um()))
        }
        fn curvature(&self, _d: Distance) -> Option<Result<ForceCurvature>> {
            Some(Ok(ForceCurvature::from_udyne_per_um2(2.0)))
        }
    }

    #[test]
    fn quadratic_mean_is_exact() {
        let spec = ProcessSpec {
            target_rms: um(0.05),
            ..ProcessSpec::default()
        };
        let s = sample_process(&spec).unwrap();
        let r = time_averaged_force(&Quadratic, um(1.0), &s).unwrap();
        let shift = (r.mean_force - r.force_at_d).udyne();
        assert!((shift - r.realized_rms.um().powi(2)).abs() < 1e-12);
        let rec = verify_second_order(&Quadratic, um(1.0), &spec, 10).unwrap();
        assert_eq!(rec.passes, 10);
    }

    #[test]
    fn linear_has_no_shift() {
        let lin = FnModel(|d: Distance| Ok(Force::from_udyne(3.0 * d.um())));
        let s = sample_process(&ProcessSpec::default()).unwrap();
        let r = time_averaged_force(&lin, um(1.0), &s).unwrap();
        assert!((r.mean_force - r.force_at_d).udyne().abs() <= 3.0 * r.se_mean.udyne() + 1e-12);
    }

    #[test]
    fn inverse_law_regimes() {
        let bg = ElectrostaticBackground::from_udyne_um(215.0, Distance::ZERO).unwrap();
        let ok = ProcessSpec {
            target_rms: um(0.1),
            ..ProcessSpec::default()
        };
        let rec = verify_second_order(&bg, um(1.0), &ok, 10).unwrap();
        assert!(rec.passes >= 9, "{:?}", rec.trials);
        let wide = ProcessSpec {
            target_rms: um(0.5),
            ..ProcessSpec::default()
        };
        let rec = verify_second_order(&bg, um(1.0), &wide, 10).unwrap();
        assert_eq!(rec.passes, 0);
        assert!(rec.trials.iter().all(|t| t.verdicts.expansion_breakdown));
    }

    #[test]
    fn deterministic_records() {
        let bg = ElectrostaticBackground::from_udyne_um(215.0, Distance::ZERO).unwrap();
        let spec = ProcessSpec {
            target_rms: um(0.05),
            seed: 99,
            ..ProcessSpec::default()
        };
        let a = verify_second_order(&bg, um(1.0), &spec, 10).unwrap();
        let b = verify_second_order(&bg, um(1.0), &spec, 10).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(verify_second_order(&bg, um(1.0), &spec, 9).is_err());
    }
}

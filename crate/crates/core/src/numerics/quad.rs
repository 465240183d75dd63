//! Adaptive Gauss–Kronrod and Gauss–Laguerre quadrature.

use std::collections::BinaryHeap;
use std::sync::OnceLock;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// 7-point Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// One 15-point Kronrod panel with its embedded 7-point Gauss estimate.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_PANELS: usize = 2000;

/// Globally adaptive Gauss–Kronrod over an initial partition given by
/// `breaks` (ascending, at least two points). Always bisects the panel with
/// the largest error estimate.
pub fn integrate_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> QuadResult {
    assert!(breaks.len() >= 2);
    let mut heap = BinaryHeap::with_capacity(64);
    for w in breaks.windows(2) {
        let (value, error) = gk15(&mut f, w[0], w[1]);
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    let (mut value, mut error) = totals(&heap);
    loop {
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target || heap.len() >= MAX_PANELS {
            let (value, error) = totals(&heap);
            return QuadResult {
                value,
                error,
                converged: error <= abs_tol.max(rel_tol * value.abs()),
            };
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point.
            error -= worst.error;
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
}

/// Sum in interval order so the result does not depend on heap layout.
fn totals(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    let mut panels: Vec<&Panel> = heap.iter().collect();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    panels
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
}

/// Adaptive integral over a finite interval.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> QuadResult {
    integrate_breaks(f, &[a, b], abs_tol, rel_tol)
}

/// Integral over `[a, ∞)` for integrands that decay at least like `e^{-(x-a)}`
/// times a low-order polynomial. The tail beyond `a + 255` is dropped.
pub fn integrate_exp_tail<F: FnMut(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> QuadResult {
    let mut breaks = vec![a];
    let mut width = 1.0;
    let mut edge = a;
    while edge - a < 255.0 {
        edge += width;
        breaks.push(edge);
        width *= 2.0;
    }
    integrate_breaks(f, &breaks, 0.0, rel_tol)
}

/// Gauss–Laguerre rule for `∫₀^∞ e^{-x} g(x) dx`.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLaguerre {
    /// Nodes by Newton iteration on the three-term recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut z = 0.0;
        for i in 0..n {
            z = match i {
                0 => 3.0 / (1.0 + 2.4 * nf),
                1 => z + 15.0 / (1.0 + 2.5 * nf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + ((1.0 + 2.55 * ai) / (1.9 * ai)) * (z - nodes[i - 2])
                }
            };
            let mut pp = 0.0;
            let mut p2 = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = nf * (p1 - p2) / z;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs() {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = -1.0 / (pp * nf * p2);
        }
        Self { nodes, weights }
    }

    /// Shared 64-point rule.
    pub fn standard() -> &'static GaussLaguerre {
        static RULE: OnceLock<GaussLaguerre> = OnceLock::new();
        RULE.get_or_init(|| GaussLaguerre::new(64))
    }

    /// `∫₀^∞ e^{-x} g(x) dx`.
    pub fn integrate_weighted<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    /// `∫₀^∞ h(x) dx`, applying the rule to `e^{x} h(x)`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut h: F) -> f64 {
        self.integrate_weighted(|x| x.exp() * h(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_and_oscillatory() {
        let r = integrate(|x| x * x, 0.0, 1.0, 0.0, 1e-12);
        assert!((r.value - 1.0 / 3.0).abs() < 1e-15);
        let r = integrate(|x| (20.0 * x).sin(), 0.0, PI, 1e-12, 1e-10);
        assert!(r.value.abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn bose_integrals() {
        // ∫ x³/(e^x − 1) = π⁴/15
        let r = integrate_exp_tail(|x| if x == 0.0 { 0.0 } else { x.powi(3) / x.exp_m1() }, 0.0, 1e-12);
        assert!((r.value / (PI.powi(4) / 15.0) - 1.0).abs() < 1e-12, "{r:?}");
        // ∫ x ln(1 − e^{-x}) = −ζ(3)
        let zeta3 = 1.202_056_903_159_594_2;
        let r = integrate_exp_tail(|x| x * (-(-x).exp_m1()).ln(), 0.0, 1e-12);
        assert!((r.value + zeta3).abs() < 1e-11, "{r:?}");
    }

    #[test]
    fn laguerre_exact_for_polynomials() {
        let rule = GaussLaguerre::new(20);
        // ∫ e^{-x} x^k = k!
        let mut fact = 1.0;
        for k in 0..30 {
            if k > 0 {
                fact *= k as f64;
            }
            let v = rule.integrate_weighted(|x| x.powi(k));
            assert!((v / fact - 1.0).abs() < 1e-11, "k={k}: {v} vs {fact}");
        }
        let sum: f64 = GaussLaguerre::standard().weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

//! Numerical building blocks: compensated summation and one-dimensional quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Neumaier's compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut s = NeumaierSum::new();
    s.extend(iter);
    s.value()
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Value and absolute error estimate of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub abs_err: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of panels kept by the adaptive scheme.
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_panels: 4000,
        }
    }
}

impl QuadOptions {
    pub fn abs(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            ..Self::default()
        }
    }
}

// Kronrod 15-point abscissae; odd indices are the Gauss 7-point nodes.
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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Adaptive Gauss-Kronrod (7/15) quadrature over the pieces delimited by `points`.
///
/// `points` must be sorted; consecutive duplicates are skipped. Panels are bisected in order of
/// decreasing error estimate until the summed estimate meets the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, points: &[f64], opts: QuadOptions) -> Result<Quadrature> {
    let mut heap = BinaryHeap::new();
    let mut frozen_val = NeumaierSum::new();
    let mut frozen_err = 0.0;
    let mut evals = 0usize;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let (value, err) = gk15(&f, a, b);
        evals += 15;
        heap.push(Panel { a, b, value, err });
    }
    loop {
        let mut total = frozen_val;
        let mut err = frozen_err;
        for p in heap.iter() {
            total.add(p.value);
            err += p.err;
        }
        let value = total.value();
        let tol = opts.abs_tol.max(opts.rel_tol * value.abs());
        if err <= tol || heap.is_empty() {
            if !value.is_finite() {
                return Err(Error::Numerical {
                    msg: "integrand produced a non-finite value".into(),
                    err_est: err,
                });
            }
            return Ok(Quadrature {
                value,
                abs_err: err,
                evals,
            });
        }
        if heap.len() >= opts.max_panels {
            return Err(Error::Numerical {
                msg: format!(
                    "adaptive quadrature exhausted {} panels, value {value:e}",
                    opts.max_panels
                ),
                err_est: err,
            });
        }
        let worst = heap.pop().expect("heap not empty");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) || (worst.b - worst.a) <= 64.0 * f64::EPSILON * m.abs() {
            // Panel at the resolution limit: keep its contribution as final.
            frozen_val.add(worst.value);
            frozen_err += worst.err;
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, m);
        let (v2, e2) = gk15(&f, m, worst.b);
        evals += 30;
        heap.push(Panel {
            a: worst.a,
            b: m,
            value: v1,
            err: e1,
        });
        heap.push(Panel {
            a: m,
            b: worst.b,
            value: v2,
            err: e2,
        });
    }
}

/// Tanh-sinh quadrature on `[a, b]`.
///
/// The integrand receives the offsets `(x - a, b - x)`, both computed without cancellation, so
/// integrable endpoint singularities can be evaluated accurately close to the endpoint.
pub fn tanh_sinh<F: Fn(f64, f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature> {
    const MAX_LEVEL: u32 = 12;
    const T_MAX: f64 = 6.5;
    let c = 0.5 * (b - a);
    if c <= 0.0 {
        return Ok(Quadrature {
            value: 0.0,
            abs_err: 0.0,
            evals: 0,
        });
    }
    let mut evals = 0usize;
    // Contribution of the node pair at +t and -t.
    let pair = |t: f64, evals: &mut usize| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let e2u = (2.0 * u).exp();
        // 1 - tanh(u) = 2 / (e^{2u} + 1)
        let near = c * 2.0 / (e2u + 1.0);
        let far = 2.0 * c - near;
        let cu = u.cosh();
        let w = c * FRAC_PI_2 * t.cosh() / (cu * cu);
        if !(w > 0.0) || near <= 0.0 {
            return 0.0;
        }
        if t == 0.0 {
            *evals += 1;
            return w * f(c, c);
        }
        *evals += 2;
        w * (f(far, near) + f(near, far))
    };
    let mut h = 1.0;
    let mut sum = NeumaierSum::new();
    sum.add(pair(0.0, &mut evals));
    let mut k = 1;
    while k as f64 * h <= T_MAX {
        sum.add(pair(k as f64 * h, &mut evals));
        k += 1;
    }
    let mut estimate = h * sum.value();
    for level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= T_MAX {
            sum.add(pair(k as f64 * h, &mut evals));
            k += 2;
        }
        let next = h * sum.value();
        let diff = (next - estimate).abs();
        estimate = next;
        if level >= 3 && diff <= tol {
            return Ok(Quadrature {
                value: estimate,
                abs_err: diff,
                evals,
            });
        }
    }
    Err(Error::Numerical {
        msg: format!("tanh-sinh quadrature did not converge, value {estimate:e}"),
        err_est: f64::NAN,
    })
}

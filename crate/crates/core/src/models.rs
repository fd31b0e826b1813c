//! Process families, their covariance kernels and covariance grids.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{check_index, check_k, domain, Error, Result};
use crate::numeric::{integrate, QuadOptions, Quadrature};

/// Absolute tolerance of the angular quadratures behind the AFBM kernel.
pub const AFBM_QUAD_TOL: f64 = 1e-10;

/// Directional Hurst index `H(θ)`, π-periodic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HurstProfile {
    Constant {
        h: f64,
    },
    /// `values[i]` holds on `[breakpoints[i], breakpoints[i+1])`; the last piece wraps around to
    /// `breakpoints[0] + π`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// `H(θ) = h_min + (h2/2) sin²u + (h3/6) sin³u cos u` with `u = θ − θ*`, so that
    /// `H(θ*) = h_min`, `H'(θ*) = 0`, `H''(θ*) = h2`, `H'''(θ*) = h3`.
    Smooth {
        theta_star: f64,
        h_min: f64,
        h2: f64,
        h3: f64,
    },
}

fn reduce_pi(theta: f64) -> f64 {
    let r = theta.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

impl HurstProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            HurstProfile::Constant { h } => check_index("profile value", *h),
            HurstProfile::PiecewiseConstant { breakpoints, values } => {
                if breakpoints.is_empty() || breakpoints.len() != values.len() {
                    return Err(domain(
                        "piecewise profile needs as many values as breakpoints (at least one)",
                    ));
                }
                for w in breakpoints.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(domain("profile breakpoints must be strictly increasing"));
                    }
                }
                if breakpoints[0] < 0.0 || *breakpoints.last().unwrap() >= PI {
                    return Err(domain("profile breakpoints must lie in [0, π)"));
                }
                for v in values {
                    check_index("profile value", *v)?;
                }
                Ok(())
            }
            HurstProfile::Smooth {
                theta_star,
                h_min,
                h2,
                h3,
            } => {
                check_index("h_min", *h_min)?;
                if !(*theta_star >= 0.0 && *theta_star < PI) {
                    return Err(domain("theta_star must lie in [0, π)"));
                }
                if !(*h2 > 0.0) {
                    return Err(domain("second derivative at the minimum must be positive"));
                }
                if !(h3.abs() < 6.0 * h2) {
                    return Err(domain(
                        "|H'''(θ*)| must be below 6 H''(θ*) for θ* to be the unique minimizer",
                    ));
                }
                // Unimodal over one period: rising from θ* to the maximum, then falling back.
                let m = 8192;
                let vals: Vec<f64> = (0..=m)
                    .map(|i| self.eval(theta_star + PI * i as f64 / m as f64))
                    .collect();
                if vals.iter().any(|&v| v >= 1.0) {
                    return Err(domain("smooth profile exceeds 1"));
                }
                let top = (0..=m)
                    .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))
                    .expect("nonempty grid");
                let rising = vals[..=top].windows(2).all(|w| w[1] > w[0]);
                let falling = vals[top..m].windows(2).all(|w| w[1] < w[0]);
                if !rising || !falling || top == 0 || top == m {
                    return Err(domain("smooth profile must be unimodal with its minimum at θ*"));
                }
                Ok(())
            }
        }
    }

    /// `H(θ)`.
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            HurstProfile::Constant { h } => *h,
            HurstProfile::PiecewiseConstant { breakpoints, values } => {
                let t = reduce_pi(theta);
                // Last breakpoint <= t, wrapping to the final piece when t precedes the first one.
                match breakpoints.iter().rposition(|&b| b <= t) {
                    Some(i) => values[i],
                    None => *values.last().unwrap(),
                }
            }
            HurstProfile::Smooth {
                theta_star,
                h_min,
                h2,
                h3,
            } => {
                let (s, c) = (theta - theta_star).sin_cos();
                h_min + 0.5 * h2 * s * s + h3 / 6.0 * s * s * s * c
            }
        }
    }

    /// `H'(θ)` for the smooth profile (zero elsewhere, away from jumps).
    pub fn derivative(&self, theta: f64) -> f64 {
        match self {
            HurstProfile::Smooth {
                theta_star, h2, h3, ..
            } => {
                let (s, c) = (theta - theta_star).sin_cos();
                h2 * s * c + h3 / 6.0 * (3.0 * s * s * c * c - s.powi(4))
            }
            _ => 0.0,
        }
    }

    /// Essential infimum `H̲`.
    pub fn h_min(&self) -> f64 {
        match self {
            HurstProfile::Constant { h } => *h,
            HurstProfile::PiecewiseConstant { values, .. } => {
                values.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            HurstProfile::Smooth { h_min, .. } => *h_min,
        }
    }

    /// Pieces `(start, end, H)` covering `[0, π)` on which the profile is constant.
    pub fn pieces(&self) -> Option<Vec<(f64, f64, f64)>> {
        match self {
            HurstProfile::Constant { h } => Some(vec![(0.0, PI, *h)]),
            HurstProfile::PiecewiseConstant { breakpoints, values } => {
                let m = breakpoints.len();
                let mut out = Vec::with_capacity(m + 1);
                if breakpoints[0] > 0.0 {
                    out.push((0.0, breakpoints[0], values[m - 1]));
                }
                for i in 0..m {
                    let end = if i + 1 < m { breakpoints[i + 1] } else { PI };
                    out.push((breakpoints[i], end, values[i]));
                }
                Some(out)
            }
            HurstProfile::Smooth { .. } => None,
        }
    }
}

/// One of the three process families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ProcessModel {
    Fbm {
        hurst: f64,
    },
    Bifbm {
        hurst: f64,
        k: f64,
        t1: f64,
        t2: f64,
    },
    AfbmSegment {
        profile: HurstProfile,
        length: f64,
        eps: f64,
        omega: f64,
    },
}

impl ProcessModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessModel::Fbm { hurst } => check_index("hurst", *hurst),
            ProcessModel::Bifbm { hurst, k, t1, t2 } => {
                check_index("hurst", *hurst)?;
                check_k(*k)?;
                if !(*t1 > 0.0 && t2 > t1) {
                    return Err(domain("bifBm requires 0 < t1 < t2"));
                }
                Ok(())
            }
            ProcessModel::AfbmSegment {
                profile,
                length,
                eps,
                omega,
            } => {
                profile.validate()?;
                if !(*length > 0.0) {
                    return Err(domain("segment length must be positive"));
                }
                if !(*eps >= 0.0) {
                    return Err(domain("segment offset eps must be nonnegative"));
                }
                if !(*omega >= 0.0 && *omega < 2.0 * PI) {
                    return Err(domain("omega must lie in [0, 2π)"));
                }
                if let HurstProfile::Smooth { theta_star, .. } = profile {
                    let d = reduce_pi(omega - theta_star - FRAC_PI_2);
                    if d.min(PI - d) < 1e-12 {
                        return Err(domain(
                            "segment orthogonal to the minimizing direction (ω = θ* + π/2 mod π)",
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ProcessModel::Fbm { .. } => "fbm",
            ProcessModel::Bifbm { .. } => "bifbm",
            ProcessModel::AfbmSegment { .. } => "afbm",
        }
    }

    /// Whether increments are stationary and `X_0 = 0`, so that the path is the cumulative sum
    /// of a stationary sequence.
    pub fn is_stationary_from_origin(&self) -> bool {
        match self {
            ProcessModel::Fbm { .. } => true,
            ProcessModel::Bifbm { .. } => false,
            ProcessModel::AfbmSegment { eps, .. } => *eps == 0.0,
        }
    }

    /// Prepare the kernel evaluator (runs the angular quadratures for AFBM).
    pub fn kernel(&self) -> Result<Kernel> {
        self.validate()?;
        Ok(match self {
            ProcessModel::Fbm { hurst } => Kernel::Fbm { h: *hurst },
            ProcessModel::Bifbm { hurst, k, t1, t2 } => Kernel::Bifbm {
                h: *hurst,
                k: *k,
                t1: *t1,
                t2: *t2,
            },
            ProcessModel::AfbmSegment { eps, .. } => Kernel::Afbm {
                weights: AfbmWeights::new(self)?,
                eps: *eps,
            },
        })
    }
}

/// `½(|s|^{2H} + |t|^{2H} − |s−t|^{2H})`.
pub fn fbm_cov(s: f64, t: f64, h: f64) -> Result<f64> {
    check_index("hurst", h)?;
    let e = 2.0 * h;
    Ok(0.5 * (s.abs().powf(e) + t.abs().powf(e) - (s - t).abs().powf(e)))
}

/// `2^{−K}((s^{2H} + t^{2H})^K − |s−t|^{2HK})` for `s, t ≥ 0`.
pub fn bifbm_cov(s: f64, t: f64, h: f64, k: f64) -> Result<f64> {
    check_index("hurst", h)?;
    check_k(k)?;
    if s < 0.0 || t < 0.0 {
        return Err(domain("bifBm covariance needs nonnegative times"));
    }
    let e = 2.0 * h;
    Ok(((s.powf(e) + t.powf(e)).powf(k) - (s - t).abs().powf(e * k)) / 2f64.powf(k))
}

/// bifBm observed on `[T1, T2]` and reindexed by `τ(t) = (T2 − T1)t + T1`.
pub fn bifbm_segment_cov(s: f64, t: f64, model: &ProcessModel) -> Result<f64> {
    match model {
        ProcessModel::Bifbm { hurst, k, t1, t2 } => {
            if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
                return Err(domain("unit times must lie in [0,1]"));
            }
            model.validate()?;
            let tau = |x: f64| (t2 - t1) * x + t1;
            bifbm_cov(tau(s), tau(t), *hurst, *k)
        }
        _ => Err(domain("bifbm_segment_cov needs a bifBm model")),
    }
}

/// `C(d, H) = (π^{(d+1)/2} Γ(H+½) / (H Γ(2H) sin(Hπ) Γ(H+d/2)))^{1/2}`.
pub fn c_norm(d: u32, h: f64) -> Result<f64> {
    if d < 1 {
        return Err(domain("dimension must be at least 1"));
    }
    check_index("hurst", h)?;
    let df = d as f64;
    let num = PI.powf((df + 1.0) / 2.0) * gamma(h + 0.5);
    let den = h * gamma(2.0 * h) * (h * PI).sin() * gamma(h + df / 2.0);
    Ok((num / den).sqrt())
}

/// `Λ(θ) = C(1,H(θ)) L^{2H(θ)} |cos(θ−ω)|^{2H(θ)} / (8 C(2,H̲)²)`.
pub fn lambda_weight(theta: f64, model: &ProcessModel) -> Result<f64> {
    match model {
        ProcessModel::AfbmSegment {
            profile,
            length,
            omega,
            ..
        } => {
            let c2 = c_norm(2, profile.h_min())?;
            lambda_with(profile, *length, *omega, c2 * c2, theta)
        }
        _ => Err(domain("lambda_weight needs an AFBM segment model")),
    }
}

fn lambda_with(profile: &HurstProfile, length: f64, omega: f64, c2sq: f64, theta: f64) -> Result<f64> {
    let h = profile.eval(theta);
    let e = 2.0 * h;
    let cos = (theta - omega).cos().abs();
    Ok(c_norm(1, h)? * length.powf(e) * cos.powf(e) / (8.0 * c2sq))
}

/// Angle in `[0, π)` where `|cos(θ − ω)|` vanishes.
fn singular_angle(omega: f64) -> f64 {
    reduce_pi(omega + FRAC_PI_2)
}

/// Precomputed angular data of an AFBM segment kernel.
#[derive(Debug, Clone)]
pub struct AfbmWeights {
    profile: HurstProfile,
    length: f64,
    omega: f64,
    c2sq: f64,
    /// `(H_i, ∫_{piece} Λ)` for piecewise-constant profiles.
    pieces: Option<Vec<(f64, f64)>>,
}

impl AfbmWeights {
    pub fn new(model: &ProcessModel) -> Result<Self> {
        let ProcessModel::AfbmSegment {
            profile,
            length,
            omega,
            ..
        } = model
        else {
            return Err(domain("AFBM weights need an AFBM segment model"));
        };
        let c2 = c_norm(2, profile.h_min())?;
        let mut w = AfbmWeights {
            profile: profile.clone(),
            length: *length,
            omega: *omega,
            c2sq: c2 * c2,
            pieces: None,
        };
        if let Some(pieces) = profile.pieces() {
            let mut out = Vec::with_capacity(pieces.len());
            for (a, b, h) in pieces {
                let q = w.integrate_lambda(a, b, |_| 1.0, 1e-13)?;
                out.push((h, q.value));
            }
            w.pieces = Some(out);
        }
        Ok(w)
    }

    pub fn profile(&self) -> &HurstProfile {
        &self.profile
    }

    pub fn lambda(&self, theta: f64) -> f64 {
        lambda_with(&self.profile, self.length, self.omega, self.c2sq, theta)
            .expect("profile validated")
    }

    /// Breakpoints of `[a, b]` at the cosine singularity and the profile minimum.
    fn split_points(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = vec![a, b];
        let s = singular_angle(self.omega);
        for cand in [s, s + PI, s - PI] {
            if cand > a && cand < b {
                pts.push(cand);
            }
        }
        if let HurstProfile::Smooth { theta_star, .. } = self.profile {
            for cand in [theta_star, theta_star + PI, theta_star - PI] {
                if cand > a && cand < b {
                    pts.push(cand);
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts
    }

    /// `∫_a^b Λ(θ) g(H(θ)) dθ` with splitting at the singular angle.
    pub fn integrate_lambda<G: Fn(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        g: G,
        tol: f64,
    ) -> Result<Quadrature> {
        let pts = self.split_points(a, b);
        integrate(
            |th| {
                let h = self.profile.eval(th);
                self.lambda(th) * g(h)
            },
            &pts,
            QuadOptions::abs(tol),
        )
    }

    /// `∫_0^π Λ(θ) g(H(θ)) dθ`, exact per-piece sum for piecewise-constant profiles.
    pub fn angular_integral<G: Fn(f64) -> f64>(&self, g: G, tol: f64) -> Result<Quadrature> {
        match &self.pieces {
            Some(p) => Ok(Quadrature {
                value: p.iter().map(|(h, w)| w * g(*h)).sum(),
                abs_err: 0.0,
                evals: 0,
            }),
            None => self.integrate_lambda(0.0, PI, g, tol),
        }
    }

    /// `F(x) = 4 ∫_0^π Λ(θ) x^{2H(θ)} dθ` for `x ≥ 0`.
    pub fn f_value(&self, x: f64) -> Result<Quadrature> {
        if x == 0.0 {
            return Ok(Quadrature {
                value: 0.0,
                abs_err: 0.0,
                evals: 0,
            });
        }
        let q = self.angular_integral(|h| x.powf(2.0 * h), AFBM_QUAD_TOL / 4.0)?;
        Ok(Quadrature {
            value: 4.0 * q.value,
            abs_err: 4.0 * q.abs_err,
            evals: q.evals,
        })
    }

    /// Pieces `(H_i, ∫Λ)` when the profile is piecewise constant.
    pub fn piece_weights(&self) -> Option<&[(f64, f64)]> {
        self.pieces.as_deref()
    }

    pub fn c2sq(&self) -> f64 {
        self.c2sq
    }
}

/// AFBM segment covariance `4∫_0^π Λ(θ)[|s+ε|^{2H} + |t+ε|^{2H} − |s−t|^{2H}] dθ` with its
/// quadrature error estimate.
pub fn afbm_segment_cov_quad(
    s: f64,
    t: f64,
    model: &ProcessModel,
    tol: f64,
) -> Result<Quadrature> {
    let ProcessModel::AfbmSegment { eps, .. } = model else {
        return Err(domain("afbm_segment_cov needs an AFBM segment model"));
    };
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return Err(domain("unit times must lie in [0,1]"));
    }
    model.validate()?;
    let w = AfbmWeights::new(model)?;
    let (a, b, c) = ((s + eps).abs(), (t + eps).abs(), (s - t).abs());
    let bracket = |h: f64| {
        let e = 2.0 * h;
        a.powf(e) + b.powf(e) - c.powf(e)
    };
    let q = match w.piece_weights() {
        Some(_) => w.angular_integral(bracket, tol / 4.0)?,
        None => w.integrate_lambda(0.0, PI, bracket, tol / 4.0)?,
    };
    Ok(Quadrature {
        value: 4.0 * q.value,
        abs_err: 4.0 * q.abs_err,
        evals: q.evals,
    })
}

pub fn afbm_segment_cov(s: f64, t: f64, model: &ProcessModel) -> Result<f64> {
    afbm_segment_cov_quad(s, t, model, AFBM_QUAD_TOL).map(|q| q.value)
}

/// A prepared covariance kernel.
#[derive(Debug, Clone)]
pub enum Kernel {
    Fbm { h: f64 },
    Bifbm { h: f64, k: f64, t1: f64, t2: f64 },
    Afbm { weights: AfbmWeights, eps: f64 },
}

/// `R(j/n, k/n) = sep[j] + sep[k] + lag[|j−k|] + smooth(j, k)`; second differences of the
/// separable part vanish identically.
pub(crate) struct Decomposition {
    pub sep: Vec<f64>,
    pub lag: Vec<f64>,
    pub smooth: Option<Box<dyn Fn(usize, usize) -> f64 + Send + Sync>>,
}

impl Kernel {
    /// `R(s, t)` on unit times.
    pub fn cov(&self, s: f64, t: f64) -> Result<f64> {
        match self {
            Kernel::Fbm { h } => fbm_cov(s, t, *h),
            Kernel::Bifbm { h, k, t1, t2 } => {
                let tau = |x: f64| (t2 - t1) * x + t1;
                bifbm_cov(tau(s), tau(t), *h, *k)
            }
            Kernel::Afbm { weights, eps } => {
                let f = |x: f64| weights.f_value(x).map(|q| q.value);
                Ok(f((s + eps).abs())? + f((t + eps).abs())? - f((s - t).abs())?)
            }
        }
    }

    /// Lag part `lag[l]`, `l = 0..=n`, of the decomposition on the grid `{k/n}`.
    pub fn lag_part(&self, n: usize) -> Result<Vec<f64>> {
        let nf = n as f64;
        match self {
            Kernel::Fbm { h } => Ok((0..=n)
                .map(|l| -0.5 * (l as f64 / nf).powf(2.0 * h))
                .collect()),
            Kernel::Bifbm { h, k, t1, t2 } => {
                let c = 2f64.powf(-k);
                Ok((0..=n)
                    .map(|l| -c * ((t2 - t1) * l as f64 / nf).powf(2.0 * h * k))
                    .collect())
            }
            Kernel::Afbm { weights, .. } => (0..=n)
                .map(|l| weights.f_value(l as f64 / nf).map(|q| -q.value))
                .collect(),
        }
    }

    pub(crate) fn decomposition(&self, n: usize) -> Result<Decomposition> {
        let nf = n as f64;
        let lag = self.lag_part(n)?;
        match self {
            Kernel::Fbm { h } => Ok(Decomposition {
                sep: (0..=n).map(|j| 0.5 * (j as f64 / nf).powf(2.0 * h)).collect(),
                lag,
                smooth: None,
            }),
            Kernel::Bifbm { h, k, t1, t2 } => {
                let c = 2f64.powf(-k);
                let pw: Vec<f64> = (0..=n)
                    .map(|j| ((t2 - t1) * j as f64 / nf + t1).powf(2.0 * h))
                    .collect();
                let k = *k;
                Ok(Decomposition {
                    sep: vec![0.0; n + 1],
                    lag,
                    smooth: Some(Box::new(move |a, b| c * (pw[a] + pw[b]).powf(k))),
                })
            }
            Kernel::Afbm { weights, eps } => {
                let sep = if *eps == 0.0 {
                    lag.iter().map(|v| -v).collect()
                } else {
                    (0..=n)
                        .map(|j| weights.f_value(j as f64 / nf + eps).map(|q| q.value))
                        .collect::<Result<Vec<f64>>>()?
                };
                Ok(Decomposition {
                    sep,
                    lag,
                    smooth: None,
                })
            }
        }
    }
}

/// Covariance of the process on the uniform grid `{k/n : k = 0..=n}`.
pub struct CovGrid {
    n: usize,
    model: ProcessModel,
    entries: Vec<f64>,
    lag: Vec<f64>,
    smooth: Option<Vec<f64>>,
}

impl std::fmt::Debug for CovGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CovGrid")
            .field("n", &self.n)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

/// Largest resolution at which `cov_grid` runs the eigenvalue check automatically.
pub const PSD_CHECK_MAX_N: usize = 512;

/// Tabulate the covariance of `model` on `{k/n}`; grids with `n ≤ 512` are checked for
/// positive semidefiniteness.
pub fn cov_grid(model: &ProcessModel, n: usize) -> Result<CovGrid> {
    let g = cov_grid_unchecked(model, n)?;
    if n <= PSD_CHECK_MAX_N {
        g.check_psd()?;
    }
    Ok(g)
}

/// Like [`cov_grid`] without the eigenvalue check.
pub fn cov_grid_unchecked(model: &ProcessModel, n: usize) -> Result<CovGrid> {
    if n < 4 {
        return Err(domain("grid resolution must be at least 4"));
    }
    let kernel = model.kernel()?;
    let dec = kernel.decomposition(n)?;
    let m = n + 1;
    let mut entries = vec![0.0; m * m];
    let mut smooth = dec.smooth.as_ref().map(|_| vec![0.0; m * m]);
    for j in 0..m {
        for k in 0..=j {
            let mut v = dec.sep[j] + dec.sep[k] + dec.lag[j - k];
            if let (Some(f), Some(sm)) = (dec.smooth.as_ref(), smooth.as_mut()) {
                let s = f(j, k);
                sm[j * m + k] = s;
                sm[k * m + j] = s;
                v += s;
            }
            entries[j * m + k] = v;
            entries[k * m + j] = v;
        }
    }
    Ok(CovGrid {
        n,
        model: model.clone(),
        entries,
        lag: dec.lag,
        smooth,
    })
}

impl CovGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn model(&self) -> &ProcessModel {
        &self.model
    }

    /// Row-major `(n+1)×(n+1)` entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `R(j/n, k/n)`.
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j * (self.n + 1) + k]
    }

    pub fn max_diag(&self) -> f64 {
        (0..=self.n).map(|j| self.get(j, j)).fold(0.0, f64::max)
    }

    pub(crate) fn lag(&self) -> &[f64] {
        &self.lag
    }

    pub(crate) fn smooth(&self) -> Option<&[f64]> {
        self.smooth.as_deref()
    }

    /// Smallest eigenvalue of the grid.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.n + 1;
        let mat = DMatrix::from_row_slice(m, m, &self.entries);
        SymmetricEigen::new(mat).eigenvalues.min()
    }

    /// Symmetry, nonnegative diagonal and `λ_min ≥ −1e−8·max diag`.
    pub fn check_psd(&self) -> Result<()> {
        let m = self.n + 1;
        for j in 0..m {
            if self.get(j, j) < 0.0 {
                return Err(Error::Model(format!("negative variance at grid point {j}")));
            }
            for k in 0..j {
                if self.get(j, k) != self.get(k, j) {
                    return Err(Error::Model("covariance grid is not symmetric".into()));
                }
            }
        }
        let lmin = self.min_eigenvalue();
        let floor = -1e-8 * self.max_diag();
        if lmin < floor {
            return Err(Error::Model(format!(
                "covariance grid is not positive semidefinite: min eigenvalue {lmin:e} < {floor:e}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_eval_wraps() {
        let p = HurstProfile::PiecewiseConstant {
            breakpoints: vec![0.5, 2.0],
            values: vec![0.3, 0.7],
        };
        p.validate().unwrap();
        assert_eq!(p.eval(1.0), 0.3);
        assert_eq!(p.eval(2.5), 0.7);
        assert_eq!(p.eval(0.2), 0.7);
        assert_eq!(p.eval(1.0 + PI), 0.3);
        assert_eq!(p.eval(-PI + 1.0), 0.3);
        let pieces = p.pieces().unwrap();
        assert_eq!(pieces.len(), 3);
        assert_eq!(pieces[0], (0.0, 0.5, 0.7));
    }

    #[test]
    fn smooth_profile_derivative_matches_finite_difference() {
        let p = HurstProfile::Smooth {
            theta_star: 1.0,
            h_min: 0.4,
            h2: 0.6,
            h3: 0.5,
        };
        p.validate().unwrap();
        for &th in &[0.0, 0.7, 1.0, 2.3, 3.0] {
            let fd = (p.eval(th + 1e-6) - p.eval(th - 1e-6)) / 2e-6;
            assert!((fd - p.derivative(th)).abs() < 1e-8);
        }
        let e = 1e-3;
        let second = (p.eval(1.0 + e) - 2.0 * p.eval(1.0) + p.eval(1.0 - e)) / (e * e);
        assert!((second - 0.6).abs() < 1e-5);
        let third = (p.eval(1.0 + 2.0 * e) - 2.0 * p.eval(1.0 + e) + 2.0 * p.eval(1.0 - e)
            - p.eval(1.0 - 2.0 * e))
            / (2.0 * e * e * e);
        assert!((third - 0.5).abs() < 1e-4, "{third}");
    }

    #[test]
    fn smooth_profile_rejects_bad_parameters() {
        let bad = HurstProfile::Smooth {
            theta_star: 1.0,
            h_min: 0.4,
            h2: 0.1,
            h3: 0.9,
        };
        assert!(bad.validate().is_err());
        let too_high = HurstProfile::Smooth {
            theta_star: 1.0,
            h_min: 0.6,
            h2: 1.0,
            h3: 0.0,
        };
        assert!(too_high.validate().is_err());
    }
}

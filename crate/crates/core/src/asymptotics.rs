//! Closed-form asymptotic constants of second-order quadratic variations.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_index, domain, Error, Result};
use crate::models::{c_norm, AfbmWeights, HurstProfile, ProcessModel};
use crate::numeric::{integrate, tanh_sinh, NeumaierSum, QuadOptions};

/// Tail bound target for the lag series.
pub const SERIES_TAIL_TOL: f64 = 1e-12;

/// Width of the band `|γ − 1| < NEAR_ONE` evaluated through the logarithmic branch.
pub const NEAR_ONE: f64 = 1e-6;

const FOURTH_DIFF: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 2.0 {
        Ok(())
    } else {
        Err(domain(format!("gamma must lie in (0,2), got {gamma}")))
    }
}

/// `ρ_γ(l)`: fourth difference of `|x|^{2−γ}` divided by `(γ−2)(γ−1)γ(γ+1)`, logarithmic form at
/// `γ = 1`. Lags 0 and 1 use the same closed form, which has a pole at `γ = 1`.
pub fn rho(gamma: f64, l: usize) -> Result<f64> {
    check_gamma(gamma)?;
    if l >= 3 {
        return Ok(rho_series(gamma, l as f64));
    }
    let xs: Vec<f64> = (0..5).map(|i| (l as f64 + i as f64 - 2.0).abs()).collect();
    let d = gamma - 1.0;
    if l < 2 && d == 0.0 {
        return Err(domain("rho at lags 0 and 1 is singular at gamma = 1"));
    }
    if l >= 2 && d.abs() < NEAR_ONE {
        // N(γ) = Σ c_i x_i^{2−γ} vanishes at γ = 1; expand to second order around it.
        let mut n1 = NeumaierSum::new();
        let mut n2 = NeumaierSum::new();
        for (c, &x) in FOURTH_DIFF.iter().zip(&xs) {
            if x > 0.0 {
                let lx = x.ln();
                n1.add(c * x * lx);
                n2.add(c * x * lx * lx);
            }
        }
        // N(γ) ≈ −N1 (γ−1) + ½ N2 (γ−1)², denominator (γ−1) q(γ).
        let q = (gamma - 2.0) * gamma * (gamma + 1.0);
        return Ok((-n1.value() + 0.5 * n2.value() * d) / q);
    }
    let p = 2.0 - gamma;
    let mut num = NeumaierSum::new();
    for (c, &x) in FOURTH_DIFF.iter().zip(&xs) {
        if x > 0.0 {
            num.add(c * x.powf(p));
        }
    }
    Ok(num.value() / ((gamma - 2.0) * d * gamma * (gamma + 1.0)))
}

/// Expansion `ρ_γ(l) = l^{p} Σ_{k even ≥ 4} [(p−4)…(p−k+1)/k!](2^{k+1} − 8) l^{−k}`, `p = 2 − γ`.
/// Convergent for `l > 2` with terms of one sign, so it avoids both the `γ = 1` singularity and
/// the cancellation of the five-term form.
fn rho_series(gamma: f64, l: f64) -> f64 {
    let p = 2.0 - gamma;
    let inv2 = 1.0 / (l * l);
    // coefficient for k = 4 is (2^5 − 8)/4! = 1
    let mut coef = 1.0 / 24.0; // (p−4)…(p−k+1)/k! with the empty product at k = 4
    let mut pow2 = 32.0; // 2^{k+1}
    let mut lk = inv2 * inv2;
    let mut sum = NeumaierSum::new();
    let mut k = 4.0;
    loop {
        let term = coef * (pow2 - 8.0) * lk;
        sum.add(term);
        if term.abs() <= 1e-18 * sum.value().abs() || k > 200.0 {
            break;
        }
        // advance k -> k + 2
        coef *= (p - k) * (p - k - 1.0) / ((k + 1.0) * (k + 2.0));
        pow2 *= 4.0;
        lk *= inv2;
        k += 2.0;
    }
    l.powf(p) * sum.value()
}

/// `ρ_γ(l)` from its defining quadruple integral, `l ≥ 2`.
///
/// The two inner integrals (over `y` then `x`) are done analytically, leaving
/// `g(z) = F(z+1) − 2F(z) + F(z−1)` with `F(w) = w^{−γ}/(γ(1+γ))` and `z = v − k`. Since the
/// integrand depends on `v` only through `z`, the `(u, v)` integration over
/// `j ≤ u ≤ j+1, u−1 ≤ v ≤ u` carries the triangular weight `1 − |z − l|` on `[l−1, l+1]`,
/// integrated by tanh-sinh on each half (the `l = 2` endpoint is singular).
pub fn rho_numeric(gamma: f64, l: usize) -> Result<f64> {
    check_gamma(gamma)?;
    if l < 2 {
        return Err(domain("rho_numeric needs lag l >= 2"));
    }
    let lf = l as f64;
    let c = 1.0 / (gamma * (1.0 + gamma));
    let big_f = |w: f64| c * w.powf(-gamma);
    // Left half: z = l − 1 + s, weight s; z − 1 = (l − 2) + s computed without cancellation.
    let left = tanh_sinh(
        |s, _| {
            let z = (lf - 1.0) + s;
            // At l = 2 the last term is s·F(s) ∝ s^{1−γ}; keep it finite near s = 0.
            let last = if l == 2 {
                c * s.powf(1.0 - gamma)
            } else {
                s * big_f((lf - 2.0) + s)
            };
            s * (big_f(z + 1.0) - 2.0 * big_f(z)) + last
        },
        0.0,
        1.0,
        1e-13,
    )?;
    // Right half: z = l + s, weight 1 − s = r.
    let right = tanh_sinh(
        |s, r| {
            let z = lf + s;
            r * (big_f(z + 1.0) - 2.0 * big_f(z) + big_f(z - 1.0))
        },
        0.0,
        1.0,
        1e-13,
    )?;
    let err = left.abs_err + right.abs_err;
    if err > 1e-10 {
        return Err(Error::Numerical {
            msg: "rho_numeric missed its tolerance".into(),
            err_est: err,
        });
    }
    Ok(left.value + right.value)
}

/// `K = max_{4 ≤ l ≤ 200} |ρ_γ(l)| l^{2+γ}`.
pub fn rho_decay_constant(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let mut k: f64 = 0.0;
    for l in 4..=200 {
        k = k.max(rho(gamma, l)?.abs() * (l as f64).powf(2.0 + gamma));
    }
    Ok(k)
}

/// Truncated lag series together with its truncation point and tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagSeries {
    pub value: f64,
    pub l_max: usize,
    pub tail_bound: f64,
}

/// Tail bound `K² (L − s)^{−3−2γ} / (3 + 2γ)` for `Σ_{l > L} |ρ(l) ρ(l − s)|`.
pub fn lag_tail_bound(gamma: f64, k: f64, l_max: usize, shift: usize) -> f64 {
    let e = 3.0 + 2.0 * gamma;
    k * k * ((l_max - shift) as f64).powf(-e) / e
}

fn choose_l_max(gamma: f64, k: f64, shift: usize) -> usize {
    let e = 3.0 + 2.0 * gamma;
    let l = (k * k / (e * SERIES_TAIL_TOL)).powf(1.0 / e).ceil() as usize + shift + 1;
    let mut l = l.max(16);
    while lag_tail_bound(gamma, k, l, shift) >= SERIES_TAIL_TOL {
        l += 1;
    }
    l
}

/// `Σ_{l ≥ start} ρ_γ(l) ρ_γ(l − shift)`, truncated when the tail bound drops below 1e−12.
pub fn rho_lag_product_sum(gamma: f64, start: usize, shift: usize) -> Result<LagSeries> {
    check_gamma(gamma)?;
    if start < shift {
        return Err(domain("lag series start must be at least the shift"));
    }
    let k = rho_decay_constant(gamma)?;
    let l_max = choose_l_max(gamma, k, shift).max(start);
    let mut sum = NeumaierSum::new();
    // Largest terms first is irrelevant for Neumaier; iterate in lag order.
    for l in start..=l_max {
        sum.add(rho(gamma, l)? * rho(gamma, l - shift)?);
    }
    Ok(LagSeries {
        value: sum.value(),
        l_max,
        tail_bound: lag_tail_bound(gamma, k, l_max, shift),
    })
}

/// `‖ρ_γ‖² = Σ_{l ≥ 2} ρ_γ(l)²`.
pub fn rho_norm_sq(gamma: f64) -> Result<LagSeries> {
    rho_lag_product_sum(gamma, 2, 0)
}

/// Integrals over `[0,1]` of the functions entering the CLT constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ingredients {
    pub gamma: f64,
    pub g0_sq: f64,
    pub gtilde_sq: f64,
    pub c_diag_sq: f64,
    pub g0_gtilde: f64,
    pub g0_c: f64,
    pub gtilde_c: f64,
}

impl Ingredients {
    /// Ingredients of constant functions `g0`, `g̃`, `C(t,t)`.
    pub fn constant(gamma: f64, g0: f64, gtilde: f64, c: f64) -> Self {
        Ingredients {
            gamma,
            g0_sq: g0 * g0,
            gtilde_sq: gtilde * gtilde,
            c_diag_sq: c * c,
            g0_gtilde: g0 * gtilde,
            g0_c: g0 * c,
            gtilde_c: gtilde * c,
        }
    }
}

/// `σ² = 2∫g0² + 4∫g̃² + 4‖ρ_γ‖²∫C(x,x)²`.
pub fn sigma_sq_general(g0_sq: f64, gtilde_sq: f64, c_diag_sq: f64, gamma: f64) -> Result<f64> {
    if g0_sq < 0.0 || gtilde_sq < 0.0 || c_diag_sq < 0.0 {
        return Err(domain("squared-function integrals must be nonnegative"));
    }
    let norm = rho_norm_sq(gamma)?.value;
    Ok(2.0 * g0_sq + 4.0 * gtilde_sq + 4.0 * norm * c_diag_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovConstants {
    pub sigma1_cov_sq: f64,
    pub sigma2_cov_sq: f64,
    pub sigma_star_sq: f64,
}

/// `σ²_{1,cov}`, `σ²_{2,cov}` and `σ*² = 3σ² + σ²_{1,cov} + 4σ²_{2,cov}`.
pub fn sigma_covs_general(ing: &Ingredients) -> Result<CovConstants> {
    let g = ing.gamma;
    let sigma_sq = sigma_sq_general(ing.g0_sq, ing.gtilde_sq, ing.c_diag_sq, g)?;
    let s42 = rho_lag_product_sum(g, 4, 2)?.value;
    let s31 = rho_lag_product_sum(g, 3, 1)?.value;
    let (r2, r3) = (rho(g, 2)?, rho(g, 3)?);
    let sigma1 = 2.0 * ing.gtilde_sq
        + 4.0 * r2 * ing.g0_c
        + 4.0 * r3 * ing.gtilde_c
        + 4.0 * ing.c_diag_sq * s42;
    let sigma2 = 4.0 * ing.g0_gtilde + 4.0 * r2 * ing.gtilde_c + 4.0 * ing.c_diag_sq * s31;
    Ok(CovConstants {
        sigma1_cov_sq: sigma1,
        sigma2_cov_sq: sigma2,
        sigma_star_sq: 3.0 * sigma_sq + sigma1 + 4.0 * sigma2,
    })
}

/// `Σ = [[σ², 2^{γ−2}σ*²], [2^{γ−2}σ*², σ²/2]]`.
pub fn sigma_matrix(sigma_sq: f64, sigma_star_sq: f64, gamma: f64) -> [[f64; 2]; 2] {
    let off = 2f64.powf(gamma - 2.0) * sigma_star_sq;
    [[sigma_sq, off], [off, sigma_sq / 2.0]]
}

/// Normalizing slowly varying function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowlyVarying {
    /// `L ≡ 1`.
    Unit,
    /// `L(h) = 1/√(−log h)`.
    InverseSqrtLog,
}

impl SlowlyVarying {
    pub fn at(&self, h: f64) -> f64 {
        match self {
            SlowlyVarying::Unit => 1.0,
            SlowlyVarying::InverseSqrtLog => 1.0 / (-h.ln()).sqrt(),
        }
    }
}

/// Regime of an AFBM segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfbmRegime {
    /// Locally self-similar, no profile mass in `(H̲, H̲ + ¼]`.
    LassCaseI,
    /// Locally self-similar with profile mass in `(H̲, H̲ + ¼]`.
    LassCaseII,
    /// Unique analytic minimum; logarithmic normalization.
    NonLass,
}

/// Everything the limit theorems need for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalConstants {
    pub model: String,
    /// Index recovered by the ratio estimator (`H`, `HK` or `H̲`).
    pub index: f64,
    pub gamma: f64,
    pub slowly_varying: SlowlyVarying,
    pub g0_integral: f64,
    pub gtilde_integral: f64,
    pub c_diag_integral: f64,
    pub g0_sq_integral: f64,
    pub gtilde_sq_integral: f64,
    pub c_diag_sq_integral: f64,
    pub rho_norm_sq: f64,
    pub sigma_sq: f64,
    pub sigma1_cov_sq: f64,
    pub sigma2_cov_sq: f64,
    pub sigma_star_sq: f64,
    pub sigma_matrix: [[f64; 2]; 2],
    /// Almost-sure limit of the normalized variation.
    pub limit: f64,
    /// `σ²_{FBM}` and `σ*²_{FBM}` at the index, the building blocks of the estimator variances.
    pub fbm_sigma_sq: f64,
    pub fbm_sigma_star_sq: f64,
    /// Asymptotic variance of `√n(Ĥ − index)` exactly as printed for this model.
    pub ratio_var_printed: f64,
    /// Model-specific fields, flattened into the same JSON object.
    #[serde(flatten, default)]
    pub bifbm: Option<BifbmExtras>,
    #[serde(flatten, default)]
    pub afbm: Option<AfbmExtras>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifbmExtras {
    pub hurst: f64,
    pub k: f64,
    pub t1: f64,
    pub t2: f64,
    /// `(T2 − T1)^{4HK} σ²_{FBM,HK} / 2^{2(K−1)}`.
    pub clt_var: f64,
    pub hk_var_printed: f64,
    pub k_var_printed: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta_sq: f64,
    pub h_var_printed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfbmExtras {
    pub regime: AfbmRegime,
    pub h_min: f64,
    /// `J_{H̲}` in the locally self-similar case.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub j: Option<f64>,
    /// `G_{θ*}` in the non-locally-self-similar case.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub g_theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_at_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_prime_at_min: Option<f64>,
    /// Smallest exponent `2(H_i − H̲)` over the profile mass in `(H̲, H̲ + ¼]` (Case II).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min_bias_exponent: Option<f64>,
}

/// FBM: `g0 = 4 − 2^{2H}`.
pub fn fbm_g0(h: f64) -> f64 {
    4.0 - 2f64.powf(2.0 * h)
}

/// FBM: `g̃ = (2^{2H+2} − 7 − 3^{2H})/2`.
pub fn fbm_gtilde(h: f64) -> f64 {
    (2f64.powf(2.0 * h + 2.0) - 7.0 - 3f64.powf(2.0 * h)) / 2.0
}

/// FBM: `C = −H(2H−1)(2H−2)(2H−3)`.
pub fn fbm_c(h: f64) -> f64 {
    -h * (2.0 * h - 1.0) * (2.0 * h - 2.0) * (2.0 * h - 3.0)
}

/// FBM constants in the printed form: sums from lag 2 with the extended `ρ`.
fn fbm_core(h: f64) -> Result<(f64, CovConstants, f64)> {
    let gamma = 2.0 - 2.0 * h;
    let (g0, gt, c) = (fbm_g0(h), fbm_gtilde(h), fbm_c(h));
    let c4 = 4.0 * c * c; // (2H)²(2H−1)²(2H−2)²(2H−3)²
    let norm = rho_norm_sq(gamma)?.value;
    let sigma_sq = 2.0 * g0 * g0 + 4.0 * gt * gt + c4 * norm;
    // Sums from lag 2 of (2Cρ(l))(2Cρ(l−s)); the factors with lag below 2 use 2Cρ(m) = −N(m),
    // which stays finite at H = 1/2 where ρ(0) and ρ(1) have a pole.
    let two_c_rho = |m: usize| -> Result<f64> {
        if m >= 2 {
            return Ok(2.0 * c * rho(gamma, m)?);
        }
        let n: f64 = FOURTH_DIFF
            .iter()
            .enumerate()
            .map(|(i, w)| w * (m as f64 + i as f64 - 2.0).abs().powf(2.0 * h))
            .sum();
        Ok(-n)
    };
    let s2 = c4 * rho_lag_product_sum(gamma, 4, 2)?.value
        + two_c_rho(2)? * two_c_rho(0)?
        + two_c_rho(3)? * two_c_rho(1)?;
    let s1 = c4 * rho_lag_product_sum(gamma, 3, 1)?.value + two_c_rho(2)? * two_c_rho(1)?;
    let sigma1 = s2 + 0.5 * (2.0 * gt) * (2.0 * gt);
    let sigma2 = s1 + 2.0 * g0 * (2.0 * gt);
    let cov = CovConstants {
        sigma1_cov_sq: sigma1,
        sigma2_cov_sq: sigma2,
        sigma_star_sq: 3.0 * sigma_sq + sigma1 + 4.0 * sigma2,
    };
    Ok((sigma_sq, cov, norm))
}

/// Printed variance of `√n(Ĥ − H)` for FBM: `(3σ² − 2^{2−2H}σ*²)/(4(4 − 2^{2H}) log 2)`.
fn fbm_ratio_var_printed(h: f64, sigma_sq: f64, sigma_star_sq: f64) -> f64 {
    (3.0 * sigma_sq - 2f64.powf(2.0 - 2.0 * h) * sigma_star_sq) / (4.0 * fbm_g0(h) * LN_2)
}

/// Constants of a process whose ingredients are `scale ×` those of FBM with index `h`.
fn scaled_fbm(model: &str, h: f64, scale: f64, sv: SlowlyVarying) -> Result<TheoreticalConstants> {
    check_index("index", h)?;
    let gamma = 2.0 - 2.0 * h;
    let (fbm_sigma_sq, fbm_cov, norm) = fbm_core(h)?;
    let (g0, gt, c) = (scale * fbm_g0(h), scale * fbm_gtilde(h), scale * fbm_c(h));
    let s2 = scale * scale;
    let sigma_sq = s2 * fbm_sigma_sq;
    let sigma_star_sq = s2 * fbm_cov.sigma_star_sq;
    Ok(TheoreticalConstants {
        model: model.to_string(),
        index: h,
        gamma,
        slowly_varying: sv,
        g0_integral: g0,
        gtilde_integral: gt,
        c_diag_integral: c,
        g0_sq_integral: g0 * g0,
        gtilde_sq_integral: gt * gt,
        c_diag_sq_integral: c * c,
        rho_norm_sq: norm,
        sigma_sq,
        sigma1_cov_sq: s2 * fbm_cov.sigma1_cov_sq,
        sigma2_cov_sq: s2 * fbm_cov.sigma2_cov_sq,
        sigma_star_sq,
        sigma_matrix: sigma_matrix(sigma_sq, sigma_star_sq, gamma),
        limit: g0,
        fbm_sigma_sq,
        fbm_sigma_star_sq: fbm_cov.sigma_star_sq,
        ratio_var_printed: fbm_ratio_var_printed(h, fbm_sigma_sq, fbm_cov.sigma_star_sq),
        bifbm: None,
        afbm: None,
    })
}

pub fn fbm_constants(h: f64) -> Result<TheoreticalConstants> {
    scaled_fbm("fbm", h, 1.0, SlowlyVarying::Unit)
}

/// bifBm on `[T1, T2]`: every ingredient is `2^{1−K}(T2 − T1)^{2HK}` times the FBM one at `HK`.
pub fn bifbm_constants(h: f64, k: f64, t1: f64, t2: f64) -> Result<TheoreticalConstants> {
    ProcessModel::Bifbm {
        hurst: h,
        k,
        t1,
        t2,
    }
    .validate()?;
    let hk = h * k;
    let dt = t2 - t1;
    let scale = 2f64.powf(1.0 - k) * dt.powf(2.0 * hk);
    let mut out = scaled_fbm("bifbm", hk, scale, SlowlyVarying::Unit)?;
    let (s, ss) = (out.fbm_sigma_sq, out.fbm_sigma_star_sq);
    let g0 = fbm_g0(hk);
    out.limit = g0 / 2f64.powf(k - 1.0) * dt.powf(2.0 * hk);
    let clt_var = dt.powf(4.0 * hk) / 2f64.powf(2.0 * (k - 1.0)) * s;
    let hk_var_printed = (3.0 * s - 2f64.powf(2.0 - 2.0 * hk) * ss)
        / (2f64.powf(k + 1.0) * g0 * LN_2)
        * dt.powf(4.0 * hk);
    let k_var_printed = s / (g0 * g0 * LN_2 * LN_2);
    let eta1 = 2f64.powf(2.0 * k - 2.0) * s / (g0 * g0 * LN_2 * LN_2 * dt.powf(4.0 * hk));
    let eta2 = 2f64.powf(k - 1.0) * (3.0 * s - 2f64.powf(2.0 - 2.0 * hk) * ss) / (4.0 * g0 * LN_2);
    let eta3 = 2f64.powf(2.0 * k - 2.0) * (2f64.powf(-2.0 * hk) * ss - s)
        / (2.0 * g0 * g0 * LN_2 * LN_2 * dt.powf(2.0 * hk));
    let eta_sq = h * h / (k * k) * eta1 + eta2 / (k * k) - 2.0 * h / (k * k) * eta3;
    out.ratio_var_printed = hk_var_printed;
    out.bifbm = Some(BifbmExtras {
        hurst: h,
        k,
        t1,
        t2,
        clt_var,
        hk_var_printed,
        k_var_printed,
        eta1,
        eta2,
        eta3,
        eta_sq,
        h_var_printed: dt.powf(4.0 * hk) / 2f64.powf(2.0 * (k - 1.0)) * eta_sq,
    });
    Ok(out)
}

const QUARTER_SLACK: f64 = 1e-12;

fn afbm_parts(model: &ProcessModel) -> Result<(AfbmWeights, f64, f64)> {
    let ProcessModel::AfbmSegment { omega, .. } = model else {
        return Err(domain("AFBM constants need an AFBM segment model"));
    };
    model.validate()?;
    let w = AfbmWeights::new(model)?;
    let hm = w.profile().h_min();
    Ok((w, hm, *omega))
}

/// Locally self-similar AFBM segment (piecewise-constant profile with a minimizing set of
/// positive measure).
pub fn afbm_lass_constants(model: &ProcessModel) -> Result<TheoreticalConstants> {
    let (w, hm, _) = afbm_parts(model)?;
    let Some(pieces) = w.piece_weights() else {
        return Err(Error::Regime(
            "smooth profile has a null minimizing set; use the non-locally-self-similar constants"
                .into(),
        ));
    };
    let mut j = NeumaierSum::new();
    let mut min_exp: Option<f64> = None;
    for &(h, wt) in pieces {
        if (h - hm).abs() <= QUARTER_SLACK {
            j.add(8.0 * wt);
        } else if h <= hm + 0.25 + QUARTER_SLACK && wt > 0.0 {
            let e = 2.0 * (h - hm);
            min_exp = Some(min_exp.map_or(e, |m: f64| m.min(e)));
        }
    }
    let j = j.value();
    if !(j > 0.0) {
        return Err(Error::Regime("minimizing set has zero weight".into()));
    }
    let mut out = scaled_fbm("afbm", hm, j, SlowlyVarying::Unit)?;
    out.ratio_var_printed *= j;
    out.afbm = Some(AfbmExtras {
        regime: if min_exp.is_some() {
            AfbmRegime::LassCaseII
        } else {
            AfbmRegime::LassCaseI
        },
        h_min: hm,
        j: Some(j),
        g_theta: None,
        sigma0: None,
        sigma1: None,
        lambda_at_min: None,
        lambda_prime_at_min: None,
        min_bias_exponent: min_exp,
    });
    Ok(out)
}

/// AFBM segment with a smooth profile attaining its minimum at a single direction.
pub fn afbm_nonlass_constants(model: &ProcessModel) -> Result<TheoreticalConstants> {
    let (w, hm, omega) = afbm_parts(model)?;
    let HurstProfile::Smooth {
        theta_star, h2, h3, ..
    } = *w.profile()
    else {
        return Err(Error::Regime(
            "profile has a minimizing set of positive measure; use the locally self-similar constants"
                .into(),
        ));
    };
    let lam = w.lambda(theta_star);
    let lam_prime = -2.0 * hm * (theta_star - omega).tan() * lam;
    let g = 8.0 * lam * (PI / h2).sqrt();
    let g0 = fbm_g0(hm);
    let mut out = scaled_fbm("afbm", hm, g, SlowlyVarying::InverseSqrtLog)?;
    out.ratio_var_printed *= g;
    out.afbm = Some(AfbmExtras {
        regime: AfbmRegime::NonLass,
        h_min: hm,
        j: None,
        g_theta: Some(g),
        sigma0: Some(g0 * g / (16.0 * PI.sqrt())),
        sigma1: Some(2.0 / h2 * (lam_prime * g0 / 2.0 - h3 * lam / (3.0 * h2))),
        lambda_at_min: Some(lam),
        lambda_prime_at_min: Some(lam_prime),
        min_bias_exponent: None,
    });
    Ok(out)
}

pub fn afbm_constants(model: &ProcessModel) -> Result<TheoreticalConstants> {
    match model {
        ProcessModel::AfbmSegment {
            profile: HurstProfile::Smooth { .. },
            ..
        } => afbm_nonlass_constants(model),
        _ => afbm_lass_constants(model),
    }
}

/// Constants for any model.
pub fn constants_for(model: &ProcessModel) -> Result<TheoreticalConstants> {
    match model {
        ProcessModel::Fbm { hurst } => fbm_constants(*hurst),
        ProcessModel::Bifbm { hurst, k, t1, t2 } => bifbm_constants(*hurst, *k, *t1, *t2),
        ProcessModel::AfbmSegment { .. } => afbm_constants(model),
    }
}

/// Finite-`h` behaviour of the normalized second increments of an AFBM segment:
/// `I(h) = 8∫_0^π Λ(θ)(4 − 2^{2H(θ)}) h^{2(H(θ) − H̲)} dθ`, its restricted and
/// bias-function variants.
#[derive(Debug, Clone)]
pub struct AfbmBias {
    weights: AfbmWeights,
    h_min: f64,
    regime: AfbmRegime,
    /// `(4 − 2^{2H̲}) J` or `(4 − 2^{2H̲}) G`.
    g0: f64,
}

impl AfbmBias {
    pub fn new(model: &ProcessModel) -> Result<Self> {
        let c = afbm_constants(model)?;
        let (w, hm, _) = afbm_parts(model)?;
        Ok(AfbmBias {
            weights: w,
            h_min: hm,
            regime: c.afbm.expect("afbm extras").regime,
            g0: c.limit,
        })
    }

    pub fn regime(&self) -> AfbmRegime {
        self.regime
    }

    pub fn limit(&self) -> f64 {
        self.g0
    }

    fn weighted(&self, h: f64, upper: Option<f64>, strict_lower: bool) -> Result<f64> {
        let hm = self.h_min;
        let lh = h.ln();
        let keep = |x: f64| {
            let above = if strict_lower {
                x > hm + QUARTER_SLACK
            } else {
                true
            };
            let below = upper.map_or(true, |u| x <= u + QUARTER_SLACK);
            above && below
        };
        let g = |x: f64| {
            if keep(x) {
                8.0 * (4.0 - 2f64.powf(2.0 * x)) * (2.0 * (x - hm) * lh).exp()
            } else {
                0.0
            }
        };
        match self.weights.piece_weights() {
            Some(_) => Ok(self.weights.angular_integral(g, 0.0)?.value),
            None => {
                // Restrict to the connected band around θ* where the indicator holds.
                let HurstProfile::Smooth { theta_star, .. } = *self.weights.profile() else {
                    unreachable!()
                };
                let (lo, hi) = match upper {
                    Some(u) => self.band(theta_star, u),
                    None => (theta_star - PI / 2.0, theta_star + PI / 2.0),
                };
                let mut pts = vec![lo, theta_star, hi];
                let s = (theta_star + PI / 2.0) % PI;
                for cand in [s - 2.0 * PI, s - PI, s, s + PI] {
                    if cand > lo && cand < hi {
                        pts.push(cand);
                    }
                }
                pts.sort_by(f64::total_cmp);
                let scale = self.g0 * 1e-13;
                let q = integrate(
                    |th| {
                        let x = self.weights.profile().eval(th);
                        self.weights.lambda(th)
                            * 8.0
                            * (4.0 - 2f64.powf(2.0 * x))
                            * (2.0 * (x - hm) * lh).exp()
                    },
                    &pts,
                    QuadOptions {
                        abs_tol: scale,
                        rel_tol: 1e-12,
                        max_panels: 20000,
                    },
                )?;
                Ok(q.value)
            }
        }
    }

    /// Angles `(θ* − a, θ* + b)` bounding `{H ≤ level}` around the minimum. The profile is
    /// unimodal over a period, so the set is an interval.
    fn band(&self, theta_star: f64, level: f64) -> (f64, f64) {
        let p = self.weights.profile();
        let at = |u: f64| p.eval(theta_star + u);
        let m = 4096;
        let top = (0..=m)
            .map(|i| PI * i as f64 / m as f64)
            .max_by(|a, b| at(*a).total_cmp(&at(*b)))
            .expect("nonempty grid");
        if at(top) <= level {
            return (theta_star, theta_star + PI);
        }
        // Bisection for the crossing inside [lo, hi], `inside_low` telling which end is in the set.
        let cross = |mut lo: f64, mut hi: f64, inside_low: bool| -> f64 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (at(mid) <= level) == inside_low {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let right = cross(0.0, top, true);
        let left = cross(top, PI, false);
        (theta_star + left - PI, theta_star + right)
    }

    /// `I(h)` over the whole half-circle.
    pub fn full_integral(&self, h: f64) -> Result<f64> {
        self.weighted(h, None, false)
    }

    /// `b(h)`: the integral restricted to `H(θ) ≤ H̲ + ¼`; the finite-`n` mean of the
    /// normalized variation up to terms of order `o(√h)`.
    pub fn restricted(&self, h: f64) -> Result<f64> {
        self.weighted(h, Some(self.h_min + 0.25), false)
    }

    /// `√(−log h) I(h)`, the curve converging to `(4 − 2^{2H̲}) G_{θ*}`.
    pub fn laplace_curve(&self, h: f64) -> Result<f64> {
        Ok((-h.ln()).sqrt() * self.full_integral(h)?)
    }

    /// Bias function `φ(h)`: the intermediate-band integral in Case II, zero in Case I, and
    /// `√(−log h) b(h) − (4 − 2^{2H̲}) G_{θ*}` without local self-similarity.
    pub fn phi(&self, h: f64) -> Result<f64> {
        match self.regime {
            AfbmRegime::LassCaseI => Ok(0.0),
            AfbmRegime::LassCaseII => self.weighted(h, Some(self.h_min + 0.25), true),
            AfbmRegime::NonLass => Ok((-h.ln()).sqrt() * self.restricted(h)? - self.g0),
        }
    }

    /// Asymptotic bias of the ratio estimator at resolution `n`:
    /// `log(b(1/n)/b(1/(2n)))/(2 log 2)`.
    pub fn bias(&self, n: usize) -> Result<f64> {
        if self.regime == AfbmRegime::LassCaseI {
            return Ok(0.0);
        }
        let nf = n as f64;
        let b1 = self.restricted(1.0 / nf)?;
        let b2 = self.restricted(1.0 / (2.0 * nf))?;
        Ok((b1 / b2).ln() / (2.0 * LN_2))
    }
}

/// Least-squares fit of `√λ I(e^{−λ}) ≈ Σ_{i<m} c_i λ^{−i/2}` over the given `λ` values.
///
/// Returns the coefficients `c_i`; `c_i / (16 Γ((i+1)/2))` are the numerically estimated
/// expansion coefficients.
pub fn fit_laplace_expansion(bias: &AfbmBias, lambdas: &[f64], terms: usize) -> Result<Vec<f64>> {
    if lambdas.len() < terms || terms == 0 {
        return Err(domain("need at least as many sample points as expansion terms"));
    }
    let mut a = DMatrix::zeros(lambdas.len(), terms);
    let mut y = DVector::zeros(lambdas.len());
    for (r, &lam) in lambdas.iter().enumerate() {
        y[r] = bias.laplace_curve((-lam).exp())?;
        for c in 0..terms {
            a[(r, c)] = lam.powf(-(c as f64) / 2.0);
        }
    }
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&y, 1e-14)
        .map_err(|e| Error::Numerical {
            msg: format!("expansion fit failed: {e}"),
            err_est: f64::NAN,
        })?;
    Ok(sol.iter().copied().collect())
}

/// Variogram `v(t) = (1/8)∫_0^{2π} C(1,H(θ))² |t1 cos θ + t2 sin θ|^{2H(θ)} dθ` of the planar
/// field.
pub fn variogram(profile: &HurstProfile, t: [f64; 2]) -> Result<f64> {
    profile.validate()?;
    let rho_t = t[0].hypot(t[1]);
    if rho_t == 0.0 {
        return Ok(0.0);
    }
    let alpha = t[1].atan2(t[0]);
    let mut pts = vec![0.0, 2.0 * PI];
    for k in -3..=3 {
        let cand = alpha + PI / 2.0 + k as f64 * PI;
        if cand > 0.0 && cand < 2.0 * PI {
            pts.push(cand);
        }
    }
    if let HurstProfile::Smooth { theta_star, .. } = profile {
        for k in -1..=2 {
            let cand = theta_star + k as f64 * PI;
            if cand > 0.0 && cand < 2.0 * PI {
                pts.push(cand);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    let scale = rho_t.powf(2.0 * profile.h_min());
    let q = integrate(
        |th| {
            let h = profile.eval(th);
            let c1 = c_norm(1, h).expect("validated");
            c1 * c1 * (t[0] * th.cos() + t[1] * th.sin()).abs().powf(2.0 * h)
        },
        &pts,
        QuadOptions {
            abs_tol: 1e-14 * scale,
            rel_tol: 1e-11,
            max_panels: 20000,
        },
    )?;
    Ok(q.value / 8.0)
}

/// `lim √(log(1/ε)) ε^{−2H̲} v(εt)` for a smooth profile:
/// `(C(1,H̲)²/4) ρ(t)^{2H̲} |cos(α(t) − θ*)|^{2H̲} √(π/H''(θ*))`.
pub fn variogram_limit(profile: &HurstProfile, t: [f64; 2]) -> Result<f64> {
    profile.validate()?;
    let HurstProfile::Smooth {
        theta_star,
        h_min,
        h2,
        ..
    } = *profile
    else {
        return Err(Error::Regime("variogram limit needs a smooth profile".into()));
    };
    let rho_t = t[0].hypot(t[1]);
    if rho_t == 0.0 {
        return Ok(0.0);
    }
    let alpha = t[1].atan2(t[0]);
    let c1 = c_norm(1, h_min)?;
    let e = 2.0 * h_min;
    let cos = (alpha - theta_star).cos().abs();
    // Rounding of α − θ* near the orthogonal direction; the limit is zero there.
    if cos <= 8.0 * f64::EPSILON {
        return Ok(0.0);
    }
    Ok(c1 * c1 / 4.0 * rho_t.powf(e) * cos.powf(e) * (PI / h2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_branch_matches_closed_form_at_overlap() {
        for &g in &[0.3, 0.8, 1.3, 1.9] {
            for l in 8..12 {
                let p = 2.0 - g;
                let xs = [l - 2, l - 1, l, l + 1, l + 2];
                let num: f64 = FOURTH_DIFF
                    .iter()
                    .zip(xs)
                    .map(|(c, x)| c * (x as f64).powf(p))
                    .sum();
                let closed = num / ((g - 2.0) * (g - 1.0) * g * (g + 1.0));
                let series = rho_series(g, l as f64);
                assert!(
                    (closed - series).abs() < 1e-10 * series.abs(),
                    "γ={g} l={l}: {closed} vs {series}"
                );
            }
        }
    }

    #[test]
    fn near_one_branch_is_continuous() {
        for l in 2..8 {
            let inside = rho(1.0 + 0.999 * NEAR_ONE, l).unwrap();
            let outside = rho(1.0 + 1.001 * NEAR_ONE, l).unwrap();
            assert!((inside - outside).abs() < 1e-8, "l={l}: {inside} {outside}");
        }
    }
}

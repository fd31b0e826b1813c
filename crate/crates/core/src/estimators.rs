//! Ratio-type estimators built on `(V_n, V_2n)` and their asymptotic standard errors.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{AfbmBias, AfbmRegime, TheoreticalConstants};
use crate::error::{domain, Error, Result};
use crate::models::ProcessModel;

/// `½ − log(V_2n/V_n)/(2 log 2)`.
pub fn ratio_estimator(vn: f64, v2n: f64) -> Result<f64> {
    if !(vn > 0.0 && v2n > 0.0) || !vn.is_finite() || !v2n.is_finite() {
        return Err(Error::InvalidSample(format!(
            "ratio estimator needs positive variations, got V_n = {vn}, V_2n = {v2n}"
        )));
    }
    Ok(0.5 - (v2n / vn).ln() / (2.0 * LN_2))
}

/// A value with a validity flag; out-of-range values are reported, never clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub value: f64,
    pub valid: bool,
}

/// `K̂ = 1 − log(n^{2ĤK−1} V_n / ((4 − 2^{2ĤK})(T2 − T1)^{2ĤK})) / log 2`; flagged invalid outside
/// `(0, 1]`.
pub fn k_estimator(vn: f64, hk_hat: f64, n: usize, t1: f64, t2: f64) -> Result<Flagged> {
    if !(vn > 0.0) {
        return Err(Error::InvalidSample(format!("K estimator needs V_n > 0, got {vn}")));
    }
    let denom = 4.0 - 2f64.powf(2.0 * hk_hat);
    if !(denom > 0.0) {
        return Err(Error::InvalidSample(format!(
            "degenerate K estimator: 4 − 2^(2·HK) = {denom} for HK = {hk_hat}"
        )));
    }
    if !(t2 > t1) {
        return Err(domain("K estimator needs t2 > t1"));
    }
    let nf = n as f64;
    let inner = (2.0 * hk_hat - 1.0) * nf.ln() + vn.ln() - denom.ln() - 2.0 * hk_hat * (t2 - t1).ln();
    let value = 1.0 - inner / LN_2;
    Ok(Flagged {
        value,
        valid: value > 0.0 && value <= 1.0,
    })
}

/// `Ĥ = ĤK / K̂`, invalid whenever `K̂` is.
pub fn h_from_hk_k(hk_hat: f64, k_hat: Flagged) -> Result<Flagged> {
    if k_hat.value == 0.0 {
        return Err(Error::InvalidSample("K estimate is zero".into()));
    }
    let value = hk_hat / k_hat.value;
    Ok(Flagged {
        value,
        valid: k_hat.valid && value > 0.0 && value < 1.0,
    })
}

/// Which estimate a standard error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// The ratio estimator of the index (`H`, `HK` or `H̲`).
    Ratio,
    /// `K̂` of bifBm.
    K,
    /// `Ĥ = ĤK/K̂` of bifBm.
    H,
}

/// Asymptotic variance as printed for the model, or from the δ-method applied to the bivariate
/// limit `√n((x_n, y_n) − μ) → N(0, Σ)` of the normalized variations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceForm {
    #[default]
    Printed,
    DeltaMethod,
}

fn quad_form(s: &[[f64; 2]; 2], g: [f64; 2]) -> f64 {
    g[0] * g[0] * s[0][0] + 2.0 * g[0] * g[1] * s[0][1] + g[1] * g[1] * s[1][1]
}

/// Gradients of `(ĤK, K̂)` with respect to the normalized variations at their limit.
fn bifbm_gradients(c: &TheoreticalConstants, n: usize) -> Result<([f64; 2], [f64; 2])> {
    let b = c
        .bifbm
        .ok_or_else(|| domain("K and H standard errors need bifBm constants"))?;
    let mu = c.limit;
    let a = c.index;
    let g_hk = [1.0 / (2.0 * LN_2 * mu), -1.0 / (2.0 * LN_2 * mu)];
    // ∂K̂/∂ĤK, including the n^{2ĤK} factor.
    let p = 2f64.powf(2.0 * a);
    let dk_da = -(2.0 * (n as f64).ln() + 2.0 * LN_2 * p / (4.0 - p) - 2.0 * (b.t2 - b.t1).ln()) / LN_2;
    let g_k = [
        -1.0 / (LN_2 * mu) + dk_da * g_hk[0],
        dk_da * g_hk[1],
    ];
    Ok((g_hk, g_k))
}

/// Asymptotic variance of `√n(estimate − truth)`.
pub fn asymptotic_variance(
    kind: EstimatorKind,
    c: &TheoreticalConstants,
    n: usize,
    form: VarianceForm,
) -> Result<f64> {
    let v = match (kind, form) {
        (EstimatorKind::Ratio, VarianceForm::Printed) => c.ratio_var_printed,
        (EstimatorKind::Ratio, VarianceForm::DeltaMethod) => {
            let mu = c.limit;
            quad_form(&c.sigma_matrix, [1.0 / (2.0 * LN_2 * mu), -1.0 / (2.0 * LN_2 * mu)])
        }
        (EstimatorKind::K, VarianceForm::Printed) => {
            c.bifbm
                .ok_or_else(|| domain("K standard error needs bifBm constants"))?
                .k_var_printed
        }
        (EstimatorKind::H, VarianceForm::Printed) => {
            c.bifbm
                .ok_or_else(|| domain("H standard error needs bifBm constants"))?
                .h_var_printed
        }
        (EstimatorKind::K, VarianceForm::DeltaMethod) => {
            quad_form(&c.sigma_matrix, bifbm_gradients(c, n)?.1)
        }
        (EstimatorKind::H, VarianceForm::DeltaMethod) => {
            let b = c.bifbm.expect("checked by bifbm_gradients");
            let (g_hk, g_k) = bifbm_gradients(c, n)?;
            // H = HK/K: ∂H = ∂HK/K − HK ∂K/K².
            let g = [
                g_hk[0] / b.k - c.index * g_k[0] / (b.k * b.k),
                g_hk[1] / b.k - c.index * g_k[1] / (b.k * b.k),
            ];
            quad_form(&c.sigma_matrix, g)
        }
    };
    if !(v >= 0.0) {
        return Err(Error::Regime(format!(
            "asymptotic variance {v} is negative or undefined; the model may be outside the regime"
        )));
    }
    Ok(v)
}

/// `√(variance/n)`.
pub fn stderr_for(
    kind: EstimatorKind,
    c: &TheoreticalConstants,
    n: usize,
    form: VarianceForm,
) -> Result<f64> {
    if n == 0 {
        return Err(domain("n must be positive"));
    }
    Ok((asymptotic_variance(kind, c, n, form)? / n as f64).sqrt())
}

/// Asymptotic bias of the ratio estimator of `H̲` at resolution `n`; zero in Case I.
pub fn afbm_bias_term(bias: &AfbmBias, n: usize) -> Result<f64> {
    bias.bias(n)
}

/// One estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub kind: EstimatorKind,
    pub value: f64,
    pub valid: bool,
    /// Standard error from the printed variance.
    pub stderr: Option<f64>,
    /// Standard error from the δ-method.
    pub stderr_delta: Option<f64>,
    /// Estimated asymptotic bias (already included in neither value nor stderr).
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub model: String,
    pub n: usize,
    pub vn: f64,
    pub v2n: f64,
    pub ratio_positive: bool,
    pub estimates: Vec<EstimateEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl EstimateReport {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimateEntry> {
        self.estimates.iter().find(|e| e.kind == kind)
    }
}

/// Which parameter values feed the standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlugIn {
    /// Evaluate constants at the estimated parameters.
    #[default]
    Estimated,
    /// Evaluate constants at the model's true parameters.
    True,
}

/// Stand-alone ratio report for a path of unknown law.
pub fn estimate_ratio_only(n: usize, vn: f64, v2n: f64) -> Result<EstimateReport> {
    let h = ratio_estimator(vn, v2n)?;
    let mut warnings = Vec::new();
    let (stderr, stderr_delta) = if h > 0.0 && h < 1.0 {
        let c = crate::asymptotics::fbm_constants(h)?;
        (
            stderr_for(EstimatorKind::Ratio, &c, n, VarianceForm::Printed).ok(),
            stderr_for(EstimatorKind::Ratio, &c, n, VarianceForm::DeltaMethod).ok(),
        )
    } else {
        warnings.push(format!("ratio estimate {h} outside (0,1); no standard error"));
        (None, None)
    };
    Ok(EstimateReport {
        model: "unknown".into(),
        n,
        vn,
        v2n,
        ratio_positive: true,
        estimates: vec![EstimateEntry {
            kind: EstimatorKind::Ratio,
            value: h,
            valid: h > 0.0 && h < 1.0,
            stderr,
            stderr_delta,
            bias: None,
        }],
        warnings,
    })
}

/// Model-aware estimates from one `(V_n, V_2n)` pair.
pub fn estimate(
    model: &ProcessModel,
    n: usize,
    vn: f64,
    v2n: f64,
    plug_in: PlugIn,
) -> Result<EstimateReport> {
    model.validate()?;
    let hat = ratio_estimator(vn, v2n)?;
    let mut warnings = Vec::new();
    let mut estimates = Vec::new();
    let in_range = hat > 0.0 && hat < 1.0;
    let errs = |kind, c: &TheoreticalConstants, warnings: &mut Vec<String>| {
        let mut get = |form| match stderr_for(kind, c, n, form) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("{kind:?} standard error: {e}"));
                None
            }
        };
        (get(VarianceForm::Printed), get(VarianceForm::DeltaMethod))
    };
    match model {
        ProcessModel::Fbm { hurst } => {
            let h = match plug_in {
                PlugIn::True => Some(*hurst),
                PlugIn::Estimated => in_range.then_some(hat),
            };
            let (se, sd) = match h {
                Some(h) => errs(EstimatorKind::Ratio, &crate::asymptotics::fbm_constants(h)?, &mut warnings),
                None => (None, None),
            };
            estimates.push(EstimateEntry {
                kind: EstimatorKind::Ratio,
                value: hat,
                valid: in_range,
                stderr: se,
                stderr_delta: sd,
                bias: None,
            });
        }
        ProcessModel::Bifbm { hurst, k, t1, t2 } => {
            let k_hat = k_estimator(vn, hat, n, *t1, *t2)?;
            let h_hat = h_from_hk_k(hat, k_hat)?;
            let params = match plug_in {
                PlugIn::True => Some((*hurst, *k)),
                PlugIn::Estimated => {
                    (in_range && k_hat.valid && h_hat.valid).then_some((h_hat.value, k_hat.value))
                }
            };
            let c = match params {
                Some((h, kk)) => Some(crate::asymptotics::bifbm_constants(h, kk, *t1, *t2)?),
                None => {
                    warnings.push("estimates outside the parameter space; no standard errors".into());
                    None
                }
            };
            for (kind, value, valid) in [
                (EstimatorKind::Ratio, hat, in_range),
                (EstimatorKind::K, k_hat.value, k_hat.valid),
                (EstimatorKind::H, h_hat.value, h_hat.valid),
            ] {
                let (se, sd) = match &c {
                    Some(c) => errs(kind, c, &mut warnings),
                    None => (None, None),
                };
                estimates.push(EstimateEntry {
                    kind,
                    value,
                    valid,
                    stderr: se,
                    stderr_delta: sd,
                    bias: None,
                });
            }
        }
        ProcessModel::AfbmSegment { .. } => {
            // The index of an AFBM segment is a property of the whole profile; standard errors
            // and bias are those of the configured model.
            let c = crate::asymptotics::afbm_constants(model)?;
            let bias = AfbmBias::new(model)?;
            let b = bias.bias(n)?;
            if let Some(a) = c.afbm {
                if a.regime == AfbmRegime::LassCaseII && a.min_bias_exponent.is_some_and(|e| e < 0.5 - 1e-12) {
                    warnings.push(
                        "intermediate exponent below 1/2: sqrt(n)·bias diverges, the CLT centring is dominated by bias"
                            .into(),
                    );
                }
                if a.regime == AfbmRegime::NonLass {
                    warnings.push("non-locally-self-similar regime: bias decays like 1/log n".into());
                }
            }
            let (se, sd) = errs(EstimatorKind::Ratio, &c, &mut warnings);
            estimates.push(EstimateEntry {
                kind: EstimatorKind::Ratio,
                value: hat,
                valid: in_range,
                stderr: se,
                stderr_delta: sd,
                bias: Some(b),
            });
        }
    }
    Ok(EstimateReport {
        model: model.tag().into(),
        n,
        vn,
        v2n,
        ratio_positive: true,
        estimates,
        warnings,
    })
}

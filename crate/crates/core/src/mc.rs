//! Seeded parallel Monte Carlo over paths, variations and estimators.
//!
//! Replication `r` at resolution `n` draws its normals from stream `r` of a ChaCha8 generator
//! seeded by [`seed_for`]`(seed, n)`, samples one path on the `2n` grid and subsamples it for
//! level `n`. Results are collected in replication order and reduced sequentially, so reports
//! are bit-identical for any worker count.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::asymptotics::{constants_for, AfbmBias, SlowlyVarying, TheoreticalConstants};
use crate::error::{domain, Error, Result};
use crate::estimators::{
    h_from_hk_k, k_estimator, ratio_estimator, stderr_for, EstimatorKind, VarianceForm,
};
use crate::models::ProcessModel;
use crate::numeric::NeumaierSum;
use crate::quadvar::{exact_mean_vn, exact_var_vn, increment_cov_model, vn_v2n};
use crate::sampling::{NormalStream, PathSampler};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "FRACVAR_THREADS";

fn default_true() -> bool {
    true
}

fn default_form() -> VarianceForm {
    VarianceForm::DeltaMethod
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ProcessModel,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Compute the ratio (and, for bifBm, K and H) estimators on every replication.
    #[serde(default = "default_true")]
    pub estimators: bool,
    /// Variance used to standardize estimates and build the 95% intervals.
    #[serde(default = "default_form")]
    pub variance_form: VarianceForm,
    /// Compare against the exact Isserlis mean and variance of `V_n`.
    #[serde(default = "default_true")]
    pub exact_moments: bool,
    /// Worker count; falls back to `FRACVAR_THREADS`, then to the number of cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Per-replication CSV `rep,n,vn,v2n,estimate,k_hat,h_hat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_csv: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(model: ProcessModel, n_values: Vec<usize>, replications: usize, seed: u64) -> Self {
        ExperimentConfig {
            model,
            n_values,
            replications,
            seed,
            estimators: true,
            variance_form: VarianceForm::DeltaMethod,
            exact_moments: true,
            threads: None,
            output: None,
            raw_csv: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.replications == 0 {
            return Err(domain("replications must be at least 1"));
        }
        if self.n_values.is_empty() {
            return Err(domain("at least one n is required"));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 8) {
            return Err(domain(format!("every n must be at least 8, got {n}")));
        }
        if self.threads == Some(0) {
            return Err(domain("threads must be at least 1"));
        }
        Ok(())
    }
}

/// Master seed for the resolution `n`.
pub fn seed_for(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Worker count from an explicit value, then the environment, then the machine.
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get()))
}

/// Kolmogorov-Smirnov distance of a sample, standardized by its own mean and standard
/// deviation, to the standard normal; passes when below `1.63/√M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normality {
    pub ks_distance: f64,
    pub critical: f64,
    pub pass: bool,
}

pub fn normality_diagnostic(samples: &[f64]) -> Result<Normality> {
    let m = samples.len();
    if m < 100 {
        return Err(domain("normality diagnostic needs at least 100 samples"));
    }
    let critical = 1.63 / (m as f64).sqrt();
    let s = Summary::of(samples);
    let sd = s.var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Ok(Normality {
            ks_distance: 1.0,
            critical,
            pass: false,
        });
    }
    let mut z: Vec<f64> = samples.iter().map(|x| (x - s.mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let mf = m as f64;
    let d = z.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let f = normal.cdf(x);
        acc.max((f - i as f64 / mf).abs()).max(((i + 1) as f64 / mf - f).abs())
    });
    Ok(Normality {
        ks_distance: d,
        critical,
        pass: d < critical,
    })
}

/// Mean, unbiased variance and their Monte Carlo standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub var: f64,
    pub mean_se: f64,
    /// `√((m4 − s⁴)/M)` with the empirical fourth central moment.
    pub var_se: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let m = xs.len();
        let mf = m as f64;
        let mut s = NeumaierSum::new();
        xs.iter().for_each(|&x| s.add(x));
        let mean = s.value() / mf;
        let (mut s2, mut s4) = (NeumaierSum::new(), NeumaierSum::new());
        for &x in xs {
            let d = x - mean;
            s2.add(d * d);
            s4.add(d * d * d * d);
        }
        let var = if m > 1 { s2.value() / (mf - 1.0) } else { 0.0 };
        let m4 = s4.value() / mf;
        let m2 = s2.value() / mf;
        Summary {
            count: m,
            mean,
            var,
            mean_se: (var / mf).sqrt(),
            var_se: ((m4 - m2 * m2).max(0.0) / mf).sqrt(),
        }
    }
}

fn z_score(empirical: f64, target: f64, se: f64) -> f64 {
    if se > 0.0 {
        (empirical - target) / se
    } else if empirical == target {
        0.0
    } else {
        f64::INFINITY.copysign(empirical - target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactComparison {
    pub exact_mean_vn: f64,
    pub exact_var_vn: f64,
    pub mc_mean_vn: f64,
    pub mc_var_vn: f64,
    pub mean_z: f64,
    pub var_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub kind: EstimatorKind,
    pub truth: f64,
    /// Asymptotic bias subtracted before standardizing (AFBM only, else 0).
    pub asymptotic_bias: f64,
    /// Replications whose estimate lies in the parameter space; all are summarized.
    pub valid_count: usize,
    pub mean: f64,
    pub var: f64,
    pub bias: f64,
    pub bias_se: f64,
    /// `(bias − asymptotic_bias)/bias_se`.
    pub bias_z: f64,
    /// Standard error at the true parameters from the chosen variance form.
    pub stderr: f64,
    pub stderr_printed: Option<f64>,
    pub stderr_delta: Option<f64>,
    pub standardized_mean: f64,
    pub standardized_var: f64,
    pub standardized_var_se: f64,
    pub coverage95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NReport {
    pub n: usize,
    pub replications: usize,
    /// Replications with a nonpositive variation, excluded from ratio statistics.
    pub invalid: usize,
    pub sampler: String,
    /// `x_n = n^{1−γ} V_n / L(1/n)`.
    pub normalized: Summary,
    pub limit: f64,
    pub normalized_mean_z: f64,
    /// `√n (x_n − limit)`.
    pub clt: Summary,
    pub clt_var_target: f64,
    pub clt_var_z: f64,
    pub normality: Option<Normality>,
    /// Sample covariance of `√n(x_n, x_2n)` against `Σ₀₁`.
    pub clt_cov: f64,
    pub clt_cov_target: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<ExactComparison>,
    pub estimators: Vec<EstimatorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub model: ProcessModel,
    pub seed: u64,
    pub replications: usize,
    pub variance_form: VarianceForm,
    pub constants: TheoreticalConstants,
    pub results: Vec<NReport>,
}

/// Per-replication raw values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub rep: usize,
    pub vn: f64,
    pub v2n: f64,
    pub ratio: Option<f64>,
    pub k_hat: Option<f64>,
    pub h_hat: Option<f64>,
    pub valid_k: bool,
    pub valid_h: bool,
}

fn normalization(c: &TheoreticalConstants, n: usize) -> f64 {
    let nf = n as f64;
    let sv = match c.slowly_varying {
        SlowlyVarying::Unit => 1.0,
        SlowlyVarying::InverseSqrtLog => nf.ln().sqrt(),
    };
    nf.powf(1.0 - c.gamma) * sv
}

fn replicate(
    cfg: &ExperimentConfig,
    sampler: &PathSampler,
    n: usize,
    rep: usize,
) -> Result<Replication> {
    let mut stream = NormalStream::new(seed_for(cfg.seed, n), rep as u64);
    let path = sampler.sample(&mut stream)?;
    let (vn, v2n) = vn_v2n(&path.values)?;
    let mut out = Replication {
        rep,
        vn,
        v2n,
        ratio: None,
        k_hat: None,
        h_hat: None,
        valid_k: false,
        valid_h: false,
    };
    if !cfg.estimators {
        return Ok(out);
    }
    let Ok(hat) = ratio_estimator(vn, v2n) else {
        return Ok(out);
    };
    out.ratio = Some(hat);
    if let ProcessModel::Bifbm { t1, t2, .. } = cfg.model {
        if let Ok(k) = k_estimator(vn, hat, n, t1, t2) {
            out.k_hat = Some(k.value);
            out.valid_k = k.valid;
            if let Ok(h) = h_from_hk_k(hat, k) {
                out.h_hat = Some(h.value);
                out.valid_h = h.valid;
            }
        }
    }
    Ok(out)
}

/// Run the replications of one resolution, in parallel on `pool`, returned in order.
pub fn run_replications(
    cfg: &ExperimentConfig,
    n: usize,
    pool: &rayon::ThreadPool,
) -> Result<(PathSampler, Vec<Replication>)> {
    let sampler = PathSampler::for_model(&cfg.model, 2 * n)?;
    let reps = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| replicate(cfg, &sampler, n, r))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok((sampler, reps))
}

fn summarize_estimator(
    kind: EstimatorKind,
    truth: f64,
    asymptotic_bias: f64,
    values: &[f64],
    valid_count: usize,
    c_true: &TheoreticalConstants,
    n: usize,
    form: VarianceForm,
) -> Result<EstimatorSummary> {
    let s = Summary::of(values);
    let printed = stderr_for(kind, c_true, n, VarianceForm::Printed).ok();
    let delta = stderr_for(kind, c_true, n, VarianceForm::DeltaMethod).ok();
    let stderr = match form {
        VarianceForm::Printed => printed,
        VarianceForm::DeltaMethod => delta,
    }
    .unwrap_or(f64::NAN);
    let std: Vec<f64> = values
        .iter()
        .map(|v| (v - truth - asymptotic_bias) / stderr)
        .collect();
    let ss = Summary::of(&std);
    let covered = std.iter().filter(|z| z.abs() <= 1.959_963_984_540_054).count();
    let bias = s.mean - truth;
    Ok(EstimatorSummary {
        kind,
        truth,
        asymptotic_bias,
        valid_count,
        mean: s.mean,
        var: s.var,
        bias,
        bias_se: s.mean_se,
        bias_z: z_score(bias, asymptotic_bias, s.mean_se),
        stderr,
        stderr_printed: printed,
        stderr_delta: delta,
        standardized_mean: ss.mean,
        standardized_var: ss.var,
        standardized_var_se: ss.var_se,
        coverage95: covered as f64 / values.len().max(1) as f64,
    })
}

fn summarize(
    cfg: &ExperimentConfig,
    c: &TheoreticalConstants,
    n: usize,
    sampler: &PathSampler,
    reps: &[Replication],
) -> Result<NReport> {
    let nf = n as f64;
    let scale_n = normalization(c, n);
    let scale_2n = normalization(c, 2 * n);
    let xs: Vec<f64> = reps.iter().map(|r| scale_n * r.vn).collect();
    let ys: Vec<f64> = reps.iter().map(|r| scale_2n * r.v2n).collect();
    let normalized = Summary::of(&xs);
    let clt_vals: Vec<f64> = xs.iter().map(|x| nf.sqrt() * (x - c.limit)).collect();
    let clt = Summary::of(&clt_vals);
    let ys_mean = Summary::of(&ys).mean;
    let mut cov = NeumaierSum::new();
    for (x, y) in xs.iter().zip(&ys) {
        cov.add((x - normalized.mean) * (y - ys_mean));
    }
    let clt_cov = if reps.len() > 1 {
        nf * cov.value() / (reps.len() as f64 - 1.0)
    } else {
        0.0
    };
    let normality = normality_diagnostic(&clt_vals).ok();
    let exact = if cfg.exact_moments {
        let d = increment_cov_model(&cfg.model, n)?;
        let vs: Vec<f64> = reps.iter().map(|r| r.vn).collect();
        let s = Summary::of(&vs);
        let (em, ev) = (exact_mean_vn(&d), exact_var_vn(&d));
        Some(ExactComparison {
            exact_mean_vn: em,
            exact_var_vn: ev,
            mc_mean_vn: s.mean,
            mc_var_vn: s.var,
            mean_z: z_score(s.mean, em, s.mean_se),
            var_z: z_score(s.var, ev, s.var_se),
        })
    } else {
        None
    };
    let invalid = reps.iter().filter(|r| r.ratio.is_none()).count();
    let mut estimators = Vec::new();
    if cfg.estimators {
        let ratios: Vec<f64> = reps.iter().filter_map(|r| r.ratio).collect();
        let bias = match cfg.model {
            ProcessModel::AfbmSegment { .. } => AfbmBias::new(&cfg.model)?.bias(n)?,
            _ => 0.0,
        };
        if !ratios.is_empty() {
            estimators.push(summarize_estimator(
                EstimatorKind::Ratio,
                c.index,
                bias,
                &ratios,
                ratios.iter().filter(|h| **h > 0.0 && **h < 1.0).count(),
                c,
                n,
                cfg.variance_form,
            )?);
        }
        if let ProcessModel::Bifbm { hurst, k, .. } = cfg.model {
            let ks: Vec<f64> = reps.iter().filter_map(|r| r.k_hat).collect();
            let hs: Vec<f64> = reps.iter().filter_map(|r| r.h_hat).collect();
            if !ks.is_empty() {
                estimators.push(summarize_estimator(
                    EstimatorKind::K,
                    k,
                    0.0,
                    &ks,
                    reps.iter().filter(|r| r.valid_k).count(),
                    c,
                    n,
                    cfg.variance_form,
                )?);
            }
            if !hs.is_empty() {
                estimators.push(summarize_estimator(
                    EstimatorKind::H,
                    hurst,
                    0.0,
                    &hs,
                    reps.iter().filter(|r| r.valid_h).count(),
                    c,
                    n,
                    cfg.variance_form,
                )?);
            }
        }
    }
    Ok(NReport {
        n,
        replications: reps.len(),
        invalid,
        sampler: match sampler {
            PathSampler::Dense(_) => "dense_cholesky".into(),
            PathSampler::Toeplitz(_) => "durbin_levinson".into(),
        },
        normalized,
        limit: c.limit,
        normalized_mean_z: z_score(normalized.mean, c.limit, normalized.mean_se),
        clt,
        clt_var_target: c.sigma_sq,
        clt_var_z: z_score(clt.var, c.sigma_sq, clt.var_se),
        normality,
        clt_cov,
        clt_cov_target: c.sigma_matrix[0][1],
        exact,
        estimators,
    })
}

fn write_raw<W: Write>(mut w: W, n: usize, reps: &[Replication]) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
    for r in reps {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{},{},{}",
            r.rep,
            n,
            r.vn,
            r.v2n,
            opt(r.ratio),
            opt(r.k_hat),
            opt(r.h_hat)
        )?;
    }
    Ok(())
}

/// Run the experiment; writes the raw CSV when configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let c = constants_for(&cfg.model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(cfg.threads))
        .build()
        .map_err(|e| Error::Model(format!("thread pool: {e}")))?;
    let mut raw = match &cfg.raw_csv {
        Some(p) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
            writeln!(f, "rep,n,vn,v2n,estimate,k_hat,h_hat")?;
            Some(f)
        }
        None => None,
    };
    let mut results = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let (sampler, reps) = run_replications(cfg, n, &pool)?;
        if let Some(f) = raw.as_mut() {
            write_raw(f, n, &reps)?;
        }
        results.push(summarize(cfg, &c, n, &sampler, &reps)?);
    }
    if let Some(mut f) = raw {
        f.flush()?;
    }
    Ok(McReport {
        model: cfg.model.clone(),
        seed: cfg.seed,
        replications: cfg.replications,
        variance_form: cfg.variance_form,
        constants: c,
        results,
    })
}

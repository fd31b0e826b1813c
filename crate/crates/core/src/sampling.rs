//! Exact Gaussian sample paths on the uniform grid.

use std::io::{BufRead, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{domain, Error, Result};
use crate::models::{CovGrid, ProcessModel};
use crate::numeric::dot;

/// Where a path's randomness came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub stream: u64,
}

/// `X_{k/n}` for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub n: usize,
    pub values: Vec<f64>,
    pub seed: Option<SeedRecord>,
}

impl PathSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(domain("a path needs at least two grid points"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("path contains non-finite values".into()));
        }
        Ok(PathSample {
            n: values.len() - 1,
            values,
            seed: None,
        })
    }

    /// Add a deterministic mean `t ↦ m(t)` to every grid value.
    pub fn add_mean<F: Fn(f64) -> f64>(&mut self, m: F) {
        let n = self.n as f64;
        for (k, v) in self.values.iter_mut().enumerate() {
            *v += m(k as f64 / n);
        }
    }

    /// CSV with header `t,value`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        let n = self.n as f64;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", k as f64 / n, v)?;
        }
        Ok(())
    }

    /// Read a `t,value` CSV; the times must form the uniform grid `k/n`.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty path file".into()))??;
        if header.trim() != "t,value" {
            return Err(Error::Parse(format!("expected header `t,value`, got `{}`", header.trim())));
        }
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(t), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse(format!("line {}: expected two fields", i + 2)));
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))
            };
            ts.push(parse(t)?);
            vs.push(parse(v)?);
        }
        let path = PathSample::new(vs)?;
        let n = path.n as f64;
        for (k, t) in ts.iter().enumerate() {
            if (t - k as f64 / n).abs() > 1e-9 {
                return Err(Error::Parse(format!("time {t} is not on the uniform grid k/{}", path.n)));
            }
        }
        Ok(path)
    }
}

/// Stream of standard normals by inversion of ChaCha8 uniforms; replication `stream` of
/// `seed` is reproducible on its own.
pub struct NormalStream {
    rng: ChaCha8Rng,
    normal: Normal,
    record: SeedRecord,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NormalStream {
            rng,
            normal: Normal::standard(),
            record: SeedRecord { seed, stream },
        }
    }

    pub fn record(&self) -> SeedRecord {
        self.record
    }

    /// Uniform on the open interval (0, 1).
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next();
        }
    }
}

/// Lower-triangular factor `F` with `F Fᵀ = grid + jitter·I` (zero rows excluded from the
/// jitter).
#[derive(Debug, Clone)]
pub struct CovFactor {
    dim: usize,
    /// Row-major `dim × dim`, upper triangle zero.
    lower: Vec<f64>,
    jitter: f64,
}

const BLOCK: usize = 16;
const JITTER_STEPS: usize = 4;

/// Cholesky factorization of the active (nonzero) rows, left-looking with 16-row blocks so
/// each finished row is streamed once per block.
fn cholesky(a: &[f64], dim: usize, active: &[usize], jitter: f64) -> Option<Vec<f64>> {
    let m = active.len();
    let mut l = vec![0.0; m * m];
    let mut diag = vec![0.0; m];
    let mut i0 = 0;
    while i0 < m {
        let i1 = (i0 + BLOCK).min(m);
        let (done, block) = l.split_at_mut(i0 * m);
        // Columns left of the block: one pass over each finished row.
        for j in 0..i0 {
            let lj = &done[j * m..j * m + j];
            for i in i0..i1 {
                let row = &mut block[(i - i0) * m..(i - i0 + 1) * m];
                let s = dot(&row[..j], lj);
                row[j] = (a[active[i] * dim + active[j]] - s) / diag[j];
            }
        }
        // Triangle inside the block.
        for i in i0..i1 {
            for j in i0..=i {
                let (ri, rj) = ((i - i0) * m, (j - i0) * m);
                let s = dot(&block[ri..ri + j], &block[rj..rj + j]);
                let mut v = a[active[i] * dim + active[j]] - s;
                if i == j {
                    v += jitter;
                    if !(v > 0.0) {
                        return None;
                    }
                    let d = v.sqrt();
                    block[ri + i] = d;
                    diag[i] = d;
                } else {
                    block[ri + j] = v / diag[j];
                }
            }
        }
        i0 = i1;
    }
    Some(l)
}

/// Factorize a covariance grid. A failed factorization is retried with diagonal jitter
/// `1e−12·max diag`, escalated ×10 at most four times.
pub fn factorize(grid: &CovGrid) -> Result<CovFactor> {
    factorize_matrix(grid.entries(), grid.n() + 1)
}

/// Factorize a symmetric row-major `dim × dim` matrix.
pub fn factorize_matrix(a: &[f64], dim: usize) -> Result<CovFactor> {
    if a.len() != dim * dim {
        return Err(domain("matrix size does not match its dimension"));
    }
    // Rows with zero variance and zero covariances (X_0 = 0) carry no randomness.
    let active: Vec<usize> = (0..dim)
        .filter(|&j| (0..dim).any(|k| a[j * dim + k] != 0.0))
        .collect();
    let max_diag = (0..dim).map(|j| a[j * dim + j]).fold(0.0, f64::max);
    let mut jitter = 0.0;
    for attempt in 0..=JITTER_STEPS + 1 {
        if let Some(l) = cholesky(a, dim, &active, jitter) {
            let m = active.len();
            let mut lower = vec![0.0; dim * dim];
            for (ii, &i) in active.iter().enumerate() {
                for (jj, &j) in active.iter().enumerate().take(ii + 1) {
                    lower[i * dim + j] = l[ii * m + jj];
                }
            }
            return Ok(CovFactor { dim, lower, jitter });
        }
        jitter = 1e-12 * max_diag * 10f64.powi(attempt as i32);
        if attempt == JITTER_STEPS + 1 {
            break;
        }
    }
    Err(Error::Model(format!(
        "Cholesky factorization failed even with jitter {:.3e}",
        1e-12 * max_diag * 10f64.powi(JITTER_STEPS as i32)
    )))
}

impl CovFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `F[i][j]`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// `F z` for a normal vector `z` of length `dim`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| dot(&self.lower[i * self.dim..i * self.dim + i + 1], &z[..i + 1]))
            .collect()
    }

    /// `‖F Fᵀ − (A + jitter·I_active)‖_F / ‖A‖_F`.
    pub fn reconstruction_error(&self, a: &[f64]) -> f64 {
        let d = self.dim;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            let active = self.get(i, i) != 0.0;
            for j in 0..d {
                let k = i.min(j) + 1;
                let v = dot(&self.lower[i * d..i * d + k], &self.lower[j * d..j * d + k]);
                let target = a[i * d + j] + if i == j && active { self.jitter } else { 0.0 };
                num += (v - target).powi(2);
                den += a[i * d + j].powi(2);
            }
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// One path `F z` with `z` drawn from `stream`.
pub fn sample_path(factor: &CovFactor, stream: &mut NormalStream) -> PathSample {
    let mut z = vec![0.0; factor.dim];
    stream.fill(&mut z);
    PathSample {
        n: factor.dim - 1,
        values: factor.apply(&z),
        seed: Some(stream.record()),
    }
}

/// Exact sampler for processes with stationary increments started at zero, by the
/// Durbin-Levinson recursion on the increment autocovariance. Produces the same path as the
/// dense Cholesky factor for the same normal vector (the first normal is unused).
#[derive(Debug, Clone)]
pub struct ToeplitzSampler {
    n: usize,
    /// Autocovariance of `X_{i/n} − X_{(i−1)/n}`, lags `0..n−1`.
    acov: Vec<f64>,
}

impl ToeplitzSampler {
    /// From the lag part of the covariance decomposition (`R = sep(j) + sep(k) + lag(|j−k|)`).
    pub fn from_lag(lag: &[f64]) -> Result<Self> {
        if lag.len() < 3 {
            return Err(domain("lag vector too short"));
        }
        let n = lag.len() - 1;
        let acov = (0..n)
            .map(|m| -(lag[m + 1] + lag[m.abs_diff(1)] - 2.0 * lag[m]))
            .collect();
        Ok(ToeplitzSampler { n, acov })
    }

    pub fn for_model(model: &ProcessModel, n: usize) -> Result<Self> {
        if !model.is_stationary_from_origin() {
            return Err(Error::Model(
                "Toeplitz sampling needs stationary increments started at zero".into(),
            ));
        }
        Self::from_lag(&model.kernel()?.lag_part(n)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Paths for a batch of normal vectors of length `n + 1` sharing one recursion.
    pub fn sample_batch(&self, zs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.n;
        if zs.iter().any(|z| z.len() != n + 1) {
            return Err(domain("normal vectors must have length n + 1"));
        }
        let b = zs.len();
        // incs[p][i] = increment i (0-based) of path p.
        let mut incs = vec![vec![0.0; n]; b];
        let mut phi: Vec<f64> = Vec::with_capacity(n);
        let mut prev: Vec<f64> = Vec::with_capacity(n);
        let mut v = self.acov[0];
        if !(v > 0.0) {
            return Err(Error::Model("increment variance is not positive".into()));
        }
        for (p, z) in zs.iter().enumerate() {
            incs[p][0] = v.sqrt() * z[1];
        }
        // reversed φ so the prediction is a contiguous dot product with past increments
        let mut phi_rev: Vec<f64> = Vec::with_capacity(n);
        for i in 1..n {
            // Durbin-Levinson update from order i−1 to order i.
            let mut num = self.acov[i];
            for (j, f) in phi.iter().enumerate() {
                num -= f * self.acov[i - 1 - j];
            }
            let kappa = num / v;
            prev.clear();
            prev.extend_from_slice(&phi);
            for j in 0..phi.len() {
                phi[j] = prev[j] - kappa * prev[prev.len() - 1 - j];
            }
            phi.push(kappa);
            v *= 1.0 - kappa * kappa;
            if !(v > 0.0) {
                return Err(Error::Model(format!(
                    "innovation variance vanished at step {i}; covariance is singular"
                )));
            }
            phi_rev.clear();
            phi_rev.extend(phi.iter().rev());
            let sd = v.sqrt();
            for (p, z) in zs.iter().enumerate() {
                let pred = dot(&phi_rev, &incs[p][..i]);
                incs[p][i] = pred + sd * z[i + 1];
            }
        }
        Ok(incs
            .into_iter()
            .map(|inc| {
                let mut x = Vec::with_capacity(n + 1);
                x.push(0.0);
                let mut acc = 0.0;
                for d in inc {
                    acc += d;
                    x.push(acc);
                }
                x
            })
            .collect())
    }

    pub fn sample_path(&self, stream: &mut NormalStream) -> Result<PathSample> {
        let mut z = vec![0.0; self.n + 1];
        stream.fill(&mut z);
        let values = self.sample_batch(std::slice::from_ref(&z))?.pop().expect("one path");
        Ok(PathSample {
            n: self.n,
            values,
            seed: Some(stream.record()),
        })
    }
}

/// Either exact sampler, chosen per model and resolution.
#[derive(Debug, Clone)]
pub enum PathSampler {
    Dense(CovFactor),
    Toeplitz(ToeplitzSampler),
}

/// Resolution above which stationary-increment models use the Toeplitz sampler.
pub const DENSE_MAX_N: usize = 4096;

impl PathSampler {
    /// Dense factorization up to [`DENSE_MAX_N`], the Durbin-Levinson recursion beyond when the
    /// model allows it.
    pub fn for_model(model: &ProcessModel, n: usize) -> Result<Self> {
        if n > DENSE_MAX_N && model.is_stationary_from_origin() {
            return Ok(PathSampler::Toeplitz(ToeplitzSampler::for_model(model, n)?));
        }
        let grid = crate::models::cov_grid_unchecked(model, n)?;
        Ok(PathSampler::Dense(factorize(&grid)?))
    }

    pub fn n(&self) -> usize {
        match self {
            PathSampler::Dense(f) => f.dim - 1,
            PathSampler::Toeplitz(t) => t.n,
        }
    }

    pub fn sample(&self, stream: &mut NormalStream) -> Result<PathSample> {
        match self {
            PathSampler::Dense(f) => Ok(sample_path(f, stream)),
            PathSampler::Toeplitz(t) => t.sample_path(stream),
        }
    }
}

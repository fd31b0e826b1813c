//! Second-order increments, quadratic variations and their exact finite-n moments.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::models::{CovGrid, Kernel, ProcessModel};
use crate::numeric::{compensated_sum, NeumaierSum};
use crate::sampling::PathSample;

/// `ΔX_k = X_{(k+1)/n} + X_{(k−1)/n} − 2X_{k/n}` for `k = 1..n−1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondIncrements {
    pub n: usize,
    pub values: Vec<f64>,
}

/// Second increments of grid values `X_{k/n}`, `k = 0..=n`.
pub fn second_increments_of(values: &[f64]) -> Result<SecondIncrements> {
    if values.len() < 4 {
        return Err(domain("second increments need n >= 3"));
    }
    let n = values.len() - 1;
    let d = values
        .windows(3)
        .map(|w| w[2] + w[0] - 2.0 * w[1])
        .collect();
    Ok(SecondIncrements { n, values: d })
}

pub fn second_increments(path: &PathSample) -> Result<SecondIncrements> {
    second_increments_of(&path.values)
}

/// `V_n = Σ ΔX_k²` of grid values.
pub fn vn_of(values: &[f64]) -> Result<f64> {
    let inc = second_increments_of(values)?;
    Ok(compensated_sum(inc.values.iter().map(|d| d * d)))
}

pub fn vn(path: &PathSample) -> Result<f64> {
    vn_of(&path.values)
}

/// Grid values at level `n` taken from a path on the `2n` grid.
pub fn subsample(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() % 2 == 0 {
        return Err(domain("subsampling needs an even resolution"));
    }
    Ok(values.iter().step_by(2).copied().collect())
}

/// `(V_n, V_2n)` from one path on the `2n` grid.
pub fn vn_v2n(values: &[f64]) -> Result<(f64, f64)> {
    let coarse = subsample(values)?;
    Ok((vn_of(&coarse)?, vn_of(values)?))
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// `d(m) = d_{k,k+m}`, `m = 0..n−2`.
    Toeplitz(Vec<f64>),
    /// Row-major `(n−1)×(n−1)`, 0-based over `k = 1..n−1`.
    Dense(Vec<f64>),
}

/// `d_jk = E(ΔX_j ΔX_k)`, `j, k = 1..n−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementCovariance {
    n: usize,
    storage: Storage,
}

const W: [f64; 3] = [1.0, -2.0, 1.0];
const FOURTH: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];

fn toeplitz_from_lag(lag: &[f64], n: usize) -> Vec<f64> {
    (0..=n - 2)
        .map(|m| {
            let mut s = NeumaierSum::new();
            for (i, c) in FOURTH.iter().enumerate() {
                let off = m as isize + i as isize - 2;
                s.add(c * lag[off.unsigned_abs()]);
            }
            s.value()
        })
        .collect()
}

/// Increment covariance of a grid by the 9-point tensor second difference.
///
/// The grid is stored as `sep(j) + sep(k) + lag(|j−k|) + smooth(j,k)`; the separable part is
/// annihilated by the stencil, so it is applied to the remaining parts only. Without a smooth
/// part the result is Toeplitz.
pub fn increment_cov(grid: &CovGrid) -> Result<IncrementCovariance> {
    let n = grid.n();
    if n < 3 {
        return Err(domain("increment covariance needs n >= 3"));
    }
    let lag = grid.lag();
    let Some(smooth) = grid.smooth() else {
        return Ok(IncrementCovariance {
            n,
            storage: Storage::Toeplitz(toeplitz_from_lag(lag, n)),
        });
    };
    let m = n + 1;
    let dim = n - 1;
    let mut d = vec![0.0; dim * dim];
    for j in 1..n {
        for k in 1..=j {
            let mut s = NeumaierSum::new();
            for (a, wa) in W.iter().enumerate() {
                for (b, wb) in W.iter().enumerate() {
                    let (r, c) = (j + a - 1, k + b - 1);
                    s.add(wa * wb * (lag[r.abs_diff(c)] + smooth[r * m + c]));
                }
            }
            let v = s.value();
            d[(j - 1) * dim + (k - 1)] = v;
            d[(k - 1) * dim + (j - 1)] = v;
        }
    }
    Ok(IncrementCovariance {
        n,
        storage: Storage::Dense(d),
    })
}

/// Increment covariance straight from the model; skips the full grid when the result is
/// Toeplitz (FBM and AFBM segments), which keeps large `n` cheap.
pub fn increment_cov_model(model: &ProcessModel, n: usize) -> Result<IncrementCovariance> {
    if n < 4 {
        return Err(domain("grid resolution must be at least 4"));
    }
    model.validate()?;
    let kernel = model.kernel()?;
    match kernel {
        Kernel::Bifbm { .. } => increment_cov(&crate::models::cov_grid_unchecked(model, n)?),
        _ => Ok(IncrementCovariance {
            n,
            storage: Storage::Toeplitz(toeplitz_from_lag(&kernel.lag_part(n)?, n)),
        }),
    }
}

impl IncrementCovariance {
    /// From a row-major `(n−1)×(n−1)` matrix; must be symmetric with a nonnegative diagonal.
    pub fn from_matrix(n: usize, d: Vec<f64>) -> Result<Self> {
        let dim = n.saturating_sub(1);
        if n < 3 || d.len() != dim * dim {
            return Err(domain("increment covariance must be (n-1)x(n-1) with n >= 3"));
        }
        for j in 0..dim {
            if !(d[j * dim + j] >= 0.0) {
                return Err(domain("increment covariance diagonal must be nonnegative"));
            }
            for k in 0..j {
                if d[j * dim + k] != d[k * dim + j] {
                    return Err(domain("increment covariance must be symmetric"));
                }
            }
        }
        Ok(Self {
            n,
            storage: Storage::Dense(d),
        })
    }

    /// From `d(m) = d_{k,k+m}`, `m = 0..n−2`.
    pub fn from_toeplitz(n: usize, d: Vec<f64>) -> Result<Self> {
        if n < 3 || d.len() != n - 1 || !(d[0] >= 0.0) {
            return Err(domain("toeplitz increment covariance needs n-1 lags and d(0) >= 0"));
        }
        Ok(Self {
            n,
            storage: Storage::Toeplitz(d),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_toeplitz(&self) -> bool {
        matches!(self.storage, Storage::Toeplitz(_))
    }

    /// `d_jk` with 1-based indices.
    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        match &self.storage {
            Storage::Toeplitz(d) => d[j.abs_diff(k)],
            Storage::Dense(d) => d[(j - 1) * (self.n - 1) + (k - 1)],
        }
    }

    /// Row `j` (1-based) as a vector over `k = 1..n−1`.
    pub fn row(&self, j: usize) -> Vec<f64> {
        (1..self.n).map(|k| self.get(j, k)).collect()
    }
}

/// `E V_n = Σ d_kk`.
pub fn exact_mean_vn(d: &IncrementCovariance) -> f64 {
    match &d.storage {
        Storage::Toeplitz(t) => (d.n - 1) as f64 * t[0],
        Storage::Dense(_) => compensated_sum((1..d.n).map(|k| d.get(k, k))),
    }
}

/// `Var V_n = 2 Σ d_kk² + 4 Σ_{k<j} d_jk²` (Isserlis).
pub fn exact_var_vn(d: &IncrementCovariance) -> f64 {
    let n = d.n;
    let mut s = NeumaierSum::new();
    match &d.storage {
        Storage::Toeplitz(t) => {
            s.add(2.0 * (n - 1) as f64 * t[0] * t[0]);
            for (m, v) in t.iter().enumerate().skip(1) {
                s.add(4.0 * (n - 1 - m) as f64 * v * v);
            }
        }
        Storage::Dense(_) => {
            for j in 1..n {
                let djj = d.get(j, j);
                s.add(2.0 * djj * djj);
                for k in 1..j {
                    let v = d.get(j, k);
                    s.add(4.0 * v * v);
                }
            }
        }
    }
    s.value()
}

/// `Cov(V_n, V_2n)` from the increment covariance at level `2n`, as the six sums obtained from
/// `ΔX_k^{(n)} = ΔX_{2k+1}^{(2n)} + ΔX_{2k−1}^{(2n)} + 2ΔX_{2k}^{(2n)}`.
pub fn exact_cov_vn_v2n(fine: &IncrementCovariance) -> Result<f64> {
    if fine.n % 2 != 0 || fine.n < 6 {
        return Err(domain("fine increment covariance needs an even resolution 2n with n >= 3"));
    }
    let n = fine.n / 2;
    let mut s = [NeumaierSum::new(); 6];
    for k in 1..n {
        for j in 1..2 * n {
            let a = fine.get(2 * k + 1, j);
            let b = fine.get(2 * k - 1, j);
            let c = fine.get(2 * k, j);
            s[0].add(2.0 * a * a);
            s[1].add(2.0 * b * b);
            s[2].add(8.0 * c * c);
            s[3].add(4.0 * b * a);
            s[4].add(8.0 * a * c);
            s[5].add(8.0 * b * c);
        }
    }
    Ok(compensated_sum(s.iter().map(|x| x.value())))
}

/// Exact moments of `(V_n, V_2n)` for a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMoments {
    pub n: usize,
    pub mean_vn: f64,
    pub var_vn: f64,
    pub mean_v2n: f64,
    pub var_v2n: f64,
    pub cov_vn_v2n: f64,
}

pub fn exact_moments(model: &ProcessModel, n: usize) -> Result<ExactMoments> {
    let coarse = increment_cov_model(model, n)?;
    let fine = increment_cov_model(model, 2 * n)?;
    Ok(ExactMoments {
        n,
        mean_vn: exact_mean_vn(&coarse),
        var_vn: exact_var_vn(&coarse),
        mean_v2n: exact_mean_vn(&fine),
        var_v2n: exact_var_vn(&fine),
        cov_vn_v2n: exact_cov_vn_v2n(&fine)?,
    })
}

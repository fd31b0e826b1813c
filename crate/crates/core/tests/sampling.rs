use fracvar::models::{cov_grid, HurstProfile, ProcessModel};
use fracvar::sampling::*;

fn brownian(n: usize) -> Vec<f64> {
    let m = n + 1;
    let mut a = vec![0.0; m * m];
    for j in 0..m {
        for k in 0..m {
            a[j * m + k] = j.min(k) as f64 / n as f64;
        }
    }
    a
}

#[test]
fn identity_factor() {
    let mut a = vec![0.0; 25];
    for i in 0..5 {
        a[i * 5 + i] = 1.0;
    }
    let f = factorize_matrix(&a, 5).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            assert_eq!(f.get(i, j), if i == j { 1.0 } else { 0.0 });
        }
    }
    assert_eq!(f.jitter(), 0.0);
}

#[test]
fn brownian_factor_is_step_indicators() {
    let n = 40;
    let a = brownian(n);
    let f = factorize_matrix(&a, n + 1).unwrap();
    let s = (1.0 / n as f64).sqrt();
    for i in 0..=n {
        for j in 0..=n {
            let want = if j >= 1 && j <= i { s } else { 0.0 };
            assert!((f.get(i, j) - want).abs() < 1e-12, "({i},{j})");
        }
    }
    assert!(f.reconstruction_error(&a) < 1e-10);
}

#[test]
fn zero_first_row_gives_zero_column() {
    let g = cov_grid(&ProcessModel::Fbm { hurst: 0.3 }, 32).unwrap();
    let f = factorize(&g).unwrap();
    for i in 0..=32 {
        assert_eq!(f.get(i, 0), 0.0);
    }
}

#[test]
fn reconstruction_for_every_model() {
    let models = [
        ProcessModel::Fbm { hurst: 0.25 },
        ProcessModel::Fbm { hurst: 0.85 },
        ProcessModel::Bifbm {
            hurst: 0.6,
            k: 0.5,
            t1: 1.0,
            t2: 2.0,
        },
        ProcessModel::AfbmSegment {
            profile: HurstProfile::PiecewiseConstant {
                breakpoints: vec![0.0, std::f64::consts::FRAC_PI_2],
                values: vec![0.4, 0.8],
            },
            length: 1.0,
            eps: 0.2,
            omega: 0.0,
        },
    ];
    for m in &models {
        let g = cov_grid(m, 200).unwrap();
        let f = factorize(&g).unwrap();
        let err = f.reconstruction_error(g.entries());
        assert!(err < 1e-9, "{m:?}: {err:e}");
    }
}

#[test]
fn singular_matrix_gets_jitter_or_fails_cleanly() {
    // rank one: all entries 1
    let a = vec![1.0; 16];
    match factorize_matrix(&a, 4) {
        Ok(f) => {
            assert!(f.jitter() > 0.0);
            assert!(f.reconstruction_error(&a) < 1e-6);
        }
        Err(e) => assert!(matches!(e, fracvar::Error::Model(_))),
    }
    // negative definite cannot be rescued
    let b = vec![-1.0, 0.0, 0.0, -1.0];
    assert!(matches!(factorize_matrix(&b, 2), Err(fracvar::Error::Model(_))));
}

#[test]
fn zero_covariance_gives_zero_path() {
    let f = factorize_matrix(&[0.0; 9], 3).unwrap();
    let p = sample_path(&f, &mut NormalStream::new(1, 0));
    assert_eq!(p.values, vec![0.0; 3]);
}

#[test]
fn same_seed_same_path() {
    let g = cov_grid(&ProcessModel::Fbm { hurst: 0.7 }, 64).unwrap();
    let f = factorize(&g).unwrap();
    let a = sample_path(&f, &mut NormalStream::new(42, 3));
    let b = sample_path(&f, &mut NormalStream::new(42, 3));
    let c = sample_path(&f, &mut NormalStream::new(42, 4));
    assert_eq!(a, b);
    assert_ne!(a.values, c.values);
    assert_eq!(a.seed, Some(SeedRecord { seed: 42, stream: 3 }));
}

#[test]
fn toeplitz_matches_dense_factor() {
    for m in [
        ProcessModel::Fbm { hurst: 0.3 },
        ProcessModel::Fbm { hurst: 0.8 },
        ProcessModel::AfbmSegment {
            profile: HurstProfile::Constant { h: 0.45 },
            length: 2.0,
            eps: 0.0,
            omega: 0.4,
        },
    ] {
        let n = 128;
        let dense = factorize(&cov_grid(&m, n).unwrap()).unwrap();
        let toeplitz = ToeplitzSampler::for_model(&m, n).unwrap();
        let a = sample_path(&dense, &mut NormalStream::new(9, 1));
        let b = toeplitz.sample_path(&mut NormalStream::new(9, 1)).unwrap();
        let scale = a.values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-10 * scale, "{m:?}");
        }
    }
}

#[test]
fn toeplitz_rejects_nonstationary_models() {
    let m = ProcessModel::Bifbm {
        hurst: 0.5,
        k: 0.5,
        t1: 1.0,
        t2: 2.0,
    };
    assert!(ToeplitzSampler::for_model(&m, 16).is_err());
}

/// Entrywise empirical covariance over 20000 paths at n = 16 within 5 standard errors.
fn check_empirical_covariance(model: &ProcessModel) {
    let n = 16;
    let g = cov_grid(model, n).unwrap();
    let f = factorize(&g).unwrap();
    let m = 20_000;
    let paths: Vec<Vec<f64>> = (0..m)
        .map(|r| sample_path(&f, &mut NormalStream::new(2024, r as u64)).values)
        .collect();
    for j in 0..=n {
        for k in 0..=j {
            let prods: Vec<f64> = paths.iter().map(|p| p[j] * p[k]).collect();
            let mean = prods.iter().sum::<f64>() / m as f64;
            let var = prods.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
            let se = (var / m as f64).sqrt();
            let target = g.get(j, k);
            assert!(
                (mean - target).abs() <= 5.0 * se + 1e-14,
                "{model:?} ({j},{k}): {mean} vs {target} (se {se})"
            );
        }
    }
}

#[test]
fn brownian_empirical_covariance_bound() {
    // 4·√(2/M) bound on min(j,k)/16
    let n = 16;
    let g = cov_grid(&ProcessModel::Fbm { hurst: 0.5 }, n).unwrap();
    let f = factorize(&g).unwrap();
    let m = 20_000;
    let paths: Vec<Vec<f64>> = (0..m)
        .map(|r| sample_path(&f, &mut NormalStream::new(5, r as u64)).values)
        .collect();
    let bound = 4.0 * (2.0 / m as f64).sqrt();
    for j in 0..=n {
        for k in 0..=n {
            let mean = paths.iter().map(|p| p[j] * p[k]).sum::<f64>() / m as f64;
            assert!((mean - j.min(k) as f64 / 16.0).abs() < bound);
        }
    }
}

#[test]
fn empirical_covariance_every_model() {
    check_empirical_covariance(&ProcessModel::Fbm { hurst: 0.3 });
    check_empirical_covariance(&ProcessModel::Bifbm {
        hurst: 0.6,
        k: 0.5,
        t1: 1.0,
        t2: 2.0,
    });
    check_empirical_covariance(&ProcessModel::AfbmSegment {
        profile: HurstProfile::Smooth {
            theta_star: 1.0,
            h_min: 0.3,
            h2: 1.0,
            h3: 0.0,
        },
        length: 1.0,
        eps: 0.1,
        omega: 1.0,
    });
}

#[test]
fn csv_round_trip_and_mean() {
    let mut p = PathSample::new(vec![0.0, 0.25, -1.5, 1e-300, 3.0]).unwrap();
    p.add_mean(|t| 2.0 * t);
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("t,value\n"));
    assert_eq!(text.lines().count(), 6);
    let q = PathSample::read_csv(&buf[..]).unwrap();
    assert_eq!(q.values, p.values);
    assert!(PathSample::read_csv(&b"x,y\n0,1\n"[..]).is_err());
    assert!(PathSample::read_csv(&b"t,value\n0,1\n0.7,2\n"[..]).is_err());
}

#[test]
fn normals_have_unit_moments() {
    let mut s = NormalStream::new(11, 0);
    let m = 200_000;
    let xs: Vec<f64> = (0..m).map(|_| s.next()).collect();
    let mean = xs.iter().sum::<f64>() / m as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
    assert!(mean.abs() < 5.0 / (m as f64).sqrt());
    assert!((var - 1.0).abs() < 5.0 * (2.0 / m as f64).sqrt());
}

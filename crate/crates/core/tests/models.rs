use std::f64::consts::PI;

use approx::assert_relative_eq;
use fracvar::models::*;
use proptest::prelude::*;

fn afbm(profile: HurstProfile, eps: f64, omega: f64) -> ProcessModel {
    ProcessModel::AfbmSegment {
        profile,
        length: 1.0,
        eps,
        omega,
    }
}

#[test]
fn fbm_cov_examples() {
    assert_eq!(fbm_cov(1.0, 1.0, 0.5).unwrap(), 1.0);
    assert_relative_eq!(fbm_cov(0.3, 0.3, 0.7).unwrap(), 0.3f64.powf(1.4), max_relative = 1e-15);
    assert_relative_eq!(fbm_cov(1.0, 0.5, 0.7).unwrap(), 0.5, max_relative = 1e-15);
    assert!(fbm_cov(1.0, 1.0, 1.0).is_err());
    assert!(fbm_cov(1.0, 1.0, 0.0).is_err());
}

#[test]
fn bifbm_cov_examples() {
    assert_eq!(bifbm_cov(1.0, 1.0, 0.5, 1.0).unwrap(), 1.0);
    assert_eq!(bifbm_cov(0.0, 0.0, 0.3, 0.4).unwrap(), 0.0);
    // 30-digit reference for (1/√2)((2^{1.2} + 1)^{1/2} − 1)
    assert_relative_eq!(
        bifbm_cov(2.0, 1.0, 0.6, 0.5).unwrap(),
        0.576_909_712_086_430_25,
        max_relative = 1e-14
    );
    assert!(bifbm_cov(-1.0, 1.0, 0.5, 0.5).is_err());
}

#[test]
fn bifbm_segment_reparametrizes_time() {
    let m = ProcessModel::Bifbm {
        hurst: 0.5,
        k: 0.5,
        t1: 1.0,
        t2: 3.0,
    };
    assert_eq!(
        bifbm_segment_cov(0.5, 0.25, &m).unwrap(),
        bifbm_cov(2.0, 1.5, 0.5, 0.5).unwrap()
    );
    assert_eq!(
        bifbm_segment_cov(0.0, 0.0, &m).unwrap(),
        bifbm_cov(1.0, 1.0, 0.5, 0.5).unwrap()
    );
}

#[test]
fn c_norm_examples() {
    assert_relative_eq!(c_norm(1, 0.5).unwrap(), (2.0 * PI).sqrt(), max_relative = 1e-14);
    assert_relative_eq!(c_norm(2, 0.5).unwrap(), (4.0 * PI).sqrt(), max_relative = 1e-14);
    let mut prev = c_norm(1, 0.05).unwrap();
    for i in 51..=950 {
        let v = c_norm(1, i as f64 / 1000.0).unwrap();
        assert!((v - prev).abs() < 0.02 * prev.max(v), "jump at {i}");
        prev = v;
    }
}

#[test]
fn lambda_examples() {
    let m = afbm(HurstProfile::Constant { h: 0.5 }, 0.0, 0.0);
    assert_relative_eq!(
        lambda_weight(0.0, &m).unwrap(),
        0.024_933_892_525_089_542,
        max_relative = 1e-14
    );
    assert!(lambda_weight(PI / 2.0, &m).unwrap() < 1e-16);
    let m = afbm(
        HurstProfile::PiecewiseConstant {
            breakpoints: vec![0.3, 2.0],
            values: vec![0.35, 0.6],
        },
        0.1,
        0.7,
    );
    for i in 0..20 {
        let th = 0.17 * i as f64;
        assert_relative_eq!(
            lambda_weight(th, &m).unwrap(),
            lambda_weight(th + PI, &m).unwrap(),
            max_relative = 1e-12
        );
    }
}

#[test]
fn afbm_constant_profile_is_scaled_fbm() {
    for &(h, omega) in &[(0.3, 0.0), (0.5, 0.0), (0.75, 1.1)] {
        let m = afbm(HurstProfile::Constant { h }, 0.0, omega);
        let w = AfbmWeights::new(&m).unwrap();
        let scale = 8.0 * w.integrate_lambda(0.0, PI, |_| 1.0, 1e-13).unwrap().value;
        for &(s, t) in &[(0.2, 0.9), (0.5, 0.5), (1.0, 0.3)] {
            let got = afbm_segment_cov(s, t, &m).unwrap();
            let want = scale * fbm_cov(s, t, h).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-8);
        }
    }
}

#[test]
fn afbm_origin_and_symmetry() {
    let m = afbm(
        HurstProfile::Smooth {
            theta_star: 0.8,
            h_min: 0.35,
            h2: 0.8,
            h3: 0.2,
        },
        0.0,
        0.3,
    );
    assert_eq!(afbm_segment_cov(0.0, 0.0, &m).unwrap(), 0.0);
    assert_eq!(
        afbm_segment_cov(0.3, 0.8, &m).unwrap(),
        afbm_segment_cov(0.8, 0.3, &m).unwrap()
    );
}

#[test]
fn afbm_quadrature_is_converged() {
    let m = afbm(
        HurstProfile::Smooth {
            theta_star: 0.8,
            h_min: 0.35,
            h2: 0.8,
            h3: 0.2,
        },
        0.05,
        0.3,
    );
    let coarse = afbm_segment_cov_quad(0.4, 0.9, &m, 1e-10).unwrap();
    let fine = afbm_segment_cov_quad(0.4, 0.9, &m, 5e-11).unwrap();
    assert!((coarse.value - fine.value).abs() <= coarse.abs_err.max(1e-15));
}

#[test]
fn brownian_grid() {
    let g = cov_grid(&ProcessModel::Fbm { hurst: 0.5 }, 4).unwrap();
    for j in 0..=4 {
        for k in 0..=4 {
            assert!((g.get(j, k) - j.min(k) as f64 / 4.0).abs() < 1e-15);
        }
    }
}

#[test]
fn bifbm_with_unit_k_is_fbm_in_reparametrized_time() {
    let m = ProcessModel::Bifbm {
        hurst: 0.7,
        k: 1.0,
        t1: 0.5,
        t2: 2.0,
    };
    let g = cov_grid(&m, 8).unwrap();
    for j in 0..=8 {
        for k in 0..=8 {
            let (s, t) = (0.5 + 1.5 * j as f64 / 8.0, 0.5 + 1.5 * k as f64 / 8.0);
            assert_relative_eq!(g.get(j, k), fbm_cov(s, t, 0.7).unwrap(), max_relative = 1e-13);
        }
    }
}

#[test]
fn grids_are_psd() {
    let models = [
        ProcessModel::Fbm { hurst: 0.2 },
        ProcessModel::Fbm { hurst: 0.9 },
        ProcessModel::Bifbm {
            hurst: 0.6,
            k: 0.5,
            t1: 1.0,
            t2: 2.0,
        },
        afbm(
            HurstProfile::PiecewiseConstant {
                breakpoints: vec![0.0, PI / 2.0],
                values: vec![0.4, 0.8],
            },
            0.0,
            0.0,
        ),
        afbm(
            HurstProfile::Smooth {
                theta_star: 1.0,
                h_min: 0.3,
                h2: 1.0,
                h3: 0.0,
            },
            0.1,
            1.0,
        ),
    ];
    for m in &models {
        for n in [8, 64] {
            let g = cov_grid(m, n).unwrap();
            assert!(g.min_eigenvalue() >= -1e-8 * g.max_diag(), "{m:?} n={n}");
        }
    }
}

#[test]
fn invalid_models_are_rejected() {
    assert!(ProcessModel::Bifbm {
        hurst: 0.5,
        k: 0.5,
        t1: 0.0,
        t2: 1.0
    }
    .validate()
    .is_err());
    // ω = θ* + π/2 makes the direction of the minimum orthogonal to the segment
    assert!(afbm(
        HurstProfile::Smooth {
            theta_star: 1.0,
            h_min: 0.3,
            h2: 1.0,
            h3: 0.0
        },
        0.0,
        1.0 + PI / 2.0
    )
    .validate()
    .is_err());
    assert!(HurstProfile::PiecewiseConstant {
        breakpoints: vec![1.0, 0.5],
        values: vec![0.3, 0.4]
    }
    .validate()
    .is_err());
    assert!(cov_grid(&ProcessModel::Fbm { hurst: 0.5 }, 3).is_err());
}

#[test]
fn profiles_are_even_and_pi_periodic() {
    let p = HurstProfile::Smooth {
        theta_star: 0.0,
        h_min: 0.3,
        h2: 1.0,
        h3: 0.0,
    };
    for i in 0..50 {
        let th = 0.13 * i as f64;
        assert_relative_eq!(p.eval(th), p.eval(-th), max_relative = 1e-14);
        assert_relative_eq!(p.eval(th), p.eval(th + PI), max_relative = 1e-12);
    }
}

proptest! {
    #[test]
    fn unit_k_reduction(s in 0.0f64..5.0, t in 0.0f64..5.0, h in 0.01f64..0.99) {
        let a = bifbm_cov(s, t, h, 1.0).unwrap();
        let b = fbm_cov(s, t, h).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn kernels_are_symmetric(s in 0.0f64..1.0, t in 0.0f64..1.0, h in 0.05f64..0.95, k in 0.05f64..1.0) {
        prop_assert_eq!(fbm_cov(s, t, h).unwrap(), fbm_cov(t, s, h).unwrap());
        prop_assert_eq!(bifbm_cov(s, t, h, k).unwrap(), bifbm_cov(t, s, h, k).unwrap());
    }

    #[test]
    fn piecewise_profile_periodicity(th in -10.0f64..10.0) {
        let p = HurstProfile::PiecewiseConstant { breakpoints: vec![0.4, 1.9], values: vec![0.3, 0.7] };
        prop_assert_eq!(p.eval(th), p.eval(th + PI));
    }
}

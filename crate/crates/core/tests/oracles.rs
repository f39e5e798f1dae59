mod common;

use proptest::prelude::*;
use qpplab::outliers::{trc_covariance, trc_detect, univariate_detect};
use qpplab::predictors::QueryFeatureMatrix;
use qpplab::robust_stats::{
    chi_square_cdf, chi_square_quantile, f_cdf, f_quantile, ln_gamma, normal_cdf, regularized_incomplete_beta,
    SymmetricMatrix,
};
use qpplab::synthetic::{mvn_sample, planted_outlier_scenario};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

proptest! {
    #[test]
    fn normal_cdf_matches_statrs(z in -8.0f64..8.0) {
        let exact = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
        prop_assert!((normal_cdf(z) - exact).abs() < 1e-15, "{z}");
        // statrs' erf is only good to a few 1e-11.
        let oracle = Normal::new(0.0, 1.0).unwrap().cdf(z);
        prop_assert!((normal_cdf(z) - oracle).abs() < 5e-11, "{z}");
    }

    #[test]
    fn ln_gamma_matches_statrs(x in 0.01f64..170.0) {
        let ours = ln_gamma(x).unwrap();
        let oracle = statrs::function::gamma::ln_gamma(x);
        prop_assert!((ours - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{x}: {ours} vs {oracle}");
    }

    #[test]
    fn f_cdf_matches_statrs(x in 0.0f64..20.0, d1 in 1u32..30, d2 in 1u32..200) {
        let oracle = FisherSnedecor::new(d1 as f64, d2 as f64).unwrap().cdf(x);
        let ours = f_cdf(x, d1 as f64, d2 as f64).unwrap();
        prop_assert!((ours - oracle).abs() < 1e-10, "{ours} vs {oracle}");
    }

    #[test]
    fn chi_square_cdf_matches_statrs(x in 0.0f64..60.0, df in 1u32..30) {
        let oracle = ChiSquared::new(df as f64).unwrap().cdf(x);
        let ours = chi_square_cdf(x, df as f64).unwrap();
        prop_assert!((ours - oracle).abs() < 1e-10);
    }

    #[test]
    fn incomplete_beta_symmetry(a in 0.1f64..30.0, b in 0.1f64..30.0, x in 0.0f64..=1.0) {
        let l = regularized_incomplete_beta(a, b, x).unwrap();
        let r = regularized_incomplete_beta(b, a, 1.0 - x).unwrap();
        prop_assert!((l + r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles_invert_cdfs(p in 0.001f64..0.999, d1 in 1u64..12, d2 in 2u64..150) {
        let q = f_quantile(d1, d2, p).unwrap();
        prop_assert!((f_cdf(q, d1 as f64, d2 as f64).unwrap() - p).abs() < 1e-10);
        let c = chi_square_quantile(d1, p).unwrap();
        prop_assert!((chi_square_cdf(c, d1 as f64).unwrap() - p).abs() < 1e-10);
    }
}

#[test]
fn normal_cdf_reference_values() {
    // 0.5·erfc(-z/√2) from a correctly rounded libm erfc.
    let cases = [
        (-3.0, 0.0013498980316300957),
        (-1.7424010015493991, 0.04071915039753477),
        (0.3, 0.6179114221889526),
        (5.0, 0.9999997133484281),
    ];
    for (z, want) in cases {
        let got = normal_cdf(z);
        assert!(
            (got - want).abs() <= 2e-16_f64.max(want * 1e-14),
            "{z}: {got} vs {want}"
        );
    }
}

#[test]
fn quantile_grid() {
    for p in [0.5, 0.9, 0.95, 0.99] {
        for d1 in 1..=8u64 {
            let c = chi_square_quantile(d1, p).unwrap();
            assert!((chi_square_cdf(c, d1 as f64).unwrap() - p).abs() <= 1e-10);
            for d2 in [10, 50, 96u64] {
                let q = f_quantile(d1, d2, p).unwrap();
                assert!(
                    (f_cdf(q, d1 as f64, d2 as f64).unwrap() - p).abs() <= 1e-10,
                    "F({d1},{d2}) p={p}"
                );
            }
        }
    }
}

#[test]
fn f_quantile_matches_quadrature() {
    let oracle = common::f_quantile_by_quadrature(2.0, 10.0, 0.95);
    let ours = f_quantile(2, 10, 0.95).unwrap();
    assert!((ours - oracle).abs() < 1e-6, "{ours} vs {oracle}");
    assert!((ours - 4.102821).abs() < 1e-5);
}

#[test]
fn f_with_huge_denominator_approaches_chi_square() {
    for d1 in 1..=6u64 {
        for p in [0.5, 0.95] {
            let f = f_quantile(d1, 10_000_000, p).unwrap() * d1 as f64;
            let c = chi_square_quantile(d1, p).unwrap();
            assert!((f - c).abs() / c < 1e-3, "d1={d1} p={p}: {f} vs {c}");
        }
    }
}

fn sample_moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let m = rows[0].len();
    let mean: Vec<f64> = (0..m).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut cov = vec![0.0; m * m];
    for r in rows {
        for a in 0..m {
            for b in 0..m {
                cov[a * m + b] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    (mean, cov)
}

#[test]
fn mvn_sample_moments() {
    let cov = SymmetricMatrix::new(3, vec![2.0, 0.6, -0.4, 0.6, 1.0, 0.2, -0.4, 0.2, 0.5]).unwrap();
    let mean = [1.0, -2.0, 0.5];
    let rows = mvn_sample(&mean, &cov, 20_000, 7).unwrap();
    let (m, c) = sample_moments(&rows);
    for j in 0..3 {
        assert!((m[j] - mean[j]).abs() < 0.05, "mean {j}");
    }
    for (k, v) in c.iter().enumerate() {
        assert!((v - cov.as_slice()[k]).abs() < 0.06, "cov {k}: {v}");
    }
}

#[test]
fn trc_covariance_is_consistent_under_normality() {
    let cov = SymmetricMatrix::new(3, vec![4.0, 1.2, 0.0, 1.2, 1.0, -0.3, 0.0, -0.3, 0.25]).unwrap();
    let rows = mvn_sample(&[0.0; 3], &cov, 5000, 11).unwrap();
    let ids = (0..rows.len()).map(|i| format!("q{i}")).collect();
    let m = QueryFeatureMatrix::new(ids, vec!["a".into(), "b".into(), "c".into()], rows.concat()).unwrap();
    let (center, est) = trc_covariance(&m).unwrap();
    for (j, c) in center.iter().enumerate() {
        assert!(c.abs() < 0.1);
        let rel = est.get(j, j) / cov.get(j, j);
        assert!((rel - 1.0).abs() < 0.08, "diag {j}: {rel}");
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let r_est = est.get(a, b) / (est.get(a, a) * est.get(b, b)).sqrt();
        let r_true = cov.get(a, b) / (cov.get(a, a) * cov.get(b, b)).sqrt();
        assert!((r_est - r_true).abs() < 0.05, "corr {a}{b}: {r_est} vs {r_true}");
    }
}

#[test]
fn univariate_false_positive_rate() {
    let mut total = 0.0;
    for seed in 0..40 {
        let rows = mvn_sample(&[0.0], &SymmetricMatrix::identity(1), 200, seed).unwrap();
        let col: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let ids: Vec<String> = (0..col.len()).map(|i| format!("q{i}")).collect();
        total += univariate_detect(&ids, &col, 0.95).unwrap().n_flagged() as f64 / 200.0;
    }
    let rate = total / 40.0;
    assert!((0.02..=0.09).contains(&rate), "{rate}");
}

#[test]
fn planted_rows_are_far_from_the_bulk() {
    for seed in 0..10 {
        let sc = planted_outlier_scenario(100, 4, 0.1, 6.0, seed).unwrap();
        let r = trc_detect(&sc.matrix, 0.95).unwrap();
        let planted: Vec<f64> = r
            .squared_distances
            .iter()
            .zip(&sc.truth_flags)
            .filter(|p| *p.1)
            .map(|p| *p.0)
            .collect();
        let clean: Vec<f64> = r
            .squared_distances
            .iter()
            .zip(&sc.truth_flags)
            .filter(|p| !*p.1)
            .map(|p| *p.0)
            .collect();
        let planted_mean = planted.iter().sum::<f64>() / planted.len() as f64;
        let clean_mean = clean.iter().sum::<f64>() / clean.len() as f64;
        // A shift of 6 scales adds about 36 to the squared distance.
        assert!(
            planted_mean > clean_mean + 20.0,
            "seed {seed}: {planted_mean} vs {clean_mean}"
        );
    }
}

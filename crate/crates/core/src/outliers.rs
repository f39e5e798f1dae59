//! Multivariate outlier detection over a queries × predictors matrix.
//!
//! Three detectors share one report type:
//! - classical: sample mean and covariance, Mahalanobis distances;
//! - TRC (transformed rank correlations): coordinatewise medians, MAD
//!   scales and Spearman correlations mapped through `2·sin(π·ρ/6)`;
//! - univariate: the one-column case of TRC (median and MAD).
//!
//! A query is flagged when its squared distance exceeds the cutoff, by
//! default `m(n−1)/(n−m)·F(m, n−m; α)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{QppError, Result};
use crate::exec::Execution;
use crate::predictors::QueryFeatureMatrix;
use crate::robust_stats::{
    chi_square_quantile, cholesky, f_quantile, mad, median, solve_spd, spearman_rho, CholeskyFactor, SymmetricMatrix,
};

pub const DEFAULT_ALPHA: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMethod {
    Classical,
    #[default]
    Trc,
    Univariate,
}

impl DetectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionMethod::Classical => "classical",
            DetectionMethod::Trc => "trc",
            DetectionMethod::Univariate => "univariate",
        }
    }
}

/// Distribution used for the distance cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffFamily {
    /// `m(n−1)/(n−m) · F(m, n−m; α)`
    #[default]
    F,
    /// `χ²(m; α)`
    #[serde(alias = "chisq")]
    ChiSquare,
}

impl CutoffFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            CutoffFamily::F => "f",
            CutoffFamily::ChiSquare => "chisq",
        }
    }
}

/// Squared-distance threshold for `n` observations in `m` dimensions.
pub fn distance_cutoff(family: CutoffFamily, n: usize, m: usize, alpha: f64) -> Result<f64> {
    if n <= m {
        return Err(QppError::Infeasible(format!("{n} queries for {m} predictors")));
    }
    match family {
        CutoffFamily::F => {
            let scale = (m * (n - 1)) as f64 / (n - m) as f64;
            Ok(scale * f_quantile(m as u64, (n - m) as u64, alpha)?)
        }
        CutoffFamily::ChiSquare => chi_square_quantile(m as u64, alpha),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub method: DetectionMethod,
    pub cutoff_family: CutoffFamily,
    pub query_ids: Vec<String>,
    pub squared_distances: Vec<f64>,
    pub cutoff: f64,
    pub alpha: f64,
    pub flags: Vec<bool>,
    pub center: Vec<f64>,
    pub covariance: SymmetricMatrix,
    /// Queries removed before detection because of missing cells.
    pub dropped_queries: Vec<String>,
}

impl OutlierReport {
    pub fn n_flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn flagged_ids(&self) -> Vec<&str> {
        self.query_ids
            .iter()
            .zip(&self.flags)
            .filter(|(_, &f)| f)
            .map(|(q, _)| q.as_str())
            .collect()
    }

    pub fn is_flagged(&self, query_id: &str) -> Option<bool> {
        self.query_ids.iter().position(|q| q == query_id).map(|i| self.flags[i])
    }

    /// `query_id,distance_sq,flag` rows preceded by a `#` line carrying the
    /// method, alpha, cutoff family and cutoff.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# method={} alpha={} family={} cutoff={:.16e}",
            self.method.as_str(),
            self.alpha,
            self.cutoff_family.as_str(),
            self.cutoff
        );
        out.push_str("query_id,distance_sq,flag\n");
        for ((q, d), f) in self.query_ids.iter().zip(&self.squared_distances).zip(&self.flags) {
            let _ = writeln!(out, "{q},{d:.16e},{}", u8::from(*f));
        }
        out
    }
}

/// Squared Mahalanobis distance `(x − c)ᵀ V⁻¹ (x − c)`.
pub fn mahalanobis_sq(x: &[f64], center: &[f64], cov: &SymmetricMatrix) -> Result<f64> {
    if x.len() != center.len() || x.len() != cov.dim() {
        return Err(QppError::invalid("dimension mismatch in mahalanobis_sq"));
    }
    let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let v = solve_spd(cov, &d).map_err(|_| singular("covariance is not positive definite"))?;
    Ok(d.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().max(0.0))
}

fn singular(msg: &str) -> QppError {
    QppError::SingularCovariance(msg.to_string())
}

/// Squared distances of every row via one Cholesky factorization;
/// `|L⁻¹(x − c)|²` equals the quadratic form and cannot go negative.
fn distances(exec: Execution, rows: &QueryFeatureMatrix, center: &[f64], factor: &CholeskyFactor) -> Vec<f64> {
    exec.map_range(rows.n_queries(), |i| {
        let d: Vec<f64> = rows.row(i).iter().zip(center).map(|(a, b)| a - b).collect();
        factor.forward(&d).iter().map(|y| y * y).sum()
    })
}

fn check_complete(m: &QueryFeatureMatrix) -> Result<()> {
    if m.has_missing() {
        return Err(QppError::invalid(
            "matrix has missing cells; drop incomplete queries before detection",
        ));
    }
    let (n, p) = (m.n_queries(), m.n_predictors());
    if p == 0 {
        return Err(QppError::invalid("matrix has no predictors"));
    }
    if n <= p + 1 {
        return Err(QppError::Infeasible(format!(
            "need more than {} queries for {p} predictors, got {n}",
            p + 1
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QppError::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Eigenvalue clipping: eigenvalues below `1e-8·λ_max` are raised to that
/// floor. Matrices that already satisfy the floor are returned unchanged.
pub fn psd_repair(cov: &SymmetricMatrix) -> SymmetricMatrix {
    let p = cov.dim();
    if p == 0 {
        return cov.clone();
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(p, p, cov.as_slice()));
    let lambda_max = eig.eigenvalues.max();
    let floor = if lambda_max > 0.0 { 1e-8 * lambda_max } else { 1e-8 };
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return cov.clone();
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    SymmetricMatrix::from_fn(p, |i, j| 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]))
}

/// Sample mean and covariance (denominator `n − 1`).
pub fn sample_covariance(m: &QueryFeatureMatrix) -> (Vec<f64>, SymmetricMatrix) {
    let (n, p) = (m.n_queries(), m.n_predictors());
    let mut mean = vec![0.0; p];
    for i in 0..n {
        for (mu, v) in mean.iter_mut().zip(m.row(i)) {
            *mu += v;
        }
    }
    mean.iter_mut().for_each(|mu| *mu /= n as f64);
    let cov = SymmetricMatrix::from_fn(p, |a, b| {
        (0..n)
            .map(|i| (m.row(i)[a] - mean[a]) * (m.row(i)[b] - mean[b]))
            .sum::<f64>()
            / (n - 1) as f64
    });
    (mean, cov)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOptions {
    pub method: DetectionMethod,
    pub alpha: f64,
    pub family: CutoffFamily,
    pub exec: Execution,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self {
            method: DetectionMethod::Trc,
            alpha: DEFAULT_ALPHA,
            family: CutoffFamily::F,
            exec: Execution::default(),
        }
    }
}

impl DetectorOptions {
    pub fn new(method: DetectionMethod, alpha: f64) -> Self {
        Self {
            method,
            alpha,
            ..Self::default()
        }
    }
}

fn finish(
    opts: &DetectorOptions,
    m: &QueryFeatureMatrix,
    center: Vec<f64>,
    covariance: SymmetricMatrix,
) -> Result<OutlierReport> {
    let factor = cholesky(&covariance)
        .map_err(|_| singular("covariance is singular; use the trc method or remove linearly dependent predictors"))?;
    let squared_distances = distances(opts.exec, m, &center, &factor);
    let cutoff = distance_cutoff(opts.family, m.n_queries(), m.n_predictors(), opts.alpha)?;
    let flags = squared_distances.iter().map(|&d| d > cutoff).collect();
    Ok(OutlierReport {
        method: opts.method,
        cutoff_family: opts.family,
        query_ids: m.query_ids().to_vec(),
        squared_distances,
        cutoff,
        alpha: opts.alpha,
        flags,
        center,
        covariance,
        dropped_queries: Vec::new(),
    })
}

/// Classical detector: sample mean, sample covariance.
pub fn classical_detect(m: &QueryFeatureMatrix, alpha: f64) -> Result<OutlierReport> {
    classical_detect_with(m, &DetectorOptions::new(DetectionMethod::Classical, alpha))
}

pub fn classical_detect_with(m: &QueryFeatureMatrix, opts: &DetectorOptions) -> Result<OutlierReport> {
    check_alpha(opts.alpha)?;
    check_complete(m)?;
    let (center, cov) = sample_covariance(m);
    let opts = DetectorOptions {
        method: DetectionMethod::Classical,
        ..*opts
    };
    finish(&opts, m, center, cov)
}

/// Robust center and covariance from transformed rank correlations.
///
/// The correlation matrix is repaired before scaling, which keeps the
/// estimate equivariant under per-column positive affine maps.
pub fn trc_covariance(m: &QueryFeatureMatrix) -> Result<(Vec<f64>, SymmetricMatrix)> {
    check_complete(m)?;
    let p = m.n_predictors();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| m.column(j)).collect();
    let mut center = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    for (j, col) in columns.iter().enumerate() {
        let s = mad(col)?;
        if s <= 0.0 {
            return Err(QppError::ZeroScale {
                column: m.predictor_names()[j].clone(),
            });
        }
        center.push(median(col)?);
        scale.push(s);
    }
    let mut rho = vec![0.0; p * p];
    for a in 0..p {
        rho[a * p + a] = 1.0;
        for b in 0..a {
            let r = 2.0 * (PI * spearman_rho(&columns[a], &columns[b])? / 6.0).sin();
            rho[a * p + b] = r;
            rho[b * p + a] = r;
        }
    }
    let corr = psd_repair(&SymmetricMatrix::new(p, rho)?);
    let cov = SymmetricMatrix::from_fn(p, |a, b| scale[a] * scale[b] * corr.get(a, b));
    Ok((center, cov))
}

pub fn trc_detect(m: &QueryFeatureMatrix, alpha: f64) -> Result<OutlierReport> {
    trc_detect_with(m, &DetectorOptions::new(DetectionMethod::Trc, alpha))
}

pub fn trc_detect_with(m: &QueryFeatureMatrix, opts: &DetectorOptions) -> Result<OutlierReport> {
    check_alpha(opts.alpha)?;
    let (center, cov) = trc_covariance(m)?;
    let opts = DetectorOptions {
        method: DetectionMethod::Trc,
        ..*opts
    };
    finish(&opts, m, center, cov)
}

/// Median/MAD detector on one column with an `F(1, n−1; α)` cutoff.
pub fn univariate_detect(query_ids: &[String], column: &[f64], alpha: f64) -> Result<OutlierReport> {
    univariate_detect_with(
        query_ids,
        column,
        &DetectorOptions::new(DetectionMethod::Univariate, alpha),
    )
}

pub fn univariate_detect_with(query_ids: &[String], column: &[f64], opts: &DetectorOptions) -> Result<OutlierReport> {
    if query_ids.len() != column.len() {
        return Err(QppError::invalid("query ids and column differ in length"));
    }
    let m = QueryFeatureMatrix::from_columns(query_ids.to_vec(), vec![("x".into(), column.to_vec())])?;
    let mut report = univariate_detect_matrix(&m, opts)?;
    report.method = DetectionMethod::Univariate;
    Ok(report)
}

fn univariate_detect_matrix(m: &QueryFeatureMatrix, opts: &DetectorOptions) -> Result<OutlierReport> {
    check_alpha(opts.alpha)?;
    check_complete(m)?;
    let col = m.column(0);
    let s = mad(&col)?;
    if s <= 0.0 {
        return Err(QppError::ZeroScale {
            column: m.predictor_names()[0].clone(),
        });
    }
    let opts = DetectorOptions {
        method: DetectionMethod::Univariate,
        ..*opts
    };
    finish(&opts, m, vec![median(&col)?], SymmetricMatrix::diagonal(&[s * s]))
}

/// Drops incomplete queries, then runs the configured detector. With
/// [`DetectionMethod::Univariate`] the matrix must have a single column.
pub fn detect(m: &QueryFeatureMatrix, opts: &DetectorOptions) -> Result<OutlierReport> {
    let (complete, dropped) = m.complete_rows();
    if !dropped.is_empty() {
        log::info!("dropped {} queries with missing predictor values", dropped.len());
    }
    let mut report = match opts.method {
        DetectionMethod::Classical => classical_detect_with(&complete, opts)?,
        DetectionMethod::Trc => trc_detect_with(&complete, opts)?,
        DetectionMethod::Univariate => {
            if complete.n_predictors() != 1 {
                return Err(QppError::invalid(format!(
                    "univariate detection needs one column, matrix has {}",
                    complete.n_predictors()
                )));
            }
            univariate_detect_matrix(&complete, opts)?
        }
    };
    report.dropped_queries = dropped;
    Ok(report)
}

/// One univariate report per predictor column, each on the queries where
/// that predictor is present.
pub fn univariate_reports(m: &QueryFeatureMatrix, opts: &DetectorOptions) -> Vec<Result<OutlierReport>> {
    (0..m.n_predictors())
        .map(|j| {
            let (ids, col): (Vec<String>, Vec<f64>) = (0..m.n_queries())
                .filter_map(|i| m.get(i, j).map(|v| (m.query_ids()[i].clone(), v)))
                .unzip();
            let dropped = m
                .query_ids()
                .iter()
                .enumerate()
                .filter(|&(i, _)| m.is_missing(i, j))
                .map(|(_, q)| q.clone())
                .collect();
            let col_m = QueryFeatureMatrix::from_columns(ids, vec![(m.predictor_names()[j].clone(), col)])?;
            let mut r = univariate_detect_matrix(&col_m, opts)?;
            r.dropped_queries = dropped;
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("q{i}")).collect()
    }

    #[test]
    fn mahalanobis_basics() {
        let cov = SymmetricMatrix::new(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        assert_eq!(mahalanobis_sq(&[1.0, 2.0], &[1.0, 2.0], &cov).unwrap(), 0.0);
        let id = SymmetricMatrix::identity(3);
        assert_abs_diff_eq!(
            mahalanobis_sq(&[1.0, 2.0, 3.0], &[0.0, 0.0, 1.0], &id).unwrap(),
            9.0,
            epsilon = 1e-14
        );
        let bad = SymmetricMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            mahalanobis_sq(&[1.0, 0.0], &[0.0, 0.0], &bad),
            Err(QppError::SingularCovariance(_))
        ));
    }

    #[test]
    fn psd_repair_cases() {
        let spd = SymmetricMatrix::new(2, vec![1.0, 0.9, 0.9, 1.0]).unwrap();
        assert_eq!(psd_repair(&spd), spd);

        let rank1 = SymmetricMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let fixed = psd_repair(&rank1);
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(2, 2, fixed.as_slice()));
        let min = eig.eigenvalues.min();
        assert_abs_diff_eq!(min, 2e-8, epsilon = 1e-12);
        assert!(cholesky(&fixed).is_ok());

        let indefinite = SymmetricMatrix::new(3, vec![1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]).unwrap();
        assert!(cholesky(&indefinite).is_err());
        assert!(cholesky(&psd_repair(&indefinite)).is_ok());
    }

    #[test]
    fn cutoff_formula() {
        let c = distance_cutoff(CutoffFamily::F, 100, 4, 0.95).unwrap();
        let expected = 4.0 * 99.0 / 96.0 * f_quantile(4, 96, 0.95).unwrap();
        assert_eq!(c, expected);
        let chi = distance_cutoff(CutoffFamily::ChiSquare, 100, 2, 0.95).unwrap();
        assert_abs_diff_eq!(chi, -2.0 * 0.05f64.ln(), epsilon = 1e-9);
        assert!(matches!(
            distance_cutoff(CutoffFamily::F, 4, 4, 0.95),
            Err(QppError::Infeasible(_))
        ));
    }

    #[test]
    fn duplicated_column_is_singular() {
        let n = 30;
        let a: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 + 0.1 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 17) % 7) as f64).collect();
        let m =
            QueryFeatureMatrix::from_columns(ids(n), vec![("a".into(), a.clone()), ("b".into(), b), ("a2".into(), a)])
                .unwrap();
        assert!(matches!(
            classical_detect(&m, 0.95),
            Err(QppError::SingularCovariance(_))
        ));
        // The robust estimate is repaired and stays usable.
        assert!(trc_detect(&m, 0.95).is_ok());
    }

    #[test]
    fn monotone_pair_transformed_correlation() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        let z: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
        let m =
            QueryFeatureMatrix::from_columns(ids(20), vec![("x".into(), x), ("y".into(), y), ("z".into(), z)]).unwrap();
        // 2·sin(π/6) = 1, before the eigenvalue floor nudges the matrix.
        let (_, cov) = trc_covariance(&m).unwrap();
        let r = cov.get(0, 1) / (cov.get(0, 0) * cov.get(1, 1)).sqrt();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_mad_names_column() {
        let mut c = vec![1.0; 20];
        c[3] = 5.0;
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let m = QueryFeatureMatrix::from_columns(ids(20), vec![("x".into(), x), ("flat".into(), c)]).unwrap();
        assert_eq!(
            trc_detect(&m, 0.95).unwrap_err(),
            QppError::ZeroScale { column: "flat".into() }
        );
    }

    #[test]
    fn infeasible_shapes() {
        let m =
            QueryFeatureMatrix::new(ids(3), vec!["a".into(), "b".into()], vec![1.0, 2.0, 3.0, 5.0, 4.0, 1.0]).unwrap();
        assert!(matches!(trc_detect(&m, 0.95), Err(QppError::Infeasible(_))));
        assert!(matches!(classical_detect(&m, 0.95), Err(QppError::Infeasible(_))));
    }

    #[test]
    fn univariate_flags_far_point() {
        // Symmetric sample: median 0, |x| values 1,2,3 twice → MAD = 1.4826·2.
        let mut col = vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        let s = 1.4826 * 2.0;
        col.push(8.0 * s);
        col.insert(0, -1.5);
        let ids = ids(col.len());
        let r = univariate_detect(&ids, &col, 0.95).unwrap();
        let med = median(&col).unwrap();
        let scale = mad(&col).unwrap();
        let cutoff = f_quantile(1, col.len() as u64 - 1, 0.95).unwrap();
        for (i, &x) in col.iter().enumerate() {
            let z2 = ((x - med) / scale).powi(2);
            assert_abs_diff_eq!(r.squared_distances[i], z2, epsilon = 1e-10);
            assert_eq!(r.flags[i], z2 > cutoff);
        }
        assert_eq!(r.flagged_ids(), vec![ids[col.len() - 1].as_str()]);
        assert!(univariate_detect(&ids[..5], &[2.0; 5], 0.95).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let col: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let r = univariate_detect(&ids(10), &col, 0.9).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert!(lines
            .next()
            .unwrap()
            .starts_with("# method=univariate alpha=0.9 family=f cutoff="));
        assert_eq!(lines.next().unwrap(), "query_id,distance_sq,flag");
        assert_eq!(lines.count(), 10);
    }
}

//! Correlation tables with outlier-based subsets, the correlation-difference
//! test, regression lines, error metrics and scatter datasets.

mod svg;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::effectiveness::EffectivenessVector;
use crate::error::{QppError, Result};
use crate::outliers::OutlierReport;
use crate::predictors::QueryFeatureMatrix;
use crate::robust_stats::{normal_cdf, pearson_r};

pub use svg::render_scatter_svg;

/// Significance level for the star in the correlation table.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subset {
    All,
    NoOutliers,
    OutliersOnly,
    Univariate,
}

impl Subset {
    pub const ORDER: [Subset; 4] = [
        Subset::All,
        Subset::NoOutliers,
        Subset::OutliersOnly,
        Subset::Univariate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "All",
            Subset::NoOutliers => "NoOutliers",
            Subset::OutliersOnly => "OutliersOnly",
            Subset::Univariate => "Univariate",
        }
    }
}

/// Why a row carries no correlation or no p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReasonCode {
    TooFewQueries,
    ConstantInput,
    /// |r| = 1; the Fisher transform is infinite.
    PerfectCorrelation,
    /// The all-queries correlation is undefined, so there is nothing to test against.
    BaselineUndefined,
    /// No univariate report was available for this predictor.
    UnivariateUnavailable,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::TooFewQueries => "too_few_queries",
            ReasonCode::ConstantInput => "constant_input",
            ReasonCode::PerfectCorrelation => "perfect_correlation",
            ReasonCode::BaselineUndefined => "baseline_undefined",
            ReasonCode::UnivariateUnavailable => "univariate_unavailable",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub predictor: String,
    pub subset: Subset,
    pub n: usize,
    pub r: Option<f64>,
    /// One-sided p-value of "this subset correlates more than All".
    pub p_vs_all: Option<f64>,
    pub significant: bool,
    pub reason: Option<ReasonCode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// H1: r1 > r2
    Greater,
    TwoSided,
}

/// Fisher z test for the difference of two correlations from independent
/// samples.
pub fn fisher_z_test(r1: f64, n1: usize, r2: f64, n2: usize, direction: Direction) -> Result<f64> {
    for r in [r1, r2] {
        if !(r.abs() < 1.0) {
            return Err(QppError::invalid(format!(
                "|r| must be below 1 for the Fisher transform, got {r}"
            )));
        }
    }
    if n1 < 4 || n2 < 4 {
        return Err(QppError::invalid(
            "Fisher z test needs at least 4 observations per sample",
        ));
    }
    let se = (1.0 / (n1 - 3) as f64 + 1.0 / (n2 - 3) as f64).sqrt();
    let z = (r1.atanh() - r2.atanh()) / se;
    let p = match direction {
        Direction::Greater => 1.0 - normal_cdf(z),
        Direction::TwoSided => 2.0 * (1.0 - normal_cdf(z.abs())),
    };
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

fn correlation(x: &[f64], y: &[f64]) -> std::result::Result<f64, ReasonCode> {
    if x.len() < 3 {
        return Err(ReasonCode::TooFewQueries);
    }
    pearson_r(x, y).map_err(|_| ReasonCode::ConstantInput)
}

fn subset_row(predictor: &str, subset: Subset, pairs: &[(f64, f64)], baseline: Option<(f64, usize)>) -> CorrelationRow {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let n = pairs.len();
    let mut row = CorrelationRow {
        predictor: predictor.to_string(),
        subset,
        n,
        r: None,
        p_vs_all: None,
        significant: false,
        reason: None,
    };
    match correlation(&x, &y) {
        Err(code) => row.reason = Some(code),
        Ok(r) => {
            row.r = Some(r);
            if subset != Subset::All {
                match baseline {
                    None => row.reason = Some(ReasonCode::BaselineUndefined),
                    Some((r_all, n_all)) => match fisher_z_test(r, n, r_all, n_all, Direction::Greater) {
                        Ok(p) => {
                            row.p_vs_all = Some(p);
                            row.significant = p < SIGNIFICANCE_LEVEL;
                        }
                        Err(_) if n < 4 || n_all < 4 => row.reason = Some(ReasonCode::TooFewQueries),
                        Err(_) => row.reason = Some(ReasonCode::PerfectCorrelation),
                    },
                }
            }
        }
    }
    row
}

/// Predictor vs effectiveness correlations over four query subsets:
/// every query of the report, the non-flagged ones, the flagged ones, and
/// the ones not flagged by the predictor's own univariate report.
///
/// `univariate` is indexed like the matrix columns.
pub fn correlation_table(
    matrix: &QueryFeatureMatrix,
    eff: &EffectivenessVector,
    report: &OutlierReport,
    univariate: &[Option<&OutlierReport>],
) -> Result<Vec<CorrelationRow>> {
    if univariate.len() != matrix.n_predictors() {
        return Err(QppError::invalid("need one univariate report slot per predictor"));
    }
    let row_of: BTreeMap<&str, usize> = matrix
        .query_ids()
        .iter()
        .enumerate()
        .map(|(i, q)| (q.as_str(), i))
        .collect();
    let mut rows = Vec::with_capacity(4 * matrix.n_predictors());
    for (j, name) in matrix.predictor_names().iter().enumerate() {
        let uni_flags: Option<BTreeMap<&str, bool>> = univariate[j].map(|u| {
            u.query_ids
                .iter()
                .map(String::as_str)
                .zip(u.flags.iter().copied())
                .collect()
        });
        let mut buckets: [Vec<(f64, f64)>; 4] = Default::default();
        for (q, &flagged) in report.query_ids.iter().zip(&report.flags) {
            let (Some(&i), Some(y)) = (row_of.get(q.as_str()), eff.get(q)) else {
                continue;
            };
            let Some(x) = matrix.get(i, j) else {
                continue;
            };
            buckets[0].push((x, y));
            buckets[if flagged { 2 } else { 1 }].push((x, y));
            if let Some(uf) = &uni_flags {
                if !uf.get(q.as_str()).copied().unwrap_or(false) {
                    buckets[3].push((x, y));
                }
            }
        }
        let all = subset_row(name, Subset::All, &buckets[0], None);
        let baseline = all.r.map(|r| (r, all.n));
        rows.push(all);
        rows.push(subset_row(name, Subset::NoOutliers, &buckets[1], baseline));
        rows.push(subset_row(name, Subset::OutliersOnly, &buckets[2], baseline));
        if uni_flags.is_some() {
            rows.push(subset_row(name, Subset::Univariate, &buckets[3], baseline));
        } else {
            rows.push(CorrelationRow {
                predictor: name.clone(),
                subset: Subset::Univariate,
                n: 0,
                r: None,
                p_vs_all: None,
                significant: false,
                reason: Some(ReasonCode::UnivariateUnavailable),
            });
        }
    }
    Ok(rows)
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// CSV: `predictor,subset,n,r,p_vs_all,significant,reason`.
pub fn correlation_table_csv(rows: &[CorrelationRow]) -> String {
    let mut out = String::from("predictor,subset,n,r,p_vs_all,significant,reason\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.predictor,
            row.subset.as_str(),
            row.n,
            opt_num(row.r),
            opt_num(row.p_vs_all),
            row.significant,
            row.reason.map_or("", |c| c.as_str())
        );
    }
    out
}

/// Plain-text table; a `*` marks correlations significantly above All.
pub fn correlation_table_text(rows: &[CorrelationRow], header: &str) -> String {
    let labels: Vec<String> = rows
        .iter()
        .map(|r| format!("{} - {}", r.predictor, r.subset.as_str()))
        .collect();
    let width = labels.iter().map(String::len).max().unwrap_or(0).max(9);
    let mut out = String::new();
    if !header.is_empty() {
        let _ = writeln!(out, "{header}");
    }
    let _ = writeln!(out, "{:<width$}  {:>5}  {:>8}  {:>8}  note", "predictor", "n", "r", "p");
    let mut last = None;
    for (row, label) in rows.iter().zip(&labels) {
        if last.is_some() && last != Some(&row.predictor) {
            let _ = writeln!(out, "{}", "-".repeat(width + 31));
        }
        last = Some(&row.predictor);
        let r = row.r.map_or("NA".to_string(), |r| {
            format!("{r:.3}{}", if row.significant { "*" } else { "" })
        });
        let p = row.p_vs_all.map_or(String::new(), |p| format!("{p:.4}"));
        let note = row.reason.map_or("", |c| c.as_str());
        let _ = writeln!(out, "{label:<width$}  {:>5}  {r:>8}  {p:>8}  {note}", row.n);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionLine {
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
}

impl RegressionLine {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Least-squares line `y = intercept + slope·x`.
pub fn ols_regression(x: &[f64], y: &[f64]) -> Result<RegressionLine> {
    if x.len() != y.len() {
        return Err(QppError::invalid("regression inputs differ in length"));
    }
    let n = x.len();
    if n < 2 {
        return Err(QppError::invalid("regression needs at least 2 points"));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(QppError::invalid("regression on a constant predictor"));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    Ok(RegressionLine {
        slope,
        intercept: my - slope * mx,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub mae: f64,
}

pub fn error_metrics(pred: &[f64], actual: &[f64]) -> Result<ErrorMetrics> {
    if pred.len() != actual.len() {
        return Err(QppError::invalid("prediction and actual vectors differ in length"));
    }
    if pred.is_empty() {
        return Err(QppError::invalid("error metrics of empty vectors"));
    }
    let n = pred.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, a) in pred.iter().zip(actual) {
        se += (p - a) * (p - a);
        ae += (p - a).abs();
    }
    Ok(ErrorMetrics {
        mse: se / n,
        mae: ae / n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub query_id: String,
    pub x: f64,
    pub y: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterData {
    pub predictor: String,
    pub measure: String,
    pub points: Vec<ScatterPoint>,
    pub all_line: RegressionLine,
    /// Line over the non-flagged points, or why it could not be fitted.
    pub clean_line: std::result::Result<RegressionLine, ReasonCode>,
}

/// Predictor values against effectiveness for one matrix column, with the
/// regression over all points and over the non-flagged ones.
pub fn scatter_report(
    matrix: &QueryFeatureMatrix,
    column: usize,
    eff: &EffectivenessVector,
    report: &OutlierReport,
) -> Result<ScatterData> {
    let name = matrix
        .predictor_names()
        .get(column)
        .ok_or_else(|| QppError::invalid(format!("no predictor column {column}")))?;
    let row_of: BTreeMap<&str, usize> = matrix
        .query_ids()
        .iter()
        .enumerate()
        .map(|(i, q)| (q.as_str(), i))
        .collect();
    let points: Vec<ScatterPoint> = report
        .query_ids
        .iter()
        .zip(&report.flags)
        .filter_map(|(q, &flagged)| {
            let i = *row_of.get(q.as_str())?;
            Some(ScatterPoint {
                query_id: q.clone(),
                x: matrix.get(i, column)?,
                y: eff.get(q)?,
                flagged,
            })
        })
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.x, p.y)).unzip();
    let all_line = ols_regression(&x, &y)?;
    let (cx, cy): (Vec<f64>, Vec<f64>) = points.iter().filter(|p| !p.flagged).map(|p| (p.x, p.y)).unzip();
    let clean_line = if cx.len() < 2 {
        Err(ReasonCode::TooFewQueries)
    } else {
        ols_regression(&cx, &cy).map_err(|_| ReasonCode::ConstantInput)
    };
    Ok(ScatterData {
        predictor: name.clone(),
        measure: eff.label(),
        points,
        all_line,
        clean_line,
    })
}

impl ScatterData {
    /// `#` lines describing both regression lines, then
    /// `query_id,x,y,flagged` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# all slope={} intercept={} n={}",
            self.all_line.slope, self.all_line.intercept, self.all_line.n
        );
        match &self.clean_line {
            Ok(l) => {
                let _ = writeln!(
                    out,
                    "# no_outliers slope={} intercept={} n={}",
                    l.slope, l.intercept, l.n
                );
            }
            Err(code) => {
                let _ = writeln!(out, "# no_outliers omitted reason={code}");
            }
        }
        out.push_str("query_id,x,y,flagged\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.query_id, p.x, p.y, u8::from(p.flagged));
        }
        out
    }

    pub fn to_svg(&self) -> String {
        render_scatter_svg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fisher_examples() {
        assert_abs_diff_eq!(
            fisher_z_test(0.4, 50, 0.4, 50, Direction::Greater).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let p = fisher_z_test(0.700, 82, 0.522, 100, Direction::Greater).unwrap();
        assert!((p - 0.0287).abs() < 1e-3, "p = {p}");
        let q = fisher_z_test(0.522, 100, 0.700, 82, Direction::Greater).unwrap();
        assert_abs_diff_eq!(p + q, 1.0, epsilon = 1e-12);
        let two = fisher_z_test(0.700, 82, 0.522, 100, Direction::TwoSided).unwrap();
        assert_abs_diff_eq!(two, 2.0 * p, epsilon = 1e-12);
        assert!(fisher_z_test(1.0, 10, 0.5, 10, Direction::Greater).is_err());
        assert!(fisher_z_test(0.5, 3, 0.5, 10, Direction::Greater).is_err());
    }

    #[test]
    fn ols_examples() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let l = ols_regression(&x, &y).unwrap();
        assert_abs_diff_eq!(l.slope, 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l.intercept, -1.0, epsilon = 1e-14);
        let l = ols_regression(&[0.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!((l.slope, l.intercept), (0.0, 0.0));
        assert!(ols_regression(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(ols_regression(&[2.0], &[1.0]).is_err());
    }

    #[test]
    fn error_metric_examples() {
        let a = [0.2, 0.4, 0.9];
        assert_eq!(error_metrics(&a, &a).unwrap(), ErrorMetrics { mse: 0.0, mae: 0.0 });
        assert_eq!(
            error_metrics(&[1.0, -1.0], &[0.0, 0.0]).unwrap(),
            ErrorMetrics { mse: 1.0, mae: 1.0 }
        );
        assert_eq!(
            error_metrics(&[3.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap(),
            ErrorMetrics { mse: 3.0, mae: 1.0 }
        );
        assert!(error_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }
}

use crate::error::{QppError, Result};

/// Normal-consistency factor for the median absolute deviation.
pub const MAD_CONSISTENCY: f64 = 1.4826;

#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    pub values: Vec<f64>,
    /// Midranks in `1..=n`; tied values share the average of their positions.
    pub ranks: Vec<f64>,
}

pub fn midranks(x: &[f64]) -> Result<RankVector> {
    if x.is_empty() {
        return Err(QppError::invalid("cannot rank an empty vector"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(QppError::invalid("cannot rank non-finite values"));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    Ok(RankVector {
        values: x.to_vec(),
        ranks,
    })
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Product-moment correlation, clamped to `[-1, 1]`.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(QppError::invalid(format!(
            "correlation inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(QppError::UndefinedCorrelation(format!(
            "need at least 3 pairs, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(QppError::invalid("correlation inputs must be finite"));
    }
    if is_constant(x) || is_constant(y) {
        return Err(QppError::UndefinedCorrelation("constant input".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of the midranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(QppError::invalid("correlation inputs differ in length"));
    }
    if x.is_empty() {
        return Err(QppError::UndefinedCorrelation("empty input".into()));
    }
    pearson_r(&midranks(x)?.ranks, &midranks(y)?.ranks)
}

pub fn median(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(QppError::invalid("median of an empty vector"));
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Normal-consistent median absolute deviation.
pub fn mad(x: &[f64]) -> Result<f64> {
    let med = median(x)?;
    let dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    Ok(MAD_CONSISTENCY * median(&dev)?)
}

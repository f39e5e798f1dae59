//! Deterministic synthetic data: multivariate normal samples, planted
//! outliers and complete QPP scenarios with corrupted queries.
//!
//! # Generator
//!
//! All randomness comes from [`Xoshiro256PlusPlus`] whose 256-bit state is
//! filled with four consecutive outputs of SplitMix64 started at the seed.
//! Uniform reals are `(next_u64 >> 11) · 2⁻⁵³`. Normal deviates use the
//! Box–Muller transform on `(u₁, u₂) = (1 − U, U')`, returning the cosine
//! branch first and caching the sine branch. Transcendentals come from
//! `libm`, so every output is bit-identical across platforms.
//!
//! Test vectors (seed 0): SplitMix64 state words `e220a8397b1dcdaf`,
//! `6e789e6aa1b965f4`, `06c45d188009454f`, `f88bb8a8724c81ec`; first
//! xoshiro256++ outputs `53175d61490b23df`, `61da6f3dc380d507`,
//! `5c0fdf91ec9a7bfc`, `02eebf8c3bbe5e1a`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::effectiveness::{EffectivenessVector, Metric};
use crate::error::{QppError, Result};
use crate::predictors::QueryFeatureMatrix;
use crate::robust_stats::{cholesky, SymmetricMatrix};

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Xoshiro256PlusPlus {
    s: [u64; 4],
    cached_normal: Option<f64>,
}

impl Xoshiro256PlusPlus {
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self { s, cached_normal: None }
    }

    pub fn state(&self) -> [u64; 4] {
        self.s
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in `0..n` by 128-bit multiply-shift (bias below `n / 2⁶⁴`).
    pub fn next_index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    /// `k` distinct indices from `0..n`, in selection order (partial
    /// Fisher–Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k.min(n) {
            let j = i + self.next_index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k.min(n));
        pool
    }
}

/// `n` draws of `mean + L·z`, `L` the Cholesky factor of `cov`. Rows are
/// returned in draw order.
pub fn mvn_sample(mean: &[f64], cov: &SymmetricMatrix, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if mean.len() != cov.dim() {
        return Err(QppError::invalid("mean and covariance dimensions differ"));
    }
    let factor = cholesky(cov)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let z: Vec<f64> = (0..mean.len()).map(|_| rng.next_normal()).collect();
            factor.mul_vec(&z).iter().zip(mean).map(|(a, b)| a + b).collect()
        })
        .collect())
}

fn sample_sd(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mu = col.iter().sum::<f64>() / n;
    (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Moves `count` distinct, uniformly chosen rows by
/// `shift · sd_j · u_j` in every column `j`, where `sd_j` is the column's
/// sample standard deviation and `u` a fresh random unit direction per row.
pub fn plant_outliers(
    matrix: &QueryFeatureMatrix,
    count: usize,
    shift: f64,
    seed: u64,
) -> Result<(QueryFeatureMatrix, Vec<bool>)> {
    let (n, p) = (matrix.n_queries(), matrix.n_predictors());
    if 2 * count >= n && count > 0 {
        return Err(QppError::invalid(format!(
            "cannot plant {count} outliers among {n} rows"
        )));
    }
    if !(shift >= 0.0) || !shift.is_finite() {
        return Err(QppError::invalid("shift must be non-negative"));
    }
    if matrix.has_missing() {
        return Err(QppError::invalid(
            "cannot plant outliers in a matrix with missing cells",
        ));
    }
    let sds: Vec<f64> = (0..p).map(|j| sample_sd(&matrix.column(j))).collect();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let chosen = rng.sample_indices(n, count);
    let mut flags = vec![false; n];
    let mut values: Vec<f64> = (0..n).flat_map(|i| matrix.row(i).to_vec()).collect();
    for &i in &chosen {
        flags[i] = true;
        let dir = random_unit(&mut rng, p);
        for j in 0..p {
            values[i * p + j] += shift * sds[j] * dir[j];
        }
    }
    let out = QueryFeatureMatrix::new(matrix.query_ids().to_vec(), matrix.predictor_names().to_vec(), values)?;
    Ok((out, flags))
}

fn random_unit(rng: &mut Xoshiro256PlusPlus, p: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng.next_normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub contamination: f64,
    /// Planted shift in coordinate scales; `None` for QPP scenarios.
    pub shift: Option<f64>,
    pub matrix: QueryFeatureMatrix,
    /// Stand-in effectiveness, labelled AP@1000.
    pub effectiveness: EffectivenessVector,
    pub truth_flags: Vec<bool>,
}

impl SynthScenario {
    /// `query_id,outlier` with `1` for corrupted or planted rows.
    pub fn truth_csv(&self) -> String {
        let mut out = String::from("query_id,outlier\n");
        for (q, f) in self.matrix.query_ids().iter().zip(&self.truth_flags) {
            let _ = writeln!(out, "{q},{}", u8::from(*f));
        }
        out
    }

    pub fn n_corrupted(&self) -> usize {
        self.truth_flags.iter().filter(|&&f| f).count()
    }
}

fn query_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (1..=n).map(|i| format!("q{i:0width$}")).collect()
}

fn predictor_names(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("p{j}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QppScenarioParams {
    pub n: usize,
    pub m: usize,
    /// Standard deviation of the noise on clean predictors.
    pub noise: f64,
    pub contamination: f64,
    /// Standard deviation of the independent draws replacing corrupted rows.
    pub corrupt_noise: f64,
    pub seed: u64,
}

impl Default for QppScenarioParams {
    fn default() -> Self {
        Self {
            n: 100,
            m: 4,
            noise: 0.1,
            contamination: 0.15,
            corrupt_noise: 1.0,
            seed: 42,
        }
    }
}

impl QppScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.contamination) {
            return Err(QppError::invalid(format!(
                "contamination must lie in [0, 0.5), got {}",
                self.contamination
            )));
        }
        if !(self.noise > 0.0) || !(self.corrupt_noise > self.noise) {
            return Err(QppError::invalid("need noise > 0 and corrupt_noise > noise"));
        }
        if self.m == 0 || self.n < 3 {
            return Err(QppError::invalid("need at least 3 queries and 1 predictor"));
        }
        Ok(())
    }
}

/// Effectiveness `y ~ U(0, 1)`; clean predictors `a_j·y + b_j + N(0, noise²)`
/// with `a_j ~ U(1, 2)`, `b_j ~ U(−1, 1)`; corrupted rows replace every
/// predictor with `a_j/2 + b_j + N(0, corrupt_noise²)`, unrelated to `y`.
pub fn synth_qpp_scenario(params: &QppScenarioParams) -> Result<SynthScenario> {
    params.validate()?;
    let QppScenarioParams {
        n,
        m,
        noise,
        contamination,
        corrupt_noise,
        seed,
    } = *params;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let slopes: Vec<f64> = (0..m).map(|_| rng.uniform(1.0, 2.0)).collect();
    let offsets: Vec<f64> = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
    let count = (contamination * n as f64).round() as usize;
    let mut truth = vec![false; n];
    for i in rng.sample_indices(n, count) {
        truth[i] = true;
    }
    let mut values = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let v = if truth[i] {
                0.5 * slopes[j] + offsets[j] + corrupt_noise * rng.next_normal()
            } else {
                slopes[j] * y[i] + offsets[j] + noise * rng.next_normal()
            };
            values.push(v);
        }
    }
    let ids = query_ids(n);
    let matrix = QueryFeatureMatrix::new(ids.clone(), predictor_names(m), values)?;
    let scores: BTreeMap<String, f64> = ids.into_iter().zip(y).collect();
    Ok(SynthScenario {
        seed,
        n,
        m,
        contamination,
        shift: None,
        matrix,
        effectiveness: EffectivenessVector::from_scores(Metric::Ap, 1000, scores)?,
        truth_flags: truth,
    })
}

/// Standard-normal `n × m` predictors with `round(contamination·n)` rows
/// shifted by `shift` coordinate scales; effectiveness is uniform noise.
pub fn planted_outlier_scenario(
    n: usize,
    m: usize,
    contamination: f64,
    shift: f64,
    seed: u64,
) -> Result<SynthScenario> {
    if !(0.0..0.5).contains(&contamination) {
        return Err(QppError::invalid("contamination must lie in [0, 0.5)"));
    }
    let rows = mvn_sample(&vec![0.0; m], &SymmetricMatrix::identity(m), n, seed)?;
    let ids = query_ids(n);
    let clean = QueryFeatureMatrix::new(ids.clone(), predictor_names(m), rows.concat())?;
    let count = (contamination * n as f64).round() as usize;
    let (matrix, truth) = plant_outliers(&clean, count, shift, seed.wrapping_add(1))?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed.wrapping_add(2));
    let scores: BTreeMap<String, f64> = ids.into_iter().map(|q| (q, rng.next_f64())).collect();
    Ok(SynthScenario {
        seed,
        n,
        m,
        contamination,
        shift: Some(shift),
        matrix,
        effectiveness: EffectivenessVector::from_scores(Metric::Ap, 1000, scores)?,
        truth_flags: truth,
    })
}

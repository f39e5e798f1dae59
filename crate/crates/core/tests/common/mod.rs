#![allow(dead_code)]

use qpplab::robust_stats::SymmetricMatrix;
use qpplab::synthetic::Xoshiro256PlusPlus;

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))
            .unwrap();
        for k in 0..n {
            m.swap(col * n + k, pivot * n + k);
            inv.swap(col * n + k, pivot * n + k);
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                for k in 0..n {
                    m[r * n + k] -= f * m[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
    }
    inv
}

pub fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n).map(|i| (0..n).map(|k| a[i * n + k] * x[k]).sum()).collect()
}

/// `B·Bᵀ + ridge·I` with standard-normal `B`.
pub fn random_spd(rng: &mut Xoshiro256PlusPlus, n: usize, ridge: f64) -> SymmetricMatrix {
    let b: Vec<f64> = (0..n * n).map(|_| rng.next_normal()).collect();
    SymmetricMatrix::from_fn(n, |i, j| {
        let s: f64 = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
        if i == j {
            s + ridge
        } else {
            s
        }
    })
}

/// Explicit-inverse squared Mahalanobis distance.
pub fn mahalanobis_oracle(x: &[f64], center: &[f64], cov: &SymmetricMatrix) -> f64 {
    let n = cov.dim();
    let inv = gauss_jordan_inverse(cov.as_slice(), n);
    let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let w = mat_vec(&inv, n, &d);
    d.iter().zip(&w).map(|(a, b)| a * b).sum()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, m, left, tol / 2.0, depth - 1) + adaptive(f, m, b, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adaptive(f, a, b, simpson(f, a, b), tol, 50)
}

/// Root of the increasing function `f` on `[lo, hi]` by bisection.
pub fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Density of F(d1, d2) written out directly.
pub fn f_density(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let lb = statrs::function::beta::ln_beta(d1 / 2.0, d2 / 2.0);
    ((d1 / 2.0) * (d1 / d2).ln() + (d1 / 2.0 - 1.0) * x.ln() - ((d1 + d2) / 2.0) * (1.0 + d1 * x / d2).ln() - lb).exp()
}

/// F(d1, d2) quantile from quadrature of the density; independent of the
/// library's incomplete beta.
pub fn f_quantile_by_quadrature(d1: f64, d2: f64, p: f64) -> f64 {
    let cdf = |x: f64| integrate(&|t| f_density(t, d1, d2), 0.0, x, 1e-13);
    bisect(&|x| cdf(x) - p, 0.0, 50.0, 1e-12)
}

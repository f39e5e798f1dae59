use crate::error::{QppError, Result};

/// Dense symmetric matrix, row-major. Symmetry is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(QppError::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        for i in 0..dim {
            for j in 0..i {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(QppError::invalid(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(QppError::invalid("matrix entries must be finite"));
        }
        Ok(Self { dim, entries })
    }

    /// Builds from the lower triangle of `f(i, j)` (`j <= i`).
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(dim: usize, mut f: F) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                entries[i * dim + j] = v;
                entries[j * dim + i] = v;
            }
        }
        Self { dim, entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

/// Pivots at or below this fraction of the original diagonal entry count as
/// zero; rank-deficient inputs otherwise slip through with round-off pivots.
const PIVOT_TOLERANCE: f64 = 1e-13;

pub fn cholesky(m: &SymmetricMatrix) -> Result<CholeskyFactor> {
    let p = m.dim();
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > PIVOT_TOLERANCE * m.get(j, j).abs()) || !d.is_finite() {
            return Err(QppError::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[j * p + j] = djj;
        for i in j + 1..p {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / djj;
        }
    }
    Ok(CholeskyFactor { dim: p, lower: l })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// `L·x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..=i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Solves `L·y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let p = self.dim;
        let mut y = vec![0.0; p];
        for i in 0..p {
            let s: f64 = (0..i).map(|k| self.get(i, k) * y[k]).sum();
            y[i] = (b[i] - s) / self.get(i, i);
        }
        y
    }

    /// Solves `L·Lᵀ·x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.dim;
        let mut x = self.forward(b);
        for i in (0..p).rev() {
            let s: f64 = (i + 1..p).map(|k| self.get(k, i) * x[k]).sum();
            x[i] = (x[i] - s) / self.get(i, i);
        }
        x
    }
}

/// Solves `m·x = b` for symmetric positive definite `m` via Cholesky.
pub fn solve_spd(m: &SymmetricMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != m.dim() {
        return Err(QppError::invalid(
            "right-hand side length differs from matrix dimension",
        ));
    }
    Ok(cholesky(m)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cholesky_examples() {
        let l = cholesky(&SymmetricMatrix::identity(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let m = SymmetricMatrix::new(2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = cholesky(&m).unwrap();
        assert_abs_diff_eq!(l.get(0, 0), 2.0);
        assert_abs_diff_eq!(l.get(1, 0), 1.0);
        assert_abs_diff_eq!(l.get(1, 1), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(l.get(0, 1), 0.0);

        let bad = SymmetricMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(cholesky(&bad), Err(QppError::NotPositiveDefinite { pivot: 1 }));
        let singular = SymmetricMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(cholesky(&singular).is_err());
    }

    #[test]
    fn solve_examples() {
        let b = [0.3, -1.0, 2.5];
        assert_eq!(solve_spd(&SymmetricMatrix::identity(3), &b).unwrap(), b.to_vec());
        let m = SymmetricMatrix::diagonal(&[2.0, 4.0]);
        let x = solve_spd(&m, &[2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-15);
        assert!(solve_spd(&m, &[1.0]).is_err());
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(SymmetricMatrix::new(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(SymmetricMatrix::new(2, vec![1.0]).is_err());
    }
}

//! Dense Cholesky factorization for the small symmetric matrices used by GDA.
//! Matrices are row-major `d * d` slices.

/// Pivots at or below this fraction of the largest diagonal entry are treated
/// as zero.
const RELATIVE_PIVOT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    dim: usize,
    /// Lower factor, row-major, upper triangle zero.
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `a = L Lᵀ`. Returns `None` unless every pivot is strictly positive.
    pub fn factor(a: &[f64], dim: usize) -> Option<Self> {
        assert_eq!(a.len(), dim * dim, "matrix is not {dim}x{dim}");
        let max_diag = (0..dim).map(|i| a[i * dim + i]).fold(0.0f64, f64::max);
        if !max_diag.is_finite() || max_diag <= 0.0 {
            return None;
        }
        let floor = RELATIVE_PIVOT_FLOOR * max_diag;
        let mut l = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                if i == j {
                    if !s.is_finite() || s <= floor {
                        return None;
                    }
                    l[i * dim + i] = s.sqrt();
                } else {
                    l[i * dim + j] = s / l[j * dim + j];
                }
            }
        }
        Some(Cholesky { dim, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// ln det A = 2 Σ ln L_ii.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim)
            .map(|i| self.lower[i * self.dim + i].ln())
            .sum::<f64>()
    }

    /// Solves L z = b in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, z)| l * z).sum();
            b[i] = (b[i] - s) / self.lower[i * d + i];
        }
    }

    /// (x)ᵀ A⁻¹ (x), consuming `x` as scratch space.
    pub fn mahalanobis_sq(&self, x: &mut [f64]) -> f64 {
        self.forward_solve(x);
        x.iter().map(|z| z * z).sum()
    }
}

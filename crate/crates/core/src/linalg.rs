//! Small dense helpers: symmetric eigen-decomposition by cyclic Jacobi
//! rotations and the norms and inverses built on it.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi sweeps on the symmetric part of `m`.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "sym_eigen needs a square matrix");
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-32 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymEigen { values, vectors }
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Apply the pseudo-inverse, dropping eigenvalues at or below
    /// `rel_tol * lambda_max`.
    pub fn pinv_apply(&self, y: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
        let cut = rel_tol * self.max().max(0.0);
        let mut out = DVector::zeros(y.len());
        for (k, &lam) in self.values.iter().enumerate() {
            if lam > cut && lam > 0.0 {
                let col = self.vectors.column(k);
                out += col * (col.dot(y) / lam);
            }
        }
        out
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.values.len();
        let mut out = DMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let col = self.vectors.column(k);
            out += col * col.transpose() / lam;
        }
        out
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    sym_eigen(&g).max().max(0.0).sqrt()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Euclidean norm of each row, maximized.
pub fn max_row_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = sym_eigen(&m);
        let s2 = 2.0_f64.sqrt();
        let want = [2.0 - s2, 2.0, 2.0 + s2];
        for (a, b) in e.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        let recon = &e.vectors
            * DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()))
            * e.vectors.transpose();
        assert!((recon - m).norm() < 1e-13);
    }

    #[test]
    fn spectral_norm_of_rectangular() {
        let m = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert!((spectral_norm(&m) - 5.0).abs() < 1e-14);
    }
}

//! Minimal dense linear algebra for the small matrices this crate works
//! with (state dimensions up to 4, conic programs with at most a few
//! hundred rows). Row-major storage throughout.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Mat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `self * v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// `selfᵀ * v`
    pub fn matvec_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "matvec_transpose dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for j in 0..self.cols {
                out[j] += row[j] * vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    /// `selfᵀ * self`, the Gram matrix.
    pub fn gram(&self) -> Mat {
        let mut g = Mat::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let row = self.row(i);
            for a in 0..self.cols {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..self.cols {
                    g.add_to(a, b, ra * row[b]);
                }
            }
        }
        for a in 0..self.cols {
            for b in 0..a {
                let v = g.get(b, a);
                g.set(a, b, v);
            }
        }
        g
    }

    /// Matrix power by repeated multiplication (exponents stay tiny here).
    pub fn pow(&self, e: usize) -> Mat {
        assert_eq!(self.rows, self.cols, "pow needs a square matrix");
        let mut out = Mat::identity(self.rows);
        for _ in 0..e {
            out = out.matmul(self);
        }
        out
    }
}

/// Cholesky factor of a symmetric positive definite matrix, stored lower
/// triangular. Used for the cached normal-equation solves in the conic
/// solver and for tiny Gram systems elsewhere.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &Mat) -> Result<Cholesky, LinalgError> {
        assert_eq!(m.rows(), m.cols());
        let n = m.rows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = m.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite { pivot: i });
                    }
                    l[i * n + j] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
}

/// Singular values of `m`, descending, via one-sided Jacobi orthogonalization
/// of the columns of `mᵀ` (equivalently the rows of `m`). Intended for the
/// short fat controllability matrices of this crate: the number of singular
/// values returned is `min(rows, cols)` only when `rows <= cols`; callers
/// guard the other case.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    // Work on the tall orientation so columns are the short dimension.
    let tall = if m.rows() <= m.cols() {
        m.transpose()
    } else {
        m.clone()
    };
    let n = tall.cols();
    let rows = tall.rows();
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..rows).map(|i| tall.get(i, j)).collect())
        .collect();

    let tol = 1e-10;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..rows {
                    app += cols[p][i] * cols[p][i];
                    aqq += cols[q][i] * cols[q][i];
                    apq += cols[p][i] * cols[q][i];
                }
                let scale = (app * aqq).sqrt();
                if scale > 0.0 {
                    off = off.max(apq.abs() / scale);
                }
                if apq.abs() <= tol * scale {
                    continue;
                }
                // Jacobi rotation zeroing the (p,q) Gram entry.
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let vp = cols[p][i];
                    let vq = cols[q][i];
                    cols[p][i] = c * vp - s * vq;
                    cols[q][i] = s * vp + c * vq;
                }
            }
        }
        if off <= tol {
            break;
        }
    }

    let mut sigma: Vec<f64> = cols
        .iter()
        .map(|cv| cv.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sigma
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let m = Mat::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let f = Cholesky::factor(&m).unwrap();
        let x = f.solve(&[8.0, 7.0]);
        // 4x + 2y = 8, 2x + 3y = 7 -> x = 1.25, y = 1.5
        assert!((x[0] - 1.25).abs() < 1e-12);
        assert!((x[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(Cholesky::factor(&m).is_err());
    }

    #[test]
    fn singular_values_of_stacked_identities() {
        // [I2 I2 I2] has both singular values equal to sqrt(3).
        let mut m = Mat::zeros(2, 6);
        for k in 0..3 {
            m.set(0, 2 * k, 1.0);
            m.set(1, 2 * k + 1, 1.0);
        }
        let s = singular_values(&m);
        assert_eq!(s.len(), 2);
        for v in s {
            assert!((v - 3f64.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_values_match_closed_form_2x2() {
        let m = Mat::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0]]);
        let s = singular_values(&m);
        // Symmetric matrix: singular values are |eigenvalues| = {4, 2}.
        assert!((s[0] - 4.0).abs() < 1e-10);
        assert!((s[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn matvec_and_gram_agree() {
        let m = Mat::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, -1.0]]);
        let g = m.gram();
        let v = vec![1.0, -2.0, 0.5];
        let lhs = m.matvec_transpose(&m.matvec(&v));
        let rhs = g.matvec(&v);
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

//! Small dense matrix kernels for information matrices.
//!
//! Dimensions here are tiny (k + m rarely exceeds a dozen), so everything is
//! plain row-major `Vec<f64>` with unblocked Cholesky and cyclic Jacobi
//! eigenvalue sweeps.

use crate::error::{Error, Result};

/// Relative eigenvalue ratio below which an information matrix is treated as
/// numerically singular.
pub const CONDITION_THRESHOLD: f64 = 1e-10;

/// Dense symmetric matrix, full row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    n: usize,
    a: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    /// Build from the upper triangle listed row by row
    /// (a00, a01, .., a0{n-1}, a11, a12, ..).
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        let expected = n * (n + 1) / 2;
        if upper.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: upper.len(),
            });
        }
        let mut m = Self::zeros(n);
        let mut idx = 0;
        for i in 0..n {
            for j in i..n {
                m.a[i * n + j] = upper[idx];
                m.a[j * n + i] = upper[idx];
                idx += 1;
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// Sets both (i, j) and (j, i).
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
        self.a[j * self.n + i] = v;
    }

    /// Leading principal k x k submatrix.
    pub fn leading(&self, k: usize) -> SymMat {
        assert!(k <= self.n);
        let mut m = SymMat::zeros(k);
        for i in 0..k {
            for j in 0..k {
                m.a[i * k + j] = self.a[i * self.n + j];
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.a[i * self.n..(i + 1) * self.n];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }

    /// x^T A x.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let ax = self.mul_vec(x)?;
        Ok(ax.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    /// Eigenvalues by cyclic Jacobi sweeps, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        if n == 0 {
            return Vec::new();
        }
        let mut a = self.a.clone();
        let idx = |i: usize, j: usize| i * n + j;
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[idx(i, j)] * a[idx(i, j)];
                }
            }
            let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
            if off <= 1e-30 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[idx(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[idx(p, p)];
                    let aqq = a[idx(q, q)];
                    let tau = (aqq - app) / (2.0 * apq);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[idx(k, p)];
                        let akq = a[idx(k, q)];
                        a[idx(k, p)] = c * akp - s * akq;
                        a[idx(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[idx(p, k)];
                        let aqk = a[idx(q, k)];
                        a[idx(p, k)] = c * apk - s * aqk;
                        a[idx(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[idx(i, i)]).collect();
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        eig
    }

    /// Numerical nonsingularity check: smallest eigenvalue must exceed
    /// `CONDITION_THRESHOLD` times the largest.
    pub fn check_conditioning(&self) -> Result<()> {
        let eig = self.eigenvalues();
        let min = eig.first().copied().unwrap_or(0.0);
        let max = eig.last().copied().unwrap_or(0.0);
        if !(max > 0.0) || !min.is_finite() || min <= CONDITION_THRESHOLD * max {
            return Err(Error::IllConditionedInformation {
                ratio: if max > 0.0 { min / max } else { f64::NEG_INFINITY },
                threshold: CONDITION_THRESHOLD,
            });
        }
        Ok(())
    }

    /// Lower Cholesky factor; fails on a non-positive pivot.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::IllConditionedInformation {
                            ratio: sum,
                            threshold: 0.0,
                        });
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Inverse through Cholesky, with conditioning checked first.
    pub fn inverse(&self) -> Result<SymMat> {
        self.check_conditioning()?;
        let chol = self.cholesky()?;
        let n = self.n;
        let mut inv = SymMat::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = chol.solve(&e)?;
            for i in 0..n {
                inv.a[i * n + j] = col[i];
            }
        }
        // Symmetrize away solve roundoff.
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (inv.a[i * n + j] + inv.a[j * n + i]);
                inv.a[i * n + j] = v;
                inv.a[j * n + i] = v;
            }
        }
        Ok(inv)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.a[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }
}

/// Lower triangular Cholesky factor.
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Solve A x = b via forward/backward substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * y[k];
            }
            y[i] = sum / self.l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= self.l[k * n + i] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
        Ok(x)
    }
}

/// Dense rectangular matrix (row-major), used for the off-diagonal
/// information block and the nuisance projection coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            a: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.cols + j] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.a[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// self * sym * self^T, returned symmetric.
    pub fn sandwich(&self, sym: &SymMat) -> Result<SymMat> {
        if sym.dim() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: sym.dim(),
            });
        }
        let mut out = SymMat::zeros(self.rows);
        for i in 0..self.rows {
            let row_i = &self.a[i * self.cols..(i + 1) * self.cols];
            let s_row = sym.mul_vec(row_i)?;
            for j in i..self.rows {
                let row_j = &self.a[j * self.cols..(j + 1) * self.cols];
                let v: f64 = s_row.iter().zip(row_j).map(|(a, b)| a * b).sum();
                out.set(i, j, v);
            }
        }
        Ok(out)
    }

    /// Leading r x c submatrix.
    pub fn leading(&self, r: usize, c: usize) -> Mat {
        assert!(r <= self.rows && c <= self.cols);
        let mut m = Mat::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }

    /// self * other for a symmetric right factor.
    pub fn mul_sym(&self, sym: &SymMat) -> Result<Mat> {
        if sym.dim() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: sym.dim(),
            });
        }
        let mut out = Mat::zeros(self.rows, sym.dim());
        for i in 0..self.rows {
            for j in 0..sym.dim() {
                let mut v = 0.0;
                for k in 0..self.cols {
                    v += self.get(i, k) * sym.get(k, j);
                }
                out.set(i, j, v);
            }
        }
        Ok(out)
    }
}

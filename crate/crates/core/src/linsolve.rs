//! Direct banded LU with partial pivoting, and preconditioned conjugate
//! gradients for large self-adjoint systems.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Pivots below `SINGULAR_PIVOT * max|A|` are treated as zero.
pub const SINGULAR_PIVOT: f64 = 1e-13;
/// Largest accepted normwise relative residual after a solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// LU factors of a banded matrix in LAPACK `gbtrf` layout (column-major,
/// `ldab = 2·kl + ku + 1`, entry `(i, j)` at `j·ldab + kl + ku + i − j`).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &CsrMatrix) -> Result<BandLu> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "band LU needs a square matrix");
        let (kl, ku) = a.bandwidth();
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        for i in 0..n {
            for (j, v) in a.row(i) {
                ab[j * ldab + kv + i - j] = v;
            }
        }
        let scale = a.max_abs();
        let mut ipiv = vec![0; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ldab + kv;
            let mut jp = 0;
            let mut best = ab[col].abs();
            for r in 1..=km {
                let v = ab[col + r].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            ipiv[j] = j + jp;
            if !(best > SINGULAR_PIVOT * scale) {
                return Err(Error::SingularSystem { row: j, pivot: ab[col + jp] });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let base = c * ldab + kv;
                    ab.swap(base + j - c, base + j + jp - c);
                }
            }
            let pivot = ab[col];
            for r in 1..=km {
                ab[col + r] /= pivot;
            }
            for c in j + 1..=ju {
                let base = c * ldab + kv;
                let t = ab[base + j - c];
                if t != 0.0 {
                    for r in 1..=km {
                        let l = ab[col + r];
                        ab[base + j + r - c] -= l * t;
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, ldab, ab, ipiv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.ab[j * self.ldab + self.kl + self.ku + i - j]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let km = self.kl.min(n - 1 - j);
                for r in 1..=km {
                    b[j + r] -= self.at(j + r, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.at(j, j);
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= self.at(i, j) * bj;
                }
            }
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let mut s = b[j];
            for i in j.saturating_sub(kv)..j {
                s -= self.at(i, j) * b[i];
            }
            b[j] = s / self.at(j, j);
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let km = self.kl.min(n - 1 - j);
            let mut s = b[j];
            for r in 1..=km {
                s -= self.at(j + r, j) * b[j + r];
            }
            b[j] = s;
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients on the symmetric positive
/// definite matrix `S = −W·M`.
#[derive(Debug, Clone)]
pub struct WeightedCg {
    s: CsrMatrix,
    weights: Vec<f64>,
    inv_diag: Vec<f64>,
    tol: f64,
    max_iter: usize,
}

impl WeightedCg {
    pub fn new(m: &CsrMatrix, weights: &[f64], tol: f64, max_iter: usize) -> Result<WeightedCg> {
        let mut s = m.clone();
        s.scale_rows(&weights.iter().map(|w| -w).collect::<Vec<_>>());
        let diag = s.diagonal();
        if let Some(row) = diag.iter().position(|d| !(*d > 0.0)) {
            return Err(Error::SingularSystem { row, pivot: diag[row] });
        }
        Ok(WeightedCg { inv_diag: diag.iter().map(|d| 1.0 / d).collect(), s, weights: weights.to_vec(), tol, max_iter })
    }

    fn spd_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = rhs.len();
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for _ in 0..self.max_iter {
            self.s.matvec_into(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if !(pap > 0.0) {
                return Err(Error::SingularSystem { row: 0, pivot: pap });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= self.tol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * self.inv_diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        Err(Error::SolverDiverged { residual: rnorm / bnorm })
    }

    /// `M x = b  ⇔  S x = −W b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = b.iter().zip(&self.weights).map(|(v, w)| -v * w).collect();
        self.spd_solve(&rhs)
    }

    /// `Mᵀ x = b  ⇔  S (W⁻¹x) = −b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = b.iter().map(|v| -v).collect();
        let y = self.spd_solve(&rhs)?;
        Ok(y.iter().zip(&self.weights).map(|(v, w)| v * w).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Systems with more unknowns than this use conjugate gradients when the
    /// matrix is self-adjoint with respect to the weights.
    pub iterative_threshold: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { iterative_threshold: 300_000, cg_tol: 1e-13, cg_max_iter: 200_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    BandLu,
    ConjugateGradient,
}

#[derive(Debug, Clone)]
enum Inner {
    Band(BandLu),
    Cg(WeightedCg),
}

/// A factor-once solver for `M x = b`, shareable between threads.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    matrix: CsrMatrix,
    norm_inf: f64,
    inner: Inner,
}

impl LinearSolver {
    /// `weights` enables the iterative path for large systems; pass `None` to
    /// force the direct factorization.
    pub fn new(matrix: &CsrMatrix, weights: Option<&[f64]>, options: SolverOptions) -> Result<LinearSolver> {
        let inner = match weights {
            Some(w) if matrix.nrows() > options.iterative_threshold => {
                Inner::Cg(WeightedCg::new(matrix, w, options.cg_tol, options.cg_max_iter)?)
            }
            _ => Inner::Band(BandLu::factor(matrix)?),
        };
        let norm_inf = (0..matrix.nrows()).map(|r| matrix.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        Ok(LinearSolver { matrix: matrix.clone(), norm_inf, inner })
    }

    pub fn direct(matrix: &CsrMatrix) -> Result<LinearSolver> {
        Self::new(matrix, None, SolverOptions::default())
    }

    pub fn kind(&self) -> SolverKind {
        match self.inner {
            Inner::Band(_) => SolverKind::BandLu,
            Inner::Cg(_) => SolverKind::ConjugateGradient,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Normwise relative residual `‖Mx − b‖∞ / (‖M‖∞‖x‖∞ + ‖b‖∞)`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64], transpose: bool) -> f64 {
        let mx = if transpose {
            let mut y = vec![0.0; x.len()];
            self.matrix.transpose_matvec_add(x, &mut y);
            y
        } else {
            self.matrix.matvec(x)
        };
        let r = mx.iter().zip(b).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let denom = self.norm_inf * xn + bn;
        if denom == 0.0 {
            0.0
        } else {
            r / denom
        }
    }

    fn checked(&self, x: Vec<f64>, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDiverged { residual: f64::INFINITY });
        }
        let residual = self.relative_residual(&x, b, transpose);
        if residual > RESIDUAL_TOL {
            return Err(Error::SolverDiverged { residual });
        }
        Ok(x)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.dim());
        let x = match &self.inner {
            Inner::Band(lu) => {
                let mut x = b.to_vec();
                lu.solve_in_place(&mut x);
                x
            }
            Inner::Cg(cg) => cg.solve(b)?,
        };
        self.checked(x, b, false)
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.dim());
        let x = match &self.inner {
            Inner::Band(lu) => {
                let mut x = b.to_vec();
                lu.solve_transpose_in_place(&mut x);
                x
            }
            Inner::Cg(cg) => cg.solve_transpose(b)?,
        };
        self.checked(x, b, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(kl);
                let hi = (i + ku).min(n - 1);
                (lo..=hi).map(|j| (j, rng.random_range(-1.0..1.0))).collect()
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    #[test]
    fn band_lu_solves_with_pivoting() {
        for (n, kl, ku, seed) in [(1, 0, 0, 1), (7, 2, 1, 2), (40, 3, 5, 3), (60, 6, 2, 4)] {
            let a = random_banded(n, kl, ku, seed);
            let x: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 2.0).collect();
            let b = a.matvec(&x);
            let lu = BandLu::factor(&a).unwrap();
            let mut y = b.clone();
            lu.solve_in_place(&mut y);
            for (u, v) in x.iter().zip(&y) {
                assert!((u - v).abs() < 1e-8 * (1.0 + u.abs()), "n = {n}");
            }
            let bt = a.transpose().matvec(&x);
            let mut z = bt.clone();
            lu.solve_transpose_in_place(&mut z);
            for (u, v) in x.iter().zip(&z) {
                assert!((u - v).abs() < 1e-8 * (1.0 + u.abs()), "transpose n = {n}");
            }
        }
    }

    #[test]
    fn singular_detected() {
        let a = CsrMatrix::from_rows(3, vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)], vec![(2, 1.0)]]);
        assert!(matches!(BandLu::factor(&a), Err(Error::SingularSystem { .. })));
        let z = CsrMatrix::from_rows(2, vec![vec![(0, 0.0)], vec![(1, 1.0)]]);
        assert!(matches!(LinearSolver::direct(&z), Err(Error::SingularSystem { row: 0, .. })));
    }

    #[test]
    fn cg_matches_direct_on_weighted_system() {
        // M = W⁻¹ (−S) with S a 1-D Dirichlet Laplacian plus shift
        let n = 50;
        let w: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (i as f64 * 0.3).cos()).collect();
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, -(2.1) / w[i])];
                if i > 0 {
                    r.push((i - 1, 1.0 / w[i]));
                }
                if i + 1 < n {
                    r.push((i + 1, 1.0 / w[i]));
                }
                r
            })
            .collect();
        let m = CsrMatrix::from_rows(n, rows);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let direct = LinearSolver::direct(&m).unwrap();
        let opts = SolverOptions { iterative_threshold: 10, ..Default::default() };
        let cg = LinearSolver::new(&m, Some(&w), opts).unwrap();
        assert_eq!(cg.kind(), SolverKind::ConjugateGradient);
        let (x1, x2) = (direct.solve(&b).unwrap(), cg.solve(&b).unwrap());
        let (t1, t2) = (direct.solve_transpose(&b).unwrap(), cg.solve_transpose(&b).unwrap());
        for i in 0..n {
            assert!((x1[i] - x2[i]).abs() < 1e-10);
            assert!((t1[i] - t2[i]).abs() < 1e-10);
        }
    }
}

//! Sparse matrices and the linear solvers behind the Newton iterations.
//!
//! Jacobians here are (irreducibly diagonally dominant) M-matrices, so LU
//! without pivoting is safe. In 1D the band has width one and the banded
//! factorization is the Thomas algorithm.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded LU without pivoting (tridiagonal in 1D).
    #[default]
    Banded,
    /// Jacobi-preconditioned BiCGSTAB.
    Bicgstab,
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct SparseMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

/// Row-wise accumulator; duplicate entries are summed.
#[derive(Clone, Debug)]
pub struct SparseBuilder<T> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SparseBuilder<T> {
    pub fn new(n: usize) -> Self {
        Self {
            rows: vec![Vec::with_capacity(5); n],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, val: T) {
        let r = &mut self.rows[row];
        if let Some(e) = r.iter_mut().find(|e| e.0 == col) {
            e.1 += val;
        } else {
            r.push((col, val));
        }
    }

    pub fn build(mut self) -> SparseMatrix<T> {
        let n = self.rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in &mut self.rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r.iter() {
                cols.push(*c);
                vals.push(*v);
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }
}

impl<T: Real> SparseMatrix<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|e| e.0 == j).map_or(T::zero(), |e| e.1)
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn solve(&self, rhs: &[T], solver: LinearSolver) -> Result<Vec<T>> {
        match solver {
            LinearSolver::Banded => BandedLu::factor(self)?.solve(rhs),
            LinearSolver::Bicgstab => bicgstab(self, rhs, T::lit(1e-13), 20 * self.n + 200),
        }
    }
}

/// Banded LU factors stored row-wise over the band `[i - kl, i + ku]`.
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    band: Vec<T>,
}

impl<T: Real> BandedLu<T> {
    pub fn factor(m: &SparseMatrix<T>) -> Result<Self> {
        let n = m.dim();
        let (kl, ku) = m.bandwidths();
        let w = kl + ku + 1;
        let mut band = vec![T::zero(); n * w];
        for i in 0..n {
            for (j, v) in m.row(i) {
                band[i * w + j + kl - i] = v;
            }
        }
        let idx = |i: usize, j: usize| i * w + j + kl - i;
        for k in 0..n {
            let pivot = band[idx(k, k)];
            if pivot == T::zero() || !pivot.is_finite() {
                return Err(Error::SolverFailure {
                    iterations: 0,
                    residual: f64::NAN,
                    message: format!("zero pivot at row {k} in banded LU"),
                });
            }
            let jmax = (k + ku + 1).min(n);
            for i in k + 1..(k + kl + 1).min(n) {
                let l = band[idx(i, k)] / pivot;
                if l == T::zero() {
                    continue;
                }
                band[idx(i, k)] = l;
                for j in k + 1..jmax {
                    let ukj = band[idx(k, j)];
                    band[idx(i, j)] -= l * ukj;
                }
            }
        }
        Ok(Self { n, kl, ku, band })
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let w = kl + ku + 1;
        let idx = |i: usize, j: usize| i * w + j + kl - i;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for j in i.saturating_sub(kl)..i {
                s -= self.band[idx(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..(i + ku + 1).min(n) {
                s -= self.band[idx(i, j)] * x[j];
            }
            x[i] = s / self.band[idx(i, i)];
        }
        Ok(x)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB; `tol` is relative to `|rhs|`.
pub fn bicgstab<T: Real>(m: &SparseMatrix<T>, b: &[T], tol: T, max_iter: usize) -> Result<Vec<T>> {
    let n = m.dim();
    let dinv: Vec<T> = m
        .diagonal()
        .into_iter()
        .map(|d| if d != T::zero() { T::one() / d } else { T::one() })
        .collect();
    let bnorm = norm(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    for it in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: (norm(&r) / bnorm).to_f64_lossy(),
                message: "BiCGSTAB breakdown".into(),
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y: Vec<T> = p.iter().zip(&dinv).map(|(a, d)| *a * *d).collect();
        v = m.mul_vec(&y);
        alpha = rho_new / dot(&r_hat, &v);
        let s: Vec<T> = r.iter().zip(&v).map(|(a, b)| *a - alpha * *b).collect();
        if norm(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(x);
        }
        let z: Vec<T> = s.iter().zip(&dinv).map(|(a, d)| *a * *d).collect();
        let t = m.mul_vec(&z);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho_new;
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
    }
    Err(Error::SolverFailure {
        iterations: max_iter,
        residual: (norm(&r) / bnorm).to_f64_lossy(),
        message: "BiCGSTAB did not converge".into(),
    })
}

/// Smallest eigenvalue of a symmetric positive definite matrix by inverse
/// power iteration.
pub fn smallest_eigenvalue<T: Real>(m: &SparseMatrix<T>, tol: T, max_iter: usize) -> Result<T> {
    let lu = BandedLu::factor(m)?;
    let n = m.dim();
    // skewed start vector so it is not orthogonal to the ground state
    let mut x: Vec<T> = (0..n)
        .map(|i| T::one() + T::from_usize(i % 7).unwrap() / T::lit(13.0))
        .collect();
    let mut lambda = T::zero();
    for _ in 0..max_iter {
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let y = lu.solve(&x)?;
        let next = T::one() / dot(&x, &y);
        x = y;
        if (next - lambda).abs() <= tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian(n: usize) -> SparseMatrix<f64> {
        let mut b = SparseBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 2.0);
            if i > 0 {
                b.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn tridiagonal_solve() {
        let m = laplacian(5);
        let x = m.solve(&[1.0, 0.0, 0.0, 0.0, 1.0], LinearSolver::Banded).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eigenvalue_of_dirichlet_laplacian() {
        let n = 50;
        let m = laplacian(n);
        let lam = smallest_eigenvalue(&m, 1e-13, 1000).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((lam - exact).abs() < 1e-10 * exact);
    }

    proptest! {
        #[test]
        fn banded_and_bicgstab_agree(n in 3usize..12, seed in 0u64..500) {
            // nonsymmetric diagonally dominant 2D-like stencil
            let nx = n;
            let size = nx * 3;
            let mut b = SparseBuilder::new(size);
            for i in 0..size {
                let w = ((i as u64 * 7919 + seed) % 17) as f64 / 17.0;
                b.add(i, i, 4.0 + w);
                if i >= 1 { b.add(i, i - 1, -1.0 - 0.5 * w); }
                if i + 1 < size { b.add(i, i + 1, -1.0); }
                if i >= nx { b.add(i, i - nx, -1.0); }
                if i + nx < size { b.add(i, i + nx, -0.5); }
            }
            let m = b.build();
            let rhs: Vec<f64> = (0..size).map(|i| ((i * 31 + seed as usize) % 11) as f64 - 5.0).collect();
            let x1 = m.solve(&rhs, LinearSolver::Banded).unwrap();
            let x2 = m.solve(&rhs, LinearSolver::Bicgstab).unwrap();
            let r = m.mul_vec(&x1);
            for i in 0..size {
                prop_assert!((r[i] - rhs[i]).abs() < 1e-10);
                prop_assert!((x1[i] - x2[i]).abs() < 1e-9);
            }
        }
    }
}

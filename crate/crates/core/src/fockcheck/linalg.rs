//! Minimal complex linear algebra for the Fock-space check: a Taylor
//! matrix exponential and a CSR operator that evaluates expectation values
//! against an implicitly-defined density matrix.

use ndarray::{Array2, Axis};
use num_complex::Complex64;

pub type CMat = Array2<Complex64>;

pub fn dagger(m: &CMat) -> CMat {
    let mut out = m.t().to_owned();
    out.mapv_inplace(|z| z.conj());
    out
}

/// Maximum absolute column sum.
pub fn one_norm(m: &CMat) -> f64 {
    m.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling-and-squaring around a Taylor kernel.
/// Tuned for the anti-Hermitian generators used here, where the spectrum
/// is imaginary and the series is well conditioned after scaling.
pub fn expm(m: &CMat) -> CMat {
    let dim = m.nrows();
    assert_eq!(dim, m.ncols(), "expm needs a square matrix");
    let norm = one_norm(m);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = Complex64::new((0.5f64).powi(squarings as i32), 0.0);
    let scaled = m.mapv(|z| z * scale);

    let mut sum: CMat = Array2::eye(dim);
    let mut term: CMat = Array2::eye(dim);
    for j in 1..=64u32 {
        term = term.dot(&scaled);
        let inv = Complex64::new(1.0 / f64::from(j), 0.0);
        term.mapv_inplace(|z| z * inv);
        sum += &term;
        if one_norm(&term) < 1e-18 * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}

/// Nonzero entries of a dense matrix as `(row, col, value)` triples.
pub fn dense_triples(m: &CMat) -> Vec<(usize, usize, Complex64)> {
    let mut out = Vec::new();
    for ((i, j), &v) in m.indexed_iter() {
        if v != Complex64::ZERO {
            out.push((i, j, v));
        }
    }
    out
}

/// Kronecker product on triples: `(A x B)[i1*dim_b+i2, j1*dim_b+j2] = A[i1,j1] B[i2,j2]`.
pub fn kron_triples(
    a: &[(usize, usize, Complex64)],
    b: &[(usize, usize, Complex64)],
    dim_b: usize,
) -> Vec<(usize, usize, Complex64)> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &(i1, j1, v1) in a {
        for &(i2, j2, v2) in b {
            out.push((i1 * dim_b + i2, j1 * dim_b + j2, v1 * v2));
        }
    }
    out
}

/// Sparse operator in CSR form. Expectations are taken against a density
/// matrix supplied as a closure over its entries, so product states never
/// have to be materialized.
#[derive(Clone, Debug)]
pub struct SparseOp {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseOp {
    /// Sorts, merges duplicate coordinates, and drops entries that cancel
    /// to exact zero (e.g. the `a x a` terms of `x x x + p x p`).
    pub fn from_triples(dim: usize, mut triples: Vec<(usize, usize, Complex64)>) -> Self {
        triples.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(triples.len());
        for (r, c, v) in triples {
            assert!(r < dim && c < dim, "triple out of range");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != Complex64::ZERO);

        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = merged.iter().map(|t| t.1).collect();
        let vals = merged.iter().map(|t| t.2).collect();
        Self { dim, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi]
            .iter()
            .zip(&self.vals[lo..hi])
            .map(|(&c, &v)| (c, v))
    }

    /// `tr(O rho) = sum_{i,k} O[i,k] rho[k,i]`.
    pub fn expect<F>(&self, rho: &F) -> Complex64
    where
        F: Fn(usize, usize) -> Complex64,
    {
        let mut acc = Complex64::ZERO;
        for i in 0..self.dim {
            for (k, v) in self.row(i) {
                acc += v * rho(k, i);
            }
        }
        acc
    }

    /// `tr(O^2 rho) = sum_i sum_{k in row(i)} sum_{m in row(k)} O[i,k] O[k,m] rho[m,i]`,
    /// without forming `O^2`.
    pub fn expect_sq<F>(&self, rho: &F) -> Complex64
    where
        F: Fn(usize, usize) -> Complex64,
    {
        let mut acc = Complex64::ZERO;
        for i in 0..self.dim {
            for (k, oik) in self.row(i) {
                for (m, okm) in self.row(k) {
                    acc += oik * okm * rho(m, i);
                }
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z: CMat = Array2::zeros((4, 4));
        let e = expm(&z);
        for ((i, j), v) in e.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert_relative_eq!(v.re, want, epsilon = 1e-15);
            assert_relative_eq!(v.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn expm_nilpotent() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]].
        let mut m: CMat = Array2::zeros((2, 2));
        m[[0, 1]] = c(1.0, 0.0);
        let e = expm(&m);
        assert_relative_eq!(e[[0, 0]].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[[0, 1]].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[[1, 0]].re, 0.0, epsilon = 1e-14);
        assert_relative_eq!(e[[1, 1]].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_diagonal_phases() {
        let mut m: CMat = Array2::zeros((3, 3));
        for k in 0..3 {
            m[[k, k]] = c(0.0, 1.7 * k as f64);
        }
        let e = expm(&m);
        for k in 0..3 {
            let want = Complex64::from_polar(1.0, 1.7 * k as f64);
            assert_relative_eq!(e[[k, k]].re, want.re, epsilon = 1e-13);
            assert_relative_eq!(e[[k, k]].im, want.im, epsilon = 1e-13);
        }
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        // exp of 20 * (i sigma_x): analytic cos/sin on the off-diagonal.
        let mut m: CMat = Array2::zeros((2, 2));
        m[[0, 1]] = c(0.0, 20.0);
        m[[1, 0]] = c(0.0, 20.0);
        let e = expm(&m);
        assert_relative_eq!(e[[0, 0]].re, 20.0f64.cos(), epsilon = 1e-11);
        assert_relative_eq!(e[[0, 1]].im, 20.0f64.sin(), epsilon = 1e-11);
    }

    #[test]
    fn sparse_merges_and_prunes() {
        let t = vec![
            (0, 1, c(2.0, 0.0)),
            (0, 1, c(-2.0, 0.0)),
            (1, 0, c(1.0, 0.0)),
            (1, 0, c(0.5, 0.0)),
        ];
        let op = SparseOp::from_triples(2, t);
        assert_eq!(op.nnz(), 1);
        let rho = |k: usize, i: usize| {
            // rho = [[0.5, 0.1], [0.1, 0.5]]
            if k == i { c(0.5, 0.0) } else { c(0.1, 0.0) }
        };
        // O = [[0,0],[1.5,0]]; tr(O rho) = 1.5 * rho[0,1] = 0.15.
        let e = op.expect(&rho);
        assert_relative_eq!(e.re, 0.15, epsilon = 1e-15);
    }

    #[test]
    fn expect_sq_matches_dense_square() {
        // O = [[1, 2], [2, -1]] (Hermitian), rho = [[0.7, 0.2], [0.2, 0.3]].
        let op = SparseOp::from_triples(
            2,
            vec![
                (0, 0, c(1.0, 0.0)),
                (0, 1, c(2.0, 0.0)),
                (1, 0, c(2.0, 0.0)),
                (1, 1, c(-1.0, 0.0)),
            ],
        );
        let rho = |k: usize, i: usize| if k == i && k == 0 { c(0.7, 0.0) } else if k == i { c(0.3, 0.0) } else { c(0.2, 0.0) };
        // O^2 = 5 I, so tr(O^2 rho) = 5.
        let e = op.expect_sq(&rho);
        assert_relative_eq!(e.re, 5.0, epsilon = 1e-14);
        assert_relative_eq!(e.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn dagger_conjugates_and_transposes() {
        let mut m: CMat = Array2::zeros((2, 2));
        m[[0, 1]] = c(1.0, 2.0);
        let d = dagger(&m);
        assert_eq!(d[[1, 0]], c(1.0, -2.0));
        assert_eq!(d[[0, 1]], Complex64::ZERO);
    }
}

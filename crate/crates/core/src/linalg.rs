//! Small linear-algebra helpers: a symmetric banded matrix with an in-place
//! Cholesky factorization, and symmetric pseudo-inverse / PSD checks for the
//! dense information matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Dot product with eight independent accumulators so the loop vectorizes
/// and hides the addition latency.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Symmetric matrix stored by its lower band. Row `i` keeps the entries
/// `A[i, i - bw ..= i]`; positions left of column zero are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSymmetric {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSymmetric {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw - (i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Set `A[i, j]` (and implicitly `A[j, i]`); `|i - j|` must be within the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            let s = self.slot(i, i);
            self.data[s] += v;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Cholesky factorization `A = L Lᵀ`, consuming the matrix.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let (before, rest) = self.data.split_at_mut(i * w);
            let row_i = &mut rest[..w];
            for j in lo..i {
                let row_j = &before[j * w..(j + 1) * w];
                // Σ_k L[i,k] L[j,k] for k in lo..j
                let a = &row_i[lo + bw - i..j + bw - i];
                let b = &row_j[lo + bw - j..bw];
                row_i[j + bw - i] = (row_i[j + bw - i] - dot(a, b)) / row_j[bw];
            }
            let off = &row_i[lo + bw - i..bw];
            let diag = row_i[bw] - dot(off, off);
            if !(diag > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: i });
            }
            row_i[bw] = diag.sqrt();
        }
        Ok(BandedCholesky { n, bw, data: self.data })
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Solve `L y = b` in place. Leading zeros of `b` are skipped.
    pub fn forward_solve(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let w = self.bw + 1;
        let start = match b.iter().position(|&v| v != 0.0) {
            Some(s) => s,
            None => return,
        };
        for i in start..self.n {
            let lo = i.saturating_sub(self.bw).max(start);
            let row = &self.data[i * w..(i + 1) * w];
            let d = dot(&row[lo + self.bw - i..self.bw], &b[lo..i]);
            b[i] = (b[i] - d) / row[self.bw];
        }
    }

    /// Solve `Lᵀ x = y` in place.
    pub fn backward_solve(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.n);
        let w = self.bw + 1;
        for i in (0..self.n).rev() {
            let row = &self.data[i * w..(i + 1) * w];
            y[i] /= row[self.bw];
            let yi = y[i];
            let lo = i.saturating_sub(self.bw);
            for (k, l) in (lo..i).zip(&row[lo + self.bw - i..self.bw]) {
                y[k] -= l * yi;
            }
        }
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward_solve(b);
        self.backward_solve(b);
    }
}

/// Smallest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// `true` when `m` is symmetric and its smallest eigenvalue is at least
/// `-rel_tol * ‖m‖` (spectral norm).
pub fn is_symmetric_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let norm = eig.amax();
    eig.min() >= -rel_tol * norm
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix; eigenvalues below
/// `rel_tol * λ_max` are treated as zero.
pub fn pinv_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let lmax = eig.eigenvalues.amax();
    let mut out = DMatrix::zeros(n, n);
    if lmax <= 0.0 {
        return out;
    }
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > rel_tol * lmax {
            let v = eig.eigenvectors.column(k);
            out += v * v.transpose() / l;
        }
    }
    out
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Schur complement `A − B D⁺ Bᵀ` of the trailing block of a symmetric PSD
/// matrix, keeping the leading `lead × lead` block.
pub fn schur_complement(m: &DMatrix<f64>, lead: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let a = m.view((0, 0), (lead, lead)).into_owned();
    if lead == n {
        return a;
    }
    let b = m.view((0, lead), (lead, n - lead));
    let d = m.view((lead, lead), (n - lead, n - lead)).into_owned();
    let dinv = pinv_symmetric(&d, 1e-12);
    symmetrize(&(a - b * dinv * b.transpose()))
}

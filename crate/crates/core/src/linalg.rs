//! Small dense linear algebra kernels, generic over [`Real`].
//!
//! Everything here works on row-major [`Matrix`] values of modest size
//! (sections of a few dozen rows, Jacobi matrices of a few thousand).

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Leading `r x c` block.
    pub fn section(&self, r: usize, c: usize) -> Self {
        assert!(r <= self.rows && c <= self.cols);
        Self::from_fn(r, c, |i, j| self[(i, j)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect()
    }

    /// `A^T x`.
    pub fn tr_matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.rows, x.len());
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * x[i];
            }
        }
        out
    }

    /// `A^T A`.
    pub fn gram_columns(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..self.cols {
                for b in a..self.cols {
                    out[(a, b)] += r[a] * r[b];
                }
            }
        }
        for a in 0..self.cols {
            for b in 0..a {
                out[(a, b)] = out[(b, a)];
            }
        }
        out
    }

    /// `A A^T`.
    pub fn gram_rows(&self) -> Self {
        Self::from_fn(self.rows, self.rows, |i, j| dot(self.row(i), self.row(j)))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    // scaled to avoid overflow on large entries
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return scale;
    }
    a.iter()
        .map(|&v| {
            let s = v / scale;
            s * s
        })
        .sum::<T>()
        .sqrt()
        * scale
}

/// Euclidean distance between two vectors, the shorter one padded by zeros.
pub fn padded_distance<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().max(b.len());
    let diff: Vec<T> = (0..n)
        .map(|i| a.get(i).copied().unwrap_or(T::zero()) - b.get(i).copied().unwrap_or(T::zero()))
        .collect();
    norm2(&diff)
}

/// Givens rotation `(c, s, r)` with `[c s; -s c] [a; b] = [r; 0]`.
fn givens<T: Real>(a: T, b: T) -> (T, T, T) {
    if b == T::zero() {
        return (T::one(), T::zero(), a);
    }
    let r = a.hypot(b);
    (a / r, b / r, r)
}

/// Singular values of `a` in descending order (one-sided Jacobi).
///
/// One-sided Jacobi keeps high relative accuracy in the small singular
/// values, which is what the conditioning checks need.
pub fn singular_values<T: Real>(a: &Matrix<T>) -> Vec<T> {
    let work = if a.rows() >= a.cols() {
        a.clone()
    } else {
        a.transpose()
    };
    let (m, n) = (work.rows(), work.cols());
    // column-major copy for cache-friendly column rotations
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| work.column(j)).collect();
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::c(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                for i in 0..m {
                    let x = cp[i];
                    let y = cq[i];
                    cp[i] = c * x - s * y;
                    cq[i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = cols.iter().map(|c| norm2(c)).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Householder QR with column pivoting, `A P = Q R`.
#[derive(Clone, Debug)]
pub struct PivotedQr<T> {
    qr: Matrix<T>,
    tau: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> PivotedQr<T> {
    pub fn new(a: &Matrix<T>) -> Self {
        let mut qr = a.clone();
        let (m, n) = (qr.rows(), qr.cols());
        let k = m.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![T::zero(); k];
        for step in 0..k {
            // pivot on the largest remaining column norm
            let mut best = step;
            let mut best_norm = -T::one();
            for j in step..n {
                let s: T = (step..m).map(|i| qr[(i, j)] * qr[(i, j)]).sum();
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != step {
                for i in 0..m {
                    let t = qr[(i, step)];
                    qr[(i, step)] = qr[(i, best)];
                    qr[(i, best)] = t;
                }
                perm.swap(step, best);
            }
            let col: Vec<T> = (step..m).map(|i| qr[(i, step)]).collect();
            let alpha = norm2(&col);
            if alpha == T::zero() {
                continue;
            }
            let x0 = qr[(step, step)];
            let beta = if x0 >= T::zero() { -alpha } else { alpha };
            let v0 = x0 - beta;
            for i in (step + 1)..m {
                qr[(i, step)] = qr[(i, step)] / v0;
            }
            tau[step] = (beta - x0) / beta;
            qr[(step, step)] = beta;
            for j in (step + 1)..n {
                let mut s = qr[(step, j)];
                for i in (step + 1)..m {
                    s += qr[(i, step)] * qr[(i, j)];
                }
                s *= tau[step];
                qr[(step, j)] -= s;
                for i in (step + 1)..m {
                    let vi = qr[(i, step)];
                    qr[(i, j)] -= s * vi;
                }
            }
        }
        Self { qr, tau, perm }
    }

    /// Absolute values of the diagonal of `R`, nonincreasing up to rounding.
    pub fn r_diagonal(&self) -> Vec<T> {
        (0..self.tau.len()).map(|i| self.qr[(i, i)].abs()).collect()
    }

    /// Numerical rank at relative threshold `rtol`.
    pub fn rank(&self, rtol: T) -> usize {
        let d = self.r_diagonal();
        let top = d.first().copied().unwrap_or(T::zero());
        d.iter().take_while(|&&v| v > rtol * top).count()
    }

    fn apply_qt(&self, b: &mut [T]) {
        let m = self.qr.rows();
        for step in 0..self.tau.len() {
            if self.tau[step] == T::zero() {
                continue;
            }
            let mut s = b[step];
            for i in (step + 1)..m {
                s += self.qr[(i, step)] * b[i];
            }
            s *= self.tau[step];
            b[step] -= s;
            for i in (step + 1)..m {
                b[i] -= s * self.qr[(i, step)];
            }
        }
    }

    /// Basic least-squares solution restricted to the leading `rank` columns.
    pub fn solve(&self, b: &[T], rank: usize) -> Vec<T> {
        assert_eq!(b.len(), self.qr.rows());
        let mut y = b.to_vec();
        self.apply_qt(&mut y);
        let n = self.qr.cols();
        let mut z = vec![T::zero(); n];
        for i in (0..rank).rev() {
            let mut s = y[i];
            for j in (i + 1)..rank {
                s -= self.qr[(i, j)] * z[j];
            }
            z[i] = s / self.qr[(i, i)];
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }

    /// Solves `R^T z = P^T c` for full-rank square-or-wide use (`A = M^T`).
    pub fn solve_transposed_r(&self, c: &[T]) -> Vec<T> {
        let n = self.qr.cols();
        let mut z = vec![T::zero(); n];
        for i in 0..n {
            let mut s = c[self.perm[i]];
            for j in 0..i {
                s -= self.qr[(j, i)] * z[j];
            }
            z[i] = s / self.qr[(i, i)];
        }
        z
    }
}

/// Cholesky factor `A = L L^T` of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &Matrix<T>) -> Option<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols());
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Some(Self { l })
    }

    pub fn log_det(&self) -> T {
        (0..self.l.rows())
            .map(|i| self.l[(i, i)].ln())
            .sum::<T>()
            * T::c(2.0)
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let v = self.l[(i, k)] * y[k];
                y[i] -= v;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let v = self.l[(k, i)] * y[k];
                y[i] -= v;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }
}

/// Eigenvalues of the symmetric tridiagonal matrix with zero-based diagonal
/// `diag` and off-diagonal `off` (length `n - 1`), with the first component of
/// each normalised eigenvector. Implicit QL with Wilkinson shifts; results
/// are sorted ascending.
pub fn tridiagonal_eigen<T: Real>(diag: &[T], off: &[T]) -> Option<(Vec<T>, Vec<T>)> {
    let n = diag.len();
    assert!(off.len() + 1 == n || n == 0);
    let mut d = diag.to_vec();
    let mut e: Vec<T> = off.to_vec();
    e.push(T::zero());
    let mut z = vec![T::zero(); n];
    if n > 0 {
        z[0] = T::one();
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (T::c(2.0) * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + r.abs() * g.signum());
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + T::c(2.0) * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(std::cmp::Ordering::Equal));
    Some((idx.iter().map(|&i| d[i]).collect(), idx.iter().map(|&i| z[i]).collect()))
}

/// QR factorisation of a square matrix grown by bordering: each step appends
/// one row and one column.
#[derive(Clone, Debug)]
pub struct IncrementalQr<T> {
    q: Matrix<T>,
    r: Matrix<T>,
}

impl<T: Real> Default for IncrementalQr<T> {
    fn default() -> Self {
        Self {
            q: Matrix::zeros(0, 0),
            r: Matrix::zeros(0, 0),
        }
    }
}

impl<T: Real> IncrementalQr<T> {
    pub fn dim(&self) -> usize {
        self.r.rows()
    }

    pub fn r(&self) -> &Matrix<T> {
        &self.r
    }

    pub fn q(&self) -> &Matrix<T> {
        &self.q
    }

    /// Factorisation of `[[D, col_top], [row_new, corner]]` where `D` is the
    /// currently factored matrix.
    pub fn bordered(&self, col_top: &[T], row_new: &[T], corner: T) -> Self {
        let n = self.dim();
        assert_eq!(col_top.len(), n);
        assert_eq!(row_new.len(), n);
        let qt_u = self.q.tr_matvec(col_top);
        let mut r = Matrix::zeros(n + 1, n + 1);
        let mut q = Matrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] = self.r[(i, j)];
                q[(i, j)] = self.q[(i, j)];
            }
            r[(i, n)] = qt_u[i];
            r[(n, i)] = row_new[i];
        }
        r[(n, n)] = corner;
        q[(n, n)] = T::one();
        for j in 0..n {
            let (c, s, rr) = givens(r[(j, j)], r[(n, j)]);
            r[(j, j)] = rr;
            r[(n, j)] = T::zero();
            for k in (j + 1)..=n {
                let a = r[(j, k)];
                let b = r[(n, k)];
                r[(j, k)] = c * a + s * b;
                r[(n, k)] = -s * a + c * b;
            }
            for i in 0..=n {
                let a = q[(i, j)];
                let b = q[(i, n)];
                q[(i, j)] = c * a + s * b;
                q[(i, n)] = -s * a + c * b;
            }
        }
        Self { q, r }
    }

    /// `(sigma_min, sigma_max)` of the factored matrix.
    pub fn extreme_singular_values(&self) -> (T, T) {
        let sv = singular_values(&self.r);
        (
            sv.last().copied().unwrap_or(T::zero()),
            sv.first().copied().unwrap_or(T::zero()),
        )
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.q.matmul(&self.r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_values_of_diagonal() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -0.5]]);
        let sv = singular_values(&a);
        assert!((sv[0] - 3.0f64).abs() < 1e-15 && (sv[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn duplicated_row_is_rank_deficient() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]);
        let sv = singular_values(&a);
        assert!(sv[1] < 1e-15);
    }

    #[test]
    fn pivoted_qr_solves_square_system() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -1.0],
            vec![0.5, -1.0, 2.0f64],
        ]);
        let x_true = [1.0, -2.0, 0.25];
        let b = a.matvec(&x_true);
        let qr = PivotedQr::new(&a);
        let x = qr.solve(&b, qr.rank(1e-14));
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn cholesky_log_det() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0f64]]);
        let ch = Cholesky::new(&a).unwrap();
        assert!((ch.log_det() - 8.0f64.ln()).abs() < 1e-14);
        assert!(Cholesky::new(&Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0f64]])).is_none());
    }

    #[test]
    fn tridiagonal_eigen_matches_two_by_two() {
        let (ev, z) = tridiagonal_eigen(&[0.0f64, 0.0], &[1.0]).unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-15 && (ev[1] - 1.0).abs() < 1e-15);
        assert!((z[0].abs() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bordered_update_reconstructs_matrix() {
        let full = Matrix::from_rows(&[
            vec![1.0, 0.3, -0.2],
            vec![0.5, 2.0, 0.7],
            vec![-1.0, 0.1, 1.5f64],
        ]);
        let mut qr = IncrementalQr::default();
        for n in 0..3 {
            let col: Vec<f64> = (0..n).map(|i| full[(i, n)]).collect();
            let row: Vec<f64> = (0..n).map(|j| full[(n, j)]).collect();
            qr = qr.bordered(&col, &row, full[(n, n)]);
        }
        let back = qr.reconstruct();
        for i in 0..3 {
            for j in 0..3 {
                assert!((back[(i, j)] - full[(i, j)]).abs() < 1e-14);
            }
        }
        let (smin, _) = qr.extreme_singular_values();
        let sv = singular_values(&full);
        assert!((smin - sv[2]).abs() < 1e-14);
    }
}

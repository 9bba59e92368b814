//! The row-normalised interpolation system `A_hat a_m = c_hat_m`, its Gram
//! diagnostics and the finite-section solver.
//!
//! Rows are nodes `x_i`, columns are the omitted functions `Psi_k`, and row
//! `i` is divided by `Psi_{i-1}(x_i)` (row 1 by `Psi_1(x_1)`), so entry
//! `(i, i-1)` is exactly one. Public indices are one-based.

use serde::{Deserialize, Serialize};

use crate::construction::ConstructionState;
use crate::error::{Error, Result};
use crate::linalg::{norm2, padded_distance, singular_values, Cholesky, Matrix, PivotedQr};
use crate::orthopoly::OrthoBasis;
use crate::scalar::{ls_slope, Real};
use crate::weights::Growth;

/// Relative rank threshold of the normal-equation factorisation.
const RANK_RTOL: f64 = 1e-13;
/// Extrapolated columns summed before the power-law remainder.
const TAIL_TERMS: usize = 4096;
/// Extrapolated rows summed for column Gram tails.
const ROW_TAIL_TERMS: usize = 64;

/// A matrix with a finite available block, seen as the leading part of an
/// infinite one. Indices are zero-based.
pub trait InfiniteSystem<T: Real>: Sync {
    fn available_rows(&self) -> usize;
    fn available_cols(&self) -> usize;
    fn entry(&self, i: usize, k: usize) -> T;

    fn section(&self, r: usize, n: usize) -> Matrix<T> {
        Matrix::from_fn(r, n, |i, k| self.entry(i, k))
    }
}

/// Dense matrix viewed as an infinite system.
#[derive(Clone, Debug)]
pub struct DenseSystem<T> {
    pub matrix: Matrix<T>,
}

impl<T: Real> InfiniteSystem<T> for DenseSystem<T> {
    fn available_rows(&self) -> usize {
        self.matrix.rows()
    }
    fn available_cols(&self) -> usize {
        self.matrix.cols()
    }
    fn entry(&self, i: usize, k: usize) -> T {
        self.matrix[(i, k)]
    }
}

/// Gram entry with an estimate of the truncated tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GramEntry<T> {
    pub value: T,
    pub tail: T,
    pub terms: usize,
}

impl<T: Real> GramEntry<T> {
    /// Fails unless the tail is below `tol` relative to the value.
    pub fn certify(&self, tol: T) -> Result<T> {
        if self.tail <= tol * self.value.abs() {
            Ok(self.value)
        } else {
            Err(Error::InsufficientRange {
                tail: (self.tail / self.value.abs()).f64(),
                tol: tol.f64(),
            })
        }
    }
}

pub struct SystemMatrix<'a, T: Real> {
    state: &'a ConstructionState<T>,
    basis: &'a OrthoBasis<T>,
    growth: Growth<T>,
    n0: usize,
    kept: Vec<usize>,
    /// `Psi_0..Psi_D` at every node, `D = l_K`.
    sweeps: Vec<Vec<T>>,
    norms: Vec<T>,
    /// Envelope `a_l^{-1/2} (1 - x/a_l)^{-1/4}` data for extrapolated columns:
    /// `(a_l, l)` for `k = K+1..`.
    col_tail: Vec<T>,
    row_tail: Vec<Vec<T>>,
}

impl<'a, T: Real> SystemMatrix<'a, T> {
    pub fn new(state: &'a ConstructionState<T>, basis: &'a OrthoBasis<T>, growth: Growth<T>, n0: usize) -> Result<Self> {
        let kk = state.len();
        if kk == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let degs = state.degrees();
        let top = *degs.last().expect("nonempty");
        let sweeps: Vec<Vec<T>> = state
            .nodes()
            .iter()
            .map(|&x| basis.eval_weighted_all(top, x))
            .collect::<Result<_>>()?;
        let norms: Vec<T> = (0..kk)
            .map(|i| if i == 0 { sweeps[0][degs[0]] } else { sweeps[i][degs[i - 1]] })
            .collect();
        let mut omitted = degs.to_vec();
        omitted.sort_unstable();
        let kept = (0..=top).filter(|d| omitted.binary_search(d).is_err()).collect();
        let mut sys = Self {
            state,
            basis,
            growth,
            n0,
            kept,
            sweeps,
            norms,
            col_tail: Vec::new(),
            row_tail: Vec::new(),
        };
        sys.col_tail = sys.column_tail_envelopes()?;
        sys.row_tail = sys.row_tail_values()?;
        Ok(sys)
    }

    pub fn size(&self) -> usize {
        self.state.len()
    }

    /// Kept degrees in ascending order (`phi_1, phi_2, ...`).
    pub fn kept_degrees(&self) -> &[usize] {
        &self.kept
    }

    /// Row normalisers `Psi_{i-1}(x_i)`.
    pub fn row_norms(&self) -> &[T] {
        &self.norms
    }

    fn check(&self, i: usize, k: usize) -> Result<()> {
        let kk = self.size();
        if i == 0 || k == 0 || i > kk || k > kk {
            return Err(Error::OutOfRange {
                row: i,
                col: k,
                rows: kk,
                cols: kk,
            });
        }
        Ok(())
    }

    /// `A_hat_{ik}`, one-based.
    pub fn matrix_entry(&self, i: usize, k: usize) -> Result<T> {
        self.check(i, k)?;
        Ok(self.sweeps[i - 1][self.state.degrees()[k - 1]] / self.norms[i - 1])
    }

    /// Same entry recomputed from fresh evaluations.
    pub fn matrix_entry_uncached(&self, i: usize, k: usize) -> Result<T> {
        self.check(i, k)?;
        let degs = self.state.degrees();
        let x = self.state.nodes()[i - 1];
        let norm_deg = if i == 1 { degs[0] } else { degs[i - 2] };
        Ok(self.basis.eval_weighted(degs[k - 1], x)? / self.basis.eval_weighted(norm_deg, x)?)
    }

    /// Degree of the kept function `phi_m` (one-based).
    pub fn kept_degree(&self, m: usize) -> Result<usize> {
        if m == 0 || m > self.kept.len() {
            return Err(Error::OutOfRange {
                row: m,
                col: 0,
                rows: self.kept.len(),
                cols: 0,
            });
        }
        Ok(self.kept[m - 1])
    }

    /// `c_hat_{m,i} = phi_m(x_i) / Psi_{i-1}(x_i)`.
    pub fn rhs_entry(&self, m: usize, i: usize) -> Result<T> {
        let deg = self.kept_degree(m)?;
        self.rhs_for_degree(deg, i)
    }

    /// Right-hand side for the function `p_deg w`; omitted degrees are rejected.
    pub fn rhs_for_degree(&self, deg: usize, i: usize) -> Result<T> {
        if self.state.degrees().contains(&deg) {
            return Err(Error::Domain(format!("degree {deg} belongs to the omitted system")));
        }
        self.check(i, 1)?;
        let v = match self.sweeps[i - 1].get(deg) {
            Some(&v) => v,
            None => self.basis.eval_weighted(deg, self.state.nodes()[i - 1])?,
        };
        Ok(v / self.norms[i - 1])
    }

    /// `c_hat_m` over all available rows.
    pub fn rhs_vector(&self, m: usize) -> Result<Vec<T>> {
        (1..=self.size()).map(|i| self.rhs_entry(m, i)).collect()
    }

    fn column_tail_envelopes(&self) -> Result<Vec<T>> {
        // a_l extrapolated as a power law from two MRS values
        let degs = self.state.degrees();
        let lk = T::of_usize(*degs.last().expect("nonempty"));
        let a1 = self.basis.mrs(degs[degs.len() - 1])?;
        let a2 = self.basis.mrs(2 * degs[degs.len() - 1])?;
        let e = (a2 / a1).ln() / T::LN_2();
        let kk = self.size();
        Ok((1..=TAIL_TERMS)
            .map(|t| {
                let l = self.growth.eval(T::of_usize(kk + t + self.n0)).max(lk);
                a1 * (l / lk).powf(e)
            })
            .collect())
    }

    fn envelope(a: T, x: T) -> T {
        let gap = (T::one() - x.abs() / a).max(T::c(0.05));
        a.sqrt().recip() * gap.powf(T::c(-0.25))
    }

    /// Bound on `|A_hat_{ik}|` for extrapolated columns `k > K`.
    fn column_tail_row(&self, i: usize) -> Result<Vec<T>> {
        let x = self.state.nodes()[i];
        let degs = self.state.degrees();
        let mut c = T::zero();
        for &l in degs {
            let a = self.basis.mrs(l)?;
            let v = (self.sweeps[i][l] / self.norms[i]).abs();
            c = c.max(v / Self::envelope(a, x));
        }
        Ok(self.col_tail.iter().map(|&a| c * Self::envelope(a, x)).collect())
    }

    fn row_tail_values(&self) -> Result<Vec<Vec<T>>> {
        let kk = self.size();
        let degs = self.state.degrees();
        let (sup_k, x_k) = self.state.sup_of(kk - 1).expect("sup norms stored");
        let l_last = *degs.last().expect("nonempty");
        let a_last = self.basis.mrs(l_last)?;
        let lk = T::of_usize(l_last);
        let a2 = self.basis.mrs(2 * l_last)?;
        let e = (a2 / a_last).ln() / T::LN_2();
        let ratio = x_k / a_last;
        let mut rows = Vec::with_capacity(ROW_TAIL_TERMS);
        for t in 0..ROW_TAIL_TERMS {
            // row K+1+t is normalised by Psi_{l_{K+t}} at its maximum
            let l = if t == 0 {
                lk
            } else {
                self.growth.eval(T::of_usize(kk + t + self.n0)).max(lk)
            };
            let a = a_last * (l / lk).powf(e);
            let x = ratio * a;
            let norm = sup_k * (l / lk).powf(T::one() / T::c(6.0)) * (a / a_last).powf(T::c(-0.5));
            let vals = self.basis.eval_weighted_all(l_last, x)?;
            rows.push(degs.iter().map(|&d| (vals[d] / norm).abs()).collect());
        }
        Ok(rows)
    }

    /// `alpha_ij = sum_k A_hat_ik A_hat_jk` over the available columns, with
    /// the enveloped tail over extrapolated columns.
    pub fn gram_alpha(&self, i: usize, j: usize) -> Result<GramEntry<T>> {
        self.check(i, j)?;
        let kk = self.size();
        let value: T = (1..=kk)
            .map(|k| self.matrix_entry(i, k).expect("checked") * self.matrix_entry(j, k).expect("checked"))
            .sum();
        let ti = self.column_tail_row(i - 1)?;
        let tj = self.column_tail_row(j - 1)?;
        let terms: Vec<T> = ti.iter().zip(&tj).map(|(&a, &b)| a * b).collect();
        let mut tail: T = terms.iter().copied().sum();
        // power-law remainder from the last decade of terms
        let n = terms.len();
        let (t1, t2) = (terms[n / 10 * 9], terms[n - 1]);
        let (k1, k2) = (T::of_usize(kk + n / 10 * 9 + 1), T::of_usize(kk + n));
        let p = (t1 / t2).ln() / (k2 / k1).ln();
        tail += if p > T::one() {
            t2 * k2 / (p - T::one())
        } else {
            T::infinity()
        };
        Ok(GramEntry { value, tail, terms: kk })
    }

    /// `alpha_ij` certified to relative tail `tol`.
    pub fn gram_alpha_certified(&self, i: usize, j: usize, tol: T) -> Result<T> {
        self.gram_alpha(i, j)?.certify(tol)
    }

    /// `lambda_kl = sum_m A_hat_mk A_hat_ml` over the available rows, with
    /// the tail over extrapolated rows.
    pub fn gram_lambda(&self, k: usize, l: usize) -> Result<GramEntry<T>> {
        self.check(k, l)?;
        let kk = self.size();
        let value: T = (1..=kk)
            .map(|m| self.matrix_entry(m, k).expect("checked") * self.matrix_entry(m, l).expect("checked"))
            .sum();
        let tail = self.row_tail.iter().map(|r| r[k - 1] * r[l - 1]).sum();
        Ok(GramEntry { value, tail, terms: kk })
    }

    pub fn gram_lambda_certified(&self, k: usize, l: usize, tol: T) -> Result<T> {
        self.gram_lambda(k, l)?.certify(tol)
    }

    /// `B^(n) = [alpha_ij]_{i,j<=n}`.
    pub fn alpha_section(&self, n: usize) -> Result<Matrix<T>> {
        self.check(n.max(1), 1)?;
        let a = self.section(n, self.size());
        Ok(a.gram_rows())
    }

    /// `[lambda_kl]_{k,l<=n}`.
    pub fn lambda_section(&self, n: usize) -> Result<Matrix<T>> {
        self.check(n.max(1), 1)?;
        let a = self.section(self.size(), n);
        Ok(a.gram_columns())
    }

    pub fn decay_diagnostics(&self, n: usize, delta: T) -> Result<DecayReport> {
        if n < 4 {
            return Err(Error::Domain("decay diagnostics need n >= 4".into()));
        }
        let alpha = self.alpha_section(n)?;
        let lambda = self.lambda_section(n)?;
        Ok(DecayReport::from_grams(&alpha, &lambda, delta))
    }

    pub fn riesz_bound(&self, m: usize, n: usize) -> Result<T> {
        let c = self.rhs_vector(m)?;
        riesz_bound(self, &c, n)
    }

    pub fn jaffard_membership(&self, n: usize, s: T) -> Result<JaffardReport> {
        self.check(n.max(1), 1)?;
        jaffard_membership(&self.section(n, n), s)
    }

    pub fn kernel_margin(&self, n: usize) -> Result<Vec<T>> {
        self.check(n.max(1), 1)?;
        Ok(kernel_margin(&self.section(n, n)))
    }
}

impl<T: Real> InfiniteSystem<T> for SystemMatrix<'_, T> {
    fn available_rows(&self) -> usize {
        self.size()
    }
    fn available_cols(&self) -> usize {
        self.size()
    }
    fn entry(&self, i: usize, k: usize) -> T {
        self.sweeps[i][self.state.degrees()[k]] / self.norms[i]
    }
}

/// Least-squares fit `|g_ij| ~ c max(i,j)^{-delta}` over off-diagonal
/// entries (one-based `i, j`). Returns `(c, delta)`.
pub fn fit_decay<T: Real>(gram: &Matrix<T>) -> Option<(T, T)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..gram.rows() {
        for j in 0..gram.cols() {
            let v = gram[(i, j)].abs();
            if i != j && v > T::zero() {
                xs.push(T::of_usize(i.max(j) + 1).ln());
                ys.push(v.ln());
            }
        }
    }
    let (slope, icpt) = ls_slope(&xs, &ys)?;
    Some((icpt.exp(), -slope))
}

/// `f(c0, delta)` of the determinant bound.
pub fn f_c0_delta<T: Real>(c0: T, delta: T) -> T {
    let c1 = T::c(6.0) * c0 * c0 + T::c(2.0) * c0;
    let c1sq = c1 * c1;
    c1sq / T::c(4.0).powf(delta)
        * (T::one() + T::c(2.0) * T::SQRT_2() / (delta - T::c(1.25)) * (c1sq * T::c(15.0 / 6.0)).exp())
}

/// Largest `c0` (from below) with `f(c0, delta) < 1`, by bisection.
pub fn solve_c0<T: Real>(delta: T) -> Result<T> {
    if !(delta > T::c(1.25)) {
        return Err(Error::Domain(format!("delta = {delta} must exceed 5/4")));
    }
    let (mut lo, mut hi) = (T::zero(), T::one());
    while f_c0_delta(hi, delta) < T::one() {
        hi = hi * T::c(2.0);
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::c(2.0);
        if f_c0_delta(mid, delta) < T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Gram ratio `det B / prod ||w_j||` and row cosines of `B`.
#[derive(Clone, Debug, Serialize)]
pub struct GramShape {
    pub ratio: f64,
    pub degenerate: bool,
    pub max_cosine: f64,
}

pub fn gram_shape<T: Real>(b: &Matrix<T>) -> GramShape {
    let n = b.rows();
    let row_norms: Vec<T> = (0..n).map(|i| norm2(b.row(i))).collect();
    let (ratio, degenerate) = match Cholesky::new(b) {
        Some(ch) => {
            let ln = ch.log_det() - row_norms.iter().map(|v| v.ln()).sum::<T>();
            (ln.exp().f64(), false)
        }
        None => (0.0, true),
    };
    let mut max_cos = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let c = crate::linalg::dot(b.row(i), b.row(j)).abs() / (row_norms[i] * row_norms[j]);
            max_cos = max_cos.max(c);
        }
    }
    GramShape {
        ratio,
        degenerate,
        max_cosine: max_cos.f64(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub c: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub alpha_fit: Option<DecayFit>,
    pub lambda_fit: Option<DecayFit>,
    /// Log-log slope of `|alpha_ij|` against `max(i,j)` for `j in [i+3, n]`, per `i`.
    pub alpha_row_slopes: Vec<(usize, f64)>,
    pub lambda_row_slopes: Vec<(usize, f64)>,
    /// `f` at the fitted `(c, delta)` of `alpha`, when that `delta` exceeds 5/4.
    pub f_at_fit: Option<f64>,
    pub delta: f64,
    pub c0: f64,
    pub f_at_c0: f64,
    pub gram_ratio: f64,
    pub degenerate: bool,
    pub max_cosine: f64,
    pub alpha_diag_min: f64,
    /// Falls below 1 only in a last column whose unit entry lies in the
    /// row just past the section.
    pub lambda_diag_min: f64,
}

fn row_slopes<T: Real>(g: &Matrix<T>) -> Vec<(usize, f64)> {
    let n = g.rows();
    (0..n)
        .filter_map(|i| {
            let js: Vec<usize> = (i + 3..n).filter(|&j| g[(i, j)] != T::zero()).collect();
            if js.len() < 2 {
                return None;
            }
            let xs: Vec<T> = js.iter().map(|&j| T::of_usize(j + 1).ln()).collect();
            let ys: Vec<T> = js.iter().map(|&j| g[(i, j)].abs().ln()).collect();
            ls_slope(&xs, &ys).map(|(s, _)| (i + 1, s.f64()))
        })
        .collect()
}

impl DecayReport {
    pub fn from_grams<T: Real>(alpha: &Matrix<T>, lambda: &Matrix<T>, delta: T) -> Self {
        let af = fit_decay(alpha);
        let lf = fit_decay(lambda);
        let shape = gram_shape(alpha);
        let c0 = solve_c0(delta).unwrap_or(T::nan());
        let diag_min = |g: &Matrix<T>| (0..g.rows()).map(|i| g[(i, i)].f64()).fold(f64::INFINITY, f64::min);
        Self {
            alpha_fit: af.map(|(c, d)| DecayFit { c: c.f64(), delta: d.f64() }),
            lambda_fit: lf.map(|(c, d)| DecayFit { c: c.f64(), delta: d.f64() }),
            alpha_row_slopes: row_slopes(alpha),
            lambda_row_slopes: row_slopes(lambda),
            f_at_fit: af.and_then(|(c, d)| (d > T::c(1.25)).then(|| f_c0_delta(c, d).f64())),
            delta: delta.f64(),
            c0: c0.f64(),
            f_at_c0: f_c0_delta(c0, delta).f64(),
            gram_ratio: shape.ratio,
            degenerate: shape.degenerate,
            max_cosine: shape.max_cosine,
            alpha_diag_min: diag_min(alpha),
            lambda_diag_min: diag_min(lambda),
        }
    }
}

/// `sqrt(c^T B^{-1} c)` for the leading `n` rows, `B = A_n A_n^T` over the
/// available columns.
pub fn riesz_bound<T: Real, S: InfiniteSystem<T>>(sys: &S, rhs: &[T], n: usize) -> Result<T> {
    let a = sys.section(n, sys.available_cols());
    let b = a.gram_rows();
    let ch = Cholesky::new(&b).ok_or_else(|| Error::DegenerateSection {
        sigma_min: singular_values(&a).last().map_or(0.0, |v| v.f64()),
    })?;
    let c = &rhs[..n];
    let y = ch.solve(c);
    Ok(crate::linalg::dot(c, &y).max(T::zero()).sqrt())
}

/// Norm of the minimal-norm solution of the `n`-row section, via QR of `A^T`.
pub fn min_norm_solution_norm<T: Real, S: InfiniteSystem<T>>(sys: &S, rhs: &[T], n: usize) -> T {
    let at = sys.section(n, sys.available_cols()).transpose();
    let qr = PivotedQr::new(&at);
    norm2(&qr.solve_transposed_r(&rhs[..n]))
}

/// `riesz_bound` for `n = 1..=nmax`, with a monotonicity flag.
pub fn riesz_trace<T: Real, S: InfiniteSystem<T>>(sys: &S, rhs: &[T], nmax: usize) -> Result<(Vec<T>, bool)> {
    let vals: Vec<T> = (1..=nmax).map(|n| riesz_bound(sys, rhs, n)).collect::<Result<_>>()?;
    let mono = vals.windows(2).all(|w| w[1] >= w[0] * (T::one() - T::c(1e-12)));
    Ok((vals, mono))
}

#[derive(Clone, Debug, Serialize)]
pub struct JaffardReport {
    pub s: f64,
    /// Smallest `C` with `|A_{k,j}| <= C (1 + |k - j - 1|)^{-s}`.
    pub constant: f64,
    /// Log-log slope of the largest entry at each shifted offset.
    pub slope: f64,
    pub pass: bool,
}

/// Shifted-diagonal decay envelope of a square section.
pub fn jaffard_membership<T: Real>(a: &Matrix<T>, s: T) -> Result<JaffardReport> {
    if !(s > T::one()) {
        return Err(Error::Domain(format!("exponent s = {s} must exceed 1")));
    }
    let n = a.rows();
    let mut constant = T::zero();
    let mut by_offset = vec![T::zero(); n + 1];
    for k in 0..n {
        for j in 0..a.cols() {
            let d = (k as isize - j as isize - 1).unsigned_abs();
            let v = a[(k, j)].abs();
            constant = constant.max(v * (T::one() + T::of_usize(d)).powf(s));
            if d < by_offset.len() {
                by_offset[d] = by_offset[d].max(v);
            }
        }
    }
    let pts: Vec<(T, T)> = by_offset
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| **v > T::zero())
        .map(|(d, v)| ((T::one() + T::of_usize(d)).ln(), v.ln()))
        .collect();
    let slope = if pts.len() < 2 {
        T::neg_infinity()
    } else {
        let (xs, ys): (Vec<T>, Vec<T>) = pts.into_iter().unzip();
        ls_slope(&xs, &ys).map_or(T::neg_infinity(), |(s, _)| s)
    };
    let pass = constant.is_finite() && slope <= -s + T::c(0.2);
    Ok(JaffardReport {
        s: s.f64(),
        constant: constant.f64(),
        slope: slope.f64(),
        pass,
    })
}

/// `sigma_min` of the leading square sections `1..=n`.
pub fn kernel_margin<T: Real>(a: &Matrix<T>) -> Vec<T> {
    (1..=a.rows().min(a.cols()))
        .map(|k| singular_values(&a.section(k, k)).last().copied().unwrap_or(T::zero()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectionSolution<T> {
    pub x: Vec<T>,
    pub residual: T,
    pub sigma_min: T,
}

/// Solves `A_rn^T A_rn x = A_rn^T b_r` with column-pivoted QR.
pub fn finite_section_solve<T: Real, S: InfiniteSystem<T>>(sys: &S, rhs: &[T], r: usize, n: usize) -> Result<SectionSolution<T>> {
    if n == 0 || r < n {
        return Err(Error::Domain(format!("section needs r >= n >= 1, got r={r}, n={n}")));
    }
    if r > sys.available_rows() || n > sys.available_cols() || rhs.len() < r {
        return Err(Error::OutOfRange {
            row: r,
            col: n,
            rows: sys.available_rows().min(rhs.len()),
            cols: sys.available_cols(),
        });
    }
    let a = sys.section(r, n);
    let b = &rhs[..r];
    let normal = a.gram_columns();
    let atb = a.tr_matvec(b);
    let qr = PivotedQr::new(&normal);
    let sv = singular_values(&a);
    let sigma_min = sv.last().copied().unwrap_or(T::zero());
    if qr.rank(T::c(RANK_RTOL).max(T::epsilon() * T::c(8.0))) < n {
        return Err(Error::DegenerateSection {
            sigma_min: sigma_min.f64(),
        });
    }
    let x = qr.solve(&atb, n);
    let ax = a.matvec(&x);
    let res: Vec<T> = ax.iter().zip(b).map(|(&p, &q)| p - q).collect();
    Ok(SectionSolution {
        x,
        residual: norm2(&res),
        sigma_min,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: usize,
    pub r: usize,
    pub residual: f64,
    pub norm: f64,
    /// Change from the previous solution in the trace.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionVector<T> {
    pub m: usize,
    pub coeffs: Vec<T>,
    pub tail_bound: T,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl<T: Real> SolutionVector<T> {
    pub fn zero(m: usize, len: usize) -> Self {
        Self {
            m,
            coeffs: vec![T::zero(); len],
            tail_bound: T::zero(),
            trace: Vec::new(),
            converged: true,
        }
    }

    pub fn norm(&self) -> T {
        norm2(&self.coeffs)
    }

    /// Smallest `c` with `||a|| <= c sqrt(r) exp(c r^2)`, `r = ||c_hat||`.
    pub fn envelope_constant(&self, rhs_norm: T) -> T {
        let target = self.norm();
        if target == T::zero() {
            return T::zero();
        }
        let h = |c: T| c * rhs_norm.sqrt() * (c * rhs_norm * rhs_norm).exp();
        let (mut lo, mut hi) = (T::zero(), T::one());
        while h(hi) < target && hi.is_finite() {
            hi = hi * T::c(2.0);
        }
        for _ in 0..200 {
            let mid = (lo + hi) / T::c(2.0);
            if h(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// Column schedule `2, 4, 8, ...` capped at `cols`.
fn schedule(cols: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = 2.min(cols);
    while n < cols {
        out.push(n);
        n *= 2;
    }
    out.push(cols);
    out
}

/// Finite-section iteration with adaptive row growth; never fails on
/// exhaustion, reporting `converged = false` instead.
pub fn solve_adaptive_report<T: Real, S: InfiniteSystem<T>>(sys: &S, rhs: &[T], m: usize, tol: T) -> Result<SolutionVector<T>> {
    if !(tol > T::zero()) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let rows = sys.available_rows().min(rhs.len());
    let cols = sys.available_cols().min(rows);
    if cols == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut trace = Vec::new();
    let mut prev: Option<Vec<T>> = None;
    let mut last_delta = T::infinity();
    let push = |trace: &mut Vec<TraceRow>, n: usize, r: usize, s: &SectionSolution<T>, d: Option<T>| {
        trace.push(TraceRow {
            n,
            r,
            residual: s.residual.f64(),
            norm: norm2(&s.x).f64(),
            delta: d.map(|d| d.f64()),
        });
    };
    for n in schedule(cols) {
        let mut r = n;
        let mut sol = finite_section_solve(sys, rhs, r, n)?;
        let first_delta = prev.as_ref().map(|p| padded_distance(p, &sol.x));
        push(&mut trace, n, r, &sol, first_delta);
        while r < rows {
            let r2 = (2 * r).min(rows);
            let next = finite_section_solve(sys, rhs, r2, n)?;
            let d = padded_distance(&sol.x, &next.x);
            push(&mut trace, n, r2, &next, Some(d));
            sol = next;
            r = r2;
            if d < tol {
                break;
            }
        }
        if let Some(p) = &prev {
            let d = padded_distance(p, &sol.x);
            last_delta = d;
            if d < tol {
                return Ok(SolutionVector {
                    m,
                    coeffs: sol.x,
                    tail_bound: d,
                    trace,
                    converged: true,
                });
            }
        }
        prev = Some(sol.x);
    }
    Ok(SolutionVector {
        m,
        coeffs: prev.expect("schedule is nonempty"),
        tail_bound: last_delta,
        trace,
        converged: false,
    })
}

/// As [`solve_adaptive_report`], failing when the schedule runs out before
/// successive solutions agree to `tol`.
pub fn solve_adaptive<T: Real, S: InfiniteSystem<T>>(sys: &S, rhs: &[T], m: usize, tol: T) -> Result<SolutionVector<T>> {
    let sol = solve_adaptive_report(sys, rhs, m, tol)?;
    if sol.converged {
        Ok(sol)
    } else {
        Err(Error::InsufficientConstruction {
            last_delta: sol.tail_bound.f64(),
            tol: tol.f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> DenseSystem<f64> {
        DenseSystem {
            matrix: Matrix::identity(n),
        }
    }

    #[test]
    fn identity_section_returns_rhs() {
        let mut b = vec![0.0; 6];
        b[0] = 1.0;
        let s = finite_section_solve(&identity(6), &b, 6, 6).unwrap();
        assert_eq!(s.x, b);
    }

    #[test]
    fn identity_converges_immediately() {
        let b = [1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let sol = solve_adaptive(&identity(8), &b, 1, 1e-12).unwrap();
        assert!(sol.converged);
        assert_eq!(&sol.coeffs[..2], &b[..2]);
        assert!(sol.coeffs[2..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exhausted_schedule_is_an_error() {
        let b = [1.0; 8];
        assert!(matches!(
            solve_adaptive(&identity(8), &b, 1, 1e-6),
            Err(Error::InsufficientConstruction { .. })
        ));
    }

    #[test]
    fn duplicated_row_is_degenerate() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let sys = DenseSystem { matrix: a };
        assert!(matches!(
            finite_section_solve(&sys, &[1.0, 2.0], 2, 2),
            Err(Error::DegenerateSection { .. })
        ));
    }

    #[test]
    fn identity_gram_shape() {
        let s = gram_shape(&Matrix::<f64>::identity(5));
        assert!((s.ratio - 1.0).abs() < 1e-15);
        assert_eq!(s.max_cosine, 0.0);
    }

    #[test]
    fn riesz_identity_is_rhs_norm() {
        let b = [3.0, 4.0, 0.0];
        assert!((riesz_bound(&identity(3), &b, 3).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_identity_is_jaffard() {
        let a = Matrix::from_fn(6, 6, |k, j| if k == j + 1 { 1.0 } else { 0.0 });
        let r = jaffard_membership(&a, 3.0).unwrap();
        assert_eq!(r.constant, 1.0);
        assert!(r.pass);
    }

    #[test]
    fn c0_keeps_f_below_one() {
        let c0 = solve_c0(1.3).unwrap();
        let f = f_c0_delta(c0, 1.3);
        assert!(f < 1.0 && f > 0.99);
    }

    #[test]
    fn identity_kernel_margin() {
        assert!(kernel_margin(&Matrix::<f64>::identity(4)).iter().all(|v| (*v - 1.0).abs() < 1e-15));
    }
}

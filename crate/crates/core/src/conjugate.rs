//! Dual functions `phi*_m = (phi_m - S) / v^2` with `S = sum_k a_km Psi_k`,
//! and the checks around them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::infsys::SolutionVector;
use crate::linalg::norm2;
use crate::orthopoly::OrthoBasis;
use crate::quadrature::gauss_legendre;
use crate::scalar::{ls_slope, Real};
use crate::weights::InnerWeight;

const PROBE_LEVELS: usize = 14;

/// Value of `phi*_m` at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ConjugateValue<T> {
    Finite(T),
    /// `x` is a node and the numerator's vanishing order beats `v^2`.
    ZeroLimit,
    /// `x` is a node where `v^2` vanishes faster than the numerator.
    Pole,
}

pub struct ConjugateFunction<'a, T: Real> {
    basis: &'a OrthoBasis<T>,
    /// Omitted degrees `l_1..l_K`.
    degrees: &'a [usize],
    /// Degree of `phi_m`.
    degree: usize,
    solution: &'a SolutionVector<T>,
    inner: &'a InnerWeight<T>,
    /// Vanishing order assumed for `phi_m - S` at the nodes.
    order: T,
    envelope_c: T,
}

/// `(1 + Q(x))^{1/6} / (1 + x^2)^{1/4}`.
pub fn envelope<T: Real>(basis: &OrthoBasis<T>, x: T) -> T {
    (T::one() + basis.weight().q(x)).powf(T::one() / T::c(6.0)) / (T::one() + x * x).powf(T::c(0.25))
}

impl<'a, T: Real> ConjugateFunction<'a, T> {
    /// `degree` is the degree of `phi_m`; `order` is the vanishing order of
    /// the numerator at the nodes used by the node-limit policy.
    pub fn new(
        basis: &'a OrthoBasis<T>,
        degrees: &'a [usize],
        degree: usize,
        solution: &'a SolutionVector<T>,
        inner: &'a InnerWeight<T>,
        order: T,
    ) -> Result<Self> {
        if degrees.contains(&degree) {
            return Err(Error::Domain(format!("degree {degree} is omitted")));
        }
        if solution.coeffs.len() > degrees.len() {
            return Err(Error::Domain("more coefficients than omitted functions".into()));
        }
        let mut f = Self {
            basis,
            degrees,
            degree,
            solution,
            inner,
            order,
            envelope_c: T::zero(),
        };
        f.envelope_c = f.measure_envelope()?;
        Ok(f)
    }

    pub fn active_len(&self) -> usize {
        self.solution.coeffs.len()
    }

    /// Measured constant `c` with `(sum_k Psi_k(x)^2)^{1/2} <= c * envelope(x)`.
    pub fn envelope_constant(&self) -> T {
        self.envelope_c
    }

    fn measure_envelope(&self) -> Result<T> {
        let k = self.active_len();
        if k == 0 {
            return Ok(T::zero());
        }
        let top = self.degrees[..k].iter().copied().max().unwrap_or(0);
        let a = self.basis.mrs(top.max(1))?;
        let pts = 512;
        let mut c = T::zero();
        for i in 0..=pts {
            let x = T::c(1.2) * a * T::of_usize(i) / T::of_usize(pts);
            let vals = self.basis.eval_weighted_all(top, x)?;
            let s = norm2(&self.degrees[..k].iter().map(|&d| vals[d]).collect::<Vec<_>>());
            c = c.max(s / envelope(self.basis, x));
        }
        Ok(c)
    }

    fn top_degree(&self) -> usize {
        self.degrees[..self.active_len()]
            .iter()
            .copied()
            .max()
            .unwrap_or(0)
            .max(self.degree)
    }

    /// `phi_m(x)`.
    pub fn phi(&self, x: T) -> Result<T> {
        self.basis.eval_weighted(self.degree, x)
    }

    /// `sum_{k <= len} a_k Psi_k(x)`, uncertified.
    pub fn partial_sum(&self, x: T, len: usize) -> Result<T> {
        let len = len.min(self.active_len());
        if len == 0 {
            return Ok(T::zero());
        }
        let top = self.degrees[..len].iter().copied().max().unwrap_or(0);
        let vals = self.basis.eval_weighted_all(top, x)?;
        Ok(self.solution.coeffs[..len]
            .iter()
            .zip(self.degrees)
            .map(|(&a, &d)| a * vals[d])
            .sum())
    }

    /// `(S(x), remainder bound)` with the shortest truncation whose bound
    /// is below `tol`.
    pub fn series_eval(&self, x: T, tol: T) -> Result<(T, T)> {
        if !(tol > T::zero()) {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        let k = self.active_len();
        let coeffs = &self.solution.coeffs;
        let scale = self.envelope_c * envelope(self.basis, x);
        let mut best = T::infinity();
        for len in 0..=k {
            let rest = norm2(&coeffs[len..]);
            let bound = (self.solution.tail_bound + rest) * scale;
            best = best.min(bound);
            if bound < tol || (bound == T::zero() && len == k) {
                return Ok((self.partial_sum(x, len)?, bound));
            }
        }
        Err(Error::InsufficientCoefficients { best_bound: best.f64() })
    }

    /// `sum_{l_k <= n} (1 - l_k/(n+1)) a_k Psi_k(x)`.
    pub fn cesaro_mean(&self, n: usize, x: T) -> Result<T> {
        let k = self.active_len();
        let used: Vec<usize> = (0..k).filter(|&i| self.degrees[i] <= n).collect();
        if used.is_empty() {
            return Ok(T::zero());
        }
        let top = used.iter().map(|&i| self.degrees[i]).max().unwrap_or(0);
        let vals = self.basis.eval_weighted_all(top, x)?;
        let np1 = T::of_usize(n + 1);
        Ok(used
            .iter()
            .map(|&i| {
                let l = self.degrees[i];
                (T::one() - T::of_usize(l) / np1) * self.solution.coeffs[i] * vals[l]
            })
            .sum())
    }

    /// `phi_m(x) - S(x)` over the active coefficients.
    pub fn numerator(&self, x: T) -> Result<T> {
        Ok(self.phi(x)? - self.partial_sum(x, self.active_len())?)
    }

    /// Local vanishing order of `phi_m - S` at node `j` (one-based), plus
    /// the Cesaro difference sequence near it.
    pub fn holder_probe(&self, j: usize, nodes: &[T]) -> Result<HolderReport> {
        if j == 0 || j > nodes.len() {
            return Err(Error::OutOfRange {
                row: j,
                col: 0,
                rows: nodes.len(),
                cols: 0,
            });
        }
        let xj = nodes[j - 1];
        let radius = self
            .inner
            .exclusion_radius(j - 1)
            .filter(|r| r.is_finite() && *r > T::zero())
            .unwrap_or(T::one() / (T::one() + xj.abs()));
        let fit = fit_local_exponent(|x| self.numerator(x).unwrap_or(T::nan()), xj, radius, PROBE_LEVELS);
        let probe_x = xj + radius / T::c(2.0);
        let first = self.degrees.first().copied().unwrap_or(1).max(1);
        let last = self.top_degree();
        let mut ns = Vec::new();
        let mut n = first;
        while 2 * n <= last.max(2 * first) {
            ns.push(n);
            n *= 2;
        }
        let mut diffs = Vec::with_capacity(ns.len());
        for &n in &ns {
            let d = (self.cesaro_mean(n, probe_x)? - self.cesaro_mean(2 * n, probe_x)?).abs();
            diffs.push((n, d.f64()));
        }
        let pos: Vec<(f64, f64)> = diffs
            .iter()
            .filter(|(_, d)| *d > 0.0)
            .map(|&(n, d)| ((n as f64).ln(), d.ln()))
            .collect();
        let cesaro_slope = if pos.len() >= 2 {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
            ls_slope(&xs, &ys).map(|(s, _)| s)
        } else {
            None
        };
        let decreasing = diffs.windows(2).all(|w| w[1].1 <= w[0].1);
        Ok(HolderReport {
            node: j,
            slope: fit.slope.map(|s| s.f64()),
            indeterminate: fit.indeterminate,
            at_node: self.numerator(xj)?.f64(),
            cesaro: diffs,
            cesaro_slope,
            cesaro_decreasing: decreasing,
        })
    }

    /// `phi*_m(x)`.
    pub fn conjugate_eval(&self, x: T, tol: T) -> Result<ConjugateValue<T>> {
        let iv = self.inner.eval(x, tol)?;
        if iv.v == T::zero() && iv.v_hat == T::zero() {
            let k = iv.k_near.expect("zero of v is a node");
            let mk = self.inner.exponent(k).expect("node exponent");
            return Ok(if self.order > T::c(2.0) * mk {
                ConjugateValue::ZeroLimit
            } else {
                ConjugateValue::Pole
            });
        }
        let num = self.numerator(x)?;
        let ln_v = match (iv.k_near, iv.v_hat_deleted) {
            // deleted-factor form: v = e^{growth} v_hat_k |1 - x/x_k|^{m_k}
            (Some(k), Some(del)) => {
                let xk = self.inner.node(k).expect("node");
                let mk = self.inner.exponent(k).expect("node exponent");
                let growth = iv.ln_v - iv.ln_v_hat;
                growth + del.ln() + mk * (T::one() - x / xk).abs().ln()
            }
            _ => iv.ln_v,
        };
        Ok(ConjugateValue::Finite(num * (-T::c(2.0) * ln_v).exp()))
    }

    fn rule_size(&self, other: usize) -> usize {
        (self.top_degree() + other) / 2 + 1
    }

    /// `int (phi_m - S) phi_k` by the Gauss rule of the basis, `k` given by
    /// its degree.
    pub fn biorthogonality(&self, other_degree: usize, rule_size: usize) -> Result<T> {
        let need = self.rule_size(other_degree);
        if rule_size < need {
            return Err(Error::Domain(format!(
                "rule of size {rule_size} under-resolves degree {}; need {need}",
                self.top_degree() + other_degree
            )));
        }
        let rule = self.basis.gauss_rule(rule_size)?;
        let mut s = T::zero();
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            s += w * self.numerator(x)? * self.basis.eval_weighted(other_degree, x)?;
        }
        Ok(s)
    }

    /// Same integral with `phi*_m` and `v^2` formed explicitly.
    pub fn biorthogonality_explicit(&self, other_degree: usize, rule_size: usize, tol: T) -> Result<T> {
        let need = self.rule_size(other_degree);
        if rule_size < need {
            return Err(Error::Domain(format!("rule of size {rule_size} under-resolves; need {need}")));
        }
        let rule = self.basis.gauss_rule(rule_size)?;
        let mut s = T::zero();
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let iv = self.inner.eval(x, tol)?;
            let star = match self.conjugate_eval(x, tol)? {
                ConjugateValue::Finite(v) => v,
                _ => continue,
            };
            s += w * star * self.basis.eval_weighted(other_degree, x)? * iv.v * iv.v;
        }
        Ok(s)
    }

    /// Finiteness of `||phi*_m v||_q` on `grid`, with node neighbourhoods
    /// handled by their local power law.
    pub fn dual_norm_check(&self, q: T, gamma: T, grid: &[T], tol: T) -> Result<DualNormReport> {
        if !(q > T::one()) {
            return Err(Error::Domain(format!("q = {q} must exceed 1")));
        }
        let p = q / (q - T::one());
        let count = self.inner.stored_len().unwrap_or(0);
        let ms: Vec<T> = (0..count).filter_map(|j| self.inner.exponent(j)).collect();
        let lower = ms
            .iter()
            .filter(|&&m| gamma - m < T::zero())
            .map(|&m| (gamma - m + T::one()).recip())
            .fold(T::one(), T::max);
        if !(p > lower) {
            return Err(Error::Domain(format!(
                "p = {p} violates p > sup 1/(gamma - m_j + 1) = {lower}"
            )));
        }
        let upper = ms
            .iter()
            .filter(|&&m| m < T::one())
            .map(|&m| (T::one() - m).recip())
            .fold(T::infinity(), T::min);
        let condition = ms.iter().all(|&m| m - gamma < q.recip());

        let radii: Vec<(T, T)> = (0..count)
            .map(|k| {
                let x = self.inner.node(k).expect("stored node");
                (x, self.inner.exclusion_radius(k).expect("stored node"))
            })
            .collect();
        let mut breaks: Vec<T> = grid.to_vec();
        for &(x, r) in &radii {
            breaks.push(x - r);
            breaks.push(x + r);
        }
        breaks.retain(|b| b.is_finite());
        breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite breaks"));
        breaks.dedup();
        let (lo, hi) = match (grid.first(), grid.last()) {
            (Some(&a), Some(&b)) if a < b => (a, b),
            _ => return Err(Error::Domain("grid needs two increasing points".into())),
        };
        let inside = |x: T| radii.iter().any(|&(c, r)| (x - c).abs() < r);
        let mut bulk = T::zero();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a < lo || b > hi || inside((a + b) / T::c(2.0)) {
                continue;
            }
            let rule = gauss_legendre(8, a, b)?;
            for (&x, &wt) in rule.nodes.iter().zip(&rule.weights) {
                let v = self.inner.eval(x, tol)?;
                bulk += wt * (self.numerator(x)? / v.v).abs().powf(q);
            }
        }
        // |phi* v| ~ C |t|^{order - m_k} near x_k
        let mut nodes = Vec::with_capacity(radii.len());
        for (k, &(x, r)) in radii.iter().enumerate() {
            if x - r < lo || x + r > hi {
                continue;
            }
            let mk = ms[k];
            let e = self.order - mk;
            let mut c = T::zero();
            for side in [-T::one(), T::one()] {
                let y = x + side * r;
                let v = self.inner.eval(y, tol)?;
                c = c.max((self.numerator(y)? / v.v).abs() / r.powf(e));
            }
            let power = e * q + T::one();
            let contrib = if power > T::zero() {
                T::c(2.0) * c.powf(q) * r.powf(power) / power
            } else {
                T::infinity()
            };
            nodes.push((k + 1, contrib.f64()));
        }
        let total = bulk + nodes.iter().map(|(_, c)| T::c(*c)).sum::<T>();
        Ok(DualNormReport {
            q: q.f64(),
            p: p.f64(),
            p_lower: lower.f64(),
            p_upper: upper.f64(),
            integral: total.f64(),
            bulk: bulk.f64(),
            node_contributions: nodes,
            finite: total.is_finite(),
            exponent_condition: condition,
            completeness_range: p < upper,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderReport {
    pub node: usize,
    pub slope: Option<f64>,
    pub indeterminate: bool,
    /// `phi_m(x_j) - S(x_j)`.
    pub at_node: f64,
    /// `(n, |sigma_n - sigma_2n|)` near the node.
    pub cesaro: Vec<(usize, f64)>,
    pub cesaro_slope: Option<f64>,
    pub cesaro_decreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualNormReport {
    pub q: f64,
    pub p: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub integral: f64,
    pub bulk: f64,
    pub node_contributions: Vec<(usize, f64)>,
    pub finite: bool,
    /// `m_j - gamma < 1/q` for every stored `j`.
    pub exponent_condition: bool,
    /// `p < inf 1/(1 - m_j)`, the completeness clause.
    pub completeness_range: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalExponentFit<T> {
    pub slope: Option<T>,
    pub indeterminate: bool,
    /// `(h, |f(c + h)|)` samples used.
    pub samples: Vec<(T, T)>,
}

/// Fits `|f(center +- h)| ~ C h^s` over dyadic offsets `h = 2^{-t} radius`.
pub fn fit_local_exponent<T: Real>(f: impl Fn(T) -> T, center: T, radius: T, levels: usize) -> LocalExponentFit<T> {
    let mut samples = Vec::new();
    for t in 1..=levels {
        let h = radius * T::c(2.0).powi(-(t as i32));
        for side in [T::one(), -T::one()] {
            let v = f(center + side * h).abs();
            if v.is_finite() && v > T::min_positive_value() * T::c(1e6) {
                samples.push((h, v));
            }
        }
    }
    if samples.len() < 3 {
        return LocalExponentFit {
            slope: None,
            indeterminate: true,
            samples,
        };
    }
    let xs: Vec<T> = samples.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<T> = samples.iter().map(|(_, v)| v.ln()).collect();
    let slope = ls_slope(&xs, &ys).map(|(s, _)| s);
    LocalExponentFit {
        slope,
        indeterminate: slope.is_none(),
        samples,
    }
}

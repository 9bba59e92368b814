//! Orthonormal polynomials for `w^2` and the weighted functions `Psi_n = p_n w`.
//!
//! The recurrence is `x p_n = rho_{n+1} p_{n+1} + rho_n p_{n-1}` with
//! `p_{-1} = 0`; the diagonal terms vanish because the weight is even.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen;
use crate::numeric::brent_max;
use crate::quadrature::{composite, Rule};
use crate::scalar::{rel_diff, Real};
use crate::weights::{mrs_number, FreudWeight};

const RESCALE_PERIOD: usize = 32;
const PANEL_ORDER: usize = 20;
const MAX_REFINEMENTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientSource {
    ClosedForm,
    Stieltjes,
}

/// Half-line discretisation `[0, length]` used by the Stieltjes procedure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub length: f64,
    pub panels: usize,
}

#[derive(Debug)]
pub struct OrthoBasis<T> {
    weight: FreudWeight<T>,
    /// `rho[n]` for `n = 0..=N`, with `rho[0] = 0`.
    rho: Vec<T>,
    p0: T,
    source: CoefficientSource,
    discretization: Option<Discretization>,
    mrs: Mutex<BTreeMap<usize, T>>,
}

impl<T: Real> Clone for OrthoBasis<T> {
    fn clone(&self) -> Self {
        Self {
            weight: self.weight.clone(),
            rho: self.rho.clone(),
            p0: self.p0,
            source: self.source,
            discretization: self.discretization,
            mrs: Mutex::new(self.mrs.lock().expect("mrs cache poisoned").clone()),
        }
    }
}

/// Recurrence coefficients `rho_1..rho_N` for `w^2`.
pub fn recurrence_coefficients<T: Real>(weight: &FreudWeight<T>, n: usize) -> Result<Vec<T>> {
    Ok(OrthoBasis::new(weight.clone(), n)?.rho[1..].to_vec())
}

/// Result of a Stieltjes run.
struct StieltjesRun<T> {
    rho: Vec<T>,
    p0: T,
}

/// Discretised Stieltjes procedure carried on weighted values, so the vectors
/// stay bounded where `p_n` itself would overflow.
fn stieltjes<T: Real>(weight: &FreudWeight<T>, n: usize, disc: Discretization) -> Result<StieltjesRun<T>> {
    let len = T::c(disc.length);
    let breaks: Vec<T> = (0..=disc.panels)
        .map(|i| len * T::of_usize(i) / T::of_usize(disc.panels))
        .collect();
    let half = composite(&breaks, PANEL_ORDER)?;
    // mirrored discretisation of w^2 on [-length, length]
    let mut xs = Vec::with_capacity(2 * half.len());
    let mut ws = Vec::with_capacity(2 * half.len());
    for (&x, &wt) in half.nodes.iter().zip(&half.weights) {
        xs.push(-x);
        ws.push(wt);
        xs.push(x);
        ws.push(wt);
    }
    let wx: Vec<T> = xs.iter().map(|&x| weight.w(x)).collect();
    let mass: T = ws.iter().zip(&wx).map(|(&a, &b)| a * b * b).sum();
    let p0 = mass.sqrt().recip();
    let mut prev = vec![T::zero(); xs.len()];
    let mut cur: Vec<T> = wx.iter().map(|&v| p0 * v).collect();
    let mut rho = vec![T::zero(); n + 1];
    for k in 0..n {
        let diag: T = xs
            .iter()
            .zip(&ws)
            .zip(&cur)
            .map(|((&x, &wt), &c)| wt * x * c * c)
            .sum();
        if diag.abs() > T::c(1e-8) {
            return Err(Error::InvalidWeight(format!(
                "diagonal recurrence term {diag} at degree {k} does not vanish"
            )));
        }
        let mut next: Vec<T> = xs
            .iter()
            .zip(&cur)
            .zip(&prev)
            .map(|((&x, &c), &p)| x * c - rho[k] * p)
            .collect();
        let norm: T = ws.iter().zip(&next).map(|(&wt, &v)| wt * v * v).sum::<T>().sqrt();
        if !(norm > T::zero()) {
            return Err(Error::NoConvergence {
                what: "Stieltjes normalisation",
                iterations: k,
            });
        }
        rho[k + 1] = norm;
        for v in next.iter_mut() {
            *v /= norm;
        }
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(StieltjesRun { rho, p0 })
}

impl<T: Real> OrthoBasis<T> {
    /// Builds the basis up to degree `n`: closed form for the quadratic power
    /// weight, discretised Stieltjes otherwise.
    pub fn new(weight: FreudWeight<T>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("maximum degree must be at least 1".into()));
        }
        if let Some((beta, scale)) = weight.power_params() {
            if beta == T::c(2.0) {
                // w^2 = exp(-c x^2) with c = 2 scale
                let c = T::c(2.0) * scale;
                let rho = (0..=n).map(|k| (T::of_usize(k) / (T::c(2.0) * c)).sqrt()).collect();
                let p0 = (c / T::PI()).sqrt().sqrt();
                return Ok(Self::from_parts(weight, rho, p0, CoefficientSource::ClosedForm, None));
            }
        }
        Self::stieltjes(weight, n)
    }

    /// Forces the Stieltjes route, doubling the panel count until the
    /// coefficients agree to `1e-12` relatively.
    pub fn stieltjes(weight: FreudWeight<T>, n: usize) -> Result<Self> {
        let a_n = mrs_number(&weight, T::of_usize(n + 1))?;
        let length = (T::c(1.5) * a_n).f64();
        let mut disc = Discretization {
            length,
            panels: n.max(16),
        };
        let mut run = stieltjes(&weight, n, disc)?;
        for _ in 0..MAX_REFINEMENTS {
            let finer = Discretization {
                length,
                panels: disc.panels * 2,
            };
            let next = stieltjes(&weight, n, finer)?;
            let change = run
                .rho
                .iter()
                .zip(&next.rho)
                .map(|(&a, &b)| rel_diff(a, b))
                .fold(rel_diff(run.p0, next.p0), T::max);
            run = next;
            disc = finer;
            if change < T::c(1e-12).max(T::epsilon() * T::c(64.0)) {
                return Ok(Self::from_parts(weight, run.rho, run.p0, CoefficientSource::Stieltjes, Some(disc)));
            }
        }
        Err(Error::NoConvergence {
            what: "Stieltjes discretisation",
            iterations: MAX_REFINEMENTS,
        })
    }

    fn from_parts(
        weight: FreudWeight<T>,
        rho: Vec<T>,
        p0: T,
        source: CoefficientSource,
        discretization: Option<Discretization>,
    ) -> Self {
        Self {
            weight,
            rho,
            p0,
            source,
            discretization,
            mrs: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn weight(&self) -> &FreudWeight<T> {
        &self.weight
    }

    pub fn max_degree(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn source(&self) -> CoefficientSource {
        self.source
    }

    /// `rho_n`, `1 <= n <= N`.
    pub fn rho(&self, n: usize) -> T {
        self.rho[n]
    }

    /// `rho_1..rho_N`.
    pub fn coefficients(&self) -> &[T] {
        &self.rho[1..]
    }

    /// The constant `p_0`.
    pub fn p0(&self) -> T {
        self.p0
    }

    /// Cached MRS number `a_n` of the outer weight.
    pub fn mrs(&self, n: usize) -> Result<T> {
        if let Some(v) = self.mrs.lock().expect("mrs cache poisoned").get(&n) {
            return Ok(*v);
        }
        let v = mrs_number(&self.weight, T::of_usize(n.max(1)))?;
        self.mrs.lock().expect("mrs cache poisoned").insert(n, v);
        Ok(v)
    }

    /// Snapshot of the cached MRS table.
    pub fn mrs_table(&self) -> Vec<(usize, T)> {
        self.mrs
            .lock()
            .expect("mrs cache poisoned")
            .iter()
            .map(|(&k, &v)| (k, v))
            .collect()
    }

    fn check_degree(&self, n: usize) -> Result<()> {
        if n > self.max_degree() {
            return Err(Error::Domain(format!(
                "degree {n} exceeds the basis maximum {}",
                self.max_degree()
            )));
        }
        Ok(())
    }

    /// Runs the recurrence to degree `n`, calling `visit(k, mantissa, log_scale)`
    /// for every degree `k <= n`; the value is `mantissa * exp(log_scale)`.
    fn sweep(&self, n: usize, x: T, log0: T, mut visit: impl FnMut(usize, T, T)) {
        let mut prev = T::zero();
        let mut cur = self.p0;
        let mut log = log0;
        let limit = T::rescale_threshold();
        visit(0, cur, log);
        for k in 0..n {
            let next = (x * cur - self.rho[k] * prev) / self.rho[k + 1];
            prev = cur;
            cur = next;
            if (k + 1) % RESCALE_PERIOD == 0 || cur.abs() > limit {
                let mag = cur.abs().max(prev.abs());
                if mag > T::zero() && mag.is_finite() {
                    // power-of-two factors keep the rescaling exact
                    let e = mag.log2().round();
                    let f = T::c(2.0).powf(-e);
                    cur *= f;
                    prev *= f;
                    log += e * T::LN_2();
                }
            }
            visit(k + 1, cur, log);
        }
    }

    fn check_abscissa(x: T) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Domain("non-finite abscissa".into()));
        }
        Ok(())
    }

    /// `Psi_n(x) = p_n(x) w(x)`.
    pub fn eval_weighted(&self, n: usize, x: T) -> Result<T> {
        self.check_degree(n)?;
        Self::check_abscissa(x)?;
        let mut out = T::zero();
        self.sweep(n, x, -self.weight.q(x), |k, m, l| {
            if k == n {
                out = m * l.exp();
            }
        });
        Ok(out)
    }

    /// `(sign, ln |Psi_n(x)|)`, finite even where `Psi_n(x)` underflows.
    pub fn eval_weighted_ln(&self, n: usize, x: T) -> Result<(T, T)> {
        self.check_degree(n)?;
        Self::check_abscissa(x)?;
        let mut out = (T::zero(), T::neg_infinity());
        self.sweep(n, x, -self.weight.q(x), |k, m, l| {
            if k == n {
                out = (m.signum(), m.abs().ln() + l);
            }
        });
        Ok(out)
    }

    /// `Psi_0(x), ..., Psi_n(x)` from a single sweep.
    pub fn eval_weighted_all(&self, n: usize, x: T) -> Result<Vec<T>> {
        self.check_degree(n)?;
        Self::check_abscissa(x)?;
        let mut out = Vec::with_capacity(n + 1);
        self.sweep(n, x, -self.weight.q(x), |_, m, l| out.push(m * l.exp()));
        Ok(out)
    }

    /// Unweighted `p_n(x)`.
    pub fn eval_poly(&self, n: usize, x: T) -> Result<T> {
        self.check_degree(n)?;
        Self::check_abscissa(x)?;
        let mut out = T::zero();
        self.sweep(n, x, T::zero(), |k, m, l| {
            if k == n {
                out = m * l.exp();
            }
        });
        Ok(out)
    }

    /// `(||Psi_n||_inf, x_max)` searched on `x >= 0`.
    pub fn sup_norm(&self, n: usize) -> Result<(T, T)> {
        self.check_degree(n)?;
        if n == 0 {
            return Ok((self.p0, T::zero()));
        }
        let a_n = self.mrs(n)?;
        let hi = T::c(1.2) * a_n;
        let count = (8 * n).max(256);
        let mut grid: Vec<T> = (0..=count)
            .map(|i| hi * T::of_usize(i) / T::of_usize(count))
            .collect();
        // band near a_n, where extrema compress like n^(-2/3)
        let band = (T::c(6.0) * T::of_usize(n).powf(T::c(-2.0 / 3.0)) * a_n).min(a_n);
        let lo_band = a_n - band;
        grid.extend((0..=count).map(|i| lo_band + (hi - lo_band) * T::of_usize(i) / T::of_usize(count)));
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
        grid.dedup();
        let vals: Vec<T> = grid
            .par_iter()
            .map(|&x| self.eval_weighted(n, x).map(T::abs))
            .collect::<Result<_>>()?;
        let mut peaks: Vec<usize> = (0..vals.len())
            .filter(|&i| {
                let left = i == 0 || vals[i] >= vals[i - 1];
                let right = i + 1 == vals.len() || vals[i] >= vals[i + 1];
                left && right
            })
            .collect();
        peaks.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).expect("finite values"));
        peaks.truncate(4);
        let mut best = (T::zero(), T::zero());
        for &i in &peaks {
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(grid.len() - 1)];
            let (x, v) = if a < b {
                brent_max(
                    |x| self.eval_weighted(n, x).map(T::abs).unwrap_or(T::zero()),
                    a,
                    b,
                    T::epsilon().sqrt() * a_n * T::c(1e-3),
                )
            } else {
                (grid[i], vals[i])
            };
            let (x, v) = if v >= vals[i] { (x, v) } else { (grid[i], vals[i]) };
            if v > best.0 {
                best = (v, x);
            }
        }
        Ok(best)
    }

    /// Gauss rule of size `m` built from the recurrence, with weights
    /// `1 / sum_{j<m} Psi_j(x_k)^2`, so that `int G ~ sum mu_k G(x_k)` for
    /// `G = polynomial * w^2`.
    pub fn gauss_rule(&self, m: usize) -> Result<Rule<T>> {
        if m == 0 || m > self.max_degree() {
            return Err(Error::Domain(format!(
                "rule size {m} needs 1 <= m <= {}",
                self.max_degree()
            )));
        }
        let diag = vec![T::zero(); m];
        let (nodes, _) = tridiagonal_eigen(&diag, &self.rho[1..m]).ok_or(Error::NoConvergence {
            what: "Jacobi matrix eigenproblem",
            iterations: 60,
        })?;
        let weights = nodes
            .par_iter()
            .map(|&x| {
                let vals = self.eval_weighted_all(m - 1, x)?;
                Ok(vals.iter().map(|v| *v * *v).sum::<T>().recip())
            })
            .collect::<Result<Vec<T>>>()?;
        Ok(Rule { nodes, weights })
    }

    /// `max_{i,j <= n} |<p_i, p_j> - delta_ij|`.
    ///
    /// Closed-form bases use the Gauss rule of size `m` built from their own
    /// coefficients. Stieltjes bases are checked on an independent
    /// discretisation with twice the panels used to build them.
    pub fn orthonormality_residual(&self, n: usize, m: usize) -> Result<T> {
        self.check_degree(n)?;
        if m < n + 1 {
            return Err(Error::Domain(format!(
                "rule of size {m} cannot integrate degree {} exactly",
                2 * n
            )));
        }
        let rule = match self.discretization {
            Some(d) => {
                let len = T::c(d.length);
                let panels = 2 * d.panels;
                let breaks: Vec<T> = (0..=panels)
                    .map(|i| -len + T::c(2.0) * len * T::of_usize(i) / T::of_usize(panels))
                    .collect();
                composite(&breaks, PANEL_ORDER)?
            }
            None => self.gauss_rule(m)?,
        };
        // Gauss nodes carry the weight in mu_k; the discretisation uses Psi directly
        let rows: Vec<Vec<T>> = rule
            .nodes
            .par_iter()
            .map(|&x| self.eval_weighted_all(n, x))
            .collect::<Result<_>>()?;
        let mut worst = T::zero();
        for i in 0..=n {
            for j in i..=n {
                let s: T = rows
                    .iter()
                    .zip(&rule.weights)
                    .map(|(r, &w)| w * r[i] * r[j])
                    .sum();
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((s - target).abs());
            }
        }
        Ok(worst)
    }

    pub fn discretization(&self) -> Option<Discretization> {
        self.discretization
    }

    pub fn to_artifact(&self) -> BasisArtifact {
        let (beta, scale) = self
            .weight
            .power_params()
            .map_or((None, None), |(b, s)| (Some(b.f64()), Some(s.f64())));
        BasisArtifact {
            beta,
            scale,
            n: self.max_degree(),
            rho: self.coefficients().iter().map(|v| v.f64()).collect(),
            p0: self.p0.f64(),
            source: self.source,
            discretization: self.discretization,
            mrs: self.mrs_table().into_iter().map(|(k, v)| (k, v.f64())).collect(),
        }
    }

    /// Rebuilds a basis from a stored artifact; `weight` must be the weight it
    /// was built for.
    pub fn from_artifact(weight: FreudWeight<T>, art: &BasisArtifact) -> Result<Self> {
        if art.rho.len() != art.n || art.n == 0 {
            return Err(Error::Domain("artifact coefficient count does not match N".into()));
        }
        if let (Some((b, s)), Some(ab), Some(asc)) = (weight.power_params(), art.beta, art.scale) {
            if b.f64() != ab || s.f64() != asc {
                return Err(Error::Domain("artifact was built for a different weight".into()));
            }
        }
        let mut rho = Vec::with_capacity(art.n + 1);
        rho.push(T::zero());
        rho.extend(art.rho.iter().map(|&v| T::c(v)));
        let basis = Self::from_parts(weight, rho, T::c(art.p0), art.source, art.discretization);
        {
            let mut cache = basis.mrs.lock().expect("mrs cache poisoned");
            for &(k, v) in &art.mrs {
                cache.insert(k, T::c(v));
            }
        }
        Ok(basis)
    }
}

/// Serialized basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisArtifact {
    pub beta: Option<f64>,
    pub scale: Option<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub rho: Vec<f64>,
    pub p0: f64,
    pub source: CoefficientSource,
    pub discretization: Option<Discretization>,
    pub mrs: Vec<(usize, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hermite(n: usize) -> OrthoBasis<f64> {
        OrthoBasis::new(FreudWeight::hermite(), n).unwrap()
    }

    #[test]
    fn hermite_closed_form() {
        let b = hermite(10);
        assert_eq!(b.source(), CoefficientSource::ClosedForm);
        for n in 1..=10 {
            assert!((b.rho(n) - (n as f64 / 2.0).sqrt()).abs() < 1e-15);
        }
        assert!((b.eval_weighted(0, 0.0).unwrap() - std::f64::consts::PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(b.eval_poly(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn degree_beyond_basis_is_an_error() {
        let b = hermite(5);
        assert!(b.eval_weighted(6, 0.1).is_err());
        assert!(b.eval_weighted(2, f64::NAN).is_err());
        assert!(b.sup_norm(6).is_err());
    }

    #[test]
    fn sweep_matches_single_degree_bitwise() {
        let b = hermite(200);
        let all = b.eval_weighted_all(200, 13.7).unwrap();
        for n in [0, 31, 32, 33, 150, 200] {
            assert_eq!(all[n], b.eval_weighted(n, 13.7).unwrap());
        }
    }

    #[test]
    fn sup_norm_of_constant() {
        let b = hermite(3);
        let (v, x) = b.sup_norm(0).unwrap();
        assert_eq!(x, 0.0);
        assert_eq!(v, b.p0());
    }

    #[test]
    fn gauss_rule_integrates_weight() {
        let b = hermite(40);
        let r = b.gauss_rule(20).unwrap();
        // int x^2 e^{-x^2} = sqrt(pi)/2, G = x^2 w^2
        let v = r.integrate(|x| x * x * (-x * x).exp());
        assert!((v - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-13);
    }

    #[test]
    fn artifact_round_trip() {
        let b = hermite(12);
        b.mrs(5).unwrap();
        let art = b.to_artifact();
        let back = OrthoBasis::from_artifact(FreudWeight::hermite(), &art).unwrap();
        assert_eq!(back.to_artifact(), art);
        assert_eq!(back.eval_weighted(7, 1.3).unwrap(), b.eval_weighted(7, 1.3).unwrap());
    }

    #[test]
    fn quartic_stieltjes_diagonal_free() {
        let w = FreudWeight::power_scaled(4.0, 0.5).unwrap();
        let b = OrthoBasis::new(w, 12).unwrap();
        assert_eq!(b.source(), CoefficientSource::Stieltjes);
        assert!(b.coefficients().iter().all(|r| *r > 0.0));
    }
}

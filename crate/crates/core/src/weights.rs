//! Outer Freud weights `w = exp(-Q)`, inner weights with prescribed zeros,
//! and the admissibility checks tying them to a growth function `g`.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::brent_root;
use crate::quadrature::{composite, graded_breaks};
use crate::scalar::{ls_slope, Real};

/// User-supplied even exponent `Q` with its derivatives and inverse on `(0, inf)`.
pub trait QFunction<T>: Send + Sync + Debug {
    fn q(&self, x: T) -> T;
    fn dq(&self, x: T) -> T;
    fn d2q(&self, x: T) -> T;
    fn q_inv(&self, y: T) -> T;
}

#[derive(Clone, Debug)]
pub enum FreudFamily<T> {
    /// `Q(x) = scale * |x|^beta`.
    Power { beta: T, scale: T },
    Custom(Arc<dyn QFunction<T>>),
}

#[derive(Clone, Debug)]
pub struct FreudWeight<T> {
    family: FreudFamily<T>,
    a: T,
    b: T,
    x0: T,
}

impl<T: Real> FreudWeight<T> {
    /// `Q(x) = |x|^beta`.
    pub fn power(beta: T) -> Result<Self> {
        Self::power_scaled(beta, T::one())
    }

    /// `Q(x) = scale * |x|^beta`; the convexity bounds are `A = B = beta`.
    pub fn power_scaled(beta: T, scale: T) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(Error::InvalidWeight(format!("exponent {beta} must be positive")));
        }
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::InvalidWeight(format!("scale {scale} must be positive")));
        }
        Ok(Self {
            family: FreudFamily::Power { beta, scale },
            a: beta,
            b: beta,
            x0: T::one(),
        })
    }

    /// The Hermite weight, `w^2 = exp(-x^2)`.
    pub fn hermite() -> Self {
        Self::power_scaled(T::c(2.0), T::c(0.5)).expect("valid constants")
    }

    pub fn custom(q: Arc<dyn QFunction<T>>, a: T, b: T, x0: T) -> Result<Self> {
        if !(a <= b) {
            return Err(Error::InvalidWeight(format!("bounds A={a} > B={b}")));
        }
        Ok(Self {
            family: FreudFamily::Custom(q),
            a,
            b,
            x0,
        })
    }

    pub fn family(&self) -> &FreudFamily<T> {
        &self.family
    }

    pub fn a_bound(&self) -> T {
        self.a
    }

    pub fn b_bound(&self) -> T {
        self.b
    }

    pub fn x0(&self) -> T {
        self.x0
    }

    /// `(beta, scale)` for the power family.
    pub fn power_params(&self) -> Option<(T, T)> {
        match self.family {
            FreudFamily::Power { beta, scale } => Some((beta, scale)),
            FreudFamily::Custom(_) => None,
        }
    }

    pub fn q(&self, x: T) -> T {
        match &self.family {
            FreudFamily::Power { beta, scale } => *scale * x.abs().powf(*beta),
            FreudFamily::Custom(f) => f.q(x),
        }
    }

    /// `Q'(x)`, odd in `x`.
    pub fn dq(&self, x: T) -> T {
        match &self.family {
            FreudFamily::Power { beta, scale } => {
                if x == T::zero() {
                    return T::zero();
                }
                *scale * *beta * x.abs().powf(*beta - T::one()) * x.signum()
            }
            FreudFamily::Custom(f) => f.dq(x),
        }
    }

    pub fn d2q(&self, x: T) -> T {
        match &self.family {
            FreudFamily::Power { beta, scale } => {
                let b = *beta;
                if b == T::one() {
                    return T::zero();
                }
                *scale * b * (b - T::one()) * x.abs().powf(b - T::c(2.0))
            }
            FreudFamily::Custom(f) => f.d2q(x),
        }
    }

    /// Inverse of `Q` on `(0, inf)`.
    pub fn q_inv(&self, y: T) -> T {
        match &self.family {
            FreudFamily::Power { beta, scale } => (y / *scale).powf(beta.recip()),
            FreudFamily::Custom(f) => f.q_inv(y),
        }
    }

    /// `ln Q^{-1}(e^t)`, evaluated without forming `e^t` for the power family.
    pub fn ln_q_inv_exp(&self, t: T) -> T {
        match &self.family {
            FreudFamily::Power { beta, scale } => (t - scale.ln()) / *beta,
            FreudFamily::Custom(f) => f.q_inv(t.exp()).ln(),
        }
    }

    pub fn w(&self, x: T) -> T {
        (-self.q(x)).exp()
    }

    /// `(x Q')' / Q' = 1 + x Q'' / Q'`.
    pub fn convexity_ratio(&self, x: T) -> T {
        T::one() + x * self.d2q(x) / self.dq(x)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FreudReport {
    pub a_estimate: f64,
    pub b_estimate: f64,
    /// Range of `x Q'(x) / Q(x)`; bounded and positive when `Q' ~ Q/x`.
    pub growth_ratio: (f64, f64),
    pub a_above_three_halves: bool,
    pub growth_ok: bool,
    pub pass: bool,
}

/// Empirical convexity bounds of `weight` on `grid`.
pub fn freud_validate<T: Real>(weight: &FreudWeight<T>, grid: &[T]) -> Result<FreudReport> {
    if grid.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    if let Some(bad) = grid.iter().find(|x| !(x.is_finite() && **x > T::zero())) {
        return Err(Error::Domain(format!("grid point {bad} is not positive and finite")));
    }
    let q0 = weight.q(T::zero());
    if q0.abs() > T::c(1e-12) {
        return Err(Error::InvalidWeight(format!("Q(0) = {q0}, expected 0")));
    }
    let mut a_est = T::infinity();
    let mut b_est = T::neg_infinity();
    let mut g_lo = T::infinity();
    let mut g_hi = T::neg_infinity();
    for &x in grid {
        let (qp, qm) = (weight.q(x), weight.q(-x));
        if (qp - qm).abs() > T::c(1e-10) * (T::one() + qp.abs()) {
            return Err(Error::InvalidWeight(format!("Q is not even at x = {x}")));
        }
        let d = weight.dq(x);
        if !(d > T::zero()) {
            return Err(Error::InvalidWeight(format!("Q'({x}) = {d} is not positive")));
        }
        let r = weight.convexity_ratio(x);
        a_est = a_est.min(r);
        b_est = b_est.max(r);
        let g = x * d / qp;
        g_lo = g_lo.min(g);
        g_hi = g_hi.max(g);
    }
    let a_ok = a_est > T::c(1.5);
    let growth_ok = g_lo > T::zero() && g_hi.is_finite();
    Ok(FreudReport {
        a_estimate: a_est.f64(),
        b_estimate: b_est.f64(),
        growth_ratio: (g_lo.f64(), g_hi.f64()),
        a_above_three_halves: a_ok,
        growth_ok,
        pass: a_ok && growth_ok,
    })
}

/// `(2/pi) * int_0^1 a t Q'(a t) (1 - t^2)^{-1/2} dt`, with `t = sin(theta)`.
fn mrs_integral<T: Real>(weight: &FreudWeight<T>, a: T, rule: &crate::quadrature::Rule<T>) -> T {
    let s: T = rule.integrate(|th| {
        let t = th.sin();
        a * t * weight.dq(a * t)
    });
    s * T::c(2.0) / T::PI()
}

/// Mhaskar–Rahmanov–Saff number `a_u`.
pub fn mrs_number<T: Real>(weight: &FreudWeight<T>, u: T) -> Result<T> {
    if !(u > T::zero()) || !u.is_finite() {
        return Err(Error::Domain(format!("u = {u} must be positive")));
    }
    let rule = composite(&graded_breaks(T::FRAC_PI_2(), 24, 4), 20)?;
    let f = |a: T| mrs_integral(weight, a, &rule) - u;
    let mut lo = T::zero();
    let mut hi = T::one();
    let mut doublings = 0;
    while f(hi) < T::zero() {
        lo = hi;
        hi = hi * T::c(2.0);
        doublings += 1;
        if doublings > 200 || !hi.is_finite() {
            return Err(Error::NoConvergence {
                what: "MRS bracket expansion",
                iterations: doublings,
            });
        }
    }
    brent_root(f, lo, hi, hi * T::epsilon(), 200)
}

/// Recognised node-sequence family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum NodeFamily {
    /// `x_j = c j^nu`
    Power { nu: f64 },
    /// `x_j = c r^j`
    Geometric { ratio: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoEstimate {
    /// Order of the counting function `N(r) = sum_{|x_j| <= r} m_j` fitted
    /// over the upper half of the prefix.
    pub empirical: f64,
    pub family: Option<NodeFamily>,
    /// Exact value for recognised families, otherwise the empirical one.
    pub value: f64,
}

fn fit_with_residual<T: Real>(xs: &[T], ys: &[T]) -> Option<(T, T)> {
    let (slope, icpt) = ls_slope(xs, ys)?;
    let res = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - (slope * x + icpt)).abs())
        .fold(T::zero(), T::max);
    Some((slope, res))
}

/// Convergence exponent of `sum m_j / |x_j|^s`.
pub fn rho_exponent<T: Real>(nodes: &[T], m: &[T]) -> Result<RhoEstimate> {
    const MIN_NODES: usize = 50;
    if nodes.len() < MIN_NODES {
        return Err(Error::InsufficientData {
            needed: MIN_NODES,
            got: nodes.len(),
        });
    }
    if m.len() != nodes.len() {
        return Err(Error::Domain("node and exponent prefixes differ in length".into()));
    }
    let mags: Vec<T> = nodes.iter().map(|x| x.abs()).collect();
    if mags.windows(2).any(|w| w[1] < w[0]) || mags[0] == T::zero() {
        return Err(Error::Domain("node magnitudes must be positive and nondecreasing".into()));
    }
    let ln_x: Vec<T> = mags.iter().map(|x| x.ln()).collect();
    let idx: Vec<T> = (1..=mags.len()).map(T::of_usize).collect();
    let ln_idx: Vec<T> = idx.iter().map(|j| j.ln()).collect();
    let tight = T::c(1e-8) * (T::one() + ln_x.last().copied().unwrap_or(T::one()).abs());

    let family = match fit_with_residual(&ln_idx, &ln_x) {
        Some((nu, res)) if res <= tight && nu > T::zero() => Some(NodeFamily::Power { nu: nu.f64() }),
        _ => match fit_with_residual(&idx, &ln_x) {
            Some((lr, res)) if res <= tight && lr > T::zero() => Some(NodeFamily::Geometric {
                ratio: lr.exp().f64(),
            }),
            _ => None,
        },
    };

    let mut acc = T::zero();
    let counting: Vec<T> = m
        .iter()
        .map(|&mj| {
            acc += mj;
            acc.ln()
        })
        .collect();
    let half = mags.len() / 2;
    let (slope, _) = ls_slope(&ln_x[half..], &counting[half..])
        .ok_or_else(|| Error::Domain("degenerate node prefix".into()))?;
    let empirical = slope.f64();
    let value = match family {
        Some(NodeFamily::Power { nu }) => 1.0 / nu,
        Some(NodeFamily::Geometric { .. }) => 0.0,
        None => empirical,
    };
    Ok(RhoEstimate {
        empirical,
        family,
        value,
    })
}

/// Source of the zero set of the inner weight.
#[derive(Clone, Debug)]
pub enum NodeSource<T> {
    /// `x_j = j^nu`, `j >= 1`.
    Power { nu: T },
    /// `x_j = ratio^j`, `j >= 1`.
    Geometric { ratio: T },
    /// A finite, complete zero set.
    Explicit(Vec<T>),
}

#[derive(Clone, Debug)]
pub enum Exponents<T> {
    Constant(T),
    Explicit(Vec<T>),
}

/// `v(x) = exp(d |x|^(rho + mu)) prod_j |1 - x/x_j|^(m_j)`.
#[derive(Clone, Debug)]
pub struct InnerWeight<T> {
    nodes: NodeSource<T>,
    exponents: Exponents<T>,
    mu: T,
    d: T,
    rho: T,
    eps: T,
    max_nodes: usize,
}

/// Result of [`InnerWeight::eval`].
#[derive(Clone, Debug, PartialEq)]
pub struct InnerEval<T> {
    pub v: T,
    pub v_hat: T,
    pub ln_v_hat: T,
    pub ln_v: T,
    /// Node whose exclusion interval contains `x`.
    pub k_near: Option<usize>,
    /// `v_hat` with the `k_near` factor removed.
    pub v_hat_deleted: Option<T>,
    /// The tail factor lies in `exp(+-tail_bound)`.
    pub tail_bound: T,
}

impl<T: Real> InnerWeight<T> {
    pub fn new(nodes: NodeSource<T>, exponents: Exponents<T>, mu: T, d: T) -> Result<Self> {
        if !(mu > T::zero()) || !(d >= T::zero()) {
            return Err(Error::Domain("mu must be positive and d nonnegative".into()));
        }
        let m_ok = match &exponents {
            Exponents::Constant(m) => *m > T::zero(),
            Exponents::Explicit(v) => v.iter().all(|m| *m > T::zero()),
        };
        if !m_ok {
            return Err(Error::Domain("exponents m_j must be positive".into()));
        }
        let rho = match &nodes {
            NodeSource::Power { nu } => {
                if !(*nu > T::zero()) {
                    return Err(Error::Domain("power nodes need nu > 0".into()));
                }
                nu.recip()
            }
            NodeSource::Geometric { ratio } => {
                if !(*ratio > T::one()) {
                    return Err(Error::Domain("geometric nodes need ratio > 1".into()));
                }
                T::zero()
            }
            NodeSource::Explicit(xs) => {
                if xs.iter().any(|x| *x == T::zero() || !x.is_finite())
                    || xs.windows(2).any(|w| w[1].abs() < w[0].abs())
                {
                    return Err(Error::Domain(
                        "explicit nodes must be nonzero with nondecreasing magnitude".into(),
                    ));
                }
                if let Exponents::Explicit(m) = &exponents {
                    if m.len() < xs.len() {
                        return Err(Error::Domain("fewer exponents than nodes".into()));
                    }
                }
                T::zero()
            }
        };
        Ok(Self {
            nodes,
            exponents,
            mu,
            d,
            rho,
            eps: T::c(0.1),
            max_nodes: 10_000_000,
        })
    }

    /// Exclusion-interval slack `eps` in `m_k / |x_k|^(rho + eps)`.
    pub fn with_eps(mut self, eps: T) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_rho(mut self, rho: T) -> Self {
        self.rho = rho;
        self
    }

    /// Upper limit on generated factors before giving up on the tail.
    pub fn with_max_nodes(mut self, cap: usize) -> Self {
        self.max_nodes = cap;
        self
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn d(&self) -> T {
        self.d
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    /// Number of stored nodes, `None` for generated sequences.
    pub fn stored_len(&self) -> Option<usize> {
        match &self.nodes {
            NodeSource::Explicit(xs) => Some(xs.len()),
            _ => None,
        }
    }

    /// Zero-based node `j`.
    pub fn node(&self, j: usize) -> Option<T> {
        let jj = T::of_usize(j + 1);
        match &self.nodes {
            NodeSource::Power { nu } => Some(jj.powf(*nu)),
            NodeSource::Geometric { ratio } => Some(ratio.powf(jj)),
            NodeSource::Explicit(xs) => xs.get(j).copied(),
        }
    }

    pub fn exponent(&self, j: usize) -> Option<T> {
        match &self.exponents {
            Exponents::Constant(m) => Some(*m),
            Exponents::Explicit(v) => v.get(j).copied(),
        }
    }

    /// Exclusion radius `m_k / |x_k|^(rho + eps)` around node `k`.
    pub fn exclusion_radius(&self, k: usize) -> Option<T> {
        Some(self.exponent(k)? / self.node(k)?.abs().powf(self.rho + self.eps))
    }

    fn sup_exponent_from(&self, j: usize) -> Option<T> {
        match &self.exponents {
            Exponents::Constant(m) => Some(*m),
            Exponents::Explicit(v) => {
                if j >= v.len() {
                    None
                } else {
                    Some(v[j..].iter().copied().fold(T::zero(), T::max))
                }
            }
        }
    }

    /// Bound on `sum_{j >= start} 2 m_j |x| / |x_j|` for generated sources.
    fn tail_sum(&self, start: usize, x: T) -> Option<T> {
        let m = self.sup_exponent_from(start)?;
        let two_x = T::c(2.0) * x.abs();
        let s = T::of_usize(start);
        let sum = match &self.nodes {
            NodeSource::Power { nu } => {
                if *nu <= T::one() {
                    return None;
                }
                // sum_{j > start} j^-nu <= start^(1-nu)/(nu-1)
                s.powf(T::one() - *nu) / (*nu - T::one())
            }
            NodeSource::Geometric { ratio } => ratio.powf(-s) / (*ratio - T::one()),
            NodeSource::Explicit(_) => return Some(T::zero()),
        };
        Some(two_x * m * sum)
    }

    /// Evaluates `v`, `v_hat` and the deleted-factor form near a node.
    pub fn eval(&self, x: T, tol: T) -> Result<InnerEval<T>> {
        if !x.is_finite() {
            return Err(Error::Domain("non-finite abscissa".into()));
        }
        let limit = match &self.nodes {
            NodeSource::Explicit(xs) => xs.len(),
            _ => self.max_nodes,
        };
        let mut ln_v_hat = T::zero();
        let mut k_near: Option<(usize, T)> = None;
        let mut at_node = None;
        let mut tail = T::zero();
        let mut j = 0;
        let mut done = false;
        while j < limit {
            let xj = self.node(j).expect("within limit");
            let mj = self.exponent(j).ok_or(Error::InsufficientNodes {
                nodes: j,
                tail: f64::INFINITY,
            })?;
            if !matches!(self.nodes, NodeSource::Explicit(_)) && xj.abs() > T::c(2.0) * x.abs() {
                if let Some(t) = self.tail_sum(j, x) {
                    if t < tol {
                        tail = t;
                        done = true;
                        break;
                    }
                }
            }
            let ratio = T::one() - x / xj;
            if ratio == T::zero() {
                at_node = Some(j);
            } else {
                ln_v_hat += mj * ratio.abs().ln();
            }
            let dist = (x - xj).abs();
            if dist < mj / xj.abs().powf(self.rho + self.eps)
                && k_near.map_or(true, |(_, best)| dist < best)
            {
                k_near = Some((j, dist));
            }
            j += 1;
        }
        if !done && !matches!(self.nodes, NodeSource::Explicit(_)) {
            return Err(Error::InsufficientNodes {
                nodes: j,
                tail: self.tail_sum(j, x).map_or(f64::INFINITY, |t| t.f64()),
            });
        }
        let growth = self.d * x.abs().powf(self.rho + self.mu);
        if let Some(k) = at_node {
            return Ok(InnerEval {
                v: T::zero(),
                v_hat: T::zero(),
                ln_v_hat: T::neg_infinity(),
                ln_v: T::neg_infinity(),
                k_near: Some(k),
                v_hat_deleted: Some(ln_v_hat.exp()),
                tail_bound: tail,
            });
        }
        let deleted = k_near.map(|(k, _)| {
            let mk = self.exponent(k).expect("node exponent");
            let xk = self.node(k).expect("node");
            (ln_v_hat - mk * (T::one() - x / xk).abs().ln()).exp()
        });
        Ok(InnerEval {
            v: (growth + ln_v_hat).exp(),
            v_hat: ln_v_hat.exp(),
            ln_v_hat,
            ln_v: growth + ln_v_hat,
            k_near: k_near.map(|(k, _)| k),
            v_hat_deleted: deleted,
            tail_bound: tail,
        })
    }

    /// Definition-5 style check of the stored exponents against `gamma`,
    /// plus Cauchy checks of `sum m_j / |x_j|^(rho + eps)`.
    pub fn check(&self, gamma: T, prefix: usize) -> ExponentReport {
        let n = self.stored_len().unwrap_or(prefix).min(prefix).max(1);
        let ms: Vec<T> = (0..n).filter_map(|j| self.exponent(j)).collect();
        let tail_start = ms.len() / 2;
        let liminf = ms[tail_start..].iter().copied().fold(T::infinity(), T::min);
        let sup = ms.iter().copied().fold(T::zero(), T::max);
        let cauchy = [0.1, 0.5, 1.0]
            .iter()
            .map(|&e| {
                let s = self.rho + T::c(e);
                let term = |j: usize| self.exponent(j).unwrap_or(T::zero()) / self.node(j).map_or(T::one(), |x| x.abs().powf(s));
                let block = |a: usize, b: usize| (a..b).map(term).sum::<T>();
                let q = n / 4;
                let (b1, b2) = (block(q, 2 * q), block(2 * q, 4 * q));
                // geometric shrinkage of dyadic blocks, or a finite list
                let ok = self.stored_len().is_some() || b2 <= b1;
                (e, b2.f64(), ok)
            })
            .collect::<Vec<_>>();
        ExponentReport {
            liminf: liminf.f64(),
            sup: sup.f64(),
            in_range: liminf > T::zero() && sup < T::one() + gamma,
            cauchy,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentReport {
    /// Minimum over the upper half of the stored prefix.
    pub liminf: f64,
    pub sup: f64,
    pub in_range: bool,
    /// `(eps, last dyadic block sum, shrinking)` per tested slack.
    pub cauchy: Vec<(f64, f64, bool)>,
}

/// Growth function `g` with derivatives and inverse.
pub trait GrowthFunction<T>: Send + Sync + Debug {
    fn g(&self, x: T) -> T;
    fn dg(&self, x: T) -> T;
    fn d2g(&self, x: T) -> T;
    fn g_inv(&self, y: T) -> T;
}

#[derive(Clone, Debug)]
pub enum Growth<T> {
    /// `g(x) = x^alpha`
    Power { alpha: T },
    Custom(Arc<dyn GrowthFunction<T>>),
}

impl<T: Real> Growth<T> {
    pub fn eval(&self, x: T) -> T {
        match self {
            Growth::Power { alpha } => x.powf(*alpha),
            Growth::Custom(f) => f.g(x),
        }
    }

    pub fn deriv(&self, x: T) -> T {
        match self {
            Growth::Power { alpha } => *alpha * x.powf(*alpha - T::one()),
            Growth::Custom(f) => f.dg(x),
        }
    }

    pub fn deriv2(&self, x: T) -> T {
        match self {
            Growth::Power { alpha } => *alpha * (*alpha - T::one()) * x.powf(*alpha - T::c(2.0)),
            Growth::Custom(f) => f.d2g(x),
        }
    }

    pub fn inverse(&self, y: T) -> T {
        match self {
            Growth::Power { alpha } => y.powf(alpha.recip()),
            Growth::Custom(f) => f.g_inv(y),
        }
    }

    pub fn ln_eval(&self, x: T) -> T {
        match self {
            Growth::Power { alpha } => *alpha * x.ln(),
            Growth::Custom(f) => f.g(x).ln(),
        }
    }

    /// `ceil(g(k))` as an index.
    pub fn index(&self, k: usize) -> usize {
        let v = self.eval(T::of_usize(k)).ceil();
        v.to_usize().unwrap_or(usize::MAX)
    }
}

#[derive(Clone, Debug)]
pub struct AdmissiblePair<T> {
    pub g: Growth<T>,
    pub gamma: T,
    /// Slack in the `(1 - eps)` monotonicity clause.
    pub eps: T,
    /// Required decay exponent; `None` asks only for some value above 5/4.
    pub delta: Option<T>,
    pub n0: usize,
}

impl<T: Real> AdmissiblePair<T> {
    pub fn power(alpha: T, gamma: T, n0: usize) -> Self {
        Self {
            g: Growth::Power { alpha },
            gamma,
            eps: T::c(0.01),
            delta: None,
            n0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    Strict,
    Relaxed,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClauseReport {
    pub name: String,
    pub pass: bool,
    /// Measured exponent (slope in log-log coordinates or its negation).
    pub exponent: Option<f64>,
    pub threshold: Option<f64>,
    /// `(x, value)` samples witnessing the verdict.
    pub witness: Vec<(f64, f64)>,
    pub verdict: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub mode: CheckMode,
    pub horizon: f64,
    pub clauses: Vec<ClauseReport>,
    pub admissible: bool,
}

fn clause(name: &str, pass: bool, exponent: Option<f64>, threshold: Option<f64>, witness: Vec<(f64, f64)>) -> ClauseReport {
    ClauseReport {
        name: name.to_string(),
        pass,
        exponent,
        threshold,
        witness,
        verdict: if pass {
            "consistent with the clause on the sampled range".into()
        } else {
            "inconsistent with the clause on the sampled range".into()
        },
    }
}

/// Decay exponent of `exp(ln_f)` at infinity: minus the log-log slope over
/// the upper half of the grid.
fn decay_exponent<T: Real>(ln_x: &[T], ln_f: &[T]) -> T {
    let h = ln_x.len() / 2;
    ls_slope(&ln_x[h..], &ln_f[h..]).map_or(T::nan(), |(s, _)| -s)
}

fn thin_witness<T: Real>(xs: &[T], ys: &[T]) -> Vec<(f64, f64)> {
    let step = (xs.len() / 8).max(1);
    xs.iter()
        .zip(ys)
        .step_by(step)
        .map(|(x, y)| (x.f64(), y.f64()))
        .collect()
}

/// Checks the growth function `g` against the Freud weight on a geometric grid.
pub fn admissibility_check<T: Real>(
    pair: &AdmissiblePair<T>,
    weight: &FreudWeight<T>,
    mode: CheckMode,
    horizon: T,
) -> Result<AdmissibilityReport> {
    let limit = (T::c(2.0) * weight.b_bound()).recip();
    if !(pair.gamma > T::zero() && pair.gamma < limit) {
        return Err(Error::Domain(format!(
            "gamma = {} outside (0, 1/(2B)) = (0, {})",
            pair.gamma, limit
        )));
    }
    if let Some(d) = pair.delta {
        if !(d > T::c(1.25)) {
            return Err(Error::Domain(format!("delta = {d} must exceed 5/4")));
        }
    }
    let start = weight.x0().max(T::c(2.0));
    if !(horizon > start * T::c(4.0)) {
        return Err(Error::Domain("horizon too small for the grid".into()));
    }
    let pts = 96;
    let (l0, l1) = (start.ln(), horizon.ln());
    let xs: Vec<T> = (0..pts)
        .map(|i| (l0 + (l1 - l0) * T::of_usize(i) / T::of_usize(pts - 1)).exp())
        .collect();
    let ln_x: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let g = &pair.g;
    let mut clauses = Vec::new();

    clauses.push(clause(
        "convexity bound A > 3/2",
        weight.a_bound() > T::c(1.5),
        Some(weight.a_bound().f64()),
        Some(1.5),
        vec![],
    ));

    // Polynomially uniform growth: g' > 0 and convex, bounded ratios.
    let dg: Vec<T> = xs.iter().map(|&x| g.deriv(x)).collect();
    let d2g: Vec<T> = xs.iter().map(|&x| g.deriv2(x)).collect();
    let convex = dg.iter().all(|v| *v > T::zero()) && d2g.windows(2).all(|w| w[1] >= w[0] * (T::one() - T::c(1e-12)));
    let ratio_ln: Vec<T> = xs.iter().map(|&x| g.ln_eval(T::c(2.0) * x) - g.ln_eval(x)).collect();
    let elastic: Vec<T> = xs.iter().map(|&x| (x * g.deriv(x)).ln() - g.ln_eval(x)).collect();
    let flat = |ys: &[T]| {
        ls_slope(&ln_x, ys).map_or(false, |(s, _)| s.abs() < T::c(0.05)) && ys.iter().all(|y| y.is_finite())
    };
    let bounded = flat(&ratio_ln) && flat(&elastic);
    clauses.push(clause(
        "g grows polynomially uniformly",
        convex && bounded,
        None,
        None,
        thin_witness(&xs, &elastic.iter().map(|e| e.exp()).collect::<Vec<_>>()),
    ));

    if weight.power_params().is_none() {
        let lq: Vec<T> = xs.iter().map(|&x| weight.q(x).ln() - T::c(3.0) * x.ln()).collect();
        let mono = lq.windows(2).all(|w| w[1] >= w[0]) || lq.windows(2).all(|w| w[1] <= w[0]);
        clauses.push(clause("Q(x)/x^3 quasimonotone", mono, None, None, thin_witness(&xs, &lq)));
    }

    // g^{-1}(x) / Q^{-1}(x) = O(x^{-2 gamma})
    let ln_ratio: Vec<T> = xs
        .iter()
        .map(|&x| g.inverse(x).ln() - weight.ln_q_inv_exp(x.ln()))
        .collect();
    let ratio_decay = decay_exponent(&ln_x, &ln_ratio);
    let need = T::c(2.0) * pair.gamma;
    clauses.push(clause(
        "inverse ratio decays like x^(-2 gamma)",
        ratio_decay >= need * (T::one() - T::c(1e-9)),
        Some(ratio_decay.f64()),
        Some(need.f64()),
        thin_witness(
            &xs,
            &ln_ratio
                .iter()
                .zip(&ln_x)
                .map(|(r, lx)| (*r + need * *lx).exp())
                .collect::<Vec<_>>(),
        ),
    ));

    // g^{-1}(x) / (Q^{-1}(x))^{1 - eps} decreasing
    let ln_mono: Vec<T> = xs
        .iter()
        .map(|&x| g.inverse(x).ln() - (T::one() - pair.eps) * weight.ln_q_inv_exp(x.ln()))
        .collect();
    clauses.push(clause(
        "inverse ratio with (1 - eps) power decreasing",
        ln_mono.windows(2).all(|w| w[1] < w[0]),
        Some(pair.eps.f64()),
        None,
        thin_witness(&xs, &ln_mono.iter().map(|v| v.exp()).collect::<Vec<_>>()),
    ));

    let ln_g: Vec<T> = xs.iter().map(|&x| g.ln_eval(x)).collect();
    let ln_qg: Vec<T> = ln_g.iter().map(|&lg| weight.ln_q_inv_exp(lg)).collect();
    let quarter = T::c(0.25);
    let sixth = T::one() / T::c(6.0);
    let half = T::c(0.5);
    // ln of Q^{-1}(g)^{1/4} / g^{1/6}
    let lead: Vec<T> = ln_qg.iter().zip(&ln_g).map(|(a, b)| quarter * *a - sixth * *b).collect();

    let limit_clause = |name: &str, terms: &[&[T]], threshold: T, clauses: &mut Vec<ClauseReport>| -> T {
        let ln_f: Vec<T> = (0..xs.len())
            .map(|i| terms.iter().map(|t| t[i]).fold(T::neg_infinity(), T::max))
            .collect();
        let e = decay_exponent(&ln_x, &ln_f);
        clauses.push(clause(
            name,
            e > threshold,
            Some(e.f64()),
            Some(threshold.f64()),
            thin_witness(&xs, &ln_f.iter().map(|v| v.exp()).collect::<Vec<_>>()),
        ));
        e
    };

    match mode {
        CheckMode::Strict => {
            let inv_sqrt_qg: Vec<T> = ln_qg.iter().map(|a| -half * *a).collect();
            let threshold = pair.delta.unwrap_or(T::c(1.25));
            limit_clause(
                "x^delta max{Q^-1(g)^(1/4)/g^(1/6), Q^-1(g)^(-1/2)} -> 0, delta > 5/4",
                &[&lead, &inv_sqrt_qg],
                threshold,
                &mut clauses,
            );
        }
        CheckMode::Relaxed => {
            let g_exp = -decay_exponent(&ln_x, &ln_g);
            clauses.push(clause(
                "solvability: g(x) > x^mu, mu > 15/2",
                g_exp > T::c(7.5),
                Some(g_exp.f64()),
                Some(7.5),
                thin_witness(&xs, &ln_g),
            ));
            let x_quarter: Vec<T> = ln_x.iter().zip(&ln_g).map(|(lx, lg)| quarter * *lx - sixth * *lg).collect();
            let inv_sqrt_qg: Vec<T> = ln_qg.iter().map(|a| -half * *a).collect();
            limit_clause(
                "solvability: x^delta max{x^(1/4)/g^(1/6), Q^-1(g)^(-1/2)} -> 0, delta > 5/4",
                &[&x_quarter, &inv_sqrt_qg],
                T::c(1.25),
                &mut clauses,
            );
            let inv_g6: Vec<T> = ln_g.iter().map(|lg| -sixth * *lg).collect();
            limit_clause(
                "unicity: x^delta max{g^(-1/6), Q^-1(g)^(-1/2)} -> 0, delta > 5/4",
                &[&inv_g6, &inv_sqrt_qg],
                T::c(1.25),
                &mut clauses,
            );
            limit_clause(
                "unicity: x^nu Q^-1(g)^(1/4)/g^(1/6) -> 0, nu > 3/4",
                &[&lead],
                T::c(0.75),
                &mut clauses,
            );
            limit_clause(
                "finite section: x^kappa max{Q^-1(g)^(1/4)/g^(1/6), Q^-1(g)^(-1/2)} -> 0, kappa > 1",
                &[&lead, &inv_sqrt_qg],
                T::one(),
                &mut clauses,
            );
        }
    }
    let admissible = clauses.iter().all(|c| c.pass);
    Ok(AdmissibilityReport {
        mode,
        horizon: horizon.f64(),
        clauses,
        admissible,
    })
}

//! Inductive choice of nodes `x_k` and omitted degrees `l_k` keeping every
//! leading interpolation matrix `D_n = [Psi_{l_j}(x_i)]` nonsingular.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, IncrementalQr, Matrix};
use crate::orthopoly::OrthoBasis;
use crate::scalar::{rel_diff, Real};
use crate::weights::AdmissiblePair;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionConfig {
    /// First node `x_1`.
    pub seed: f64,
    pub n0: usize,
    /// Relative singularity floor on `sigma_min(D_n) / ||D_n||`.
    pub floor: f64,
}

impl Default for ConstructionConfig {
    fn default() -> Self {
        Self {
            seed: 1.0,
            n0: 2,
            floor: 1e-12,
        }
    }
}

/// One accepted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub node: f64,
    pub degree: usize,
    /// Candidate window `[lo, hi]`.
    pub window: (usize, usize),
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `||Psi_{l_k}||_inf` and its location.
    pub sup_norm: f64,
    pub sup_location: f64,
}

#[derive(Clone, Debug)]
pub struct ConstructionState<T> {
    config: ConstructionConfig,
    nodes: Vec<T>,
    degrees: Vec<usize>,
    steps: Vec<StepRecord>,
    sup: Vec<(T, T)>,
    qr: IncrementalQr<T>,
    c_measured: Option<T>,
}

/// Serialized form: nodes, degrees, config and the step trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionRecord {
    pub nodes: Vec<f64>,
    pub degrees: Vec<usize>,
    pub config: ConstructionConfig,
    pub steps: Vec<StepRecord>,
}

impl<T: Real> ConstructionState<T> {
    pub fn new(config: ConstructionConfig) -> Self {
        Self {
            config,
            nodes: Vec::new(),
            degrees: Vec::new(),
            steps: Vec::new(),
            sup: Vec::new(),
            qr: IncrementalQr::default(),
            c_measured: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn config(&self) -> &ConstructionConfig {
        &self.config
    }

    pub fn factorization(&self) -> &IncrementalQr<T> {
        &self.qr
    }

    /// Running minimum of `|Psi_{i-1}(x_i)| / ||Psi_i||_inf`.
    pub fn c_measured(&self) -> Option<T> {
        self.c_measured
    }

    /// `(||Psi_k||_inf, argmax)` of the `k`-th omitted function (zero-based).
    pub fn sup_of(&self, k: usize) -> Option<(T, T)> {
        self.sup.get(k).copied()
    }

    /// Highest degree the next `extend` may touch.
    pub fn next_window(&self, pair: &AdmissiblePair<T>) -> (usize, usize) {
        let n = self.len();
        let mut lo = pair.g.index(n + 1 + pair.n0);
        if let Some(&last) = self.degrees.last() {
            lo = lo.max(last + 1);
        }
        (lo, lo + 2 * n + 1)
    }

    /// Adds `x_{n+1}` and `l_{n+1}`.
    pub fn extend(&mut self, basis: &OrthoBasis<T>, pair: &AdmissiblePair<T>) -> Result<()> {
        let n = self.len();
        let (lo, hi) = self.next_window(pair);
        if hi > basis.max_degree() {
            return Err(Error::Domain(format!(
                "window [{lo}, {hi}] exceeds the basis maximum degree {}",
                basis.max_degree()
            )));
        }
        let x_new = match self.sup.last() {
            None => T::c(self.config.seed),
            Some(&(_, x)) => x,
        };
        let sweeps: Vec<Vec<T>> = self
            .nodes
            .par_iter()
            .map(|&x| basis.eval_weighted_all(hi, x))
            .collect::<Result<_>>()?;
        let at_new = basis.eval_weighted_all(hi, x_new)?;
        let row_new: Vec<T> = self.degrees.iter().map(|&l| at_new[l]).collect();

        let candidates: Vec<(usize, IncrementalQr<T>, T, T)> = (lo..=hi)
            .into_par_iter()
            .map(|k| {
                let col: Vec<T> = sweeps.iter().map(|s| s[k]).collect();
                let qr = self.qr.bordered(&col, &row_new, at_new[k]);
                let (smin, smax) = qr.extreme_singular_values();
                (k, qr, smin, smax)
            })
            .collect();
        let floor = T::c(self.config.floor);
        let chosen = if n == 0 {
            let top = candidates.iter().map(|c| c.2).fold(T::zero(), T::max);
            candidates.iter().position(|c| c.2 > floor * top && c.2 > T::zero())
        } else {
            let mut best: Option<usize> = None;
            for (i, c) in candidates.iter().enumerate() {
                if c.2 >= floor * c.3 && c.2 > T::zero() && best.map_or(true, |b| c.2 > candidates[b].2) {
                    best = Some(i);
                }
            }
            best
        };
        let Some(idx) = chosen else {
            return Err(Error::ConstructionDegenerate {
                sigmas: candidates.iter().map(|c| (c.0, c.2.f64())).collect(),
            });
        };
        let (degree, qr, smin, smax) = candidates.into_iter().nth(idx).expect("chosen index");
        let (sup_val, sup_x) = basis.sup_norm(degree)?;

        // |Psi_{i-1}(x_i)| / ||Psi_i||, with Psi_0(x_1) := Psi_1(x_1)
        let numer = if n == 0 { at_new[degree] } else { at_new[self.degrees[n - 1]] };
        let ratio = numer.abs() / sup_val;
        self.c_measured = Some(self.c_measured.map_or(ratio, |c| c.min(ratio)));

        self.nodes.push(x_new);
        self.degrees.push(degree);
        self.sup.push((sup_val, sup_x));
        self.qr = qr;
        self.steps.push(StepRecord {
            node: x_new.f64(),
            degree,
            window: (lo, hi),
            sigma_min: smin.f64(),
            sigma_max: smax.f64(),
            sup_norm: sup_val.f64(),
            sup_location: sup_x.f64(),
        });
        Ok(())
    }

    /// Runs `extend` until `count` nodes exist.
    pub fn build(basis: &OrthoBasis<T>, pair: &AdmissiblePair<T>, config: ConstructionConfig, count: usize) -> Result<Self> {
        let mut st = Self::new(config);
        while st.len() < count {
            st.extend(basis, pair)?;
        }
        Ok(st)
    }

    /// Dense `D_n` for the leading `n` nodes and degrees.
    pub fn dense_matrix(&self, basis: &OrthoBasis<T>, n: usize) -> Result<Matrix<T>> {
        let top = self.degrees[..n].iter().copied().max().unwrap_or(0);
        let rows: Vec<Vec<T>> = self.nodes[..n]
            .iter()
            .map(|&x| {
                let s = basis.eval_weighted_all(top, x)?;
                Ok(self.degrees[..n].iter().map(|&l| s[l]).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Matrix::from_rows(&rows))
    }

    pub fn to_record(&self) -> ConstructionRecord {
        ConstructionRecord {
            nodes: self.nodes.iter().map(|v| v.f64()).collect(),
            degrees: self.degrees.clone(),
            config: self.config,
            steps: self.steps.clone(),
        }
    }

    /// Rebuilds a state (including the factorization) from a record.
    pub fn from_record(rec: &ConstructionRecord, basis: &OrthoBasis<T>) -> Result<Self> {
        if rec.nodes.len() != rec.degrees.len() || rec.steps.len() != rec.nodes.len() {
            return Err(Error::Domain("construction record lengths disagree".into()));
        }
        let mut st = Self::new(rec.config);
        let top = rec.degrees.iter().copied().max().unwrap_or(0);
        if top > basis.max_degree() {
            return Err(Error::Domain("record degrees exceed the basis".into()));
        }
        for (i, (&x, &l)) in rec.nodes.iter().zip(&rec.degrees).enumerate() {
            let x = T::c(x);
            let at_new = basis.eval_weighted_all(top, x)?;
            let row: Vec<T> = st.degrees.iter().map(|&d| at_new[d]).collect();
            let col: Vec<T> = st
                .nodes
                .iter()
                .map(|&xi| basis.eval_weighted(l, xi))
                .collect::<Result<_>>()?;
            st.qr = st.qr.bordered(&col, &row, at_new[l]);
            let step = &rec.steps[i];
            let (sv, sx) = (T::c(step.sup_norm), T::c(step.sup_location));
            let numer = if i == 0 { at_new[l] } else { at_new[st.degrees[i - 1]] };
            let ratio = numer.abs() / sv;
            st.c_measured = Some(st.c_measured.map_or(ratio, |c| c.min(ratio)));
            st.nodes.push(x);
            st.degrees.push(l);
            st.sup.push((sv, sx));
        }
        st.steps = rec.steps.clone();
        Ok(st)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SectionReport {
    /// `|Psi_{i-1}(x_i)| / ||Psi_i||_inf` for `i = 1..n`.
    pub ratios: Vec<f64>,
    pub c_measured: f64,
    /// Dense `sigma_min(D_k)` for `k = 1..n`.
    pub sigma_dense: Vec<f64>,
    pub sigma_incremental: Vec<f64>,
    /// Dense `||D_k||_2`.
    pub norm_dense: Vec<f64>,
    pub max_sigma_disagreement: f64,
    pub incremental_agrees: bool,
    /// `(l_k, window lo, window hi)`.
    pub window_slack: Vec<(usize, usize, usize)>,
    pub windows_respected: bool,
    /// `max_k |l_k - g(k + n0)| / k`.
    pub budget_constant: f64,
    /// `x_k / Q^{-1}(g(k + n0))`.
    pub node_ratios: Vec<f64>,
    /// Indices `k` with `x_{k+1} < x_k`.
    pub inversions: Vec<usize>,
}

/// Recomputes the guarantees of the construction from scratch.
pub fn verify_lemma1<T: Real>(
    state: &ConstructionState<T>,
    basis: &OrthoBasis<T>,
    pair: &AdmissiblePair<T>,
) -> Result<SectionReport> {
    let n = state.len();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let nodes = state.nodes();
    let degs = state.degrees();
    let mut ratios = Vec::with_capacity(n);
    for i in 0..n {
        let (sup, _) = basis.sup_norm(degs[i])?;
        let numer_deg = if i == 0 { degs[0] } else { degs[i - 1] };
        ratios.push((basis.eval_weighted(numer_deg, nodes[i])?.abs() / sup).f64());
    }
    let mut sigma_dense = Vec::with_capacity(n);
    let mut norm_dense = Vec::with_capacity(n);
    for k in 1..=n {
        let sv = singular_values(&state.dense_matrix(basis, k)?);
        sigma_dense.push(sv.last().copied().unwrap_or(T::zero()).f64());
        norm_dense.push(sv[0].f64());
    }
    let sigma_incremental: Vec<f64> = state.steps().iter().map(|s| s.sigma_min).collect();
    let max_dis = sigma_dense
        .iter()
        .zip(&sigma_incremental)
        .map(|(&a, &b)| rel_diff(a, b))
        .fold(0.0, f64::max);
    let window_slack: Vec<(usize, usize, usize)> = state
        .steps()
        .iter()
        .map(|s| (s.degree, s.window.0, s.window.1))
        .collect();
    let windows_respected = window_slack.iter().all(|&(l, lo, hi)| lo <= l && l <= hi);
    let budget_constant = degs
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let target = pair.g.eval(T::of_usize(i + 1 + pair.n0)).f64();
            (l as f64 - target).abs() / (i + 1) as f64
        })
        .fold(0.0, f64::max);
    let node_ratios = nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let g = pair.g.eval(T::of_usize(i + 1 + pair.n0));
            (x / basis.weight().q_inv(g)).f64()
        })
        .collect();
    let inversions = (0..n.saturating_sub(1)).filter(|&i| nodes[i + 1] < nodes[i]).collect();
    Ok(SectionReport {
        c_measured: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratios,
        sigma_dense,
        sigma_incremental,
        norm_dense,
        max_sigma_disagreement: max_dis,
        incremental_agrees: max_dis <= 1e-8,
        window_slack,
        windows_respected,
        budget_constant,
        node_ratios,
        inversions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::FreudWeight;

    fn toy() -> (OrthoBasis<f64>, AdmissiblePair<f64>) {
        let basis = OrthoBasis::new(FreudWeight::hermite(), 400).unwrap();
        (basis, AdmissiblePair::power(3.0, 0.2, 2))
    }

    #[test]
    fn seed_step_uses_first_nonvanishing_candidate() {
        let (basis, pair) = toy();
        let mut st = ConstructionState::new(ConstructionConfig::default());
        st.extend(&basis, &pair).unwrap();
        assert_eq!(st.nodes(), &[1.0]);
        assert_eq!(st.degrees(), &[27]);
        let r = verify_lemma1(&st, &basis, &pair).unwrap();
        assert_eq!(r.ratios.len(), 1);
        assert_eq!(r.sigma_dense.len(), 1);
    }

    #[test]
    fn next_node_is_the_previous_maximum() {
        let (basis, pair) = toy();
        let st = ConstructionState::build(&basis, &pair, ConstructionConfig::default(), 3).unwrap();
        for k in 1..3 {
            let (sup, _) = basis.sup_norm(st.degrees()[k - 1]).unwrap();
            let v = basis.eval_weighted(st.degrees()[k - 1], st.nodes()[k]).unwrap().abs();
            assert!(rel_diff(v, sup) < 1e-8);
        }
    }

    #[test]
    fn record_round_trip_restores_factorization() {
        let (basis, pair) = toy();
        let st = ConstructionState::build(&basis, &pair, ConstructionConfig::default(), 3).unwrap();
        let back = ConstructionState::from_record(&st.to_record(), &basis).unwrap();
        assert_eq!(back.to_record(), st.to_record());
        let (a, _) = back.factorization().extreme_singular_values();
        assert!(rel_diff(a, st.steps()[2].sigma_min) < 1e-12);
    }

    #[test]
    fn window_beyond_basis_is_rejected() {
        let basis = OrthoBasis::new(FreudWeight::hermite(), 20).unwrap();
        let pair = AdmissiblePair::power(3.0, 0.2, 2);
        let mut st = ConstructionState::new(ConstructionConfig::default());
        assert!(st.extend(&basis, &pair).is_err());
    }
}

//! Gauss rules: Gauss–Legendre on intervals and composite panels.

use std::sync::{Mutex, OnceLock};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen;
use crate::scalar::Real;

/// Nodes and weights of a quadrature rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> Rule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_cache() -> &'static Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Legendre `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule on `[-1, 1]` computed in `f64` and cached.
fn legendre_f64(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(r) = legendre_cache().lock().expect("cache poisoned").get(&n) {
        return Ok(r.clone());
    }
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let (mut x, _) = tridiagonal_eigen(&diag, &off).ok_or(Error::NoConvergence {
        what: "Gauss-Legendre eigenproblem",
        iterations: 60,
    })?;
    // Newton polish, then symmetrise
    let mut w = vec![0.0; n];
    for (xi, wi) in x.iter_mut().zip(w.iter_mut()) {
        for _ in 0..3 {
            let (p, dp) = legendre(n, *xi);
            *xi -= p / dp;
        }
        let (_, dp) = legendre(n, *xi);
        *wi = 2.0 / ((1.0 - *xi * *xi) * dp * dp);
    }
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let xs = 0.5 * (x[j] - x[i]);
        let ws = 0.5 * (w[i] + w[j]);
        x[i] = -xs;
        x[j] = xs;
        w[i] = ws;
        w[j] = ws;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    legendre_cache()
        .lock()
        .expect("cache poisoned")
        .insert(n, (x.clone(), w.clone()));
    Ok((x, w))
}

/// `n`-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre<T: Real>(n: usize, a: T, b: T) -> Result<Rule<T>> {
    if n == 0 {
        return Err(Error::Domain("rule size must be positive".into()));
    }
    let (x, w) = legendre_f64(n)?;
    let half = (b - a) / T::c(2.0);
    let mid = (a + b) / T::c(2.0);
    Ok(Rule {
        nodes: x.iter().map(|&t| mid + half * T::c(t)).collect(),
        weights: w.iter().map(|&v| half * T::c(v)).collect(),
    })
}

/// Composite Gauss–Legendre over the panels delimited by `breaks`.
pub fn composite<T: Real>(breaks: &[T], per_panel: usize) -> Result<Rule<T>> {
    let mut nodes = Vec::with_capacity(breaks.len().saturating_sub(1) * per_panel);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for pair in breaks.windows(2) {
        let r = gauss_legendre(per_panel, pair[0], pair[1])?;
        nodes.extend(r.nodes);
        weights.extend(r.weights);
    }
    Ok(Rule { nodes, weights })
}

/// Panel breaks on `[0, b]` graded geometrically towards 0 (`levels` panels
/// of ratio 1/2 below the uniform part) followed by `uniform` equal panels.
pub fn graded_breaks<T: Real>(b: T, levels: usize, uniform: usize) -> Vec<T> {
    let mut out = vec![T::zero()];
    let first = b / T::of_usize(uniform.max(1));
    for l in (1..=levels).rev() {
        out.push(first * T::c(0.5f64.powi(l as i32)));
    }
    for k in 1..=uniform.max(1) {
        out.push(first * T::of_usize(k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let r = gauss_legendre::<f64>(5, -1.0, 2.0).unwrap();
        // degree 9 is exact for 5 points
        let v = r.integrate(|x| x.powi(9));
        assert!((v - (2f64.powi(10) - 1.0) / 10.0).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_length() {
        for n in [1, 2, 7, 40, 100] {
            let r = gauss_legendre::<f64>(n, 0.0, 3.0).unwrap();
            let s: f64 = r.weights.iter().sum();
            assert!((s - 3.0).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn graded_composite_handles_sqrt() {
        let br = graded_breaks(1.0f64, 30, 4);
        let r = composite(&br, 20).unwrap();
        let v = r.integrate(|x| x.sqrt());
        assert!((v - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn single_precision_rule() {
        let r = gauss_legendre::<f32>(8, 0.0, 1.0).unwrap();
        assert!((r.integrate(|x| x * x) - 1.0 / 3.0).abs() < 1e-6);
    }
}

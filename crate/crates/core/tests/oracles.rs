//! Independent references: exact rational/integer arithmetic, special
//! functions and a third-party dense linear algebra library.

mod common;

use biortho_core::conjugate::{ConjugateFunction, ConjugateValue};
use biortho_core::infsys::{jaffard_membership, solve_adaptive_report, SolutionVector, SystemMatrix};
use biortho_core::linalg::{singular_values, Matrix};
use biortho_core::orthopoly::OrthoBasis;
use biortho_core::weights::{mrs_number, Exponents, FreudWeight, InnerWeight, NodeSource};
use biortho_core::Error;
use common::{hermite_rho_sq_exact, rational_to_f64, toy, N0};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use statrs::function::gamma::gamma;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn hankel_moments_match_closed_form_rho() {
    for n in 1..=6 {
        let exact = rational_to_f64(&hermite_rho_sq_exact(n));
        assert!((exact - n as f64 / 2.0).abs() < 1e-15, "n={n}: {exact}");
    }
}

#[test]
fn stieltjes_reproduces_hermite_coefficients() {
    let basis = OrthoBasis::<f64>::stieltjes(FreudWeight::hermite(), 40).unwrap();
    for n in 1..=40 {
        let reference = if n <= 6 {
            rational_to_f64(&hermite_rho_sq_exact(n)).sqrt()
        } else {
            (n as f64 / 2.0).sqrt()
        };
        assert!(rel(basis.rho(n), reference) < 1e-10, "n={n}: {} vs {reference}", basis.rho(n));
    }
}

#[test]
fn weighted_hermite_at_large_argument_matches_integer_recurrence() {
    // H_{n+1} = 2x H_n - 2n H_{n-1} in exact integers at x = 20
    let x = 20i64;
    let (mut h0, mut h1) = (BigInt::from(1), BigInt::from(2 * x));
    for n in 1..50 {
        let h2 = BigInt::from(2 * x) * &h1 - BigInt::from(2 * n as i64) * &h0;
        h0 = h1;
        h1 = h2;
    }
    let h50 = h1.to_f64().unwrap();
    let ln_norm = 0.5 * (50.0 * 2f64.ln() + (1..=50).map(|k| (k as f64).ln()).sum::<f64>() + 0.5 * std::f64::consts::PI.ln());
    let expected = (h50.ln() - ln_norm - 200.0).exp();
    let basis = OrthoBasis::<f64>::new(FreudWeight::hermite(), 60).unwrap();
    let got = basis.eval_weighted(50, 20.0).unwrap();
    assert!(rel(got, expected) < 1e-12, "{got:e} vs {expected:e}");
    let (sign, ln) = basis.eval_weighted_ln(50, 20.0).unwrap();
    assert_eq!(sign, 1.0);
    assert!((ln - expected.ln()).abs() < 1e-12);
}

#[test]
fn quartic_gauss_rule_integrates_gamma_moments() {
    let basis = OrthoBasis::<f64>::new(FreudWeight::power(4.0).unwrap(), 30).unwrap();
    let rule = basis.gauss_rule(20).unwrap();
    for k in 0..=19 {
        // int x^{2k} e^{-2 x^4} dx
        let s = (2 * k + 1) as f64 / 4.0;
        let exact = 0.5 * 2f64.powf(-s) * gamma(s);
        // the rule expects integrands carrying w^2
        let got = rule.integrate(|x| x.powi(2 * k as i32) * (-2.0 * x.powi(4)).exp());
        assert!(rel(got, exact) < 1e-10, "k={k}: {got} vs {exact}");
    }
}

#[test]
fn mrs_numbers_of_power_weights() {
    for beta in [2.0, 3.0, 4.0, 6.0] {
        let w = FreudWeight::power(beta).unwrap();
        let lambda: f64 = gamma(beta) / (2f64.powf(beta - 2.0) * gamma(beta / 2.0).powi(2));
        for u in [1.0, 7.0, 50.0, 400.0] {
            let expected = (u / lambda).powf(1.0 / beta);
            let got = mrs_number(&w, u).unwrap();
            assert!(rel(got, expected) < 1e-10, "beta={beta}, u={u}: {got} vs {expected}");
        }
    }
}

#[test]
fn interpolation_matrices_match_dense_svd() {
    let toy = toy();
    for k in 1..=toy.state.len() {
        let d = toy.state.dense_matrix(&toy.basis, k).unwrap();
        let ours = singular_values(&d);
        let reference = nalgebra::DMatrix::from_fn(k, k, |i, j| d[(i, j)]).singular_values();
        let mut reference: Vec<f64> = reference.iter().copied().collect();
        reference.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in ours.iter().zip(&reference) {
            assert!(rel(*a, *b) < 1e-10, "k={k}: {a} vs {b}");
        }
    }
}

fn system() -> SystemMatrix<'static, f64> {
    let toy = toy();
    SystemMatrix::new(&toy.state, &toy.basis, toy.growth(), N0).unwrap()
}

#[test]
fn system_entries_match_direct_ratios() {
    let toy = toy();
    let sys = system();
    let (x, d) = (toy.state.nodes(), toy.state.degrees());
    let direct = |deg: usize, xi: f64| toy.basis.eval_weighted(deg, xi).unwrap();
    assert_eq!(sys.matrix_entry(1, 1).unwrap(), 1.0);
    for i in 2..=toy.state.len() {
        assert_eq!(sys.matrix_entry(i, i - 1).unwrap(), 1.0);
    }
    let expected = direct(d[6], x[2]) / direct(d[1], x[2]);
    assert!(rel(sys.matrix_entry(3, 7).unwrap(), expected) < 1e-12);
    let kept = sys.kept_degree(1).unwrap();
    let expected = direct(kept, x[0]) / direct(d[0], x[0]);
    assert!(rel(sys.rhs_entry(1, 1).unwrap(), expected) < 1e-12);
    assert!(matches!(sys.rhs_for_degree(d[0], 1), Err(Error::Domain(_))));
    assert!(matches!(sys.matrix_entry(0, 1), Err(Error::OutOfRange { .. })));
    assert!(matches!(sys.matrix_entry(1, toy.state.len() + 1), Err(Error::OutOfRange { .. })));
}

#[test]
fn right_hand_sides_are_square_summable() {
    let sys = system();
    for m in 1..=6 {
        let c = sys.rhs_vector(m).unwrap();
        let partial: Vec<f64> = c.iter().scan(0.0, |s, v| {
            *s += v * v;
            Some(*s)
        }).collect();
        let n = partial.len();
        assert!((partial[n - 1] - partial[n - 2]).abs() <= 1e-8 * partial[n - 1].max(1.0), "m={m}: {partial:?}");
    }
}

#[test]
fn gram_entries_by_direct_summation() {
    let toy = toy();
    let sys = system();
    let kk = toy.state.len();
    for i in 1..=kk {
        let a = sys.gram_alpha(i, i).unwrap();
        assert!(a.value >= 1.0, "alpha_{i}{i} = {}", a.value);
        if i < kk {
            assert!(sys.gram_lambda(i, i).unwrap().value >= 1.0);
        }
        for j in 1..=kk {
            let direct: f64 = (1..=kk)
                .map(|k| sys.matrix_entry(i, k).unwrap() * sys.matrix_entry(j, k).unwrap())
                .sum();
            let a = sys.gram_alpha(i, j).unwrap();
            assert!((a.value - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            assert!((a.value - sys.gram_alpha(j, i).unwrap().value).abs() <= 1e-12 * a.value.abs().max(1.0));
            let l = sys.gram_lambda(i, j).unwrap();
            assert!((l.value - sys.gram_lambda(j, i).unwrap().value).abs() <= 1e-12 * l.value.abs().max(1.0));
        }
    }
    // the polynomial column tail cannot be certified to 1e-12 at desk degrees
    assert!(matches!(sys.gram_alpha_certified(1, 1, 1e-12), Err(Error::InsufficientRange { .. })));
}

#[test]
fn riesz_trace_is_nondecreasing_for_first_function() {
    let sys = system();
    let rhs = sys.rhs_vector(1).unwrap();
    let (vals, monotone) = biortho_core::infsys::riesz_trace(&sys, &rhs, 10).unwrap();
    assert!(monotone, "{vals:?}");
}

#[test]
fn kernel_margin_matches_dense_singular_values() {
    let sys = system();
    let margins = sys.kernel_margin(10).unwrap();
    for (k, &m) in margins.iter().enumerate() {
        let n = k + 1;
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| sys.matrix_entry(i + 1, j + 1).unwrap());
        let sv = dense.singular_values().min();
        assert!(rel(m, sv) < 1e-10, "n={n}: {m} vs {sv}");
        assert!(m > 1e-12);
    }
}

#[test]
fn planted_jaffard_envelope() {
    let n = 24;
    // entries at column l-1 of row k are (1 + |k - l|)^{-2}
    let a = Matrix::from_fn(n, n, |k, j| (1.0 + (k as f64 - j as f64 - 1.0).abs()).powi(-2));
    let at2 = jaffard_membership(&a, 2.0).unwrap();
    assert!((at2.constant - 1.0).abs() < 1e-12);
    assert!(at2.pass);
    assert!(!jaffard_membership(&a, 2.5).unwrap().pass);
}

#[test]
fn conjugate_far_from_nodes_matches_direct_formula() {
    let toy = toy();
    let sys = system();
    let rhs = sys.rhs_vector(2).unwrap();
    let sol = solve_adaptive_report(&sys, &rhs, 2, 1e-6).unwrap();
    let degree = sys.kept_degree(2).unwrap();
    let f = ConjugateFunction::new(&toy.basis, toy.state.degrees(), degree, &sol, &toy.inner, common::GAMMA).unwrap();
    let nodes = toy.state.nodes();
    for x in [-3.7f64, 0.0, 4.2, 9.05] {
        // v^2 from the product written out
        let rho = toy.inner.rho();
        let mut v = (0.01 * x.abs().powf(rho + 0.25)).exp();
        for &xj in nodes {
            v *= (1.0 - x / xj).abs().sqrt();
        }
        let mut s = 0.0;
        for (a, &l) in sol.coeffs.iter().zip(toy.state.degrees()) {
            s += a * toy.basis.eval_weighted(l, x).unwrap();
        }
        let expected = (toy.basis.eval_weighted(degree, x).unwrap() - s) / (v * v);
        match f.conjugate_eval(x, 1e-14).unwrap() {
            ConjugateValue::Finite(got) => assert!(rel(got, expected) < 1e-10, "x={x}: {got} vs {expected}"),
            other => panic!("x={x}: {other:?}"),
        }
    }
    // at a node the numerator's order 1/5 loses against 2 m_k = 1
    assert_eq!(f.conjugate_eval(nodes[2], 1e-14).unwrap(), ConjugateValue::Pole);
}

#[test]
fn zero_solution_reduces_to_weighted_polynomial() {
    let toy = toy();
    let zero = SolutionVector::zero(1, 0);
    let f = ConjugateFunction::new(&toy.basis, toy.state.degrees(), 3, &zero, &toy.inner, common::GAMMA).unwrap();
    assert_eq!(f.series_eval(1.3, 1e-9).unwrap(), (0.0, 0.0));
    // m != k with no coefficients is plain orthonormality
    let v = f.biorthogonality(5, 10).unwrap();
    assert!(v.abs() < 1e-14);
    let unit = InnerWeight::new(NodeSource::Explicit(vec![]), Exponents::Constant(0.5), 0.25, 0.0).unwrap();
    let g = ConjugateFunction::new(&toy.basis, toy.state.degrees(), 3, &zero, &unit, common::GAMMA).unwrap();
    let grid: Vec<f64> = (0..=200).map(|i| -10.0 + 0.1 * i as f64).collect();
    let rep = g.dual_norm_check(2.0, common::GAMMA, &grid, 1e-14).unwrap();
    assert!(rep.finite);
    // int Psi_3^2 = 1
    assert!((rep.integral - 1.0).abs() < 1e-10, "{}", rep.integral);
}

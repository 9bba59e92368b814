//! One PASS/FAIL line per acceptance criterion, written straight to stdout so
//! it shows without `--nocapture`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use biortho_core::conjugate::{fit_local_exponent, ConjugateFunction};
use biortho_core::construction::verify_lemma1;
use biortho_core::infsys::{
    fit_decay, finite_section_solve, min_norm_solution_norm, riesz_bound, riesz_trace, solve_adaptive,
    solve_adaptive_report, InfiniteSystem, SystemMatrix,
};
use biortho_core::linalg::Matrix;
use biortho_core::orthopoly::OrthoBasis;
use biortho_core::scalar::ls_slope;
use biortho_core::weights::{admissibility_check, mrs_number, AdmissiblePair, CheckMode, FreudWeight};
use common::{hermite_rho_sq_exact, rational_to_f64, toy, N0};

fn report(id: usize, name: &str, pass: bool, elapsed: Duration, budget: Duration, detail: &str) -> bool {
    let ok = pass && elapsed <= budget;
    let line = format!(
        "criterion {id:>2} {}: {name} [{:.2}s / {:.0}s] {detail}\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    ok
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

#[test]
fn criterion_01_mrs_closed_form() {
    let t = Instant::now();
    let w = FreudWeight::power(2.0).unwrap();
    let worst = (1..=100)
        .map(|u| (mrs_number(&w, u as f64).unwrap() - (u as f64).sqrt()).abs())
        .fold(0.0, f64::max);
    assert!(report(1, "MRS closed form", worst <= 1e-10, t.elapsed(), secs(1), &format!("max err {worst:.3e}")));
}

#[test]
fn criterion_02_hermite_recurrence() {
    let t = Instant::now();
    let basis = OrthoBasis::<f64>::new(FreudWeight::hermite(), 60).unwrap();
    let mut worst = 0.0f64;
    for n in 1..=50 {
        let reference = if n <= 6 {
            rational_to_f64(&hermite_rho_sq_exact(n)).sqrt()
        } else {
            (n as f64 / 2.0).sqrt()
        };
        worst = worst.max((basis.rho(n) - reference).abs());
    }
    assert!(report(2, "Hermite recurrence", worst <= 1e-12, t.elapsed(), secs(1), &format!("max err {worst:.3e}")));
}

#[test]
fn criterion_03_orthonormality() {
    let t = Instant::now();
    let hermite = OrthoBasis::<f64>::new(FreudWeight::hermite(), 40).unwrap();
    let e2 = hermite.orthonormality_residual(30, 40).unwrap();
    let quartic = OrthoBasis::new(FreudWeight::power(4.0).unwrap(), 40).unwrap();
    let e4 = quartic.orthonormality_residual(30, 40).unwrap();
    assert!(report(
        3,
        "orthonormality",
        e2 <= 1e-10 && e4 <= 1e-6,
        t.elapsed(),
        secs(10),
        &format!("beta=2 {e2:.3e}, beta=4 {e4:.3e}")
    ));
}

#[test]
fn criterion_04_sup_norm_scaling() {
    let t = Instant::now();
    let basis = OrthoBasis::<f64>::new(FreudWeight::hermite(), 80).unwrap();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (20..=60)
        .map(|n| {
            let (sup, _) = basis.sup_norm(n).unwrap();
            let a = basis.mrs(n).unwrap();
            ((n as f64).ln(), (sup * a.sqrt()).ln())
        })
        .unzip();
    let (slope, _) = ls_slope(&xs, &ys).unwrap();
    assert!(report(
        4,
        "sup-norm scaling",
        (slope - 1.0 / 6.0).abs() <= 0.1,
        t.elapsed(),
        secs(30),
        &format!("slope {slope:.4}")
    ));
}

#[test]
fn criterion_05_construction() {
    let t = Instant::now();
    let toy = toy();
    let rep = verify_lemma1(&toy.state, &toy.basis, &toy.pair).unwrap();
    let nonsingular = rep
        .sigma_dense
        .iter()
        .zip(&rep.norm_dense)
        .all(|(&s, &n)| s > 1e-10 * n);
    let worst_ratio = rep
        .sigma_dense
        .iter()
        .zip(&rep.norm_dense)
        .map(|(&s, &n)| s / n)
        .fold(f64::INFINITY, f64::min);
    let pass = toy.state.len() == 10
        && nonsingular
        && rep.windows_respected
        && rep.max_sigma_disagreement <= 1e-8
        && rep.c_measured > 0.0;
    assert!(report(
        5,
        "construction",
        pass,
        t.elapsed(),
        secs(60),
        &format!(
            "min sigma/norm {worst_ratio:.3e}, sigma disagreement {:.3e}, c {:.4}, degrees {:?}",
            rep.max_sigma_disagreement,
            rep.c_measured,
            toy.state.degrees()
        )
    ));
}

fn toy_system() -> SystemMatrix<'static, f64> {
    let toy = toy();
    SystemMatrix::new(&toy.state, &toy.basis, toy.growth(), N0).unwrap()
}

#[test]
fn criterion_06_finite_section_oracle() {
    let _ = toy();
    let t = Instant::now();
    let sys = toy_system();
    let rhs = sys.rhs_vector(1).unwrap();
    let sol = finite_section_solve(&sys, &rhs, 8, 8).unwrap();
    let a = sys.section(8, 8);
    let dense = nalgebra::DMatrix::from_fn(8, 8, |i, j| a[(i, j)]);
    let b = nalgebra::DVector::from_column_slice(&rhs[..8]);
    let x = dense.lu().solve(&b).unwrap();
    let diff: f64 = sol.x.iter().zip(x.iter()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let rel = diff / x.norm();
    assert!(report(6, "finite-section oracle", rel <= 1e-8, t.elapsed(), secs(5), &format!("relative difference {rel:.3e}")));
}

#[test]
fn criterion_07_riesz_consistency() {
    let _ = toy();
    let t = Instant::now();
    let sys = toy_system();
    let rhs = sys.rhs_vector(1).unwrap();
    let mut worst = 0.0f64;
    for n in 1..=10 {
        let r = riesz_bound(&sys, &rhs, n).unwrap();
        let m = min_norm_solution_norm(&sys, &rhs, n);
        worst = worst.max((r - m).abs() / m.max(f64::MIN_POSITIVE));
    }
    let (_, monotone) = riesz_trace(&sys, &rhs, 10).unwrap();
    assert!(report(
        7,
        "Riesz consistency",
        worst <= 1e-8 && monotone,
        t.elapsed(),
        secs(5),
        &format!("max relative gap {worst:.3e}, nondecreasing {monotone}")
    ));
}

#[test]
fn criterion_08_interpolation_readback() {
    let _ = toy();
    let t = Instant::now();
    let toy = toy();
    let sys = toy_system();
    let rhs = sys.rhs_vector(1).unwrap();
    let degree = sys.kept_degree(1).unwrap();
    let solved = solve_adaptive(&sys, &rhs, 1, 1e-6);
    // the best available section solution, for the diagnostic line
    let best = solve_adaptive_report(&sys, &rhs, 1, 1e-6).unwrap();
    let f = ConjugateFunction::new(&toy.basis, toy.state.degrees(), degree, &best, &toy.inner, common::GAMMA).unwrap();
    let readback = toy.state.nodes()[..8]
        .iter()
        .map(|&x| f.numerator(x).unwrap().abs())
        .fold(0.0, f64::max);
    let detail = match &solved {
        Ok(_) => format!("readback {readback:.3e}"),
        Err(e) => format!(
            "solve_adaptive: {e}; best section readback {readback:.3e}, last change {:.3e}",
            best.tail_bound
        ),
    };
    let pass = solved.is_ok() && readback <= 1e-5;
    assert!(report(8, "interpolation readback", pass, t.elapsed(), secs(60), &detail));
}

#[test]
fn criterion_09_biorthogonality() {
    let _ = toy();
    let t = Instant::now();
    let toy = toy();
    let sys = toy_system();
    let degrees: Vec<usize> = (1..=6).map(|m| sys.kept_degree(m).unwrap()).collect();
    let rule = (toy.state.degrees().last().unwrap() + degrees[5]) / 2 + 1;
    let mut worst = 0.0f64;
    for m in 1..=6 {
        let rhs = sys.rhs_vector(m).unwrap();
        let sol = solve_adaptive_report(&sys, &rhs, m, 1e-6).unwrap();
        let f = ConjugateFunction::new(&toy.basis, toy.state.degrees(), degrees[m - 1], &sol, &toy.inner, common::GAMMA)
            .unwrap();
        for k in 1..=6 {
            let v = f.biorthogonality(degrees[k - 1], rule).unwrap();
            let target = if m == k { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    assert!(report(9, "biorthogonality", worst <= 1e-4, t.elapsed(), secs(300), &format!("max deviation {worst:.3e}")));
}

#[test]
fn criterion_10_decay_diagnostics() {
    let _ = toy();
    let t = Instant::now();
    let sys = toy_system();
    let d = sys.decay_diagnostics(10, 1.3).unwrap();
    let j = sys.jaffard_membership(10, 1.25).unwrap();
    let pass = d.gram_ratio > 0.0 && d.gram_ratio <= 1.0 && !d.degenerate && d.max_cosine < 1.0 && j.constant.is_finite();
    let fit = |f: &Option<biortho_core::infsys::DecayFit>| f.as_ref().map_or("none".to_string(), |f| format!("{:.3}", f.delta));
    assert!(report(
        10,
        "decay diagnostics",
        pass,
        t.elapsed(),
        secs(60),
        &format!(
            "q {:.3e}, max cosine {:.4}, Jaffard C {:.3} slope {:.3}, fitted delta alpha {} lambda {}",
            d.gram_ratio,
            d.max_cosine,
            j.constant,
            j.slope,
            fit(&d.alpha_fit),
            fit(&d.lambda_fit)
        )
    ));
}

#[test]
fn criterion_11_admissibility() {
    let t = Instant::now();
    let horizon = 1e6;
    let check = |alpha: f64, gamma: f64, beta: f64| {
        admissibility_check(
            &AdmissiblePair::power(alpha, gamma, N0),
            &FreudWeight::power(beta).unwrap(),
            CheckMode::Strict,
            horizon,
        )
        .unwrap()
        .admissible
    };
    let a = check(31.0, 0.2, 2.0);
    let b = check(16.0, 1.0 / 24.0, 6.0);
    let c = check(4.0, 0.2, 2.0);
    assert!(report(
        11,
        "admissibility",
        a && b && !c,
        t.elapsed(),
        secs(1),
        &format!("(2,31,1/5) {a}, (6,16,1/24) {b}, (2,4) {c}")
    ));
}

#[test]
fn criterion_12_planted_recoveries() {
    let t = Instant::now();
    let n = 16;
    let planted = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.01 * ((i.max(j) + 1) as f64).powf(-1.5) });
    let (_, delta) = fit_decay(&planted).unwrap();
    let probe = fit_local_exponent(|x: f64| (x - 2.0).abs().sqrt() * (1.0 + x * x), 2.0, 0.05, 14);
    let slope = probe.slope.unwrap_or(f64::NAN);
    assert!(report(
        12,
        "planted recoveries",
        (delta - 1.5).abs() <= 0.05 && (slope - 0.5).abs() <= 0.05,
        t.elapsed(),
        secs(5),
        &format!("delta {delta:.4}, exponent {slope:.4}")
    ));
}

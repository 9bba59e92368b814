//! Pipeline stages. Every stage reads its inputs from the output directory,
//! so a stage re-run from upstream artifacts reproduces its outputs exactly.

use std::path::Path;

use anyhow::{Context, Result};
use biortho_core::conjugate::{ConjugateFunction, DualNormReport, HolderReport};
use biortho_core::construction::{verify_lemma1, ConstructionRecord, ConstructionState, SectionReport};
use biortho_core::infsys::{riesz_trace, solve_adaptive_report, DecayReport, JaffardReport, SolutionVector, SystemMatrix, TraceRow};
use biortho_core::orthopoly::{BasisArtifact, OrthoBasis};
use biortho_core::weights::{admissibility_check, freud_validate, AdmissibilityReport, ExponentReport, FreudReport};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, read_json, sha256_file, write_json};
use crate::config::ExperimentConfig;
use crate::LabError;

/// Tolerance on `|int phi*_m phi_k v^2 - delta_mk|`.
const BIORTHOGONALITY_TOL: f64 = 1e-4;
/// Interpolation residual allowed per unit of row normalisation.
const INTERPOLATION_TOL: f64 = 1e-10;
const CANCELLATION_TOL: f64 = 1e-8;
const INNER_TOL: f64 = 1e-14;
const JAFFARD_S: f64 = 1.25;
const DECAY_DELTA: f64 = 1.3;
const DUAL_Q: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Validate,
    Basis,
    Construct,
    Solve,
    Verify,
    Diagnose,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= threshold,
            value,
            threshold,
        }
    }

    fn flag(name: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            pass,
            value: if pass { 1.0 } else { 0.0 },
            threshold: 1.0,
        }
    }
}

fn enforce(stage: &str, checks: &[Check]) -> Result<()> {
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(LabError::InvariantFailure {
            stage: stage.into(),
            checks: failed,
        }
        .into())
    }
}

#[derive(Debug, Serialize)]
struct ValidateReport {
    freud: FreudReport,
    admissibility: AdmissibilityReport,
    exponents: ExponentReport,
    toy_scale: bool,
    checks: Vec<Check>,
}

pub fn validate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let weight = cfg.weight()?;
    let grid: Vec<f64> = (0..64).map(|i| 10f64.powf(-1.0 + 4.0 * i as f64 / 63.0)).collect();
    let freud = freud_validate(&weight, &grid)?;
    let admissibility = admissibility_check(&cfg.pair(), &weight, cfg.mode, cfg.horizon)?;
    let inner = match cfg.inner_weight(None) {
        Ok(w) => w,
        // constructed nodes are unknown here; the exponent range does not need them
        Err(_) => cfg.inner_weight(Some(&[1.0]))?,
    };
    let exponents = inner.check(cfg.gamma, 4096);
    let checks = vec![
        Check::flag("freud-weight", freud.pass),
        Check::flag("admissibility", admissibility.admissible || cfg.toy_scale),
        Check::flag("exponent-range", exponents.in_range),
    ];
    let report = ValidateReport {
        freud,
        admissibility,
        exponents,
        toy_scale: cfg.toy_scale,
        checks,
    };
    write_json(out, artifacts::VALIDATE, &report)?;
    enforce("validate", &report.checks)
}

pub fn basis(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let n = cfg.degree();
    let path = out.join(artifacts::BASIS);
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok(existing) = serde_json::from_slice::<BasisArtifact>(&bytes) {
            if existing.n == n && existing.beta == Some(cfg.freud.beta) && existing.scale == Some(cfg.freud.scale) {
                return Ok(());
            }
        }
    }
    let basis = OrthoBasis::new(cfg.weight()?, n)?;
    for k in 1..=n {
        basis.mrs(k)?;
    }
    write_json(out, artifacts::BASIS, &basis.to_artifact())?;
    Ok(())
}

fn load_basis(cfg: &ExperimentConfig, out: &Path, stage: &str) -> Result<(OrthoBasis<f64>, String)> {
    let art: BasisArtifact = read_json(out, artifacts::BASIS, stage, "basis")?;
    let hash = sha256_file(&out.join(artifacts::BASIS))?;
    Ok((OrthoBasis::from_artifact(cfg.weight()?, &art)?, hash))
}

#[derive(Debug, Serialize, Deserialize)]
struct ConstructionFile {
    basis_sha256: String,
    #[serde(flatten)]
    record: ConstructionRecord,
}

pub fn construct(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (basis, hash) = load_basis(cfg, out, "construct")?;
    let pair = cfg.pair();
    let state = ConstructionState::build(&basis, &pair, cfg.construction(), cfg.nodes)?;
    let report: SectionReport = verify_lemma1(&state, &basis, &pair)?;
    write_json(
        out,
        artifacts::CONSTRUCTION,
        &ConstructionFile {
            basis_sha256: hash,
            record: state.to_record(),
        },
    )?;
    write_json(out, artifacts::SECTIONS, &report)?;
    let nonsingular = report
        .sigma_dense
        .iter()
        .zip(&report.norm_dense)
        .all(|(&s, &n)| s > cfg.floor * n);
    enforce(
        "construct",
        &[
            Check::flag("nonsingular-sections", nonsingular),
            Check::flag("windows", report.windows_respected),
            Check::at_most("incremental-vs-dense", report.max_sigma_disagreement, 1e-8),
            Check::flag("positive-c", report.c_measured > 0.0),
        ],
    )
}

struct Pipeline {
    basis: OrthoBasis<f64>,
    state: ConstructionState<f64>,
    construction_hash: String,
}

fn load_pipeline(cfg: &ExperimentConfig, out: &Path, stage: &str) -> Result<Pipeline> {
    let (basis, hash) = load_basis(cfg, out, stage)?;
    let file: ConstructionFile = read_json(out, artifacts::CONSTRUCTION, stage, "construct")?;
    if file.basis_sha256 != hash {
        return Err(LabError::StaleArtifact {
            artifact: artifacts::CONSTRUCTION.into(),
            upstream: artifacts::BASIS.into(),
        }
        .into());
    }
    let state = ConstructionState::from_record(&file.record, &basis)?;
    let construction_hash = sha256_file(&out.join(artifacts::CONSTRUCTION))?;
    Ok(Pipeline {
        basis,
        state,
        construction_hash,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub m: usize,
    pub degree: usize,
    pub coeffs: Vec<f64>,
    /// Last change between truncations; absent when only one was possible.
    pub tail_bound: Option<f64>,
    pub converged: bool,
    pub norm: f64,
    pub rhs_norm: f64,
    pub envelope_constant: f64,
    pub trace: Vec<TraceRow>,
}

impl SolutionRecord {
    fn vector(&self) -> SolutionVector<f64> {
        SolutionVector {
            m: self.m,
            coeffs: self.coeffs.clone(),
            tail_bound: self.tail_bound.unwrap_or(f64::INFINITY),
            trace: self.trace.clone(),
            converged: self.converged,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionsFile {
    pub construction_sha256: String,
    pub tolerance: f64,
    pub solutions: Vec<SolutionRecord>,
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let p = load_pipeline(cfg, out, "solve")?;
    let sys = SystemMatrix::new(&p.state, &p.basis, cfg.growth(), cfg.n0)?;
    let mut solutions = Vec::with_capacity(cfg.duals);
    for m in 1..=cfg.duals {
        let rhs = sys.rhs_vector(m)?;
        let sol = solve_adaptive_report(&sys, &rhs, m, cfg.tolerance)?;
        let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        solutions.push(SolutionRecord {
            m,
            degree: sys.kept_degree(m)?,
            norm: sol.norm(),
            rhs_norm,
            envelope_constant: sol.envelope_constant(rhs_norm),
            tail_bound: sol.tail_bound.is_finite().then_some(sol.tail_bound),
            converged: sol.converged,
            coeffs: sol.coeffs,
            trace: sol.trace,
        });
    }
    write_json(
        out,
        artifacts::SOLUTIONS,
        &SolutionsFile {
            construction_sha256: p.construction_hash,
            tolerance: cfg.tolerance,
            solutions,
        },
    )?;
    Ok(())
}

fn load_solutions(out: &Path, p: &Pipeline, stage: &str) -> Result<SolutionsFile> {
    let file: SolutionsFile = read_json(out, artifacts::SOLUTIONS, stage, "solve")?;
    if file.construction_sha256 != p.construction_hash {
        return Err(LabError::StaleArtifact {
            artifact: artifacts::SOLUTIONS.into(),
            upstream: artifacts::CONSTRUCTION.into(),
        }
        .into());
    }
    Ok(file)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GramFile {
    pub degrees: Vec<usize>,
    pub rule_size: usize,
    /// `table[m-1][k-1] = int phi*_m phi_k v^2`.
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct InvariantsFile {
    converged: Vec<(usize, bool)>,
    envelope_constants: Vec<(usize, f64)>,
    checks: Vec<Check>,
}

pub fn verify(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let p = load_pipeline(cfg, out, "verify")?;
    let sols = load_solutions(out, &p, "verify")?;
    let sys = SystemMatrix::new(&p.state, &p.basis, cfg.growth(), cfg.n0)?;
    let inner = cfg.inner_weight(Some(p.state.nodes()))?;
    let omitted = p.state.degrees();
    let top = *omitted.last().context("empty construction")?;
    let degrees: Vec<usize> = sols.solutions.iter().map(|s| s.degree).collect();
    let rule_size = (top + degrees.iter().copied().max().unwrap_or(0)) / 2 + 1;
    let vectors: Vec<SolutionVector<f64>> = sols.solutions.iter().map(SolutionRecord::vector).collect();
    let functions: Vec<ConjugateFunction<f64>> = vectors
        .iter()
        .zip(&degrees)
        .map(|(v, &d)| ConjugateFunction::new(&p.basis, omitted, d, v, &inner, cfg.gamma))
        .collect::<biortho_core::Result<_>>()?;

    let mut table = Vec::with_capacity(functions.len());
    let mut worst_bio = 0.0f64;
    for (mi, f) in functions.iter().enumerate() {
        let mut row = Vec::with_capacity(degrees.len());
        for (ki, &dk) in degrees.iter().enumerate() {
            let v = f.biorthogonality(dk, rule_size)?;
            worst_bio = worst_bio.max((v - if mi == ki { 1.0 } else { 0.0 }).abs());
            row.push(v);
        }
        table.push(row);
    }

    let mut worst_interp = 0.0f64;
    for f in &functions {
        for (i, &x) in p.state.nodes().iter().enumerate() {
            let scale = sys.row_norms()[i].abs().max(1.0);
            worst_interp = worst_interp.max(f.numerator(x)?.abs() / scale);
        }
    }

    let mut worst_cancel = 0.0f64;
    let k = degrees.len();
    for (m, kk) in [(0, 0), (0, k - 1), (k / 2, k.saturating_sub(2))] {
        let a = functions[m].biorthogonality(degrees[kk], rule_size)?;
        let b = functions[m].biorthogonality_explicit(degrees[kk], rule_size, INNER_TOL)?;
        worst_cancel = worst_cancel.max((a - b).abs());
    }

    let parity = vectors.iter().all(|v| {
        v.coeffs.iter().zip(omitted).all(|(&a, &l)| {
            let x = 1.7;
            let (pos, neg) = match (p.basis.eval_weighted(l, x), p.basis.eval_weighted(l, -x)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return false,
            };
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            a * neg == sign * a * pos
        })
    });
    let envelopes: Vec<(usize, f64)> = functions
        .iter()
        .zip(&vectors)
        .map(|(f, v)| (v.m, f.envelope_constant()))
        .collect();
    let finite_norms = sols
        .solutions
        .iter()
        .all(|s| s.norm.is_finite() && s.envelope_constant.is_finite());

    let checks = vec![
        Check::at_most("biorthogonality", worst_bio, BIORTHOGONALITY_TOL),
        Check::at_most("interpolation", worst_interp, INTERPOLATION_TOL),
        Check::at_most("v2-cancellation", worst_cancel, CANCELLATION_TOL),
        Check::flag("parity", parity),
        Check::flag("envelope", envelopes.iter().all(|(_, c)| c.is_finite() && *c > 0.0)),
        Check::flag("solution-envelope", finite_norms),
    ];
    write_json(
        out,
        artifacts::GRAM,
        &GramFile {
            degrees,
            rule_size,
            table,
        },
    )?;
    write_json(
        out,
        artifacts::INVARIANTS,
        &InvariantsFile {
            converged: sols.solutions.iter().map(|s| (s.m, s.converged)).collect(),
            envelope_constants: envelopes,
            checks: checks.clone(),
        },
    )?;
    enforce("verify", &checks)
}

#[derive(Debug, Serialize)]
struct RieszRecord {
    m: usize,
    values: Vec<f64>,
    nondecreasing: bool,
}

#[derive(Debug, Serialize)]
struct DiagnoseFile {
    section: usize,
    decay: DecayReport,
    jaffard: JaffardReport,
    riesz: Vec<RieszRecord>,
    kernel_margin: Vec<f64>,
    dual_norm: Vec<(usize, DualNormReport)>,
    checks: Vec<Check>,
}

#[derive(Debug, Serialize)]
struct ProbeRecord {
    m: usize,
    #[serde(flatten)]
    report: HolderReport,
}

pub fn diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let p = load_pipeline(cfg, out, "diagnose")?;
    let sols = load_solutions(out, &p, "diagnose")?;
    let sys = SystemMatrix::new(&p.state, &p.basis, cfg.growth(), cfg.n0)?;
    let inner = cfg.inner_weight(Some(p.state.nodes()))?;
    let n = sys.size();
    let decay = sys.decay_diagnostics(n.max(4).min(n), DECAY_DELTA)?;
    let jaffard = sys.jaffard_membership(n, JAFFARD_S)?;
    let mut riesz = Vec::new();
    for s in &sols.solutions {
        let rhs = sys.rhs_vector(s.m)?;
        let (values, nondecreasing) = riesz_trace(&sys, &rhs, n)?;
        riesz.push(RieszRecord { m: s.m, values, nondecreasing });
    }
    let kernel_margin = sys.kernel_margin(n)?;

    let top = *p.state.degrees().last().context("empty construction")?;
    let half = 1.2 * p.basis.mrs(top)?;
    let points = (2.0 * half * cfg.grid_density as f64).ceil() as usize;
    let grid: Vec<f64> = (0..=points).map(|i| -half + 2.0 * half * i as f64 / points as f64).collect();
    let mut dual_norm = Vec::new();
    let mut probes = Vec::new();
    for s in &sols.solutions {
        let v = s.vector();
        let f = ConjugateFunction::new(&p.basis, p.state.degrees(), s.degree, &v, &inner, cfg.gamma)?;
        dual_norm.push((s.m, f.dual_norm_check(DUAL_Q, cfg.gamma, &grid, INNER_TOL)?));
        for j in 1..=p.state.len() {
            probes.push(ProbeRecord {
                m: s.m,
                report: f.holder_probe(j, p.state.nodes())?,
            });
        }
    }

    let checks = vec![
        Check::flag("gram-ratio-positive", decay.gram_ratio > 0.0 && !decay.degenerate),
        Check::at_most("row-cosines", decay.max_cosine, 1.0 - f64::EPSILON),
        Check::flag("jaffard-constant-finite", jaffard.constant.is_finite()),
        Check::flag("riesz-nondecreasing", riesz.iter().all(|r| r.nondecreasing)),
        Check::flag(
            "kernel-margin",
            kernel_margin.iter().all(|&s| s > cfg.floor),
        ),
        Check::flag("dual-norm-finite", dual_norm.iter().all(|(_, r)| r.finite)),
    ];
    write_json(out, artifacts::PROBES, &probes)?;
    write_json(
        out,
        artifacts::DIAGNOSE,
        &DiagnoseFile {
            section: n,
            decay,
            jaffard,
            riesz,
            kernel_margin,
            dual_norm,
            checks: checks.clone(),
        },
    )?;
    enforce("diagnose", &checks)
}

pub fn run(cfg: &ExperimentConfig, stage: Stage, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(out, artifacts::CONFIG, cfg)?;
    match stage {
        Stage::Validate => validate(cfg, out),
        Stage::Basis => basis(cfg, out),
        Stage::Construct => construct(cfg, out),
        Stage::Solve => solve(cfg, out),
        Stage::Verify => verify(cfg, out),
        Stage::Diagnose => diagnose(cfg, out),
        Stage::All => {
            // invariant failures are collected so later stages still run
            let mut failures = Vec::new();
            for step in [validate, basis, construct, solve, verify, diagnose] {
                if let Err(e) = step(cfg, out) {
                    match e.downcast::<LabError>() {
                        Ok(LabError::InvariantFailure { stage, checks }) => {
                            failures.extend(checks.into_iter().map(|c| format!("{stage}:{c}")))
                        }
                        Ok(other) => return Err(other.into()),
                        Err(e) => return Err(e),
                    }
                }
            }
            if failures.is_empty() {
                Ok(())
            } else {
                Err(LabError::InvariantFailure {
                    stage: "all".into(),
                    checks: failures,
                }
                .into())
            }
        }
    }
}

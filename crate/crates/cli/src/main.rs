mod artifacts;
mod config;
mod stages;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::stages::{GramFile, SolutionsFile, Stage};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("stage `{stage}` needs {artifact}; run stage `{producer}` first")]
    MissingArtifact {
        stage: String,
        artifact: String,
        producer: String,
    },
    #[error("{artifact} was produced from a different {upstream}; rerun the stages after it")]
    StaleArtifact { artifact: String, upstream: String },
    #[error("stage `{stage}` failed checks: {}", checks.join(", "))]
    InvariantFailure { stage: String, checks: Vec<String> },
    #[error("not found: {0}")]
    NotFound(String),
}

impl LabError {
    fn exit_code(&self) -> u8 {
        match self {
            LabError::MissingArtifact { .. } | LabError::StaleArtifact { .. } => 2,
            LabError::InvariantFailure { .. } => 3,
            LabError::NotFound(_) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "biortho-lab", version, about = "Build and check biorthonormal systems for Freud weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one pipeline stage, or all of them.
    Run {
        /// JSON experiment file; the built-in toy configuration when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        stage: Stage,
        /// Artifact directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print or save an artifact.
    Export {
        #[arg(long)]
        artifact: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Restrict per-dual tables to one index.
        #[arg(long)]
        m: Option<usize>,
        /// Destination file; standard output when omitted.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let cfg = match path {
        None => ExperimentConfig::toy(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|_| LabError::NotFound(p.display().to_string()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
    };
    cfg.check()?;
    Ok(cfg)
}

fn export(artifact: &str, format: Format, out: &Path, m: Option<usize>) -> Result<Vec<u8>> {
    let file = artifacts::ALL
        .iter()
        .find(|(name, _)| *name == artifact)
        .map(|(_, f)| *f)
        .ok_or_else(|| LabError::NotFound(format!("artifact `{artifact}`")))?;
    let stage = "export";
    match format {
        Format::Json => {
            // re-serialised through a sorted map so the bytes are canonical
            let v: serde_json::Value = artifacts::read_json(out, file, stage, artifact)?;
            artifacts::to_json(&v)
        }
        Format::Csv => {
            let keep = |i: usize| m.map_or(true, |mm| mm == i);
            let mut s = String::new();
            match artifact {
                "solutions" => {
                    let f: SolutionsFile = artifacts::read_json(out, file, stage, "solve")?;
                    s.push_str("m,k,value\n");
                    for sol in f.solutions.iter().filter(|x| keep(x.m)) {
                        for (k, a) in sol.coeffs.iter().enumerate() {
                            s.push_str(&format!("{},{},{}\n", sol.m, k + 1, artifacts::float(*a)));
                        }
                    }
                }
                "trace" => {
                    let f: SolutionsFile = artifacts::read_json(out, file, stage, "solve")?;
                    s.push_str("n,r,residual,norm,delta\n");
                    for sol in f.solutions.iter().filter(|x| keep(x.m)) {
                        for row in &sol.trace {
                            let delta = row.delta.map(artifacts::float).unwrap_or_default();
                            s.push_str(&format!(
                                "{},{},{},{},{}\n",
                                row.n,
                                row.r,
                                artifacts::float(row.residual),
                                artifacts::float(row.norm),
                                delta
                            ));
                        }
                    }
                }
                "gram" => {
                    let f: GramFile = artifacts::read_json(out, file, stage, "verify")?;
                    s.push_str("m,k,value\n");
                    for (i, row) in f.table.iter().enumerate().filter(|(i, _)| keep(i + 1)) {
                        for (k, v) in row.iter().enumerate() {
                            s.push_str(&format!("{},{},{}\n", i + 1, k + 1, artifacts::float(*v)));
                        }
                    }
                }
                other => bail!("artifact `{other}` has no CSV form; use --format json"),
            }
            Ok(s.into_bytes())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, stage, out } => {
            let cfg = load_config(config.as_deref())?;
            let dir = out
                .or_else(|| cfg.output.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));
            stages::run(&cfg, stage, &dir)
        }
        Command::Export {
            artifact,
            format,
            out,
            m,
            dest,
        } => {
            let bytes = export(&artifact, format, &out, m)?;
            match dest {
                Some(p) => artifacts::write_atomic(&p, &bytes),
                None => Ok(std::io::stdout().lock().write_all(&bytes)?),
            }
        }
    }
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var("BIORTHO_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<LabError>().map_or(1, LabError::exit_code);
            ExitCode::from(code)
        }
    }
}

//! Artifact names, atomic writes and content hashes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::LabError;

pub const CONFIG: &str = "config.json";
pub const VALIDATE: &str = "validate.json";
pub const BASIS: &str = "basis.json";
pub const CONSTRUCTION: &str = "construction.json";
pub const SECTIONS: &str = "sections.json";
pub const SOLUTIONS: &str = "solutions.json";
pub const GRAM: &str = "gram.json";
pub const INVARIANTS: &str = "invariants.json";
pub const DIAGNOSE: &str = "diagnose.json";
pub const PROBES: &str = "probes.json";

/// `(export name, file)` for every artifact.
pub const ALL: &[(&str, &str)] = &[
    ("config", CONFIG),
    ("validate", VALIDATE),
    ("basis", BASIS),
    ("construction", CONSTRUCTION),
    ("sections", SECTIONS),
    ("solutions", SOLUTIONS),
    ("trace", SOLUTIONS),
    ("gram", GRAM),
    ("invariants", INVARIANTS),
    ("diagnose", DIAGNOSE),
    ("probes", PROBES),
];

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    write_atomic(&path, &to_json(value)?)?;
    Ok(path)
}

/// Reads an upstream artifact, reporting a stage-dependency error when it is
/// missing.
pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str, stage: &str, producer: &str) -> Result<T> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|_| LabError::MissingArtifact {
        stage: stage.to_string(),
        artifact: name.to_string(),
        producer: producer.to_string(),
    })?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Seventeen significant digits.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -3.0e-300, 1.0 / 3.0, f64::MAX] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn missing_artifact_is_a_dependency_error() {
        let dir = std::env::temp_dir().join(format!("biortho-missing-{}", std::process::id()));
        let err = read_json::<serde_json::Value>(&dir, BASIS, "construct", "basis").unwrap_err();
        assert!(matches!(err.downcast_ref::<LabError>(), Some(LabError::MissingArtifact { .. })));
    }
}

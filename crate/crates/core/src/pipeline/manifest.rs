use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::io::{file_digest, write_bytes};
use crate::error::{Error, Result};
use crate::TOOL_VERSION;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileRole {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub stage: String,
    pub role: FileRole,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStatus {
    pub status: String,
    pub outputs: Vec<String>,
}

/// What was produced in an output directory, from which config.
///
/// The file starts with a `# generated_at` comment line, the only
/// non-reproducible content of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: BTreeMap<String, StageStatus>,
    /// Keyed by path relative to the output directory (or as given, for
    /// inputs outside it).
    pub files: BTreeMap<String, FileEntry>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config.hash(),
            stages: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }

    pub fn path(out_dir: &Path) -> PathBuf {
        out_dir.join(MANIFEST_FILE)
    }

    pub fn load(out_dir: &Path) -> Result<Self> {
        super::io::load_toml(&Self::path(out_dir))
    }

    /// Load and confirm the directory was produced from `config`.
    pub fn load_checked(out_dir: &Path, config: &ExperimentConfig, stage: &str) -> Result<Self> {
        let m = Self::load(out_dir)?;
        let expected = config.hash();
        if m.config_hash != expected {
            return Err(Error::ConfigMismatch {
                stage: stage.to_string(),
                expected,
                found: m.config_hash,
            });
        }
        Ok(m)
    }

    /// Load the manifest for `config`, or start a fresh one if the directory
    /// has none or was produced from another config.
    pub fn load_or_new(out_dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        match Self::load(out_dir) {
            Ok(m) if m.config_hash == config.hash() => Ok(m),
            Ok(_) | Err(Error::MissingArtifact(_)) => Ok(Self::new(config)),
            Err(e) => Err(e),
        }
    }

    pub fn require_stage(&self, out_dir: &Path, stage: &str) -> Result<()> {
        match self.stages.get(stage) {
            Some(s) if s.status == "complete" => Ok(()),
            _ => Err(Error::MissingArtifact(Self::path(out_dir).join(format!("[stage {stage}]")))),
        }
    }

    /// Record a completed stage and the digests of its outputs.
    pub fn record(&mut self, out_dir: &Path, stage: &str, outputs: &[PathBuf]) -> Result<()> {
        let mut names = Vec::with_capacity(outputs.len());
        for p in outputs {
            let name = relative_name(out_dir, p);
            self.files.insert(
                name.clone(),
                FileEntry {
                    stage: stage.to_string(),
                    role: FileRole::Output,
                    sha256: file_digest(p)?,
                },
            );
            names.push(name);
        }
        self.stages.insert(
            stage.to_string(),
            StageStatus {
                status: "complete".into(),
                outputs: names,
            },
        );
        Ok(())
    }

    pub fn record_input(&mut self, out_dir: &Path, stage: &str, input: &Path) -> Result<()> {
        self.files.insert(
            relative_name(out_dir, input),
            FileEntry {
                stage: stage.to_string(),
                role: FileRole::Input,
                sha256: file_digest(input)?,
            },
        );
        Ok(())
    }

    /// Fail if `path` differs from the digest recorded for it.
    pub fn verify(&self, out_dir: &Path, path: &Path) -> Result<()> {
        let name = relative_name(out_dir, path);
        let entry = self
            .files
            .get(&name)
            .ok_or_else(|| Error::MissingArtifact(path.to_path_buf()))?;
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let actual = file_digest(path)?;
        if actual != entry.sha256 {
            return Err(Error::InvalidInput(format!(
                "{name} changed since it was recorded (digest {actual}, manifest {})",
                entry.sha256
            )));
        }
        Ok(())
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let body = toml::to_string(self).map_err(|e| Error::Parse {
            path: Self::path(out_dir),
            message: e.to_string(),
        })?;
        let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        write_bytes(&Self::path(out_dir), format!("# generated_at = {stamp}\n{body}").as_bytes())
    }
}

fn relative_name(out_dir: &Path, p: &Path) -> String {
    p.strip_prefix(out_dir)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

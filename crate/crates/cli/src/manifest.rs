use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::{CliError, CliResult};

/// Record of one invocation, written next to its outputs. Holds no timestamps so that
/// reruns produce identical bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub overrides: BTreeMap<&'static str, Value>,
}

impl RunManifest {
    pub fn new(subcommand: &'static str) -> Self {
        RunManifest {
            subcommand,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            overrides: BTreeMap::new(),
        }
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.display().to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn set(mut self, key: &'static str, value: impl Serialize) -> Self {
        self.overrides
            .insert(key, serde_json::to_value(value).expect("override serializes"));
        self
    }
}

/// Output files rendered in memory, written only once every step has succeeded.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn add_json(&mut self, path: impl Into<PathBuf>, value: &impl Serialize) -> CliResult {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        bytes.push(b'\n');
        self.add(path, bytes);
        Ok(())
    }

    /// Writes all files plus the manifest at `manifest_path`.
    pub fn commit(mut self, mut manifest: RunManifest, manifest_path: PathBuf) -> CliResult {
        manifest.outputs = self.files.iter().map(|(p, _)| p.display().to_string()).collect();
        self.add_json(manifest_path, &manifest)?;
        for (path, bytes) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| CliError::Internal(format!("creating {}: {e}", dir.display())))?;
            }
            std::fs::write(path, bytes).map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

/// Manifest location for a single-file output: `<out>.manifest.json`.
pub fn manifest_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

//! Run manifests: one `manifest.json` per output directory, written before
//! any work starts.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, PathContext};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Map<String, Value>,
    pub seed: u64,
    pub tool_version: String,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Map<String, Value>, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Records this run in `<dir>/manifest.json`. The file holds one entry
    /// per run whose outputs live in `dir`; entries sharing an output with
    /// this run are replaced, so rerunning a command leaves one entry.
    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        fs::create_dir_all(dir).at(dir)?;
        let path = dir.join(MANIFEST_NAME);
        let mut runs = read_runs(&path)?;
        runs.retain(|r| !r.outputs.iter().any(|o| self.outputs.contains(o)));
        runs.push(self.clone());
        let text = serde_json::to_string_pretty(&runs).expect("manifest serializes") + "\n";
        fs::write(&path, text).at(&path)?;
        Ok(path)
    }

    /// The recorded run of `subcommand` in `dir` that wrote `output`.
    pub fn find(dir: &Path, subcommand: &str, output: &Path) -> CliResult<Option<RunManifest>> {
        let runs = read_runs(&dir.join(MANIFEST_NAME))?;
        Ok(runs
            .into_iter()
            .find(|r| r.subcommand == subcommand && r.outputs.iter().any(|o| o == output)))
    }
}

fn read_runs(path: &Path) -> CliResult<Vec<RunManifest>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = fs::File::open(path).at(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).at(path)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

pub fn sha256_parts(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fails if any planned output exists, unless `force` is set.
pub fn check_outputs(paths: &[&Path], force: bool) -> CliResult<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::usage(format!(
            "{} already exists (pass --force to overwrite)",
            p.display()
        ))),
        None => Ok(()),
    }
}

/// Directory that holds `path`'s manifest.
pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

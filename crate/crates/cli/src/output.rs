use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::UsageError;

/// Run manifest written next to the emitted files.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<String>,
}

/// Output directory that records every file it hands out.
pub struct Output {
    dir: PathBuf,
    prefix: String,
    files: Vec<String>,
    started: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output dir {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_owned(),
            prefix: String::new(),
            files: Vec::new(),
            started: now(),
        })
    }

    /// Routes subsequent files into `sub/` until reset with an empty name.
    pub fn set_prefix(&mut self, sub: &str) -> Result<()> {
        self.prefix = if sub.is_empty() { String::new() } else { format!("{sub}/") };
        fs::create_dir_all(self.dir.join(&self.prefix))?;
        Ok(())
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let rel = format!("{}{name}", self.prefix);
        let p = self.dir.join(&rel);
        self.files.push(rel);
        p
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<File>> {
        let p = self.path(name);
        let file = File::create(&p).with_context(|| format!("cannot write {}", p.display()))?;
        Ok(csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file))
    }

    pub fn finish(self, config_path: Option<&Path>, master_seed: u64) -> Result<()> {
        let manifest = RunManifest {
            config_path: config_path.map(Path::to_owned),
            output_dir: self.dir.clone(),
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started,
            finished_unix: now(),
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

/// Reads a JSON config; any failure is a usage error naming the path.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
}

/// Resolves `p` against the directory holding the config file.
pub fn resolve(p: &Path, config: Option<&Path>) -> PathBuf {
    match config.and_then(Path::parent) {
        Some(base) if p.is_relative() => base.join(p),
        _ => p.to_owned(),
    }
}

/// Shortest round-trip text for CSV cells; empty for missing values.
pub fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

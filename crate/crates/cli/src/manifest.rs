use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub poselift: &'static str,
    pub checkpoint_format: u32,
}

/// Provenance record written next to a command's primary output as
/// `<output>.manifest.json`. Two runs with the same flags and inputs
/// differ only in `started` and `finished`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Outputs that record wall-clock time; listed but not hashed.
    pub logs: Vec<String>,
    pub versions: Versions,
    pub started: String,
    pub finished: String,
}

pub struct Run {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<FileRecord>,
    started: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Run {
    pub fn start(command: &str, config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: Vec::new(),
            started: now(),
        })
    }

    /// Hashes an input now, before anything is written.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    /// Writes the manifest for `outputs[0]` and returns its path.
    pub fn finish(self, outputs: &[PathBuf]) -> Result<PathBuf> {
        self.finish_with_logs(outputs, &[])
    }

    pub fn finish_with_logs(self, outputs: &[PathBuf], logs: &[PathBuf]) -> Result<PathBuf> {
        let primary = outputs.first().context("manifest needs at least one output")?;
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| FileRecord::of(p)).collect::<Result<_>>()?,
            logs: logs.iter().map(|p| p.display().to_string()).collect(),
            versions: Versions {
                poselift: env!("CARGO_PKG_VERSION"),
                checkpoint_format: poselift::model::FORMAT_VERSION,
            },
            started: self.started,
            finished: now(),
        };
        let path = manifest_path(primary);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_hashes_and_sits_next_to_output() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        let out = dir.path().join("out.csv");
        std::fs::write(&input, "abc").unwrap();
        std::fs::write(&out, "x").unwrap();
        let mut run = Run::start("synth", &serde_json::json!({"n": 1}), Some(7)).unwrap();
        run.input(&input).unwrap();
        let path = run.finish(&[out.clone()]).unwrap();
        assert_eq!(path, dir.path().join("out.csv.manifest.json"));
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(
            v["inputs"][0]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(v["seed"], 7);
        assert_eq!(v["outputs"][0]["bytes"], 1);
        assert_eq!(v["config"]["n"], 1);
    }
}

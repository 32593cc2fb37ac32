//! `--config FILE`: a TOML file with one table per subcommand whose keys
//! are that subcommand's long flag names.
//!
//! ```toml
//! [train]
//! variant = "v2"
//! epochs = 150
//! train-subjects = "S1,S2,S3,S4,S5"
//!
//! [verify]
//! full = true
//! ```
//!
//! The file's values are spliced in right after the subcommand name, so
//! anything given on the command line later wins. A `true` boolean becomes
//! a bare flag; `false` is dropped.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Returns `args` with `--config PATH` removed and the file's flags
/// inserted after the subcommand.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config: Option<OsString> = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().context("--config needs a file path")?);
        } else if let Some(v) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            config = Some(v.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    // rest[0] is the binary name; the subcommand is the first non-flag.
    let Some(pos) = rest.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')) else {
        return Ok(rest);
    };
    let pos = pos + 1;
    let command = rest[pos].to_string_lossy().into_owned();
    let injected = flags_for(Path::new(&path), &command)?;
    rest.splice(pos + 1..pos + 1, injected);
    Ok(rest)
}

fn flags_for(path: &Path, command: &str) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let doc: toml::Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
    for (k, v) in &doc {
        if !v.is_table() {
            bail!("config {}: top-level key {k:?} must be a [command] table", path.display());
        }
    }
    let Some(section) = doc.get(command).and_then(|v| v.as_table()) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (key, value) in section {
        let flag = format!("--{key}");
        match value {
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => {
                out.push(flag.into());
                out.push(s.into());
            }
            toml::Value::Integer(i) => {
                out.push(flag.into());
                out.push(i.to_string().into());
            }
            toml::Value::Float(f) => {
                out.push(flag.into());
                out.push(f.to_string().into());
            }
            toml::Value::Array(items) => {
                for item in items {
                    let s = match item {
                        toml::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    out.push(flag.clone().into());
                    out.push(s.into());
                }
            }
            other => bail!("config [{command}] {key}: unsupported value {other}"),
        }
    }
    Ok(out)
}

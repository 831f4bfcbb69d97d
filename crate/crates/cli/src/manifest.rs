//! Run manifests.
//!
//! Every command writes a manifest beside its outputs: `manifest.txt` inside
//! an output directory, or `<file>.manifest` next to a single output file.
//!
//! ```text
//! # mobsim run manifest
//! run.command=generate
//! run.version=0.1.0
//! seed=7
//! ...                                  every configuration key
//! digest.input.<path>=<sha256 hex>
//! digest.output.<name>=<sha256 hex>
//! ```
//!
//! Input paths are recorded as given; output names are relative to the
//! output location. There are no timestamps or host details, so re-running
//! a manifest produces a byte-identical manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const HEADER: &str = "# mobsim run manifest";

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    /// `(path, digest)` in the order the inputs were read.
    pub inputs: Vec<(String, String)>,
    /// `(name, digest)` in the order the outputs were written.
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\nrun.command={}\nrun.version={}\n", self.command, self.version);
        s += &self.config.to_text();
        for (p, d) in &self.inputs {
            s += &format!("digest.input.{p}={d}\n");
        }
        for (p, d) in &self.outputs {
            s += &format!("digest.output.{p}={d}\n");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |m: String| CliError::Validation(format!("manifest: {m}"));
        let mut meta: BTreeMap<&str, &str> = BTreeMap::new();
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            if let Some(p) = k.strip_prefix("digest.input.") {
                inputs.push((p.to_string(), v.to_string()));
            } else if let Some(p) = k.strip_prefix("digest.output.") {
                outputs.push((p.to_string(), v.to_string()));
            } else if k.starts_with("run.") {
                meta.insert(k, v);
            }
        }
        let mut config = RunConfig::default();
        config.apply_text(text)?;
        let get = |k: &str| {
            meta.get(k)
                .map(|v| v.to_string())
                .ok_or_else(|| bad(format!("missing `{k}`")))
        };
        Ok(Self {
            command: get("run.command")?,
            version: get("run.version")?,
            config,
            inputs,
            outputs,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Inputs whose current digest differs from the recorded one.
    pub fn changed_inputs(&self) -> Result<Vec<String>, CliError> {
        let mut out = Vec::new();
        for (p, d) in &self.inputs {
            if sha256_file(Path::new(p))? != *d {
                out.push(p.clone());
            }
        }
        Ok(out)
    }
}

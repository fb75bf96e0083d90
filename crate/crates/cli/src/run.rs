//! Per-run provenance record written next to every command's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use neurocap_core::fingerprint::Fingerprinter;
use neurocap_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const RUN_MANIFEST_NAME: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<PathBuf>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Content hash of the inputs, the resolved config and the seed.
    pub fingerprint: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_path: Option<&Path>,
        config: &impl Serialize,
        seed: u64,
        inputs: &[&Path],
    ) -> Result<Self> {
        let config = serde_json::to_value(config).expect("config serializes");
        let mut fp = Fingerprinter::new();
        fp.chunk(command.as_bytes())
            .chunk(config.to_string().as_bytes())
            .chunk(&seed.to_le_bytes());
        for input in inputs {
            hash_path(&mut fp, input)?;
        }
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: config_path.map(Path::to_path_buf),
            config,
            seed,
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            outputs: Vec::new(),
            fingerprint: fp.finish(),
        })
    }

    pub fn output(mut self, path: impl Into<PathBuf>) -> Self {
        self.outputs.push(path.into());
        self
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(out_dir).map_err(|e| Error::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })?;
        let path = out_dir.join(RUN_MANIFEST_NAME);
        write_json(&path, self)?;
        Ok(path)
    }
}

/// Hashes a file, or a directory tree in sorted order with relative names.
pub fn hash_path(fp: &mut Fingerprinter, path: &Path) -> Result<()> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    if path.is_file() {
        fp.chunk(&fs::read(path).map_err(io)?);
        return Ok(());
    }
    let mut stack = vec![path.to_path_buf()];
    let mut files = Vec::new();
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(io)? {
            let p = entry.map_err(io)?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != RUN_MANIFEST_NAME) {
                files.push(p);
            }
        }
    }
    files.sort();
    for f in files {
        let rel = f.strip_prefix(path).expect("inside root");
        fp.chunk(rel.to_string_lossy().as_bytes());
        fp.chunk(&fs::read(&f).map_err(|e| Error::Io { path: f.clone(), source: e })?);
    }
    Ok(())
}

pub fn fingerprint_paths(paths: &[&Path]) -> Result<String> {
    let mut fp = Fingerprinter::new();
    for p in paths {
        hash_path(&mut fp, p)?;
    }
    Ok(fp.finish())
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).expect("value serializes");
    text.push(b'\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

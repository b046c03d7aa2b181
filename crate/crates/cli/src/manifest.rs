//! One `crossgp-manifest.json` per output directory, holding an entry for
//! every output file written there.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "crossgp-manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub command: String,
    pub flags: serde_json::Value,
    pub seed: Option<u64>,
    /// Input path → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path → sha256.
    pub outputs: BTreeMap<String, String>,
    pub version: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ManifestFile {
    /// Keyed by output file name within the directory.
    entries: BTreeMap<String, Entry>,
}

pub struct Manifest {
    entry: Entry,
    output_paths: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl Manifest {
    pub fn new(command: &str, flags: &impl Serialize, seed: Option<u64>) -> Self {
        Manifest {
            entry: Entry {
                command: command.to_string(),
                flags: serde_json::to_value(flags).expect("flags serialize"),
                seed,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            output_paths: Vec::new(),
        }
    }

    pub fn inputs<P: AsRef<Path>>(mut self, paths: &[P]) -> Result<Self> {
        for p in paths {
            let p = p.as_ref();
            self.entry
                .inputs
                .insert(p.display().to_string(), sha256_file(p)?);
        }
        Ok(self)
    }

    pub fn outputs(mut self, paths: impl IntoIterator<Item = PathBuf>) -> Result<Self> {
        for p in paths {
            self.entry
                .outputs
                .insert(p.display().to_string(), sha256_file(&p)?);
            self.output_paths.push(p);
        }
        Ok(self)
    }

    /// Upserts this run into the manifest of every directory it wrote to.
    pub fn record(self) -> Result<()> {
        let mut by_dir: BTreeMap<PathBuf, Vec<String>> = BTreeMap::new();
        for p in &self.output_paths {
            let dir = crate::parent_dir(p).to_path_buf();
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            by_dir.entry(dir).or_default().push(name);
        }
        for (dir, names) in by_dir {
            let path = dir.join(FILE_NAME);
            let mut file: ManifestFile = if path.is_file() {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).unwrap_or_else(|e| {
                    log::warn!("replacing unreadable manifest {}: {e}", path.display());
                    ManifestFile::default()
                })
            } else {
                ManifestFile::default()
            };
            for name in names {
                file.entries.insert(name, self.entry.clone());
            }
            let mut text = serde_json::to_string_pretty(&file)?;
            text.push('\n');
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

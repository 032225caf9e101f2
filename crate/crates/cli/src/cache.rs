//! Run manifests and the content-addressed result cache.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub subcommand: String,
    pub parameters: Value,
    pub tool_version: String,
    /// Milliseconds since the Unix epoch.
    pub started_ms: u64,
    pub finished_ms: u64,
    pub cache_key: String,
    pub cache_hit: bool,
    /// Artifact file names relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    /// Content address of `(config hash, subcommand, parameters)` for this
    /// tool version. `serde_json` maps keep keys sorted, so the parameter
    /// serialization is canonical.
    pub fn key(config_hash: &str, subcommand: &str, parameters: &Value, version: &str) -> String {
        let mut h = Sha256::new();
        for part in [version, config_hash, subcommand, &parameters.to_string()] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// An artifact held in memory before it is written anywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub enum Lookup {
    Hit { manifest: RunManifest, artifacts: Vec<Artifact>, paths: Vec<PathBuf> },
    Miss,
}

pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `$LANDAU_RES_CACHE`, else `$XDG_CACHE_HOME/landau-res`, else
    /// `$HOME/.cache/landau-res`.
    pub fn from_env() -> Option<Self> {
        let var = |k| std::env::var_os(k).filter(|v| !v.is_empty()).map(PathBuf::from);
        var("LANDAU_RES_CACHE")
            .or_else(|| var("XDG_CACHE_HOME").map(|p| p.join("landau-res")))
            .or_else(|| var("HOME").map(|p| p.join(".cache").join("landau-res")))
            .map(Self::new)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry(&self, key: &str) -> PathBuf {
        self.root.join(key)
    }

    /// A damaged entry is reported through `warn` and counts as a miss.
    pub fn lookup(&self, key: &str, warn: impl FnOnce(String)) -> Lookup {
        let dir = self.entry(key);
        if !dir.exists() {
            return Lookup::Miss;
        }
        match read_entry(&dir, key) {
            Ok((manifest, artifacts, paths)) => Lookup::Hit { manifest, artifacts, paths },
            Err(reason) => {
                warn(format!("ignoring corrupt cache entry {}: {reason}", dir.display()));
                Lookup::Miss
            }
        }
    }

    /// Stores through a temporary directory and a rename, so readers never
    /// see a half-written entry.
    pub fn store(&self, manifest: &RunManifest, artifacts: &[Artifact]) -> io::Result<()> {
        fs::create_dir_all(&self.root)?;
        let dir = self.entry(&manifest.cache_key);
        let tmp = self.root.join(format!(".{}.{}", manifest.cache_key, std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        for a in artifacts {
            fs::write(tmp.join(&a.name), &a.bytes)?;
        }
        fs::write(tmp.join(MANIFEST_FILE), serde_json::to_vec_pretty(manifest)?)?;
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&tmp, &dir)
    }
}

type Entry = (RunManifest, Vec<Artifact>, Vec<PathBuf>);

fn read_entry(dir: &Path, key: &str) -> Result<Entry, String> {
    let raw = fs::read(dir.join(MANIFEST_FILE)).map_err(|e| format!("manifest: {e}"))?;
    let manifest: RunManifest =
        serde_json::from_slice(&raw).map_err(|e| format!("manifest: {e}"))?;
    if manifest.cache_key != key {
        return Err("manifest key does not match its directory".into());
    }
    let mut artifacts = Vec::new();
    let mut paths = Vec::new();
    for name in &manifest.outputs {
        if Path::new(name).components().count() != 1 || name == MANIFEST_FILE {
            return Err(format!("bad output name {name:?}"));
        }
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| format!("{name}: {e}"))?;
        artifacts.push(Artifact { name: name.clone(), bytes });
        paths.push(path);
    }
    Ok((manifest, artifacts, paths))
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clinex_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Full training config in `key = value` form.
    pub config: Option<String>,
    pub inputs: BTreeMap<String, PathBuf>,
    /// Output file -> SHA-256 hex digest.
    pub outputs: BTreeMap<PathBuf, String>,
    pub seconds: f64,
    pub metrics: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            ..Default::default()
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.to_string(), path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) -> Result<(), Error> {
        let digest = sha256_file(path)?;
        self.outputs.insert(path.to_path_buf(), digest);
        Ok(())
    }

    pub fn metric(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.metrics.insert(name.to_string(), v);
    }

    /// Write via a temporary file and rename, so readers never see a partial manifest.
    pub fn write(&self, path: &Path) -> Result<(), Error> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(path, json.as_bytes())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// `model.clnx` -> `model.clnx.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut p = output.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("a.bin");
        fs::write(&file, b"abc").unwrap();
        let mut m = RunManifest::new("train", 7);
        m.output(&file).unwrap();
        m.metric("loss", vec![0.5, 0.25]);
        assert_eq!(
            m.outputs[&file],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let path = manifest_path(&file);
        m.write(&path).unwrap();
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(back.outputs, m.outputs);
        assert!(!dir.path().join("a.bin.manifest.json.tmp").exists());
    }
}

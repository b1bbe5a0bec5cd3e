//! Run directories: lock file, atomic writes, sha256 file index and manifest.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const LOCK_FILE: &str = ".ltde.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    /// Resolved configuration with every default filled in.
    pub config: serde_json::Value,
    pub sizes: BTreeMap<String, u64>,
    /// Wall-clock seconds per phase; only present when requested, since it
    /// would break byte-identical reruns.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<BTreeMap<String, f64>>,
    /// File name to sha256 hex digest.
    pub files: BTreeMap<String, String>,
}

/// A run directory owned by this process until dropped.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    files: BTreeMap<String, String>,
    lock: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path)?;
        let lock = path.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Locked(path.display().to_string()));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            path: path.to_path_buf(),
            files: BTreeMap::new(),
            lock,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Writes `name` atomically and records its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name.is_empty() || name.contains(['/', '\\']) || name == MANIFEST_FILE || name == LOCK_FILE {
            return Err(Error::Internal(format!("reserved or nested artifact name {name:?}")));
        }
        write_atomic(&self.path.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes the manifest last, with the file index filled in.
    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.files = self.files.clone();
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.path.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(manifest)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a run directory's manifest and checks every indexed file's digest.
pub fn check_manifest(dir: &Path) -> Result<RunManifest> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    for (name, digest) in &manifest.files {
        let actual = sha256_hex(&fs::read(dir.join(name))?);
        if &actual != digest {
            return Err(Error::Internal(format!("{name}: digest {actual} does not match manifest {digest}")));
        }
    }
    Ok(manifest)
}

/// Minimal CSV builder; fields never contain separators.
#[derive(Debug, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut csv = Self::default();
        csv.row(header);
        csv
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(f.as_ref());
        }
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// Shortest round-trip float formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        RunManifest {
            command: "test".into(),
            code_version: "0".into(),
            config: serde_json::json!({}),
            sizes: BTreeMap::new(),
            timings: None,
            files: BTreeMap::new(),
        }
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::create(tmp.path()).unwrap();
        assert!(matches!(RunDir::create(tmp.path()), Err(Error::Locked(_))));
        drop(dir);
        assert!(RunDir::create(tmp.path()).is_ok());
    }

    #[test]
    fn manifest_indexes_digests() {
        let tmp = tempfile::tempdir().unwrap();
        let mut dir = RunDir::create(tmp.path()).unwrap();
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&[fmt_f64(0.1), fmt_f64(2.0)]);
        dir.write("x.csv", &csv.into_bytes()).unwrap();
        assert!(dir.write("manifest.json", b"{}").is_err());
        let m = dir.finish(manifest()).unwrap();
        assert_eq!(fs::read_to_string(tmp.path().join("x.csv")).unwrap(), "a,b\n0.1,2.0\n");
        assert_eq!(m.files["x.csv"], sha256_hex(b"a,b\n0.1,2.0\n"));
        assert_eq!(check_manifest(tmp.path()).unwrap(), m);
        assert!(!tmp.path().join(LOCK_FILE).exists());
        fs::write(tmp.path().join("x.csv"), "tampered").unwrap();
        assert!(check_manifest(tmp.path()).is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

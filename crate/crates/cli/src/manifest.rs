use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to re-run a command: arguments, resolved config, seeds and the
/// digests of every input file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seeds: serde_json::Map<String, serde_json::Value>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
}

pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn new(subcommand: &str) -> Self {
        let started_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Recorder {
            manifest: RunManifest {
                subcommand: subcommand.to_owned(),
                argv: std::env::args().collect(),
                tool_version: env!("CARGO_PKG_VERSION").to_owned(),
                config: serde_json::Value::Null,
                seeds: serde_json::Map::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_unix_s,
                wall_clock_s: 0.0,
            },
            started: Instant::now(),
        }
    }

    /// Digests a file, or every file below a directory in path order.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        for file in files_below(path)? {
            let sha256 = sha256_file(&file)?;
            self.manifest.inputs.push(InputDigest { path: file, sha256 });
        }
        Ok(())
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_owned(), seed.into());
    }

    pub fn output(&mut self, path: PathBuf) {
        self.manifest.outputs.push(path);
    }

    /// Writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.manifest.wall_clock_s = self.started.elapsed().as_secs_f64();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn files_below(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).with_context(|| format!("cannot read {}", path.display()))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for entry in entries {
        if entry.is_dir() {
            out.extend(files_below(&entry)?);
        } else {
            out.push(entry);
        }
    }
    Ok(out)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc.txt");
        fs::write(&path, "abc").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn directories_are_listed_in_path_order() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.tsv", "a.tsv", "c.tsv"] {
            fs::write(dir.path().join(name), "").unwrap();
        }
        let names: Vec<String> = files_below(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.tsv", "b.tsv", "c.tsv"]);
    }
}

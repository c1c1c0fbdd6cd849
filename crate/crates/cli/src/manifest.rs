//! Plain-text run manifest with SHA-256 checksums.
//!
//! One `key=value` per line. Files appear as `file.<relative path>=<hex digest>`
//! and stage timings as `time.<stage>=<seconds>`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const LOCK_FILE: &str = ".lock";
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<String>,
    pub timings: Vec<(String, f64)>,
    /// Relative path (with `/` separators) to hex SHA-256, sorted by path.
    pub files: BTreeMap<String, String>,
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub violations: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| HarnessError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Every regular file under `root` except the manifest and the lock, sorted.
pub fn artifact_files(root: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
            let path = entry.path();
            let ty = entry.file_type().map_err(|e| HarnessError::io(&path, e))?;
            if ty.is_dir() {
                walk(root, &path, out)?;
            } else if ty.is_file() {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                let rel = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/");
                if rel != MANIFEST_FILE && rel != LOCK_FILE {
                    out.push(rel);
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

impl RunManifest {
    /// Checksums every artifact currently under `root`.
    pub fn record_files(&mut self, root: &Path) -> Result<()> {
        self.files.clear();
        for rel in artifact_files(root)? {
            let digest = sha256_file(&root.join(&rel))?;
            self.files.insert(rel, digest);
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &str| {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        };
        kv("tool_version", &self.tool_version);
        kv("config_sha256", &self.config_hash);
        kv("seed", &self.seed.to_string());
        kv("stages", &self.stages.join(","));
        kv("complete", if self.complete { "true" } else { "false" });
        if let Some(st) = &self.failed_stage {
            kv("failed_stage", st);
        }
        if let Some(e) = &self.error {
            kv("error", &e.replace('\n', " "));
        }
        for (i, v) in self.violations.iter().enumerate() {
            kv(&format!("violation.{i}"), v);
        }
        for (stage, secs) in &self.timings {
            kv(&format!("time.{stage}"), &format!("{secs:.6}"));
        }
        for (path, digest) in &self.files {
            kv(&format!("file.{path}"), digest);
        }
        s
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut m = RunManifest::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
            match k {
                "tool_version" => m.tool_version = v.to_string(),
                "config_sha256" => m.config_hash = v.to_string(),
                "seed" => m.seed = v.parse().map_err(|e| format!("line {}: seed: {e}", lineno + 1))?,
                "stages" => m.stages = v.split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
                "complete" => m.complete = v == "true",
                "failed_stage" => m.failed_stage = Some(v.to_string()),
                "error" => m.error = Some(v.to_string()),
                _ => {
                    if let Some(p) = k.strip_prefix("file.") {
                        m.files.insert(p.to_string(), v.to_string());
                    } else if let Some(st) = k.strip_prefix("time.") {
                        let secs = v.parse().map_err(|e| format!("line {}: {k}: {e}", lineno + 1))?;
                        m.timings.push((st.to_string(), secs));
                    } else if k.starts_with("violation.") {
                        m.violations.push(v.to_string());
                    } else {
                        return Err(format!("line {}: unknown key `{k}`", lineno + 1));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let path = root.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        Self::parse(&text).map_err(|detail| HarnessError::Artifact { path, detail })
    }

    /// Mismatches between the manifest and the files under `root`.
    pub fn verify(&self, root: &Path) -> Result<Vec<String>> {
        let mut problems = Vec::new();
        for (rel, digest) in &self.files {
            let path = root.join(rel);
            if !path.is_file() {
                problems.push(format!("{rel}: missing"));
            } else if &sha256_file(&path)? != digest {
                problems.push(format!("{rel}: checksum mismatch"));
            }
        }
        for rel in artifact_files(root)? {
            if !self.files.contains_key(&rel) {
                problems.push(format!("{rel}: not in manifest"));
            }
        }
        Ok(problems)
    }
}

/// Exclusive ownership of an output directory; released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "pid={}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default().trim().to_string();
                Err(HarnessError::Locked {
                    path: root.to_path_buf(),
                    holder,
                })
            }
            Err(e) => Err(HarnessError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn text_round_trip() {
        let mut m = RunManifest {
            tool_version: TOOL_VERSION.into(),
            config_hash: "00ff".into(),
            seed: 11,
            stages: vec!["synth".into(), "sweep".into()],
            timings: vec![("synth".into(), 0.5)],
            complete: false,
            failed_stage: Some("sweep".into()),
            error: Some("boom".into()),
            violations: vec!["2 < m_f < 4: m_f = 5".into()],
            ..Default::default()
        };
        m.files.insert("fields/source.vol".into(), "abcd".into());
        assert_eq!(RunManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(HarnessError::Locked { .. })));
        drop(a);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn verify_spots_orphans_and_edits() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "x\n").unwrap();
        let mut m = RunManifest::default();
        m.record_files(dir.path()).unwrap();
        assert!(m.verify(dir.path()).unwrap().is_empty());
        fs::write(dir.path().join("a.csv"), "y\n").unwrap();
        fs::write(dir.path().join("b.csv"), "z\n").unwrap();
        let p = m.verify(dir.path()).unwrap();
        assert_eq!(p.len(), 2, "{p:?}");
    }
}

//! Output-directory lock and the run manifest that ties outputs to inputs.

use super::CliError;
use crate::util::{append_jsonl, hash_fields, sha256_hex};
use serde::{Deserialize, Serialize};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

pub const LOCK_FILE: &str = ".seedscan.lock";
pub const RUN_MANIFEST: &str = "run_manifest.jsonl";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;
        let path = out_dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Config(format!(
                "output directory {} is in use by another run (delete {} if that run is gone)",
                out_dir.display(),
                path.display()
            ))),
            Err(source) => Err(CliError::Io { path, source }),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub git_describe: Option<String>,
}

/// One line of `run_manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub models: Vec<String>,
    pub rule_ids: Vec<String>,
    pub inputs: Vec<InputDigest>,
}

impl RunManifest {
    pub fn append(&self, out_dir: &Path) -> Result<(), CliError> {
        let path = out_dir.join(RUN_MANIFEST);
        append_jsonl(&path, std::slice::from_ref(self)).map_err(|source| CliError::Io { path, source })
    }
}

/// Digest of a file, or of every file under a directory (relative paths and
/// contents, in path order).
pub fn digest_input(path: &Path) -> Result<InputDigest, CliError> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let sha256 = if path.is_dir() {
        let mut parts: Vec<(String, Vec<u8>)> = Vec::new();
        for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
            let entry = entry.map_err(|e| io(e.into()))?;
            if entry.file_type().is_file() {
                let rel = entry.path().strip_prefix(path).unwrap_or(entry.path()).to_string_lossy().into_owned();
                parts.push((rel, fs::read(entry.path()).map_err(io)?));
            }
        }
        hash_fields(parts.iter().flat_map(|(p, b)| [p.as_bytes(), b.as_slice()]))
    } else {
        sha256_hex(&fs::read(path).map_err(io)?)
    };
    Ok(InputDigest { path: path.display().to_string(), sha256, git_describe: git_describe(path) })
}

/// `git describe --always --dirty` of the repository holding `path`, if any.
fn git_describe(path: &Path) -> Option<String> {
    let dir = if path.is_dir() { path } else { path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")) };
    let out = Command::new("git").arg("-C").arg(dir).args(["describe", "--always", "--dirty"]).output().ok()?;
    out.status.success().then(|| String::from_utf8_lossy(&out.stdout).trim().to_string()).filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(CliError::Config(_))));
        drop(a);
        assert!(OutputLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn directory_digest_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.c"), "int a;").unwrap();
        let d1 = digest_input(dir.path()).unwrap();
        assert_eq!(d1, digest_input(dir.path()).unwrap());
        fs::write(dir.path().join("a.c"), "int b;").unwrap();
        assert_ne!(d1.sha256, digest_input(dir.path()).unwrap().sha256);
        assert!(digest_input(&dir.path().join("missing")).is_err());
    }
}

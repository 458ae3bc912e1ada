//! A sandbox directory standing in for the victim's drive.
//!
//! Virtual paths use `/` or `\` interchangeably and are case-insensitive.
//! `..` never climbs above the drive root, so every write lands inside the
//! sandbox; whether it climbed out of the directory the caller intended is
//! recorded as `escaped_root`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FsError {
    #[error("refused path {0:?}")]
    Refused(String),
    #[error("sandbox i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FsWrite {
    pub requested: String,
    /// Normalized virtual path actually written.
    pub resolved: String,
    /// The write left the base directory it was requested under.
    pub escaped_root: bool,
    /// A file already existed at `resolved`.
    pub overwrote: bool,
}

#[derive(Debug)]
pub struct VirtualFs {
    root: PathBuf,
    writes: Vec<FsWrite>,
    sandbox_escapes: usize,
}

/// Split a virtual path into normalized components.
pub fn normalize(path: &str) -> Result<Vec<String>, FsError> {
    let mut out: Vec<String> = Vec::new();
    for comp in path.split(['/', '\\']) {
        match comp {
            "" | "." => {}
            ".." => {
                out.pop();
            }
            c if c.contains(':') || c.contains('\0') => return Err(FsError::Refused(path.to_string())),
            c => out.push(c.to_ascii_lowercase()),
        }
    }
    Ok(out)
}

impl VirtualFs {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(VirtualFs {
            root: root.canonicalize()?,
            writes: Vec::new(),
            sandbox_escapes: 0,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn writes(&self) -> &[FsWrite] {
        &self.writes
    }

    /// Writes that would have landed outside the sandbox. They are refused,
    /// so this stays zero unless path handling is broken.
    pub fn sandbox_escapes(&self) -> usize {
        self.sandbox_escapes
    }

    /// Resolve `name` relative to `base`; returns the virtual path and
    /// whether it left `base`.
    pub fn resolve(&self, base: &str, name: &str) -> Result<(String, bool), FsError> {
        let base_parts = normalize(base)?;
        let parts = normalize(&format!("{base}/{name}"))?;
        if parts.is_empty() {
            return Err(FsError::Refused(name.to_string()));
        }
        let escaped = parts.len() <= base_parts.len() || parts[..base_parts.len()] != base_parts[..];
        Ok((parts.join("/"), escaped))
    }

    fn real_path(&self, virt: &str) -> Result<PathBuf, FsError> {
        let parts = normalize(virt)?;
        let mut p = self.root.clone();
        p.extend(parts);
        Ok(p)
    }

    /// Save `bytes` as `name` under `base`, logging the write.
    pub fn write(&mut self, base: &str, name: &str, bytes: &[u8]) -> Result<FsWrite, FsError> {
        let (resolved, escaped_root) = self.resolve(base, name)?;
        let real = self.real_path(&resolved)?;
        if !real.starts_with(&self.root) {
            self.sandbox_escapes += 1;
            return Err(FsError::Refused(name.to_string()));
        }
        if let Some(parent) = real.parent() {
            fs::create_dir_all(parent)?;
        }
        // a directory created through a symlink could point anywhere
        let parent_real = real.parent().map(|p| p.canonicalize()).transpose()?;
        if parent_real.is_some_and(|p| !p.starts_with(&self.root)) {
            self.sandbox_escapes += 1;
            return Err(FsError::Refused(name.to_string()));
        }
        let overwrote = real.exists();
        fs::write(&real, bytes)?;
        let entry = FsWrite {
            requested: name.to_string(),
            resolved,
            escaped_root,
            overwrote,
        };
        self.writes.push(entry.clone());
        Ok(entry)
    }

    /// Create a file without logging it, for setting up the victim machine.
    pub fn seed_file(&mut self, virt: &str, bytes: &[u8]) -> Result<(), FsError> {
        let real = self.real_path(virt)?;
        if let Some(parent) = real.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(real, bytes)?;
        Ok(())
    }

    pub fn read(&self, virt: &str) -> Result<Vec<u8>, FsError> {
        Ok(fs::read(self.real_path(virt)?)?)
    }

    pub fn exists(&self, virt: &str) -> bool {
        self.real_path(virt).map(|p| p.exists()).unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEMP: &str = "users/victim/appdata/local/temp/qqbrowser";

    #[test]
    fn normalization_handles_both_separators() {
        assert_eq!(normalize(r"a\b/./c/../D").unwrap(), ["a", "b", "d"]);
        assert_eq!(normalize("../../x").unwrap(), ["x"]);
        assert!(normalize("c:/windows").is_err());
    }

    #[test]
    fn plain_name_stays_in_base() {
        let dir = tempfile::tempdir().unwrap();
        let mut vfs = VirtualFs::new(dir.path()).unwrap();
        let w = vfs.write(TEMP, "update.exe", b"x").unwrap();
        assert!(!w.escaped_root);
        assert_eq!(w.resolved, format!("{TEMP}/update.exe"));
        assert_eq!(vfs.read(&w.resolved).unwrap(), b"x");
    }

    #[test]
    fn traversal_is_clamped_to_sandbox_and_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let mut vfs = VirtualFs::new(dir.path().join("drive")).unwrap();
        vfs.seed_file("programfiles/tencent/qqbrowser/qqbrowser.exe", b"genuine").unwrap();
        let name = "../../../../../../../../../programfiles/tencent/qqbrowser/qqbrowser.exe";
        let w = vfs.write(TEMP, name, b"evil").unwrap();
        assert!(w.escaped_root);
        assert!(w.overwrote);
        assert_eq!(w.resolved, "programfiles/tencent/qqbrowser/qqbrowser.exe");
        assert_eq!(vfs.read(&w.resolved).unwrap(), b"evil");
        assert_eq!(vfs.sandbox_escapes(), 0);
        // nothing appeared next to the sandbox
        assert!(!dir.path().join("programfiles").exists());
    }

    #[test]
    fn backslash_traversal() {
        let dir = tempfile::tempdir().unwrap();
        let mut vfs = VirtualFs::new(dir.path()).unwrap();
        let w = vfs.write(TEMP, r"..\..\evil.dll", b"e").unwrap();
        assert!(w.escaped_root);
        assert_eq!(w.resolved, "users/victim/appdata/local/evil.dll");
    }

    #[test]
    fn empty_and_drive_names_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut vfs = VirtualFs::new(dir.path()).unwrap();
        assert!(matches!(vfs.write("", "", b""), Err(FsError::Refused(_))));
        assert!(matches!(vfs.write(TEMP, "c:/x", b""), Err(FsError::Refused(_))));
        assert!(vfs.writes().is_empty());
    }
}

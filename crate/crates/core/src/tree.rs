//! Read-only view over a directory extracted from a partition.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use crate::canonical::sha256_hex;

#[derive(Clone, Debug)]
pub struct FileTree {
    root: PathBuf,
    origin: Option<String>,
}

impl FileTree {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), origin: None }
    }

    /// Labels every file of this tree with the image/partition it came from.
    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = Some(origin.into());
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn origin(&self) -> Option<&str> {
        self.origin.as_deref()
    }

    /// Tree-relative paths of every regular file, forward slashes, sorted.
    /// Symlinks are not followed.
    pub fn files(&self) -> Vec<String> {
        let mut out: Vec<String> = WalkDir::new(&self.root)
            .follow_links(false)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
            .filter_map(|e| e.path().strip_prefix(&self.root).ok().map(normalize))
            .collect();
        out.sort();
        out
    }

    /// Immediate children of a tree-relative directory, sorted by name.
    pub fn children(&self, dir: &str) -> Vec<String> {
        let Ok(entries) = fs::read_dir(self.path(dir)) else {
            return Vec::new();
        };
        let mut out: Vec<String> = entries
            .filter_map(Result::ok)
            .map(|e| join(dir, &e.file_name().to_string_lossy()))
            .collect();
        out.sort();
        out
    }

    pub fn is_empty(&self) -> bool {
        self.files().is_empty()
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        let rel = rel.trim_start_matches('/');
        if rel.is_empty() {
            self.root.clone()
        } else {
            self.root.join(rel)
        }
    }

    pub fn is_file(&self, rel: &str) -> bool {
        fs::symlink_metadata(self.path(rel)).map(|m| m.is_file()).unwrap_or(false)
    }

    pub fn is_dir(&self, rel: &str) -> bool {
        fs::symlink_metadata(self.path(rel)).map(|m| m.is_dir()).unwrap_or(false)
    }

    pub fn read(&self, rel: &str) -> io::Result<Vec<u8>> {
        fs::read(self.path(rel))
    }

    pub fn sha256(&self, rel: &str) -> io::Result<String> {
        self.read(rel).map(|b| sha256_hex(&b))
    }
}

pub fn normalize(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Joins tree-relative fragments with a single forward slash.
pub fn join(base: &str, name: &str) -> String {
    let base = base.trim_end_matches('/');
    let name = name.trim_start_matches('/');
    if base.is_empty() {
        name.to_string()
    } else {
        format!("{base}/{name}")
    }
}

pub fn file_name(rel: &str) -> &str {
    rel.rsplit('/').next().unwrap_or(rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_regular_files_sorted() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("b/c")).unwrap();
        fs::write(dir.path().join("b/c/x.bin"), b"1").unwrap();
        fs::write(dir.path().join("a.txt"), b"2").unwrap();
        let tree = FileTree::new(dir.path());
        assert_eq!(tree.files(), vec!["a.txt", "b/c/x.bin"]);
        assert!(tree.is_dir("b"));
        assert!(tree.is_file("/a.txt"));
        assert_eq!(tree.children("b"), vec!["b/c"]);
    }

    #[test]
    fn empty_tree() {
        let dir = tempfile::tempdir().unwrap();
        assert!(FileTree::new(dir.path()).is_empty());
    }

    #[test]
    fn join_paths() {
        assert_eq!(join("", "x"), "x");
        assert_eq!(join("a/", "/x"), "a/x");
        assert_eq!(file_name("a/b/c.json"), "c.json");
    }
}

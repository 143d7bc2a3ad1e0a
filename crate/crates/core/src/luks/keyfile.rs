use std::cmp::Ordering;
use std::fs;

use serde::{Deserialize, Serialize};

use crate::tree::{file_name, FileTree};

/// File name the device uses for the userdata key.
pub const KEYFILE_NAME: &str = "crypto_keyfile.bin";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyfileCandidate {
    /// Origin label of the tree the file was found in.
    pub origin: Option<String>,
    /// Tree-relative path.
    pub path: String,
    pub size: u64,
    pub depth: usize,
}

impl KeyfileCandidate {
    pub fn is_canonical_name(&self) -> bool {
        file_name(&self.path) == KEYFILE_NAME
    }

    fn rank(&self, other: &Self) -> Ordering {
        other
            .is_canonical_name()
            .cmp(&self.is_canonical_name())
            .then(self.depth.cmp(&other.depth))
            .then_with(|| self.path.cmp(&other.path))
            .then_with(|| self.origin.cmp(&other.origin))
    }
}

/// Every regular file of exactly `key_bytes` bytes, ranked with
/// `crypto_keyfile.bin` first, then by shallower path, then lexicographically.
pub fn hunt_keyfiles(trees: &[FileTree], key_bytes: u64) -> Vec<(KeyfileCandidate, std::path::PathBuf)> {
    let mut found = Vec::new();
    for tree in trees {
        for rel in tree.files() {
            let full = tree.path(&rel);
            let Ok(meta) = fs::symlink_metadata(&full) else { continue };
            if meta.is_file() && meta.len() == key_bytes {
                let depth = rel.matches('/').count();
                let candidate = KeyfileCandidate {
                    origin: tree.origin().map(String::from),
                    path: rel,
                    size: meta.len(),
                    depth,
                };
                found.push((candidate, full));
            }
        }
    }
    found.sort_by(|a, b| a.0.rank(&b.0));
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn write(root: &Path, rel: &str, len: usize) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, vec![0xa5; len]).unwrap();
    }

    #[test]
    fn planted_keyfile_ranks_first() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.bin", 32);
        write(dir.path(), "deep/er/crypto_keyfile.bin", 32);
        write(dir.path(), "big.bin", 33);
        let tree = FileTree::new(dir.path());
        let got: Vec<String> = hunt_keyfiles(&[tree], 32).into_iter().map(|(c, _)| c.path).collect();
        assert_eq!(got, vec!["deep/er/crypto_keyfile.bin", "a.bin"]);
    }

    #[test]
    fn no_candidates() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "x", 31);
        assert!(hunt_keyfiles(&[FileTree::new(dir.path())], 32).is_empty());
    }

    #[test]
    fn decoys_in_deterministic_order() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "z/k.key", 32);
        write(dir.path(), "b/k.key", 32);
        write(dir.path(), "top.key", 32);
        let tree = FileTree::new(dir.path()).with_origin("maps");
        let first: Vec<_> = hunt_keyfiles(std::slice::from_ref(&tree), 32).into_iter().map(|(c, _)| c).collect();
        let again: Vec<_> = hunt_keyfiles(&[tree], 32).into_iter().map(|(c, _)| c).collect();
        assert_eq!(first, again);
        let paths: Vec<_> = first.iter().map(|c| c.path.as_str()).collect();
        assert_eq!(paths, vec!["top.key", "b/k.key", "z/k.key"]);
        assert_eq!(first[0].origin.as_deref(), Some("maps"));
    }
}

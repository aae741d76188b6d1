use std::collections::BTreeMap;
use std::io;
use std::path::{Component, Path};

use thiserror::Error;
use walkdir::WalkDir;

use super::RevisionId;
use crate::model::StudentId;

/// Materialized project contents keyed by `/`-separated relative path.
pub type FileTree = BTreeMap<String, Vec<u8>>;

#[derive(Debug, Error)]
pub enum SnapshotIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("unsafe path in snapshot: {0}")]
    UnsafePath(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SnapshotIoError + '_ {
    move |source| SnapshotIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A project as it was at one revision of a student's repository.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectSnapshot {
    pub student: StudentId,
    pub revision: RevisionId,
    pub files: FileTree,
}

impl ProjectSnapshot {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Reads a directory tree, skipping VCS metadata directories at the root.
    pub fn from_dir(student: StudentId, revision: RevisionId, dir: &Path) -> Result<Self, SnapshotIoError> {
        Ok(ProjectSnapshot {
            student,
            revision,
            files: read_tree(dir)?,
        })
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), SnapshotIoError> {
        write_tree(&self.files, dir)
    }
}

pub fn read_tree(dir: &Path) -> Result<FileTree, SnapshotIoError> {
    let mut files = FileTree::new();
    let walker = WalkDir::new(dir)
        .min_depth(1)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !(e.depth() == 1 && matches!(e.file_name().to_str(), Some(".git" | ".svn"))));
    for entry in walker {
        let entry = entry.map_err(|e| SnapshotIoError::Io {
            path: dir.display().to_string(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walkdir yields children of the root");
        let key = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let bytes = std::fs::read(entry.path()).map_err(io_err(entry.path()))?;
        files.insert(key, bytes);
    }
    Ok(files)
}

/// Rejects absolute paths and `..` so a tree can never write outside `dir`.
pub(crate) fn check_relative(path: &str) -> Result<(), SnapshotIoError> {
    let p = Path::new(path);
    let ok = !path.is_empty()
        && p.components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if ok {
        Ok(())
    } else {
        Err(SnapshotIoError::UnsafePath(path.to_string()))
    }
}

pub fn write_tree(files: &FileTree, dir: &Path) -> Result<(), SnapshotIoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (rel, bytes) in files {
        check_relative(rel)?;
        let target = dir.join(rel);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(&target, bytes).map_err(io_err(&target))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_round_trips_through_disk() {
        let mut files = FileTree::new();
        files.insert("src/Main.java".into(), b"class Main {}\n".to_vec());
        files.insert("README".into(), b"hi".to_vec());
        files.insert("lib/blob.bin".into(), vec![0, 1, 2, 255]);
        let dir = tempfile::tempdir().unwrap();
        write_tree(&files, dir.path()).unwrap();
        std::fs::create_dir_all(dir.path().join(".git")).unwrap();
        std::fs::write(dir.path().join(".git/HEAD"), "ref").unwrap();
        assert_eq!(read_tree(dir.path()).unwrap(), files);
    }

    #[test]
    fn escaping_paths_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for bad in ["../x", "/etc/passwd", "a/../../b", ""] {
            let mut files = FileTree::new();
            files.insert(bad.into(), vec![]);
            assert!(matches!(write_tree(&files, dir.path()), Err(SnapshotIoError::UnsafePath(_))), "{bad}");
        }
    }
}

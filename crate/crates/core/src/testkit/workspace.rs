use std::fs;
use std::io;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::vcs::ProjectSnapshot;

/// Where the acceptance-suite bundle comes from.
pub trait ArtifactSource: Send + Sync {
    /// File name the bundle gets inside each workspace.
    fn file_name(&self) -> String;
    fn read(&self) -> io::Result<Vec<u8>>;
}

/// A bundle on disk. Counts how often it has been read.
#[derive(Debug)]
pub struct FileArtifact {
    path: PathBuf,
    reads: AtomicUsize,
}

impl FileArtifact {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileArtifact {
            path: path.into(),
            reads: AtomicUsize::new(0),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }
}

impl ArtifactSource for FileArtifact {
    fn file_name(&self) -> String {
        self.path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "tests".to_string())
    }

    fn read(&self) -> io::Result<Vec<u8>> {
        self.reads.fetch_add(1, Ordering::SeqCst);
        fs::read(&self.path)
    }
}

/// The bundle, read once and shared immutably by every workspace of a batch.
#[derive(Debug, Clone)]
pub struct ArtifactCache {
    file_name: String,
    bytes: Arc<[u8]>,
    sha256: String,
}

impl ArtifactCache {
    pub fn load(source: &dyn ArtifactSource) -> io::Result<Self> {
        let bytes = source.read()?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        Ok(ArtifactCache {
            file_name: source.file_name(),
            bytes: bytes.into(),
            sha256,
        })
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Hex SHA-256 of the bundle, recorded with every run.
    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    pub fn file_name(&self) -> &str {
        &self.file_name
    }
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("snapshot of `{0}` is empty")]
    SnapshotEmpty(String),
    #[error("disk full while materializing workspace: {0}")]
    DiskFull(String),
    #[error("cannot materialize workspace: {0}")]
    Io(String),
}

impl From<io::Error> for WorkspaceError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::StorageFull {
            WorkspaceError::DiskFull(e.to_string())
        } else {
            WorkspaceError::Io(e.to_string())
        }
    }
}

/// A private directory holding one project and a read-only copy of the tests:
///
/// ```text
/// <root>/project/      student files, working directory of the test command
/// <root>/tests/<name>  the bundle (read-only)
/// <root>/report.xml    where the command must write its report
/// <root>/output.log    captured stdout and stderr
/// ```
#[derive(Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub project: PathBuf,
    pub tests: PathBuf,
    pub report: PathBuf,
    pub log: PathBuf,
}

impl Workspace {
    /// Deletes the workspace, restoring write permission where needed.
    pub fn remove(self) -> io::Result<()> {
        let tests_dir = self.root.join("tests");
        if tests_dir.exists() {
            fs::set_permissions(&tests_dir, fs::Permissions::from_mode(0o755))?;
        }
        fs::remove_dir_all(&self.root)
    }
}

/// Lays out a fresh workspace for `snapshot` under `parent`.
pub fn materialize_workspace(
    parent: &Path,
    snapshot: &ProjectSnapshot,
    cache: &ArtifactCache,
) -> Result<Workspace, WorkspaceError> {
    if snapshot.is_empty() {
        return Err(WorkspaceError::SnapshotEmpty(snapshot.student.to_string()));
    }
    fs::create_dir_all(parent)?;
    let root = tempfile::Builder::new()
        .prefix(&format!("{}-", snapshot.student))
        .tempdir_in(parent)?
        .keep();
    let root = fs::canonicalize(&root)?;
    let project = root.join("project");
    snapshot.write_to(&project).map_err(|e| match e {
        crate::vcs::SnapshotIoError::Io { source, .. } => WorkspaceError::from(source),
        other => WorkspaceError::Io(other.to_string()),
    })?;

    let tests_dir = root.join("tests");
    fs::create_dir(&tests_dir)?;
    let tests = tests_dir.join(cache.file_name());
    fs::write(&tests, cache.bytes())?;
    fs::set_permissions(&tests, fs::Permissions::from_mode(0o555))?;
    fs::set_permissions(&tests_dir, fs::Permissions::from_mode(0o555))?;

    Ok(Workspace {
        report: root.join("report.xml"),
        log: root.join("output.log"),
        root,
        project,
        tests,
    })
}

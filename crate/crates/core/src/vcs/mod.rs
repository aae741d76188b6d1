//! Per-student repository provisioning, seeding and reading.
//!
//! Everything goes through a [`VcsAdapter`]: [`GitAdapter`] drives the `git`
//! CLI over local bare repositories, [`FakeAdapter`] keeps repositories in
//! memory and records every call for isolation checks. [`Gateway`] layers the
//! exam rules (one repository per student, teacher-authored seed commit,
//! dedicated test repository) on top of whichever adapter is in use.

mod fake;
mod git;
mod snapshot;

pub use fake::{AdapterCall, FakeAdapter};
pub use git::GitAdapter;
pub use snapshot::{read_tree, write_tree, FileTree, ProjectSnapshot, SnapshotIoError};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::distributions::Alphanumeric;
use rand::rngs::OsRng;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{ExamSession, StudentId, Timestamp};

pub const TOKEN_LEN: usize = 32;

/// Repository name suffix of the per-session test repository. Student ids
/// cannot start with a dot, so this never collides with a student repository.
pub const TEST_REPO_NAME: &str = ".tests";

#[derive(Debug, Error)]
pub enum VcsError {
    #[error("repository for `{0}` already exists")]
    RepoExists(String),
    #[error("repository {0} does not exist")]
    RepoMissing(String),
    #[error("revision {rev} not found in {uri}")]
    RevisionMissing { uri: String, rev: String },
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("history invariant violated in {uri}: {detail}")]
    InvariantViolation { uri: String, detail: String },
    #[error("seeding `{student}` failed: {reason}")]
    SeedFailure { student: String, reason: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// Opaque revision identifier (commit hash for git).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RevisionId(pub String);

impl RevisionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RevisionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub revision: RevisionId,
    pub author: String,
    pub timestamp: Timestamp,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credential {
    pub username: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoHandle {
    pub student: StudentId,
    pub uri: String,
    pub credentials: Credential,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileChange {
    Write { path: String, contents: Vec<u8> },
    Delete { path: String },
}

impl FileChange {
    pub fn write(path: impl Into<String>, contents: impl Into<Vec<u8>>) -> Self {
        FileChange::Write {
            path: path.into(),
            contents: contents.into(),
        }
    }

    pub fn path(&self) -> &str {
        match self {
            FileChange::Write { path, .. } | FileChange::Delete { path } => path,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CommitRequest<'a> {
    pub author: &'a str,
    pub message: &'a str,
    /// Explicit commit time; `None` uses the repository's own clock.
    pub timestamp: Option<Timestamp>,
    pub changes: &'a [FileChange],
}

/// Storage primitives a version-control backend must provide.
pub trait VcsAdapter: Send + Sync {
    /// Maps a repository name such as `2017-06/s100` to the adapter's locator.
    fn locate(&self, name: &str) -> String;
    fn exists(&self, uri: &str) -> Result<bool, VcsError>;
    /// Creates an empty repository. Fails with `RepoExists` if present.
    fn create(&self, uri: &str) -> Result<(), VcsError>;
    fn commit(&self, uri: &str, request: &CommitRequest<'_>) -> Result<RevisionId, VcsError>;
    /// Full history, oldest first.
    fn log(&self, uri: &str) -> Result<Vec<CommitRecord>, VcsError>;
    fn checkout(&self, uri: &str, revision: &RevisionId) -> Result<FileTree, VcsError>;
}

/// Results of seeding: revisions for the repositories that succeeded and one
/// error per repository that did not.
#[derive(Debug, Default)]
pub struct SeedReport {
    pub revisions: BTreeMap<StudentId, RevisionId>,
    pub failures: Vec<(StudentId, VcsError)>,
}

impl SeedReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

pub struct Gateway<'a> {
    adapter: &'a dyn VcsAdapter,
    session_id: String,
    teacher: String,
}

impl<'a> Gateway<'a> {
    pub fn new(adapter: &'a dyn VcsAdapter, session: &ExamSession) -> Self {
        Gateway {
            adapter,
            session_id: session.session_id.clone(),
            teacher: session.teacher_identity.clone(),
        }
    }

    pub fn adapter(&self) -> &dyn VcsAdapter {
        self.adapter
    }

    pub fn teacher_identity(&self) -> &str {
        &self.teacher
    }

    pub fn repo_name(&self, student: &StudentId) -> String {
        format!("{}/{}", self.session_id, student)
    }

    pub fn repo_uri(&self, student: &StudentId) -> String {
        self.adapter.locate(&self.repo_name(student))
    }

    /// Creates one empty repository per student with fresh credentials.
    /// Refuses to run if any of the repositories already exists.
    pub fn provision_repos(&self, roster: &[StudentId]) -> Result<Vec<RepoHandle>, VcsError> {
        if roster.is_empty() {
            return Err(VcsError::Precondition("roster is empty".into()));
        }
        for student in roster {
            if self.adapter.exists(&self.repo_uri(student))? {
                return Err(VcsError::RepoExists(student.to_string()));
            }
        }
        let tokens = generate_tokens(roster.len());
        let handles: Vec<RepoHandle> = roster
            .iter()
            .zip(tokens)
            .map(|(student, token)| RepoHandle {
                student: student.clone(),
                uri: self.repo_uri(student),
                credentials: Credential {
                    username: student.to_string(),
                    token,
                },
            })
            .collect();
        handles
            .par_iter()
            .try_for_each(|h| self.adapter.create(&h.uri).map_err(|e| relabel_exists(e, &h.student)))?;
        Ok(handles)
    }

    /// Commits the initial project to every repository as the teacher.
    /// Failures are collected; the remaining repositories are still seeded.
    pub fn seed_initial_project(
        &self,
        handles: &[RepoHandle],
        project: &FileTree,
    ) -> Result<SeedReport, VcsError> {
        if project.is_empty() {
            return Err(VcsError::Precondition("initial project is empty".into()));
        }
        let changes: Vec<FileChange> = project
            .iter()
            .map(|(path, bytes)| FileChange::write(path.clone(), bytes.clone()))
            .collect();
        let request = CommitRequest {
            author: &self.teacher,
            message: "Initial project",
            timestamp: None,
            changes: &changes,
        };
        let results: Vec<(StudentId, Result<RevisionId, VcsError>)> = handles
            .par_iter()
            .map(|h| {
                let result = self.seed_one(h, &request).map_err(|e| VcsError::SeedFailure {
                    student: h.student.to_string(),
                    reason: e.to_string(),
                });
                (h.student.clone(), result)
            })
            .collect();
        let mut report = SeedReport::default();
        for (student, result) in results {
            match result {
                Ok(rev) => {
                    report.revisions.insert(student, rev);
                }
                Err(e) => report.failures.push((student, e)),
            }
        }
        Ok(report)
    }

    fn seed_one(&self, handle: &RepoHandle, request: &CommitRequest<'_>) -> Result<RevisionId, VcsError> {
        if !self.adapter.log(&handle.uri)?.is_empty() {
            return Err(VcsError::Precondition("repository already has commits".into()));
        }
        self.adapter.commit(&handle.uri, request)
    }

    /// History oldest first, with the timestamp ordering checked.
    pub fn list_commits(&self, handle: &RepoHandle) -> Result<Vec<CommitRecord>, VcsError> {
        let commits = self.adapter.log(&handle.uri)?;
        if let Some(pair) = commits.windows(2).find(|w| w[1].timestamp < w[0].timestamp) {
            return Err(VcsError::InvariantViolation {
                uri: handle.uri.clone(),
                detail: format!(
                    "commit {} ({}) follows {} ({})",
                    pair[1].revision, pair[1].timestamp, pair[0].revision, pair[0].timestamp
                ),
            });
        }
        Ok(commits)
    }

    pub fn snapshot_at(&self, handle: &RepoHandle, revision: &RevisionId) -> Result<ProjectSnapshot, VcsError> {
        let files = self.adapter.checkout(&handle.uri, revision)?;
        Ok(ProjectSnapshot {
            student: handle.student.clone(),
            revision: revision.clone(),
            files,
        })
    }

    /// Handle of the session's dedicated test repository, created on first use.
    pub fn ensure_test_repo(&self) -> Result<RepoHandle, VcsError> {
        let uri = self.adapter.locate(&format!("{}/{}", self.session_id, TEST_REPO_NAME));
        if !self.adapter.exists(&uri)? {
            self.adapter.create(&uri)?;
        }
        Ok(RepoHandle {
            student: StudentId::new("tests").expect("static id"),
            uri,
            credentials: Credential {
                username: "tests".into(),
                token: generate_tokens(1).remove(0),
            },
        })
    }

    /// Commits the artifact to the test repository. Each call adds a revision.
    pub fn publish_tests(&self, test_repo: &RepoHandle, artifact: &Path) -> Result<RevisionId, VcsError> {
        let bytes = std::fs::read(artifact)
            .map_err(|e| VcsError::StorageFailure(format!("cannot read {}: {e}", artifact.display())))?;
        let name = artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| VcsError::StorageFailure(format!("{} has no file name", artifact.display())))?;
        let changes = [FileChange::write(name, bytes)];
        self.adapter.commit(
            &test_repo.uri,
            &CommitRequest {
                author: &self.teacher,
                message: "Publish acceptance tests",
                timestamp: None,
                changes: &changes,
            },
        )
    }
}

pub(crate) fn check_changes(changes: &[FileChange]) -> Result<(), VcsError> {
    for change in changes {
        snapshot::check_relative(change.path()).map_err(|e| VcsError::StorageFailure(e.to_string()))?;
        if change.path().split('/').next() == Some(".git") {
            return Err(VcsError::StorageFailure(format!("reserved path {}", change.path())));
        }
    }
    Ok(())
}

fn relabel_exists(err: VcsError, student: &StudentId) -> VcsError {
    match err {
        VcsError::RepoExists(_) => VcsError::RepoExists(student.to_string()),
        other => other,
    }
}

/// Generates `n` distinct random tokens from the operating system RNG.
pub fn generate_tokens(n: usize) -> Vec<String> {
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let token: String = OsRng
            .sample_iter(&Alphanumeric)
            .take(TOKEN_LEN)
            .map(char::from)
            .collect();
        if seen.insert(token.clone()) {
            out.push(token);
        }
    }
    out
}

/// Latest student commit strictly before the deadline.
pub fn select_lab_revision<'c>(
    commits: &'c [CommitRecord],
    deadline: Timestamp,
    teacher: &str,
) -> Option<&'c CommitRecord> {
    commits
        .iter().rfind(|c| c.author != teacher && c.timestamp < deadline)
}

/// Latest student commit overall.
pub fn select_home_revision<'c>(commits: &'c [CommitRecord], teacher: &str) -> Option<&'c CommitRecord> {
    commits.iter().rfind(|c| c.author != teacher)
}

pub fn student_commit_count(commits: &[CommitRecord], teacher: &str) -> usize {
    commits.iter().filter(|c| c.author != teacher).count()
}

#[derive(Debug, Error)]
pub enum CredentialsCsvError {
    #[error("credentials csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("credentials csv: {0}")]
    Invalid(String),
}

pub fn write_credentials_csv(handles: &[RepoHandle]) -> Result<String, CredentialsCsvError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["student_id", "repo_uri", "username", "token"])?;
    for h in handles {
        w.write_record([
            h.student.as_str(),
            &h.uri,
            &h.credentials.username,
            &h.credentials.token,
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CredentialsCsvError::Invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CredentialsCsvError::Invalid(e.to_string()))
}

pub fn read_credentials_csv(text: &str) -> Result<Vec<RepoHandle>, CredentialsCsvError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["student_id", "repo_uri", "username", "token"] {
        return Err(CredentialsCsvError::Invalid(format!("unexpected header {headers:?}")));
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let student = StudentId::new(&record[0]).map_err(|e| CredentialsCsvError::Invalid(e.to_string()))?;
        out.push(RepoHandle {
            student,
            uri: record[1].to_string(),
            credentials: Credential {
                username: record[2].to_string(),
                token: record[3].to_string(),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rev: &str, author: &str, ts: i64) -> CommitRecord {
        CommitRecord {
            revision: RevisionId(rev.into()),
            author: author.into(),
            timestamp: Timestamp::from_unix(ts),
            message: String::new(),
        }
    }

    const T: i64 = 10_000;

    #[test]
    fn lab_revision_is_last_before_deadline() {
        let commits = vec![
            rec("seed", "teacher", 0),
            rec("a", "s1", T - 1800),
            rec("b", "s1", T - 300),
            rec("c", "s1", T + 180),
        ];
        assert_eq!(select_lab_revision(&commits, Timestamp::from_unix(T), "teacher").unwrap().revision.0, "b");
    }

    #[test]
    fn lab_revision_excludes_seed_and_deadline_second() {
        let commits = vec![rec("seed", "teacher", 0)];
        assert!(select_lab_revision(&commits, Timestamp::from_unix(T), "teacher").is_none());
        let commits = vec![rec("seed", "teacher", 0), rec("at", "s1", T)];
        assert!(select_lab_revision(&commits, Timestamp::from_unix(T), "teacher").is_none());
        let commits = vec![rec("seed", "teacher", 0), rec("x", "s1", T - 1), rec("at", "s1", T)];
        assert_eq!(select_lab_revision(&commits, Timestamp::from_unix(T), "teacher").unwrap().revision.0, "x");
    }

    #[test]
    fn home_revision() {
        let commits = vec![rec("seed", "teacher", 0), rec("lab", "s1", T - 5), rec("home", "s1", T + 86_400)];
        assert_eq!(select_home_revision(&commits, "teacher").unwrap().revision.0, "home");
        assert_eq!(select_home_revision(&commits[..2], "teacher").unwrap().revision.0, "lab");
        assert!(select_home_revision(&commits[..1], "teacher").is_none());
        // feedback commits authored by the teacher never count
        let mut with_feedback = commits.clone();
        with_feedback.push(rec("fb", "teacher", T + 90_000));
        assert_eq!(select_home_revision(&with_feedback, "teacher").unwrap().revision.0, "home");
        assert_eq!(student_commit_count(&with_feedback, "teacher"), 2);
    }

    #[test]
    fn tokens_are_long_and_unique() {
        let tokens = generate_tokens(500);
        assert!(tokens.iter().all(|t| t.len() >= 16 && t.chars().all(|c| c.is_ascii_alphanumeric())));
        assert_eq!(tokens.iter().collect::<HashSet<_>>().len(), 500);
    }

    #[test]
    fn credentials_csv_round_trip() {
        let handles = vec![RepoHandle {
            student: StudentId::new("s1").unwrap(),
            uri: "mem://x/s1".into(),
            credentials: Credential {
                username: "s1".into(),
                token: "abc".into(),
            },
        }];
        let text = write_credentials_csv(&handles).unwrap();
        assert!(text.starts_with("student_id,repo_uri,username,token\n"));
        assert_eq!(read_credentials_csv(&text).unwrap(), handles);
    }
}

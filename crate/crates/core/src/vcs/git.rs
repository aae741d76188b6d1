use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use super::snapshot::read_tree;
use super::{check_changes, CommitRecord, CommitRequest, FileChange, FileTree, RevisionId, VcsAdapter, VcsError};
use crate::model::Timestamp;

const BRANCH: &str = "main";
const EMAIL_DOMAIN: &str = "examforge.invalid";

/// Drives the `git` command-line tool over bare repositories stored under
/// `root`. Repository `a/b` lives at `<root>/a/b.git`.
#[derive(Debug, Clone)]
pub struct GitAdapter {
    root: PathBuf,
    git: PathBuf,
}

impl GitAdapter {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        GitAdapter {
            root: root.into(),
            git: PathBuf::from("git"),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Whether a usable `git` binary is on the PATH.
    pub fn available() -> bool {
        Command::new("git")
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new(&self.git);
        // Ignore operator configuration (signing, hooks, templates).
        cmd.env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_CONFIG_GLOBAL", "/dev/null")
            .env("GIT_TERMINAL_PROMPT", "0")
            .env("GIT_COMMITTER_NAME", "examforge")
            .env("GIT_COMMITTER_EMAIL", format!("examforge@{EMAIL_DOMAIN}"))
            .args(["-c", "init.defaultBranch=main", "-c", "core.autocrlf=false"]);
        cmd
    }

    fn run(&self, mut cmd: Command, what: &str) -> Result<Output, VcsError> {
        let out = cmd
            .output()
            .map_err(|e| VcsError::StorageFailure(format!("git {what}: {e}")))?;
        if out.status.success() {
            Ok(out)
        } else {
            Err(VcsError::StorageFailure(format!(
                "git {what} failed: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            )))
        }
    }

    fn has_commits(&self, uri: &str) -> Result<bool, VcsError> {
        let mut cmd = self.command();
        cmd.arg("--git-dir")
            .arg(uri)
            .args(["rev-parse", "-q", "--verify", &format!("refs/heads/{BRANCH}")]);
        let out = cmd
            .output()
            .map_err(|e| VcsError::StorageFailure(format!("git rev-parse: {e}")))?;
        Ok(out.status.success())
    }

    fn require(&self, uri: &str) -> Result<(), VcsError> {
        if self.exists(uri)? {
            Ok(())
        } else {
            Err(VcsError::RepoMissing(uri.to_string()))
        }
    }

    fn clone_into(&self, uri: &str, dest: &Path) -> Result<(), VcsError> {
        let mut cmd = self.command();
        cmd.args(["clone", "-q", "--no-hardlinks"]).arg(uri).arg(dest);
        self.run(cmd, "clone")?;
        let mut cmd = self.command();
        cmd.arg("-C")
            .arg(dest)
            .args(["symbolic-ref", "HEAD", &format!("refs/heads/{BRANCH}")]);
        self.run(cmd, "symbolic-ref")?;
        Ok(())
    }
}

fn storage(e: std::io::Error) -> VcsError {
    VcsError::StorageFailure(e.to_string())
}

impl VcsAdapter for GitAdapter {
    fn locate(&self, name: &str) -> String {
        self.root.join(format!("{name}.git")).to_string_lossy().into_owned()
    }

    fn exists(&self, uri: &str) -> Result<bool, VcsError> {
        Ok(Path::new(uri).join("HEAD").is_file())
    }

    fn create(&self, uri: &str) -> Result<(), VcsError> {
        let path = Path::new(uri);
        if path.exists() {
            return Err(VcsError::RepoExists(uri.to_string()));
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(storage)?;
        }
        let mut cmd = self.command();
        cmd.args(["init", "-q", "--bare"]).arg(path);
        self.run(cmd, "init --bare")?;
        Ok(())
    }

    fn commit(&self, uri: &str, request: &CommitRequest<'_>) -> Result<RevisionId, VcsError> {
        check_changes(request.changes)?;
        self.require(uri)?;
        let scratch = tempfile::tempdir().map_err(storage)?;
        let work = scratch.path().join("w");
        self.clone_into(uri, &work)?;

        for change in request.changes {
            match change {
                FileChange::Write { path, contents } => {
                    let target = work.join(path);
                    if let Some(parent) = target.parent() {
                        std::fs::create_dir_all(parent).map_err(storage)?;
                    }
                    std::fs::write(&target, contents).map_err(storage)?;
                }
                FileChange::Delete { path } => match std::fs::remove_file(work.join(path)) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                    Err(e) => return Err(storage(e)),
                },
            }
        }

        let mut cmd = self.command();
        cmd.arg("-C").arg(&work).args(["add", "-A"]);
        self.run(cmd, "add")?;

        let mut cmd = self.command();
        cmd.arg("-C")
            .arg(&work)
            .args(["commit", "-q", "--allow-empty", "--no-verify", "-m", request.message])
            .arg(format!("--author={} <{}@{EMAIL_DOMAIN}>", request.author, request.author));
        if let Some(ts) = request.timestamp {
            let date = format!("@{} +0000", ts.unix());
            cmd.arg(format!("--date={date}"))
                .env("GIT_AUTHOR_DATE", &date)
                .env("GIT_COMMITTER_DATE", &date);
        }
        self.run(cmd, "commit")?;

        let mut cmd = self.command();
        cmd.arg("-C")
            .arg(&work)
            .args(["push", "-q", "origin", &format!("HEAD:refs/heads/{BRANCH}")]);
        self.run(cmd, "push")?;

        let mut cmd = self.command();
        cmd.arg("-C").arg(&work).args(["rev-parse", "HEAD"]);
        let out = self.run(cmd, "rev-parse")?;
        Ok(RevisionId(String::from_utf8_lossy(&out.stdout).trim().to_string()))
    }

    fn log(&self, uri: &str) -> Result<Vec<CommitRecord>, VcsError> {
        self.require(uri)?;
        if !self.has_commits(uri)? {
            return Ok(Vec::new());
        }
        let mut cmd = self.command();
        cmd.arg("--git-dir")
            .arg(uri)
            .args(["log", "--reverse", "--format=%H|%an|%ct|%s", BRANCH]);
        let out = self.run(cmd, "log")?;
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| !l.is_empty())
            .map(|line| parse_log_line(uri, line))
            .collect()
    }

    fn checkout(&self, uri: &str, revision: &RevisionId) -> Result<FileTree, VcsError> {
        self.require(uri)?;
        let missing = || VcsError::RevisionMissing {
            uri: uri.to_string(),
            rev: revision.to_string(),
        };
        if revision.0.is_empty() || revision.0.starts_with('-') {
            return Err(missing());
        }
        let mut cmd = self.command();
        cmd.arg("--git-dir")
            .arg(uri)
            .args(["cat-file", "-e", &format!("{}^{{commit}}", revision.0)]);
        if !cmd.output().map_err(storage)?.status.success() {
            return Err(missing());
        }
        let scratch = tempfile::tempdir().map_err(storage)?;
        let work = scratch.path().join("w");
        self.clone_into(uri, &work)?;
        let mut cmd = self.command();
        cmd.arg("-C")
            .arg(&work)
            .args(["checkout", "-q", "--detach", &revision.0]);
        self.run(cmd, "checkout")?;
        read_tree(&work).map_err(|e| VcsError::StorageFailure(e.to_string()))
    }
}

fn parse_log_line(uri: &str, line: &str) -> Result<CommitRecord, VcsError> {
    let bad = || VcsError::StorageFailure(format!("unparseable log line in {uri}: {line:?}"));
    let mut parts = line.splitn(4, '|');
    let hash = parts.next().ok_or_else(bad)?;
    let author = parts.next().ok_or_else(bad)?;
    let ts: i64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let subject = parts.next().unwrap_or("");
    Ok(CommitRecord {
        revision: RevisionId(hash.to_string()),
        author: author.to_string(),
        timestamp: Timestamp::from_unix(ts),
        message: subject.to_string(),
    })
}

//! Operator-facing subcommands for running an exam session end to end.
//!
//! Every command works inside a session directory with a fixed layout:
//!
//! ```text
//! <session>/credentials.csv
//! <session>/submissions/{lab,home}/<student>/
//! <session>/submissions/{lab,home}/manifest.csv
//! <session>/grades.csv
//! <session>/compliance.csv
//! <session>/histogram.csv
//! ```
//!
//! Commands take the VCS adapter as a trait object so the same code drives
//! git repositories and the in-memory fake.

mod churn_cmd;
mod collect;
mod comply;
mod grade;
mod provision;
mod watch;

pub use churn_cmd::cmd_churn;
pub use collect::{cmd_collect, read_manifest, ManifestEntry, SubmissionStatus, Which};
pub use comply::cmd_comply;
pub use grade::cmd_grade;
pub use provision::{cmd_distribute_tests, cmd_provision};
pub use watch::{cmd_watch, poll_once, PollSummary, WatchOptions, WatchState, FEEDBACK_FILE};

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use examforge_core::vcs::VcsAdapter;
use examforge_core::ExamSession;
use thiserror::Error;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    /// Bad input or a refusal to overwrite existing output.
    ValidationError,
    /// Some items failed; a per-item report was written.
    PartialFailure,
    /// Storage, process or repository failure.
    InfrastructureFailure,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::ValidationError => 1,
            ExitStatus::PartialFailure => 2,
            ExitStatus::InfrastructureFailure => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum CmdError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Infrastructure(String),
}

impl CmdError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CmdError::Validation(_) => ExitStatus::ValidationError,
            CmdError::Infrastructure(_) => ExitStatus::InfrastructureFailure,
        }
    }
}

pub type CmdResult = Result<ExitStatus, CmdError>;

pub(crate) fn infra(what: impl std::fmt::Display) -> impl FnOnce(io::Error) -> CmdError {
    move |e| CmdError::Infrastructure(format!("{what}: {e}"))
}

/// File locations inside a session directory.
#[derive(Debug, Clone)]
pub struct SessionPaths {
    pub root: PathBuf,
}

impl SessionPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SessionPaths { root: root.into() }
    }

    pub fn credentials(&self) -> PathBuf {
        self.root.join("credentials.csv")
    }

    pub fn seed_failures(&self) -> PathBuf {
        self.root.join("seed_failures.csv")
    }

    pub fn submissions(&self, which: Which) -> PathBuf {
        self.root.join("submissions").join(which.as_str())
    }

    pub fn collect_errors(&self, which: Which) -> PathBuf {
        self.root.join(format!("collect_errors_{}.csv", which.as_str()))
    }

    pub fn grades(&self) -> PathBuf {
        self.root.join("grades.csv")
    }

    pub fn grade_errors(&self) -> PathBuf {
        self.root.join("grade_errors.csv")
    }

    pub fn runs(&self) -> PathBuf {
        self.root.join("runs.csv")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn compliance(&self) -> PathBuf {
        self.root.join("compliance.csv")
    }

    pub fn histogram(&self) -> PathBuf {
        self.root.join("histogram.csv")
    }

    pub fn watch_state(&self) -> PathBuf {
        self.root.join("watch_state.csv")
    }

    pub fn lock(&self) -> PathBuf {
        self.root.join(".examforge.lock")
    }
}

/// Everything a session command needs.
pub struct Context<'a> {
    pub session: ExamSession,
    pub paths: SessionPaths,
    pub adapter: &'a dyn VcsAdapter,
}

/// Exclusive claim on a session directory, released on drop.
#[derive(Debug)]
pub struct SessionLock {
    path: PathBuf,
}

impl SessionLock {
    /// Takes the lock, reclaiming it if the process that left it is gone.
    pub fn acquire(paths: &SessionPaths) -> Result<Self, CmdError> {
        fs::create_dir_all(&paths.root).map_err(infra(paths.root.display()))?;
        let path = paths.lock();
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(SessionLock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if !holder_is_gone(&path) {
                        break;
                    }
                    log::warn!("removing stale lock {}", path.display());
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(infra(path.display())(e)),
            }
        }
        Err(CmdError::Validation(format!(
            "{} is held by another examforge process",
            path.display()
        )))
    }
}

fn holder_is_gone(lock: &Path) -> bool {
    let Some(pid) = fs::read_to_string(lock)
        .ok()
        .and_then(|s| s.trim().parse::<libc::pid_t>().ok())
    else {
        return false;
    };
    // Signal 0 only checks whether the process exists.
    let alive = unsafe { libc::kill(pid, 0) } == 0
        || io::Error::last_os_error().raw_os_error() == Some(libc::EPERM);
    !alive
}

impl Drop for SessionLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes `contents` to a file that must not exist yet.
pub(crate) fn write_new(path: &Path, contents: &str) -> Result<(), CmdError> {
    match OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(mut f) => f.write_all(contents.as_bytes()).map_err(infra(path.display())),
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CmdError::Validation(format!(
            "{} already exists; move it away to regenerate",
            path.display()
        ))),
        Err(e) => Err(infra(path.display())(e)),
    }
}

/// Renders rows as CSV with a header.
pub(crate) fn csv_text<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

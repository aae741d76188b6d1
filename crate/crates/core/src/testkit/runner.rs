use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom};
use std::os::unix::process::CommandExt;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;
use wait_timeout::ChildExt;

use super::report::{parse_test_report, TestReport};
use super::workspace::Workspace;
use crate::model::{ExamSession, StudentId};

pub const PLACEHOLDERS: [&str; 3] = ["{workspace}", "{tests}", "{report}"];

/// Bytes of captured output kept in a [`RunOutcome`].
pub const LOG_EXCERPT_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomeKind {
    Report(TestReport),
    CompileError,
    Timeout,
    InfraError,
}

impl OutcomeKind {
    pub fn label(&self) -> &'static str {
        match self {
            OutcomeKind::Report(_) => "Report",
            OutcomeKind::CompileError => "CompileError",
            OutcomeKind::Timeout => "Timeout",
            OutcomeKind::InfraError => "InfraError",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub student: StudentId,
    pub kind: OutcomeKind,
    pub duration: Duration,
    pub log_excerpt: String,
    /// SHA-256 of the test bundle the run used.
    pub artifact_sha256: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("test command template lacks placeholder {0}")]
    MissingPlaceholder(&'static str),
}

/// How to invoke the acceptance suite for one project.
#[derive(Debug, Clone)]
pub struct RunSettings {
    command_template: String,
    pub timeout: Duration,
    pub compile_error_markers: Vec<String>,
}

impl RunSettings {
    pub fn new(
        command_template: impl Into<String>,
        timeout: Duration,
        compile_error_markers: Vec<String>,
    ) -> Result<Self, TemplateError> {
        let command_template = command_template.into();
        for p in PLACEHOLDERS {
            if !command_template.contains(p) {
                return Err(TemplateError::MissingPlaceholder(p));
            }
        }
        Ok(RunSettings {
            command_template,
            timeout,
            compile_error_markers,
        })
    }

    pub fn from_session(session: &ExamSession) -> Result<Self, TemplateError> {
        RunSettings::new(
            session.test_command.clone(),
            Duration::from_secs(session.timeout_secs),
            session.compile_error_markers.clone(),
        )
    }

    pub fn command_template(&self) -> &str {
        &self.command_template
    }

    pub fn render(&self, ws: &Workspace) -> String {
        self.command_template
            .replace("{workspace}", &ws.project.to_string_lossy())
            .replace("{tests}", &ws.tests.to_string_lossy())
            .replace("{report}", &ws.report.to_string_lossy())
    }
}

/// Runs the suite in a child process group rooted in the workspace and
/// classifies what happened. Never fails: problems become outcome kinds.
pub fn run_test_suite(ws: &Workspace, student: &StudentId, settings: &RunSettings) -> RunOutcome {
    let started = Instant::now();
    let (kind, note) = execute(ws, settings);
    let mut log_excerpt = read_tail(&ws.log, LOG_EXCERPT_LEN);
    if let Some(note) = note {
        if !log_excerpt.is_empty() && !log_excerpt.ends_with('\n') {
            log_excerpt.push('\n');
        }
        log_excerpt.push_str(&format!("[examforge] {note}"));
    }
    RunOutcome {
        student: student.clone(),
        kind,
        duration: started.elapsed(),
        log_excerpt,
        artifact_sha256: None,
    }
}

fn execute(ws: &Workspace, settings: &RunSettings) -> (OutcomeKind, Option<String>) {
    let log = match File::create(&ws.log).and_then(|f| Ok((f.try_clone()?, f))) {
        Ok(pair) => pair,
        Err(e) => return (OutcomeKind::InfraError, Some(format!("cannot create log: {e}"))),
    };
    let _ = fs::remove_file(&ws.report);

    let mut child = match Command::new("sh")
        .arg("-c")
        .arg(settings.render(ws))
        .current_dir(&ws.project)
        .stdin(Stdio::null())
        .stdout(Stdio::from(log.0))
        .stderr(Stdio::from(log.1))
        .process_group(0)
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return (OutcomeKind::InfraError, Some(format!("cannot spawn test command: {e}"))),
    };
    let pgid = child.id() as libc::pid_t;

    let status = match child.wait_timeout(settings.timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            kill_group(pgid);
            let _ = child.wait();
            return (
                OutcomeKind::Timeout,
                Some(format!("killed after {:?}", settings.timeout)),
            );
        }
        Err(e) => {
            kill_group(pgid);
            let _ = child.wait();
            return (OutcomeKind::InfraError, Some(format!("wait failed: {e}")));
        }
    };
    // Stray background processes must not outlive the run.
    kill_group(pgid);

    if ws.report.is_file() {
        return match fs::read_to_string(&ws.report) {
            Ok(xml) => match parse_test_report(&xml) {
                Ok(report) => (OutcomeKind::Report(report), None),
                Err(e) => (OutcomeKind::InfraError, Some(e.to_string())),
            },
            Err(e) => (OutcomeKind::InfraError, Some(format!("cannot read report: {e}"))),
        };
    }
    let output = read_tail(&ws.log, 1 << 20);
    let diagnosed = settings
        .compile_error_markers
        .iter()
        .any(|m| output.contains(m.as_str()));
    match status.code() {
        Some(code) if code != 0 && diagnosed => (OutcomeKind::CompileError, None),
        Some(code) => (
            OutcomeKind::InfraError,
            Some(format!("exit status {code} and no report")),
        ),
        None => (OutcomeKind::InfraError, Some(format!("terminated by signal ({status})"))),
    }
}

fn kill_group(pgid: libc::pid_t) {
    // ESRCH (group already gone) is fine.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

fn read_tail(path: &std::path::Path, limit: usize) -> String {
    let mut file = match File::open(path) {
        Ok(f) => f,
        Err(_) => return String::new(),
    };
    let len = file.metadata().map(|m| m.len()).unwrap_or(0);
    let start = len.saturating_sub(limit as u64);
    if file.seek(SeekFrom::Start(start)).is_err() {
        return String::new();
    }
    let mut buf = Vec::new();
    let _ = file.read_to_end(&mut buf);
    String::from_utf8_lossy(&buf).into_owned()
}

//! Acceptance testing of many student projects.
//!
//! A batch reads the test bundle from its origin once, then hands each project
//! to a pool of workers. Every project gets its own workspace directory and
//! its own child process group; the only thing workspaces share is a copy of
//! the cached bundle bytes.

pub mod report;
mod runner;
mod workspace;

pub use report::{parse_test_report, MalformedReport, Outcome, TestCaseResult, TestReport};
pub use runner::{run_test_suite, OutcomeKind, RunOutcome, RunSettings, TemplateError, PLACEHOLDERS};
pub use workspace::{materialize_workspace, ArtifactCache, ArtifactSource, FileArtifact, Workspace, WorkspaceError};

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use crate::model::ExamSession;
use crate::vcs::ProjectSnapshot;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("cannot read test artifact: {0}")]
    Artifact(std::io::Error),
    #[error("cannot create batch directory: {0}")]
    WorkDir(std::io::Error),
}

#[derive(Debug, Clone)]
pub struct BatchSettings {
    pub run: RunSettings,
    /// Parent of the per-batch scratch directory; system temp dir if unset.
    pub work_root: Option<PathBuf>,
    pub keep_workspaces: bool,
}

impl BatchSettings {
    pub fn from_session(session: &ExamSession) -> Result<Self, TemplateError> {
        Ok(BatchSettings {
            run: RunSettings::from_session(session)?,
            work_root: None,
            keep_workspaces: false,
        })
    }
}

#[derive(Debug)]
pub struct BatchResult {
    /// One outcome per input snapshot, ordered by student id.
    pub outcomes: Vec<RunOutcome>,
    pub artifact_sha256: String,
}

/// Tests every snapshot against the session's suite with `workers` parallel
/// executors.
pub fn grade_batch(
    snapshots: &[ProjectSnapshot],
    session: &ExamSession,
    workers: usize,
) -> Result<Vec<RunOutcome>, BatchError> {
    let settings = BatchSettings::from_session(session)?;
    let source = FileArtifact::new(&session.test_artifact);
    Ok(run_batch(snapshots, &source, &settings, workers)?.outcomes)
}

pub fn run_batch(
    snapshots: &[ProjectSnapshot],
    source: &dyn ArtifactSource,
    settings: &BatchSettings,
    workers: usize,
) -> Result<BatchResult, BatchError> {
    if workers == 0 {
        return Err(BatchError::NoWorkers);
    }
    let cache = ArtifactCache::load(source).map_err(BatchError::Artifact)?;
    let scratch = match &settings.work_root {
        Some(root) => {
            std::fs::create_dir_all(root).map_err(BatchError::WorkDir)?;
            tempfile::Builder::new().prefix("batch-").tempdir_in(root)
        }
        None => tempfile::Builder::new().prefix("examforge-batch-").tempdir(),
    }
    .map_err(BatchError::WorkDir)?;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; snapshots.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(snapshots.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(snapshot) = snapshots.get(i) else { break };
                let outcome = run_one(snapshot, &cache, settings, scratch.path());
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(outcome);
            });
        }
    });

    let mut outcomes: Vec<RunOutcome> = slots
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|o| o.expect("every slot is filled once the scope joins"))
        .collect();
    outcomes.sort_by(|a, b| a.student.cmp(&b.student));
    if settings.keep_workspaces {
        let _ = scratch.keep();
    }
    Ok(BatchResult {
        outcomes,
        artifact_sha256: cache.sha256().to_string(),
    })
}

fn run_one(
    snapshot: &ProjectSnapshot,
    cache: &ArtifactCache,
    settings: &BatchSettings,
    parent: &std::path::Path,
) -> RunOutcome {
    let mut outcome = match materialize_workspace(parent, snapshot, cache) {
        Ok(ws) => {
            let outcome = run_test_suite(&ws, &snapshot.student, &settings.run);
            if !settings.keep_workspaces {
                if let Err(e) = ws.remove() {
                    log::warn!("cannot remove workspace of {}: {e}", snapshot.student);
                }
            }
            outcome
        }
        Err(e) => RunOutcome {
            student: snapshot.student.clone(),
            kind: OutcomeKind::InfraError,
            duration: Duration::ZERO,
            log_excerpt: format!("[examforge] {e}"),
            artifact_sha256: None,
        },
    };
    outcome.artifact_sha256 = Some(cache.sha256().to_string());
    outcome
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("infrastructure error testing `{0}`; rerun before grading")]
pub struct NotGradable(pub String);

/// Fraction of acceptance tests passed. Compile errors and timeouts score 0;
/// infrastructure errors have no score.
pub fn compute_pass_fraction(outcome: &RunOutcome) -> Result<f64, NotGradable> {
    match &outcome.kind {
        OutcomeKind::Report(report) => Ok(report.pass_fraction()),
        OutcomeKind::CompileError | OutcomeKind::Timeout => Ok(0.0),
        OutcomeKind::InfraError => Err(NotGradable(outcome.student.to_string())),
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::time::Duration;

use examforge_core::testkit::{run_batch, BatchSettings, FileArtifact, OutcomeKind, RunOutcome};
use examforge_core::vcs::{select_home_revision, CommitRequest, Credential, FileChange, Gateway, RepoHandle, RevisionId};
use examforge_core::StudentId;

use crate::{csv_text, infra, CmdError, CmdResult, Context, ExitStatus};

/// Per-repository file the watcher appends one line to for every tested commit.
pub const FEEDBACK_FILE: &str = ".examforge/feedback.log";

#[derive(Debug, Clone)]
pub struct WatchOptions {
    pub interval: Duration,
    /// Stop after this many polls; `None` runs until the process is killed.
    pub max_polls: Option<u64>,
    pub workers: usize,
}

impl Default for WatchOptions {
    fn default() -> Self {
        WatchOptions {
            interval: Duration::from_secs(30),
            max_polls: None,
            workers: 1,
        }
    }
}

/// Last student revision given feedback, per student.
pub type WatchState = BTreeMap<StudentId, RevisionId>;

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct PollSummary {
    /// Commits tested and answered with a feedback entry.
    pub answered: usize,
    /// Repositories that could not be read or written, and untestable commits.
    pub failed: usize,
}

fn handle_for(gateway: &Gateway<'_>, student: &StudentId) -> RepoHandle {
    RepoHandle {
        student: student.clone(),
        uri: gateway.repo_uri(student),
        credentials: Credential {
            username: student.to_string(),
            token: String::new(),
        },
    }
}

fn summary_line(outcome: &RunOutcome, revision: &RevisionId, timeout_secs: u64) -> String {
    let what = match &outcome.kind {
        OutcomeKind::Report(r) => format!("tests {r}"),
        OutcomeKind::CompileError => "compile error: the project does not build".to_string(),
        OutcomeKind::Timeout => format!("timeout: tests did not finish within {timeout_secs} s"),
        OutcomeKind::InfraError => "not tested (infrastructure error)".to_string(),
    };
    format!("{revision}: {what}\n")
}

/// One polling round: tests every student's newest commit not seen before and
/// commits a feedback entry for it as the teacher.
pub fn poll_once(ctx: &Context<'_>, state: &mut WatchState, workers: usize) -> Result<PollSummary, CmdError> {
    let gateway = Gateway::new(ctx.adapter, &ctx.session);
    let mut summary = PollSummary::default();
    let mut pending = Vec::new();
    for student in &ctx.session.roster {
        let handle = handle_for(&gateway, student);
        let commits = match gateway.list_commits(&handle) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("{student}: {e}");
                summary.failed += 1;
                continue;
            }
        };
        let Some(latest) = select_home_revision(&commits, gateway.teacher_identity()) else {
            continue;
        };
        if state.get(student) == Some(&latest.revision) {
            continue;
        }
        match gateway.snapshot_at(&handle, &latest.revision) {
            Ok(snapshot) => pending.push((handle, commits.last().map(|c| c.revision.clone()), snapshot)),
            Err(e) => {
                log::warn!("{student}: {e}");
                summary.failed += 1;
            }
        }
    }
    if pending.is_empty() {
        return Ok(summary);
    }

    let snapshots: Vec<_> = pending.iter().map(|(_, _, s)| s.clone()).collect();
    let settings = BatchSettings::from_session(&ctx.session).map_err(|e| CmdError::Validation(e.to_string()))?;
    let artifact = FileArtifact::new(&ctx.session.test_artifact);
    let batch = run_batch(&snapshots, &artifact, &settings, workers).map_err(|e| CmdError::Infrastructure(e.to_string()))?;
    let outcomes: BTreeMap<&StudentId, &RunOutcome> = batch.outcomes.iter().map(|o| (&o.student, o)).collect();

    for (handle, head, snapshot) in &pending {
        let outcome = outcomes[&handle.student];
        if outcome.kind == OutcomeKind::InfraError {
            // Retried on the next poll.
            log::warn!("{}: infrastructure error testing {}", handle.student, snapshot.revision);
            summary.failed += 1;
            continue;
        }
        let head = head.as_ref().expect("a repository with a student commit has a head");
        match append_feedback(&gateway, handle, head, &summary_line(outcome, &snapshot.revision, ctx.session.timeout_secs)) {
            Ok(()) => {
                state.insert(handle.student.clone(), snapshot.revision.clone());
                summary.answered += 1;
            }
            Err(e) => {
                log::warn!("{}: cannot write feedback: {e}", handle.student);
                summary.failed += 1;
            }
        }
    }
    Ok(summary)
}

fn append_feedback(gateway: &Gateway<'_>, handle: &RepoHandle, head: &RevisionId, line: &str) -> Result<(), CmdError> {
    let tree = gateway
        .adapter()
        .checkout(&handle.uri, head)
        .map_err(|e| CmdError::Infrastructure(e.to_string()))?;
    let mut log = tree.get(FEEDBACK_FILE).cloned().unwrap_or_default();
    log.extend_from_slice(line.as_bytes());
    let changes = [FileChange::write(FEEDBACK_FILE, log)];
    let message = format!("Feedback: {}", line.trim_end());
    gateway
        .adapter()
        .commit(
            &handle.uri,
            &CommitRequest {
                author: gateway.teacher_identity(),
                message: &message,
                timestamp: None,
                changes: &changes,
            },
        )
        .map(|_| ())
        .map_err(|e| CmdError::Infrastructure(e.to_string()))
}

fn load_state(ctx: &Context<'_>) -> Result<WatchState, CmdError> {
    let path = ctx.paths.watch_state();
    if !path.exists() {
        return Ok(WatchState::new());
    }
    let bad = |msg: String| CmdError::Validation(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(&path).map_err(|e| bad(e.to_string()))?;
    let mut state = WatchState::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let student = StudentId::new(&record[0]).map_err(|e| bad(e.to_string()))?;
        state.insert(student, RevisionId(record[1].to_string()));
    }
    Ok(state)
}

fn save_state(ctx: &Context<'_>, state: &WatchState) -> Result<(), CmdError> {
    let path = ctx.paths.watch_state();
    let rows = state.iter().map(|(s, r)| vec![s.to_string(), r.to_string()]);
    fs::write(&path, csv_text(&["student_id", "revision"], rows)).map_err(infra(path.display()))
}

/// Polls every `interval`, answering each new student commit with a feedback
/// entry. Progress is kept in `watch_state.csv`, so a restarted watcher does
/// not repeat feedback.
pub fn cmd_watch(ctx: &Context<'_>, options: &WatchOptions) -> CmdResult {
    let mut state = load_state(ctx)?;
    let mut polls = 0u64;
    loop {
        let summary = poll_once(ctx, &mut state, options.workers)?;
        if summary.answered > 0 || summary.failed > 0 {
            log::info!("answered {} commits, {} failures", summary.answered, summary.failed);
            save_state(ctx, &state)?;
        }
        polls += 1;
        if options.max_polls.is_some_and(|max| polls >= max) {
            return Ok(ExitStatus::Success);
        }
        std::thread::sleep(options.interval);
    }
}

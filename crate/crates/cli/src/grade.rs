use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use examforge_core::churn::{compute_project_churn, IgnoreSet};
use examforge_core::grading::{assemble_grade_record, grades_csv, GradingError};
use examforge_core::testkit::{run_batch, BatchError, BatchSettings, FileArtifact, OutcomeKind, RunOutcome};
use examforge_core::vcs::ProjectSnapshot;
use examforge_core::StudentId;

use crate::collect::MANIFEST;
use crate::{csv_text, infra, read_manifest, write_new, CmdError, CmdResult, Context, ExitStatus, SubmissionStatus, Which};

fn load_snapshots(ctx: &Context<'_>, which: Which) -> Result<Vec<ProjectSnapshot>, CmdError> {
    let dir = ctx.paths.submissions(which);
    let manifest = dir.join(MANIFEST);
    if !manifest.is_file() {
        return Err(CmdError::Validation(format!(
            "{} not found; run `collect --which {}` first",
            manifest.display(),
            which.as_str()
        )));
    }
    let mut snapshots = read_manifest(&manifest)?
        .into_iter()
        .filter(|e| e.status == SubmissionStatus::Collected)
        .map(|e| {
            let revision = e.revision.expect("collected entries carry a revision");
            ProjectSnapshot::from_dir(e.student.clone(), revision, &dir.join(e.student.as_str()))
                .map_err(|err| CmdError::Infrastructure(err.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    // Batch outcomes come back ordered by student; keep the inputs aligned.
    snapshots.sort_by(|a, b| a.student.cmp(&b.student));
    Ok(snapshots)
}

fn batch_error(e: BatchError) -> CmdError {
    match e {
        BatchError::WorkDir(_) => CmdError::Infrastructure(e.to_string()),
        other => CmdError::Validation(other.to_string()),
    }
}

/// Tests the collected lab and home versions, computes churn between them and
/// writes `grades.csv`. Refuses to overwrite an existing `grades.csv`.
pub fn cmd_grade(ctx: &Context<'_>, workers: usize) -> CmdResult {
    if ctx.paths.grades().exists() {
        return Err(CmdError::Validation(format!(
            "{} already exists; grades are never overwritten",
            ctx.paths.grades().display()
        )));
    }
    let lab = load_snapshots(ctx, Which::Lab)?;
    let home = load_snapshots(ctx, Which::Home)?;
    if lab.is_empty() && home.is_empty() {
        return Err(CmdError::Validation("no collected submissions to grade".into()));
    }

    let settings = BatchSettings::from_session(&ctx.session).map_err(|e| CmdError::Validation(e.to_string()))?;
    let artifact = FileArtifact::new(&ctx.session.test_artifact);
    let lab_runs = run_batch(&lab, &artifact, &settings, workers).map_err(batch_error)?;
    let home_runs = run_batch(&home, &artifact, &settings, workers).map_err(batch_error)?;
    write_run_records(ctx, &lab_runs.outcomes, &home_runs.outcomes, &lab, &home)?;

    let all_runs = lab_runs.outcomes.iter().chain(&home_runs.outcomes);
    if all_runs.clone().all(|o| o.kind == OutcomeKind::InfraError) {
        log::error!("every test run failed for infrastructure reasons; see {}", ctx.paths.runs().display());
        return Ok(ExitStatus::InfrastructureFailure);
    }

    let ignore = IgnoreSet::new(&ctx.session.ignore_globs).map_err(|e| CmdError::Validation(e.to_string()))?;
    let lab_by: BTreeMap<&StudentId, (&ProjectSnapshot, &RunOutcome)> = lab
        .iter()
        .zip(&lab_runs.outcomes)
        .map(|(s, o)| (&s.student, (s, o)))
        .collect();
    let home_by: BTreeMap<&StudentId, (&ProjectSnapshot, &RunOutcome)> = home
        .iter()
        .zip(&home_runs.outcomes)
        .map(|(s, o)| (&s.student, (s, o)))
        .collect();
    let students: BTreeSet<&StudentId> = ctx
        .session
        .roster
        .iter()
        .chain(lab_by.keys().copied())
        .chain(home_by.keys().copied())
        .collect();

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for student in students {
        let lab = lab_by.get(student);
        let home = home_by.get(student);
        let churn = match (lab, home) {
            (Some((l, _)), Some((h, _))) => Some(compute_project_churn(&l.files, &h.files, &ignore)),
            _ => None,
        };
        match assemble_grade_record(student, lab.map(|p| p.1), home.map(|p| p.1), churn.as_ref(), &ctx.session) {
            Ok(record) => records.push(record),
            Err(e @ GradingError::NotGradable(_)) => errors.push(vec![student.to_string(), e.to_string()]),
            Err(e) => return Err(CmdError::Infrastructure(e.to_string())),
        }
    }

    write_new(&ctx.paths.grades(), &grades_csv(&records))?;
    log::info!("wrote {} grade records to {}", records.len(), ctx.paths.grades().display());
    if errors.is_empty() {
        let _ = fs::remove_file(ctx.paths.grade_errors());
        Ok(ExitStatus::Success)
    } else {
        let path = ctx.paths.grade_errors();
        fs::write(&path, csv_text(&["student_id", "error"], errors)).map_err(infra(path.display()))?;
        log::warn!("some students could not be graded; see {}", path.display());
        Ok(ExitStatus::PartialFailure)
    }
}

/// Writes `runs.csv` and the captured output of every run under `logs/`.
/// These describe the latest attempt and are replaced on every run.
fn write_run_records(
    ctx: &Context<'_>,
    lab: &[RunOutcome],
    home: &[RunOutcome],
    lab_snaps: &[ProjectSnapshot],
    home_snaps: &[ProjectSnapshot],
) -> Result<(), CmdError> {
    let mut rows = Vec::new();
    for (which, outcomes, snaps) in [(Which::Lab, lab, lab_snaps), (Which::Home, home, home_snaps)] {
        let log_dir = ctx.paths.logs().join(which.as_str());
        fs::create_dir_all(&log_dir).map_err(infra(log_dir.display()))?;
        for (o, snap) in outcomes.iter().zip(snaps) {
            let (passed, total) = match &o.kind {
                OutcomeKind::Report(r) => (r.passed.to_string(), r.total.to_string()),
                _ => (String::new(), String::new()),
            };
            rows.push(vec![
                o.student.to_string(),
                which.as_str().to_string(),
                snap.revision.to_string(),
                o.kind.label().to_string(),
                passed,
                total,
                o.artifact_sha256.clone().unwrap_or_default(),
            ]);
            let path = log_dir.join(format!("{}.log", o.student));
            fs::write(&path, &o.log_excerpt).map_err(infra(path.display()))?;
        }
    }
    let path = ctx.paths.runs();
    let header = ["student_id", "version", "revision", "outcome", "passed", "total", "artifact_sha256"];
    fs::write(&path, csv_text(&header, rows)).map_err(infra(path.display()))
}

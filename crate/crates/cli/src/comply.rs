use std::fs;

use examforge_core::analytics::{
    commit_histogram_csv, compliance_stats, compliance_table_csv, ComplianceSummary, StudentActivity,
};
use examforge_core::vcs::{student_commit_count, Credential, Gateway, RepoHandle};

use crate::{csv_text, infra, CmdError, CmdResult, Context, ExitStatus, SessionPaths};

/// Counts student commits in every repository of every session and writes
/// `compliance.csv` (one row per session plus `All`) and `histogram.csv`
/// (all sessions pooled) into `out`. Both files are regenerated on each run.
pub fn cmd_comply(sessions: &[Context<'_>], out: &SessionPaths) -> CmdResult {
    if sessions.is_empty() {
        return Err(CmdError::Validation("no session given".into()));
    }
    let mut rows: Vec<(String, ComplianceSummary)> = Vec::new();
    let mut errors = Vec::new();
    let mut scanned = 0usize;
    for ctx in sessions {
        let gateway = Gateway::new(ctx.adapter, &ctx.session);
        let mut activities = Vec::new();
        for student in &ctx.session.roster {
            let handle = RepoHandle {
                student: student.clone(),
                uri: gateway.repo_uri(student),
                credentials: Credential {
                    username: student.to_string(),
                    token: String::new(),
                },
            };
            match gateway.list_commits(&handle) {
                Ok(commits) => activities.push(StudentActivity {
                    student: student.clone(),
                    student_commit_count: student_commit_count(&commits, gateway.teacher_identity()) as u32,
                }),
                Err(e) => errors.push(vec![ctx.session.session_id.clone(), student.to_string(), e.to_string()]),
            }
        }
        scanned += activities.len();
        rows.push((
            ctx.session.session_id.clone(),
            compliance_stats(&activities, ctx.session.requirement_sections),
        ));
    }
    if scanned == 0 {
        return Err(CmdError::Infrastructure("no repository could be read".into()));
    }

    fs::create_dir_all(&out.root).map_err(infra(out.root.display()))?;
    let all = ComplianceSummary::aggregate(rows.iter().map(|(_, s)| s));
    fs::write(out.compliance(), compliance_table_csv(&rows)).map_err(infra(out.compliance().display()))?;
    fs::write(out.histogram(), commit_histogram_csv(&all)).map_err(infra(out.histogram().display()))?;
    log::info!(
        "{} booked, {} untouched ({}%), dropouts {}%, compliant {}%",
        all.booked,
        all.untouched,
        all.untouched_pct_display(),
        all.dropout_pct_display(),
        all.compliant_pct_display()
    );
    if errors.is_empty() {
        Ok(ExitStatus::Success)
    } else {
        let path = out.root.join("comply_errors.csv");
        fs::write(&path, csv_text(&["session_id", "student_id", "error"], errors)).map_err(infra(path.display()))?;
        Ok(ExitStatus::PartialFailure)
    }
}

use std::path::Path;

use examforge_core::vcs::{read_tree, write_credentials_csv, Gateway, VcsError};

use crate::{csv_text, infra, write_new, CmdError, CmdResult, Context, ExitStatus};

fn vcs_error(e: VcsError) -> CmdError {
    match e {
        VcsError::RepoExists(_) | VcsError::Precondition(_) => CmdError::Validation(e.to_string()),
        other => CmdError::Infrastructure(other.to_string()),
    }
}

/// Creates every student repository, writes `credentials.csv` and commits the
/// initial project to each repository.
pub fn cmd_provision(ctx: &Context<'_>, project_dir: &Path) -> CmdResult {
    let project = read_tree(project_dir).map_err(|e| CmdError::Validation(format!("initial project: {e}")))?;
    if project.is_empty() {
        return Err(CmdError::Validation(format!("{} contains no files", project_dir.display())));
    }
    if ctx.paths.credentials().exists() {
        return Err(CmdError::Validation(format!(
            "{} already exists; this session was provisioned before",
            ctx.paths.credentials().display()
        )));
    }
    std::fs::create_dir_all(&ctx.paths.root).map_err(infra(ctx.paths.root.display()))?;
    let gateway = Gateway::new(ctx.adapter, &ctx.session);
    let handles = gateway.provision_repos(&ctx.session.roster).map_err(vcs_error)?;
    let credentials = write_credentials_csv(&handles).map_err(|e| CmdError::Infrastructure(e.to_string()))?;
    write_new(&ctx.paths.credentials(), &credentials)?;
    log::info!("created {} repositories", handles.len());

    let report = gateway.seed_initial_project(&handles, &project).map_err(vcs_error)?;
    if report.is_complete() {
        log::info!("seeded {} repositories", report.revisions.len());
        return Ok(ExitStatus::Success);
    }
    let rows = report
        .failures
        .iter()
        .map(|(student, e)| vec![student.to_string(), e.to_string()]);
    write_new(&ctx.paths.seed_failures(), &csv_text(&["student_id", "error"], rows))?;
    log::warn!(
        "seeded {} of {} repositories; see {}",
        report.revisions.len(),
        handles.len(),
        ctx.paths.seed_failures().display()
    );
    Ok(if report.revisions.is_empty() {
        ExitStatus::InfrastructureFailure
    } else {
        ExitStatus::PartialFailure
    })
}

/// Publishes the session's test artifact as a new revision of the dedicated
/// test repository and returns that revision.
pub fn cmd_distribute_tests(ctx: &Context<'_>) -> Result<String, CmdError> {
    let gateway = Gateway::new(ctx.adapter, &ctx.session);
    if !ctx.session.test_artifact.is_file() {
        return Err(CmdError::Validation(format!(
            "test artifact {} is not a readable file",
            ctx.session.test_artifact.display()
        )));
    }
    let repo = gateway.ensure_test_repo().map_err(vcs_error)?;
    let revision = gateway
        .publish_tests(&repo, &ctx.session.test_artifact)
        .map_err(vcs_error)?;
    log::info!("published tests to {} at {revision}", repo.uri);
    Ok(revision.to_string())
}

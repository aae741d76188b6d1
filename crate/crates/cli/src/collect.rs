use std::fmt;
use std::fs;
use std::path::Path;

use examforge_core::vcs::{read_credentials_csv, select_home_revision, select_lab_revision, Gateway, RepoHandle, RevisionId};
use examforge_core::{StudentId, Timestamp};

use crate::{csv_text, infra, write_new, CmdError, CmdResult, Context, ExitStatus};

pub const MANIFEST: &str = "manifest.csv";

/// Which version of the projects to collect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    /// Last student commit strictly before the deadline.
    Lab,
    /// Last student commit overall.
    Home,
}

impl Which {
    pub fn as_str(self) -> &'static str {
        match self {
            Which::Lab => "lab",
            Which::Home => "home",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmissionStatus {
    Collected,
    NoShow,
    Dropout,
}

impl SubmissionStatus {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "Collected" => Some(SubmissionStatus::Collected),
            "NoShow" => Some(SubmissionStatus::NoShow),
            "Dropout" => Some(SubmissionStatus::Dropout),
            _ => None,
        }
    }
}

impl fmt::Display for SubmissionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubmissionStatus::Collected => "Collected",
            SubmissionStatus::NoShow => "NoShow",
            SubmissionStatus::Dropout => "Dropout",
        })
    }
}

/// One row of `submissions/<which>/manifest.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub student: StudentId,
    pub status: SubmissionStatus,
    pub revision: Option<RevisionId>,
    pub committed_at: Option<Timestamp>,
}

enum Selected {
    Export(RevisionId, Timestamp),
    Skip(SubmissionStatus),
}

fn select(gateway: &Gateway<'_>, handle: &RepoHandle, which: Which, deadline: Timestamp) -> Result<Selected, String> {
    let commits = gateway.list_commits(handle).map_err(|e| e.to_string())?;
    let teacher = gateway.teacher_identity();
    let lab = select_lab_revision(&commits, deadline, teacher);
    let chosen = match which {
        Which::Lab => match lab {
            Some(c) => c,
            None => return Ok(Selected::Skip(SubmissionStatus::NoShow)),
        },
        Which::Home => match select_home_revision(&commits, teacher) {
            None => return Ok(Selected::Skip(SubmissionStatus::NoShow)),
            Some(home) if lab.is_some_and(|l| l.revision == home.revision) => {
                return Ok(Selected::Skip(SubmissionStatus::Dropout))
            }
            Some(home) => home,
        },
    };
    Ok(Selected::Export(chosen.revision.clone(), chosen.timestamp))
}

/// Exports the chosen version of every project under
/// `submissions/<which>/<student>/` and lists them in `manifest.csv`.
/// Refuses to run if that directory already exists.
pub fn cmd_collect(ctx: &Context<'_>, which: Which) -> CmdResult {
    let credentials = ctx.paths.credentials();
    let text = fs::read_to_string(&credentials)
        .map_err(|e| CmdError::Validation(format!("{}: {e}; run provision first", credentials.display())))?;
    let mut handles = read_credentials_csv(&text).map_err(|e| CmdError::Validation(e.to_string()))?;
    handles.sort_by(|a, b| a.student.cmp(&b.student));

    let out = ctx.paths.submissions(which);
    if out.exists() {
        return Err(CmdError::Validation(format!(
            "{} already exists; submissions are never overwritten",
            out.display()
        )));
    }
    let parent = out.parent().expect("submissions dir has a parent");
    fs::create_dir_all(parent).map_err(infra(parent.display()))?;
    let staging = parent.join(format!(".{}.partial", which.as_str()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(infra(staging.display()))?;
    }
    fs::create_dir(&staging).map_err(infra(staging.display()))?;

    let gateway = Gateway::new(ctx.adapter, &ctx.session);
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for handle in &handles {
        let result = select(&gateway, handle, which, ctx.session.deadline).and_then(|selected| match selected {
            Selected::Skip(status) => Ok((status, None)),
            Selected::Export(rev, ts) => {
                let snapshot = gateway.snapshot_at(handle, &rev).map_err(|e| e.to_string())?;
                snapshot
                    .write_to(&staging.join(handle.student.as_str()))
                    .map_err(|e| e.to_string())?;
                Ok((SubmissionStatus::Collected, Some((rev, ts))))
            }
        });
        match result {
            Ok((status, picked)) => entries.push(ManifestEntry {
                student: handle.student.clone(),
                status,
                revision: picked.as_ref().map(|(r, _)| r.clone()),
                committed_at: picked.map(|(_, t)| t),
            }),
            Err(e) => errors.push(vec![handle.student.to_string(), e]),
        }
    }

    if entries.is_empty() && !errors.is_empty() {
        let _ = fs::remove_dir_all(&staging);
        write_new(&ctx.paths.collect_errors(which), &csv_text(&["student_id", "error"], errors))?;
        return Ok(ExitStatus::InfrastructureFailure);
    }
    write_manifest(&staging.join(MANIFEST), &entries)?;
    fs::rename(&staging, &out).map_err(infra(out.display()))?;
    log::info!(
        "collected {} {} versions into {}",
        entries.iter().filter(|e| e.status == SubmissionStatus::Collected).count(),
        which.as_str(),
        out.display()
    );
    if errors.is_empty() {
        Ok(ExitStatus::Success)
    } else {
        write_new(&ctx.paths.collect_errors(which), &csv_text(&["student_id", "error"], errors))?;
        Ok(ExitStatus::PartialFailure)
    }
}

fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), CmdError> {
    let rows = entries.iter().map(|e| {
        vec![
            e.student.to_string(),
            e.status.to_string(),
            e.revision.as_ref().map(|r| r.to_string()).unwrap_or_default(),
            e.committed_at.map(Timestamp::to_iso).unwrap_or_default(),
        ]
    });
    write_new(path, &csv_text(&["student_id", "status", "revision", "committed_at"], rows))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CmdError> {
    let bad = |msg: String| CmdError::Validation(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", record.len())));
        }
        let student = StudentId::new(&record[0]).map_err(|e| bad(e.to_string()))?;
        let status = SubmissionStatus::parse(&record[1]).ok_or_else(|| bad(format!("unknown status {:?}", &record[1])))?;
        let revision = (!record[2].is_empty()).then(|| RevisionId(record[2].to_string()));
        let committed_at = if record[3].is_empty() {
            None
        } else {
            Some(Timestamp::parse_iso(&record[3]).map_err(|e| bad(e.to_string()))?)
        };
        if (status == SubmissionStatus::Collected) != revision.is_some() {
            return Err(bad(format!("row for `{student}` has status {status} but revision {:?}", &record[2])));
        }
        out.push(ManifestEntry {
            student,
            status,
            revision,
            committed_at,
        });
    }
    Ok(out)
}

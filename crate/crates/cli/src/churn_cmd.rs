use std::path::Path;

use examforge_core::churn::{compute_project_churn, IgnoreSet};
use examforge_core::model::DEFAULT_IGNORE_GLOBS;
use examforge_core::vcs::read_tree;

use crate::CmdError;

/// Churn between two directory trees as `path,churn` CSV with a final
/// `TOTAL,<M>` row. `extra_ignores` add to the default globs unless
/// `no_defaults` is set.
pub fn cmd_churn(before: &Path, after: &Path, extra_ignores: &[String], no_defaults: bool) -> Result<String, CmdError> {
    for dir in [before, after] {
        if !dir.is_dir() {
            return Err(CmdError::Validation(format!("{} is not a directory", dir.display())));
        }
    }
    let mut globs: Vec<String> = if no_defaults {
        Vec::new()
    } else {
        DEFAULT_IGNORE_GLOBS.iter().map(|g| g.to_string()).collect()
    };
    globs.extend(extra_ignores.iter().cloned());
    let ignore = IgnoreSet::new(&globs).map_err(|e| CmdError::Validation(format!("--ignore: {e}")))?;
    let read = |dir: &Path| read_tree(dir).map_err(|e| CmdError::Infrastructure(e.to_string()));
    Ok(compute_project_churn(&read(before)?, &read(after)?, &ignore).to_csv())
}
